"""Unscented Kalman filter baseline for window state estimation.

The filter runs the spec's full transition (integration plus jump logic) as
its process model and the spec's observation map as its measurement model;
the discrete mode is not estimated: a single mode, initialized by the model
convention and advanced through the jump rule of the central sigma point,
is shared by all sigma points.  The prior is the moment-matched Gaussian of
the uniform initial-state box.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FilterDiverged, ShapeError
from .systems import HybridSystemSpec, step_batch


@dataclass
class UKFConfig:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    process_noise: float = 1e-4   # diagonal process covariance
    meas_noise_floor: float = 1e-10
    jitter: float = 1e-9
    max_jitter_tries: int = 8


def _chol(P, cfg: UKFConfig):
    jitter = cfg.jitter
    for _ in range(cfg.max_jitter_tries):
        try:
            return np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            P = P + jitter * np.eye(P.shape[0])
            jitter *= 10.0
    raise FilterDiverged("covariance lost positive definiteness")


def _sigma_points(x, P, cfg: UKFConfig):
    n = x.size
    lam = cfg.alpha ** 2 * (n + cfg.kappa) - n
    L = _chol((n + lam) * P, cfg)
    pts = np.empty((2 * n + 1, n))
    pts[0] = x
    pts[1:n + 1] = x + L.T
    pts[n + 1:] = x - L.T
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1.0 - cfg.alpha ** 2 + cfg.beta)
    return pts, wm, wc


def ukf_estimate(spec: HybridSystemSpec, obs_seq, cfg: UKFConfig | None = None
                 ) -> np.ndarray:
    """Forward filtered state estimates for one observation window.

    ``obs_seq`` is the (H_p+1, obs_dim) window in physical units; returns
    the posterior state means, one per time index.
    """
    cfg = cfg or UKFConfig()
    Y = np.asarray(obs_seq, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] != spec.obs_dim:
        raise ShapeError(f"obs_seq shape {Y.shape} != (L, {spec.obs_dim})")
    n = spec.state_dim

    x = (spec.init_lo + spec.init_hi) / 2.0
    P = np.diag(((spec.init_hi - spec.init_lo) ** 2) / 12.0 + cfg.meas_noise_floor)
    R = np.diag(np.maximum(spec.noise_std ** 2, cfg.meas_noise_floor))
    Qproc = cfg.process_noise * np.eye(n)
    q = int(spec.init_mode(x[None, :])[0])

    estimates = np.empty((Y.shape[0], n))
    with np.errstate(all="ignore"):
        for t in range(Y.shape[0]):
            if t > 0:
                pts, wm, wc = _sigma_points(x, P, cfg)
                Qs = np.full(pts.shape[0], q, dtype=np.int64)
                pts_next, Qs_next = step_batch(spec, pts, Qs)
                x = wm @ pts_next
                d = pts_next - x
                P = (d.T * wc) @ d + Qproc
                P = 0.5 * (P + P.T)
                q = int(Qs_next[0])
                pts = pts_next
            else:
                pts, wm, wc = _sigma_points(x, P, cfg)

            # measurement update
            Qs = np.full(pts.shape[0], q, dtype=np.int64)
            Z = spec.observe_fn(pts, Qs)
            z_hat = wm @ Z
            dz = Z - z_hat
            dx = pts - x
            S = (dz.T * wc) @ dz + R
            C = (dx.T * wc) @ dz
            try:
                K = np.linalg.solve(S.T, C.T).T
            except np.linalg.LinAlgError:
                raise FilterDiverged("innovation covariance is singular") from None
            x = x + K @ (Y[t] - z_hat)
            P = P - K @ S @ K.T
            P = 0.5 * (P + P.T)
            if not np.isfinite(x).all():
                raise FilterDiverged("filter state became non-finite")
            estimates[t] = x
    return estimates


def relative_error(true_seq, est_seq, state_range) -> float:
    """Norm of the sequence reconstruction error divided by the maximum
    state range; zero-range dimensions are excluded with a warning."""
    a = np.asarray(true_seq, dtype=np.float64)
    b = np.asarray(est_seq, dtype=np.float64)
    r = np.asarray(state_range, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"sequence shapes differ: {a.shape} vs {b.shape}")
    if a.shape[-1] != r.size:
        raise ShapeError("state_range length does not match state dimension")
    keep = r > 0
    if not keep.all():
        warnings.warn(f"excluding {int((~keep).sum())} zero-range dimension(s) "
                      "from relative error")
    if not keep.any():
        raise ShapeError("all state dimensions have zero range")
    diff = (a[..., keep] - b[..., keep]).ravel()
    return float(np.linalg.norm(diff) / r[keep].max())
