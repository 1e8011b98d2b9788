"""Shared evaluation path: calibration scores, conformal regions, uncertainty
features and the combined monitor/detection report.

Tie-breaking variables are drawn from a dedicated stream seeded by the
experiment seed, one theta per evaluated point, so every evaluation is
replayable bit for bit.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .conformal import (
    CalibrationSet,
    classification_p_values,
    classify_region,
    coverage,
    efficiency_classification,
    ncf_classification_batch,
)
from .data import Dataset
from .detect import RejectionRule, detection_metrics, reject_batch
from .monitor import monitor_predict

THETA_STREAM = 0x7468
QUERY_STREAM = 0x7175


def calibration_scores(model, calib_scaled: Dataset) -> CalibrationSet:
    """Nonconformity scores of the calibration split under the monitor."""
    pred = monitor_predict(model, calib_scaled)
    return CalibrationSet(
        ncf_classification_batch(pred["likelihoods"], calib_scaled.labels))


def draw_thetas(seed: int, n: int, stream: int = THETA_STREAM) -> np.ndarray:
    return np.random.default_rng([seed, stream]).uniform(size=n)


def cp_evaluate(model, calib: CalibrationSet, ds_scaled: Dataset,
                eps_list, seed: int) -> dict:
    """Conformal evaluation of a monitor on a scaled dataset.

    Returns predictions, both per-label p-values, (confidence, credibility)
    features and per-epsilon coverage/efficiency.
    """
    pred = monitor_predict(model, ds_scaled)
    thetas = draw_thetas(seed, ds_scaled.n)
    pv = classification_p_values(calib, pred["likelihoods"], thetas)
    features = np.stack([1.0 - pv.min(axis=1), pv.max(axis=1)], axis=1)
    per_eps = {}
    truths = ds_scaled.labels.astype(np.int64)
    for eps in eps_list:
        regions = [classify_region(p0, p1, eps) for p0, p1 in pv]
        per_eps[float(eps)] = {
            "coverage": coverage(regions, truths),
            "efficiency": efficiency_classification(regions),
        }
    return {"labels": pred["labels"], "likelihoods": pred["likelihoods"],
            "p_values": pv, "features": features, "thetas": thetas,
            "per_eps": per_eps}


def full_report(model, calib: CalibrationSet, rule: RejectionRule,
                test_scaled: Dataset, eps_list, seed: int) -> dict:
    """Monitor accuracy, detection and rejection plus CP validity metrics."""
    ev = cp_evaluate(model, calib, test_scaled, eps_list, seed)
    rejected = reject_batch(rule, ev["features"])
    det = detection_metrics(ev["labels"], test_scaled.labels, rejected)
    det["per_eps"] = ev["per_eps"]
    det["_eval"] = ev
    return det


def dataset_hash(ds: Dataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.obs).tobytes())
    h.update(np.ascontiguousarray(ds.states).tobytes())
    h.update(np.ascontiguousarray(ds.labels).tobytes())
    return h.hexdigest()
