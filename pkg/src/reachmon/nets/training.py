"""Losses, Adam, the three training pipelines and monitor persistence.

The classifier is trained with binary cross-entropy on softmax-normalized
head scores, the state estimator with mean squared error on scaled state
sequences, and the two-step monitor is fine-tuned jointly on the sum of the
two losses so the classifier adapts to reconstructed rather than exact
states.  All loops are deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError, ShapeError
from ..storage import load_container, save_container
from .network import Network


def softmax(scores):
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(scores, labels):
    """Mean cross-entropy of softmax(scores); returns (loss, dscores)."""
    p = softmax(scores)
    n = scores.shape[0]
    eps = np.finfo(scores.dtype).tiny
    loss = -np.log(p[np.arange(n), labels] + eps).mean()
    dscores = p.copy()
    dscores[np.arange(n), labels] -= 1.0
    return loss, dscores / n


def mse(out, target):
    """Mean squared error over all elements; returns (loss, dout)."""
    if out.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {out.shape} vs {target.shape}")
    diff = out - target
    return float((diff * diff).mean()), 2.0 * diff / diff.size


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = b1 * m + (1.0 - b1) * g
            v[...] = b2 * v + (1.0 - b2) * g * g
            mh = m / (1.0 - b1 ** self.t)
            vh = v / (1.0 - b2 ** self.t)
            p -= self.lr * mh / (np.sqrt(vh) + self.eps)


@dataclass
class TrainOpts:
    lr: float = 1e-3
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0

    def to_dict(self):
        return {"lr": self.lr, "epochs": self.epochs,
                "batch_size": self.batch_size, "seed": self.seed}


@dataclass
class MonitorModel:
    """A trained monitor: a single classifier (end-to-end) or an
    estimator/classifier pair (two-step), plus training metadata."""

    kind: str  # "end_to_end" | "two_step"
    nets: dict
    meta: dict = field(default_factory=dict)


def _check_finite_loss(loss, epoch, history):
    if not np.isfinite(loss):
        raise NumericalError(
            f"training diverged at epoch {epoch}: loss={loss!r}; "
            f"last finite losses: {history[-5:]}")


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_classifier(X, y, netspec: dict, opts: TrainOpts):
    """Adam-optimize a classifier on windows ``X`` (N, C, L) with binary
    labels ``y``; returns ``(network, per-epoch loss history)``."""
    net = Network(netspec, seed=opts.seed)
    X = np.asarray(X, dtype=net.dtype)
    y = np.asarray(y, dtype=np.int64)
    shuffle_rng = np.random.default_rng([opts.seed, 0x5348])
    drop_rng = np.random.default_rng([opts.seed, 0x4452])
    adam = Adam(net.params, lr=opts.lr)
    history = []
    for epoch in range(opts.epochs):
        total, count = 0.0, 0
        for idx in _epoch_batches(len(y), opts.batch_size, shuffle_rng):
            scores = net.forward(X[idx], train=True, rng=drop_rng)
            loss, dscores = cross_entropy(scores, y[idx])
            net.backward(dscores)
            adam.step(net.grads)
            total += loss * len(idx)
            count += len(idx)
        history.append(total / count)
        _check_finite_loss(history[-1], epoch, history)
    return net, history


def train_estimator(X, S, netspec: dict, opts: TrainOpts):
    """Adam-optimize a state-sequence regressor (mse loss, tanh head)."""
    net = Network(netspec, seed=opts.seed)
    X = np.asarray(X, dtype=net.dtype)
    S = np.asarray(S, dtype=net.dtype)
    shuffle_rng = np.random.default_rng([opts.seed, 0x5348])
    drop_rng = np.random.default_rng([opts.seed, 0x4452])
    adam = Adam(net.params, lr=opts.lr)
    history = []
    for epoch in range(opts.epochs):
        total, count = 0.0, 0
        for idx in _epoch_batches(len(X), opts.batch_size, shuffle_rng):
            out = net.forward(X[idx], train=True, rng=drop_rng)
            loss, dout = mse(out, S[idx])
            net.backward(dout)
            adam.step(net.grads)
            total += loss * len(idx)
            count += len(idx)
        history.append(total / count)
        _check_finite_loss(history[-1], epoch, history)
    return net, history


def _combined_accuracy(nse: Network, nsc: Network, X, y):
    labels = predict_scores(nsc, nse.forward(X)).argmax(axis=1)
    return float((labels == y).mean())


def predict_scores(net: Network, X):
    """Eval-mode likelihoods: softmax of the nonnegative head scores."""
    return softmax(net.forward(np.asarray(X, dtype=net.dtype)))


def fine_tune(nse: Network, nsc: Network, X, S, y, opts: TrainOpts,
              guard_fraction: float = 0.1, guard_tolerance: float = 0.005):
    """Joint update of estimator and classifier on the summed loss.

    The classifier consumes the estimator's output, so its gradient flows
    back into the estimator on top of the reconstruction term.  A held-out
    slice guards against regressions: if combined accuracy drops by more
    than ``guard_tolerance`` (or the loss diverges), the pre-fine-tuning
    weights are restored.  Returns ``(info_dict)``; nets are updated in
    place.
    """
    X = np.asarray(X, dtype=nse.dtype)
    S = np.asarray(S, dtype=nse.dtype)
    y = np.asarray(y, dtype=np.int64)
    guard_rng = np.random.default_rng([opts.seed, 0x4754])
    order = guard_rng.permutation(len(y))
    n_guard = max(1, int(len(y) * guard_fraction)) if len(y) else 0
    guard, fit = order[:n_guard], order[n_guard:]

    saved = (nse.get_weights(), nsc.get_weights())
    acc_before = _combined_accuracy(nse, nsc, X[guard], y[guard])

    shuffle_rng = np.random.default_rng([opts.seed, 0x5348])
    drop_rng = np.random.default_rng([opts.seed, 0x4452])
    adam = Adam(nse.params + nsc.params, lr=opts.lr)
    history = []
    diverged = False
    for epoch in range(opts.epochs):
        total, count = 0.0, 0
        for idx in _epoch_batches(len(fit), opts.batch_size, shuffle_rng):
            rows = fit[idx]
            s_hat = nse.forward(X[rows], train=True, rng=drop_rng)
            scores = nsc.forward(s_hat, train=True, rng=drop_rng)
            ce_loss, dscores = cross_entropy(scores, y[rows])
            mse_loss, ds_hat = mse(s_hat, S[rows])
            ds_hat = ds_hat + nsc.backward(dscores)
            nse.backward(ds_hat)
            adam.step(nse.grads + nsc.grads)
            total += (ce_loss + mse_loss) * len(rows)
            count += len(rows)
        history.append(total / count)
        if not np.isfinite(history[-1]):
            diverged = True
            break

    acc_after = _combined_accuracy(nse, nsc, X[guard], y[guard])
    reverted = False
    if diverged or acc_after < acc_before - guard_tolerance:
        nse.set_weights(saved[0])
        nsc.set_weights(saved[1])
        reverted = True
    return {"loss_history": history, "guard_acc_before": acc_before,
            "guard_acc_after": acc_after, "reverted": reverted,
            "diverged": diverged}


def predict(model: MonitorModel, X_obs):
    """Monitor prediction on scaled observation windows (N, C, L).

    Returns a dict with ``labels`` (argmax, ties broken to 0),
    ``likelihoods`` (N, 2), and for two-step monitors ``states_hat``.
    """
    if model.kind == "end_to_end":
        lik = predict_scores(model.nets["classifier"], X_obs)
        return {"labels": lik.argmax(axis=1), "likelihoods": lik}
    if model.kind == "two_step":
        s_hat = model.nets["nse"].forward(
            np.asarray(X_obs, dtype=model.nets["nse"].dtype))
        lik = predict_scores(model.nets["nsc"], s_hat)
        return {"labels": lik.argmax(axis=1), "likelihoods": lik,
                "states_hat": s_hat}
    raise ValueError(f"unknown monitor kind {model.kind!r}")


def save_model(model: MonitorModel, path):
    """Checkpoint: netspecs + metadata in meta.json, float32 weight arrays."""
    arrays = {}
    specs = {}
    for name, net in model.nets.items():
        specs[name] = net.spec
        for i, p in enumerate(net.params):
            arrays[f"w_{name}_{i}"] = p.astype(np.float32)
    meta = {"kind": "checkpoint", "monitor_kind": model.kind,
            "netspecs": specs, "train_meta": model.meta}
    save_container(path, meta, arrays)


def load_model(path) -> MonitorModel:
    meta, arrays = load_container(path)
    if meta.get("kind") != "checkpoint":
        raise ShapeError(f"{path} is not a checkpoint container")
    nets = {}
    for name, spec in meta["netspecs"].items():
        net = Network(spec, seed=0)
        weights = []
        i = 0
        while f"w_{name}_{i}" in arrays:
            weights.append(arrays[f"w_{name}_{i}"].astype(net.dtype))
            i += 1
        net.set_weights(weights)
        nets[name] = net
    return MonitorModel(kind=meta["monitor_kind"], nets=nets,
                        meta=meta["train_meta"])
