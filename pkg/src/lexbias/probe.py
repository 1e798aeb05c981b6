"""Weighted bag-of-features multinomial logistic regression probe.

A deliberately simple, convex stand-in for larger trained-from-scratch
models: binary unigram presence features, a dense weight matrix with a
bias row, and mini-batch gradient descent where each instance's loss is
scaled by its per-instance multiplier. Whatever feature-label statistics
survive in the (re)weighted data are exactly what this model can absorb.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import InputError

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    step_size: float = 0.5
    l2_strength: float = 1e-4
    seed: int = 0
    # step_size / (1 + step_decay * step); 0 disables the schedule
    step_decay: float = 0.005

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be >= 0")


class ProbeModel:
    """vocab maps token -> column; weights is (|vocab|+1, |Y|) with the
    bias in the last row. The vocabulary is fit on training data only."""

    def __init__(self, vocab, weights, label_vocab):
        self.vocab = dict(vocab)
        self.weights = np.asarray(weights, dtype=float)
        self.label_vocab = label_vocab
        if not np.isfinite(self.weights).all():
            raise ValueError("non-finite model weights")
        if self.weights.shape != (len(self.vocab) + 1, len(label_vocab)):
            raise ValueError("weight matrix shape mismatch")
        self.loss_trace = []


def _design_matrix(dataset, vocab):
    rows, cols = [], []
    for r, inst in enumerate(dataset.instances):
        for tok in inst.tokens:
            col = vocab.get(tok)
            if col is not None:
                rows.append(r)
                cols.append(col)
    return sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(dataset.n, len(vocab))
    )


def train(d, multipliers, cfg=None):
    """Fit the probe on dataset *d* with per-instance loss multipliers.

    Minimizes mean_i multiplier_i * cross_entropy_i plus an L2 penalty
    on the non-bias weights, by mini-batch descent over seeded shuffles.
    multipliers=None means unweighted (identical to all-ones).
    Deterministic given cfg.seed.
    """
    cfg = cfg or TrainConfig()
    if multipliers is None:
        multipliers = np.ones(d.n)
    multipliers = np.asarray(multipliers, dtype=float)
    if multipliers.shape != (d.n,):
        raise ValueError(
            "got %d multipliers for %d instances" % (len(multipliers), d.n)
        )
    if (multipliers < 0).any():
        raise ValueError("multipliers must be nonnegative")
    mean = multipliers.mean()
    if abs(mean - 1.0) > 1e-6:
        logger.warning("multiplier mean %.6f is not 1; objective is rescaled", mean)

    vocab = {tok: i for i, tok in enumerate(
        sorted(set().union(*(inst.tokens for inst in d.instances)))
    )}
    X = _design_matrix(d, vocab)
    y = d.labels_array
    n_labels = len(d.label_vocab)
    V = len(vocab)

    W = np.zeros((V, n_labels))
    b = np.zeros(n_labels)
    rng = np.random.default_rng(cfg.seed)
    loss_trace = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(d.n)
        epoch_loss = 0.0
        for start in range(0, d.n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb = X[idx]
            yb = y[idx]
            mb = multipliers[idx]
            logits = Xb @ W + b
            logits -= logits.max(axis=1, keepdims=True)
            expl = np.exp(logits)
            probs = expl / expl.sum(axis=1, keepdims=True)
            nll = -np.log(probs[np.arange(len(yb)), yb] + 1e-300)
            batch_loss = float((mb * nll).mean())
            if not np.isfinite(batch_loss):
                raise FloatingPointError(
                    "non-finite training loss (step size too large?)"
                )
            epoch_loss += batch_loss * len(yb)
            grad = probs
            grad[np.arange(len(yb)), yb] -= 1.0
            grad *= mb[:, None]
            lr = cfg.step_size / (1.0 + cfg.step_decay * step)
            W -= lr * (np.asarray(Xb.T @ grad) / len(yb) + cfg.l2_strength * W)
            b -= lr * grad.mean(axis=0)
            step += 1
        loss_trace.append(epoch_loss / d.n)

    model = ProbeModel(vocab, np.vstack([W, b]), d.label_vocab)
    model.loss_trace = loss_trace
    return model


def predict(m, d):
    """Argmax predictions (ties to the lowest label id): mapping
    instance id -> label id. Out-of-vocabulary tokens are ignored; an
    instance with no in-vocabulary token gets the bias-row argmax."""
    X = _design_matrix(d, m.vocab)
    logits = X @ m.weights[:-1] + m.weights[-1]
    picks = np.argmax(logits, axis=1)
    return {inst.id: int(picks[r]) for r, inst in enumerate(d.instances)}


@dataclass
class AccuracyReport:
    accuracy: float
    per_label: dict
    n: int
    n_correct: int


def evaluate(m, d):
    """Overall and per-label accuracy of the probe on dataset *d*."""
    preds = predict(m, d)
    golds = d.labels_array
    hits = np.array([preds[inst.id] == inst.label for inst in d.instances])
    per_label = {}
    for y, name in enumerate(d.label_vocab.labels):
        mask = golds == y
        per_label[name] = float(hits[mask].mean()) if mask.any() else None
    return AccuracyReport(
        accuracy=float(hits.mean()),
        per_label=per_label,
        n=d.n,
        n_correct=int(hits.sum()),
    )


MODEL_FORMAT_VERSION = 1


def save_model(m, path, run_id=None):
    columns = sorted(m.vocab, key=m.vocab.get)
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "labels": list(m.label_vocab.labels),
        "vocab": columns,
        "weights": [[float(w) for w in row] for row in m.weights],
    }
    if run_id:
        payload["run_id"] = run_id
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    from .corpus import LabelVocab

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise InputError(
            "%s: unsupported model format %r" % (path, payload.get("format_version"))
        )
    vocab = {tok: i for i, tok in enumerate(payload["vocab"])}
    return ProbeModel(
        vocab, np.array(payload["weights"]), LabelVocab(payload["labels"])
    )
