"""Instance reweighting on the probability simplex.

Solves for weights q over the training instances such that every
feature's weighted conditional label distribution matches a target,
by minimizing the sum of squared denominator-multiplied residuals

    r[j, y] = sum_i q_i [f_j(x_i)=1 and y_i=y]  -  t_y sum_i q_i [f_j(x_i)=1]

under the softmax reparameterization q = softmax(z), which removes the
simplex constraints. The residual form never divides by the weighted
feature mass, so features receiving vanishing mass stay numerically
benign.
"""

import csv
import json
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import featstats
from .corpus import InputError

logger = logging.getLogger(__name__)


class WeightVector:
    """Unnormalized scores z alongside their stable softmax q."""

    def __init__(self, z):
        z = np.asarray(z, dtype=float)
        if not np.isfinite(z).all():
            raise ValueError("non-finite entries in z")
        # max-shift for stability; the -745 floor keeps exp() in the
        # denormal range instead of 0 so every q_i stays positive
        shifted = np.maximum(z - z.max(), -745.0)
        e = np.exp(shifted)
        self.z = z
        self.q = e / e.sum()

    @classmethod
    def uniform(cls, n):
        return cls(np.zeros(n))

    @property
    def n(self):
        return len(self.q)


def loss_multipliers(w):
    """Per-instance training loss multipliers q_i * n (mean exactly 1)."""
    return w.q * w.n


@dataclass
class ResidualMatrix:
    """Per-(feature, label) constraint residuals at some weighting."""

    r: np.ndarray
    target: np.ndarray

    def row_sums(self):
        return self.r.sum(axis=1)


@dataclass
class OptimizerConfig:
    """First-order solver settings.

    Plateau handling: when the best objective has not improved by a
    relative min_rel_improvement within improvement_window steps, the
    step size is halved; once it decays below 1e-7 of the initial value
    the solve stops and is reported converged.
    """

    max_steps: int = 5000
    step_size: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tolerance: float = 0.0
    improvement_window: int = 50
    min_rel_improvement: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass
class ReweightReport:
    err_before: float
    err_after: float
    objective_trace: list = field(repr=False)
    converged: bool = False
    excluded_features: int = 0
    n_steps: int = 0


class _Problem:
    """Precomputed sparse structures for objective/gradient passes."""

    def __init__(self, table, target):
        if table.postings is None or table.instance_labels is None:
            raise ValueError("reweighting needs a table built from a dataset")
        self.n = table.n_instances
        self.labels = table.instance_labels
        self.target = np.asarray(target, dtype=float)
        if self.target.shape != (table.n_labels,):
            raise ValueError("target has wrong length")
        self.A = table.presence_matrix()
        onehot = np.zeros((self.n, table.n_labels))
        onehot[np.arange(self.n), self.labels] = 1.0
        self.onehot = onehot

    def residuals(self, q):
        mass = self.A @ (q[:, None] * self.onehot)
        total = self.A @ q
        return mass - total[:, None] * self.target

    def objective(self, q):
        r = self.residuals(q)
        return float((r * r).sum())

    def objective_gradient(self, z):
        """Objective and its gradient with respect to z at q=softmax(z)."""
        w = WeightVector(z)
        q = w.q
        r = self.residuals(q)
        obj = float((r * r).sum())
        # dO/dq_i = 2 sum_{j: i in P_j} (r[j, y_i] - t . r[j]) collected
        # through the presence matrix, then chained through the softmax
        a = r @ self.target
        per_label = np.asarray(self.A.T @ r)
        gq = 2.0 * (per_label[np.arange(self.n), self.labels]
                    - np.asarray(self.A.T @ a).ravel())
        gz = q * (gq - float(q @ gq))
        return obj, gz, w


def residual_matrix(w, table, target):
    """Constraint residuals of weighting *w* (rows sum to zero when the
    target sums to one)."""
    prob = _Problem(table, target)
    return ResidualMatrix(r=prob.residuals(w.q), target=prob.target)


def objective(w, table, target):
    """Sum of squared residuals; zero iff every feature's weighted
    conditional label distribution equals the target exactly."""
    if table.n_features == 0:
        return 0.0
    return _Problem(table, target).objective(w.q)


def gradient(w, table, target):
    """Gradient of the objective with respect to the scores z."""
    if table.n_features == 0:
        return np.zeros(w.n)
    return _Problem(table, target).objective_gradient(w.z)[1]


def optimize(d, table, target, cfg=None):
    """Solve for instance weights driving feature label balance to *target*.

    Starts from z = 0 (uniform q), runs Adam with best-iterate tracking
    and plateau-triggered step decay, and returns the best iterate along
    with a report of Err before/after, the objective trace, and
    convergence status. A failure to improve Err (possible when the
    constraint system is badly conditioned) is reported, not raised.
    """
    cfg = cfg or OptimizerConfig()
    n = d.n
    if table.n_features == 0:
        logger.warning("empty feature table: returning uniform weights")
        report = ReweightReport(
            err_before=0.0, err_after=0.0, objective_trace=[0.0],
            converged=True, excluded_features=0, n_steps=0,
        )
        return WeightVector.uniform(n), report
    if table.n_instances != n:
        raise ValueError("table was built on a different dataset size")

    prob = _Problem(table, target)
    err_before = featstats.label_balance(table, reference=prob.target).aggregate_err

    z = np.zeros(n)
    m = np.zeros(n)
    v = np.zeros(n)
    lr = cfg.step_size
    lr_floor = cfg.step_size * 1e-7
    best_obj = np.inf
    best_z = z.copy()
    stale = 0
    trace = []
    converged = False
    for step in range(1, cfg.max_steps + 1):
        obj, g, _ = prob.objective_gradient(z)
        if not np.isfinite(obj) or not np.isfinite(g).all():
            raise FloatingPointError(
                "non-finite objective/gradient at step %d" % step
            )
        trace.append(obj)
        if obj < best_obj * (1.0 - cfg.min_rel_improvement):
            best_obj = obj
            best_z = z.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.improvement_window:
                lr *= 0.5
                stale = 0
                if lr < lr_floor:
                    converged = True
                    break
        if best_obj < cfg.tolerance:
            converged = True
            break
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        mhat = m / (1.0 - cfg.beta1 ** step)
        vhat = v / (1.0 - cfg.beta2 ** step)
        z = z - lr * mhat / (np.sqrt(vhat) + cfg.eps)

    w = WeightVector(best_z)
    balance_after = featstats.label_balance(
        table, weights=w.q, reference=prob.target
    )
    report = ReweightReport(
        err_before=err_before,
        err_after=balance_after.aggregate_err,
        objective_trace=trace,
        converged=converged,
        excluded_features=balance_after.excluded,
        n_steps=len(trace),
    )
    if report.err_after > report.err_before:
        logger.warning(
            "reweighting worsened balance: Err %.4f -> %.4f",
            report.err_before, report.err_after,
        )
    return w, report


# ---------------------------------------------------------------------------
# File formats

def write_weights_csv(w, path, target, objective_value, err_before, err_after,
                      run_id=None):
    """Columns instance_id, q, loss_multiplier; solve metadata in leading
    '#' comment lines."""
    mult = loss_multipliers(w)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# n=%d\n" % w.n)
        fh.write("# target=%s\n" % ",".join(repr(float(t)) for t in np.asarray(target)))
        fh.write("# objective=%r\n" % objective_value)
        fh.write("# err_before=%r\n" % err_before)
        fh.write("# err_after=%r\n" % err_after)
        if run_id:
            fh.write("# run_id=%s\n" % run_id)
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "q", "loss_multiplier"])
        for i in range(w.n):
            writer.writerow([i, repr(float(w.q[i])), repr(float(mult[i]))])


def read_weights_csv(path):
    """Returns (instance_ids, q, loss_multipliers, metadata dict)."""
    meta, rows = featstats._read_commented_csv(path)
    if not rows or rows[0] != ["instance_id", "q", "loss_multiplier"]:
        raise InputError("%s: not a weights file" % path)
    ids, q, mult = [], [], []
    for row in rows[1:]:
        ids.append(int(row[0]))
        q.append(float(row[1]))
        mult.append(float(row[2]))
    return np.array(ids), np.array(q), np.array(mult), meta


def write_report_json(report, cfg, path, run_id=None):
    payload = {
        "err_before": report.err_before,
        "err_after": report.err_after,
        "converged": report.converged,
        "excluded_features": report.excluded_features,
        "n_steps": report.n_steps,
        "final_objective": report.objective_trace[-1] if report.objective_trace else 0.0,
        "best_objective": min(report.objective_trace) if report.objective_trace else 0.0,
        "objective_trace": list(report.objective_trace),
        "config": asdict(cfg),
    }
    if run_id:
        payload["run_id"] = run_id
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
