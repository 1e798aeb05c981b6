"""Pooled usual/unusual-labels evaluation and the exact permutation test.

Given a set of selected features (each with a usual label), every
evaluation instance containing at least one of them joins the usual-set
U when some contained feature's usual label matches its gold label, and
the unusual-set N when some contained feature points elsewhere; an
instance whose features point both ways joins both. The null hypothesis
shuffles which members are predicted correctly while fixing the overall
number correct, so the count of correct predictions inside U is exactly
hypergeometric over the distinct members of U union N. The one-sided
p-value (alternative: accuracy higher on U) is computed in log space.

The population is the set of distinct members, which keeps the null
exactly hypergeometric even when U and N overlap.
"""

import csv
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus import InputError, token_stream

# Predictions are carried as a plain mapping: instance id -> predicted
# label id.
PredictionSet = dict


@dataclass
class PooledEval:
    """Distinct members of U union N with membership and correctness flags."""

    members: np.ndarray
    in_U: np.ndarray
    in_N: np.ndarray
    correct: np.ndarray

    def __post_init__(self):
        self.members = np.asarray(self.members)
        self.in_U = np.asarray(self.in_U, dtype=bool)
        self.in_N = np.asarray(self.in_N, dtype=bool)
        self.correct = np.asarray(self.correct, dtype=bool)
        if not (self.in_U | self.in_N).all():
            raise ValueError("every member must be in U or N")

    @property
    def M(self):
        return len(self.members)

    @property
    def K(self):
        return int(self.correct.sum())

    @property
    def n_U(self):
        return int(self.in_U.sum())

    @property
    def c_U(self):
        return int((self.in_U & self.correct).sum())

    @property
    def n_N(self):
        return int(self.in_N.sum())

    @property
    def c_N(self):
        return int((self.in_N & self.correct).sum())


@dataclass
class TestResult:
    M: int
    K: int
    n_U: int
    c_U: int
    n_N: int
    c_N: int
    log10_p: float
    p: float

    @property
    def acc_U(self):
        return self.c_U / self.n_U if self.n_U else None

    @property
    def acc_N(self):
        return self.c_N / self.n_N if self.n_N else None


def _contained_features(inst, by_kind, strip_punctuation):
    found = []
    uni = by_kind.get("unigram")
    if uni:
        found.extend((("unigram", key), uni[key]) for key in inst.tokens & uni.keys())
    big = by_kind.get("bigram")
    if big:
        pairs = set()
        for seg in inst.segments:
            stream = token_stream(seg, strip_punctuation)
            pairs.update(zip(stream, stream[1:]))
        found.extend((("bigram", key), big[key]) for key in pairs & big.keys())
    return found


def pool(eval_data, selected, preds):
    """Build the pooled usual/unusual evaluation sets.

    selected: FeatureStats sequence (features with usual labels).
    preds: mapping instance id -> predicted label id; must cover every
    evaluation instance containing at least one selected feature.
    Selected features absent from the evaluation data contribute
    nothing; the result does not depend on the order of *selected*.
    """
    if not selected:
        raise ValueError("no selected features")
    by_kind = {}
    for s in selected:
        key = s.feature.key[0] if s.feature.kind == "unigram" else s.feature.key
        by_kind.setdefault(s.feature.kind, {})[key] = s.usual_label

    members, in_U, in_N, correct = [], [], [], []
    for inst in eval_data.instances:
        contained = _contained_features(inst, by_kind, eval_data.strip_punctuation)
        if not contained:
            continue
        usuals = {usual for _, usual in contained}
        if inst.id not in preds:
            raise InputError("missing prediction for instance %d" % inst.id)
        members.append(inst.id)
        in_U.append(inst.label in usuals)
        in_N.append(any(u != inst.label for u in usuals))
        correct.append(preds[inst.id] == inst.label)

    if not members:
        raise InputError("no evaluation instance contains any selected feature")
    return PooledEval(
        members=np.array(members), in_U=np.array(in_U),
        in_N=np.array(in_N), correct=np.array(correct),
    )


def _log_binom(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log10_hypergeom_tail(M, K, n_U, c_U):
    """log10 of P(X >= c_U) for X ~ Hypergeometric(M, K, n_U).

    Computed with log-gamma log-binomials and a max-shifted log-sum-exp,
    so it stays finite far beyond linear-precision underflow (p-values
    of 1e-600 and smaller are routine at corpus scale).
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if not (0 <= K <= M and 0 <= n_U <= M):
        raise ValueError("need 0 <= K <= M and 0 <= n_U <= M")
    lo = max(0, K - (M - n_U))
    hi = min(n_U, K)
    if not lo <= c_U <= hi:
        raise ValueError(
            "c_U=%d outside attainable range [%d, %d]" % (c_U, lo, hi)
        )
    if n_U == 0 or K == 0 or n_U == M:
        # the statistic is forced: only one attainable value
        return 0.0
    ks = np.arange(c_U, hi + 1)
    log_denom = _log_binom(M, n_U)
    terms = np.array(
        [_log_binom(K, k) + _log_binom(M - K, n_U - k) - log_denom for k in ks]
    )
    peak = terms.max()
    log_p = peak + math.log(np.exp(terms - peak).sum())
    return min(0.0, log_p / math.log(10.0))


def result_from_counts(M, K, n_U, c_U, n_N=0, c_N=0):
    """TestResult for explicit counts (log10_p is authoritative; the
    linear p underflows to 0 beyond ~1e-308)."""
    log10_p = log10_hypergeom_tail(M, K, n_U, c_U)
    p = 10.0 ** log10_p if log10_p > -320 else 0.0
    return TestResult(
        M=M, K=K, n_U=n_U, c_U=c_U, n_N=n_N, c_N=c_N, log10_p=log10_p, p=p
    )


def exact_log_p(pe):
    """Exact one-sided permutation-test p-value of the pooled evaluation."""
    if pe.M < 1:
        raise ValueError("empty pooled evaluation")
    return result_from_counts(pe.M, pe.K, pe.n_U, pe.c_U, pe.n_N, pe.c_N)


def brute_force_p(pe, max_placements=10 ** 6):
    """Oracle: enumerate every placement of the K correct flags among the
    M members and count those whose correct-in-U statistic reaches c_U."""
    n_placements = math.comb(pe.M, pe.K)
    if n_placements > max_placements:
        raise ValueError(
            "C(%d, %d) = %d placements exceeds %d; use exact_log_p"
            % (pe.M, pe.K, n_placements, max_placements)
        )
    in_U = pe.in_U.tolist()
    observed = pe.c_U
    hits = 0
    for combo in itertools.combinations(range(pe.M), pe.K):
        stat = sum(in_U[i] for i in combo)
        if stat >= observed:
            hits += 1
    return hits / n_placements


def monte_carlo_p(pe, rounds, seed):
    """Shuffle-based estimate with add-one smoothing:
    (1 + hits) / (1 + rounds). Deterministic given *seed*."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    M, K, c_U = pe.M, pe.K, pe.c_U
    in_U = pe.in_U
    rng = np.random.default_rng(seed)
    hits = 0
    chunk = max(1, min(rounds, 4096))
    done = 0
    kth = min(K, M - 1)
    while done < rounds:
        b = min(chunk, rounds - done)
        keys = rng.random((b, M))
        # the K members with the smallest keys are the shuffled corrects
        picked = np.argpartition(keys, kth, axis=1)[:, :K]
        stats = in_U[picked].sum(axis=1)
        hits += int((stats >= c_U).sum())
        done += b
    return (1 + hits) / (1 + rounds)


# ---------------------------------------------------------------------------
# File formats

def write_predictions(preds, label_names, path, run_id=None):
    """CSV with columns instance_id, predicted_label (label names)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if run_id:
            fh.write("# run_id=%s\n" % run_id)
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "predicted_label"])
        for iid in sorted(preds):
            writer.writerow([iid, label_names[preds[iid]]])


def read_predictions(path, label_vocab):
    """Read predictions from CSV (instance_id, predicted_label) or JSONL
    records with those keys. Labels may be names or integer ids."""
    preds = {}

    def to_label_id(value, where):
        value = str(value)
        if value in label_vocab.index:
            return label_vocab.index[value]
        try:
            lid = int(value)
        except ValueError:
            raise InputError("%s: unknown label %r" % (where, value))
        if not 0 <= lid < len(label_vocab):
            raise InputError("%s: label id %d out of range" % (where, lid))
        return lid

    if str(path).endswith(".jsonl"):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InputError("line %d: malformed JSON (%s)" % (lineno, exc))
                if "instance_id" not in record or "predicted_label" not in record:
                    raise InputError(
                        "line %d: need instance_id and predicted_label" % lineno
                    )
                preds[int(record["instance_id"])] = to_label_id(
                    record["predicted_label"], "line %d" % lineno
                )
    else:
        from .featstats import _read_commented_csv

        meta, rows = _read_commented_csv(path)
        if not rows or rows[0] != ["instance_id", "predicted_label"]:
            raise InputError("%s: not a predictions file" % path)
        for row in rows[1:]:
            preds[int(row[0])] = to_label_id(row[1], "instance %s" % row[0])
    if not preds:
        raise InputError("%s: no predictions" % path)
    return preds


def write_result_json(result, path, selection_config=None, run_id=None):
    payload = {
        "M": result.M,
        "K": result.K,
        "n_U": result.n_U,
        "c_U": result.c_U,
        "n_N": result.n_N,
        "c_N": result.c_N,
        "acc_U": result.acc_U,
        "acc_N": result.acc_N,
        "log10_p": result.log10_p,
        "p": result.p,
    }
    if selection_config is not None:
        payload["selection"] = selection_config
    if run_id:
        payload["run_id"] = run_id
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
