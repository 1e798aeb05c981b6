"""Per-feature label statistics over a dataset.

Builds presence count tables for unigram/bigram features, computes
conditional label distributions, one-proportion z-scores, usual labels,
top-k-per-label selection, per-feature label balance, and the aggregate
balance error under arbitrary instance weights.
"""

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import InputError, token_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class FeatureId:
    """A binary presence feature: a unigram or an adjacent-token bigram.

    key is always a tuple of tokens (length 1 or 2) so that ordering and
    serialization are uniform across kinds.
    """

    kind: str
    key: tuple

    @property
    def text(self):
        return " ".join(self.key)


def unigram(token):
    return FeatureId("unigram", (token,))


def bigram(first, second):
    return FeatureId("bigram", (first, second))


def _feature_from_text(kind, text):
    key = tuple(text.split(" "))
    expected = 1 if kind == "unigram" else 2
    if len(key) != expected:
        raise InputError("bad %s key %r" % (kind, text))
    return FeatureId(kind, key)


class FeatureTable:
    """Per-feature label co-occurrence counts with postings lists.

    counts[j, y] is the number of instances containing feature j that
    carry label y; doc_count[j] is the row sum; postings[j] the sorted
    instance ids containing feature j. Tables loaded from CSV carry
    counts only (postings/instance_labels are None), which supports the
    uniform-weight statistics but not weighted ones.
    """

    def __init__(self, kind, features, counts, postings, n_instances,
                 instance_labels, label_names):
        self.kind = kind
        self.features = list(features)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.doc_count = self.counts.sum(axis=1)
        self.postings = postings
        self.n_instances = int(n_instances)
        self.instance_labels = (
            None if instance_labels is None else np.asarray(instance_labels)
        )
        self.label_names = tuple(label_names)
        if postings is not None:
            for j, ids in enumerate(postings):
                if len(ids) != self.doc_count[j]:
                    raise ValueError(
                        "feature %d: postings/count mismatch" % j
                    )

    @property
    def n_features(self):
        return len(self.features)

    @property
    def n_labels(self):
        return len(self.label_names)

    def cond_dist(self, j):
        """Empirical label distribution among instances containing feature j."""
        return self.counts[j] / self.doc_count[j]

    def presence_matrix(self):
        """Sparse (n_features x n_instances) binary presence matrix."""
        if self.postings is None:
            raise ValueError("table has no postings (loaded from CSV?)")
        indptr = np.zeros(self.n_features + 1, dtype=np.int64)
        for j, ids in enumerate(self.postings):
            indptr[j + 1] = indptr[j] + len(ids)
        indices = (
            np.concatenate(self.postings)
            if self.postings
            else np.zeros(0, dtype=np.int64)
        )
        data = np.ones(len(indices))
        return sp.csr_matrix(
            (data, indices.astype(np.int64), indptr),
            shape=(self.n_features, self.n_instances),
        )


def _instance_features(inst, kind, strip_punctuation):
    if kind == "unigram":
        return inst.tokens
    # bigrams: adjacent ordered pairs from the pre-dedup stream, and
    # never across the segment boundary
    pairs = set()
    for seg in inst.segments:
        stream = token_stream(seg, strip_punctuation)
        pairs.update(zip(stream, stream[1:]))
    return pairs


def build_feature_table(d, kind, min_count=1, require_all_labels=False,
                        stop_words=None):
    """Count feature/label co-occurrences over dataset *d*.

    Keeps features of the given kind with doc_count >= min_count, not in
    *stop_words* (applied to unigrams only), and, when
    require_all_labels, with at least one instance of every label.
    """
    if kind not in ("unigram", "bigram"):
        raise InputError("unknown feature kind %r" % kind)
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    stop_words = stop_words or set()

    postings = {}
    for pos, inst in enumerate(d.instances):
        for item in _instance_features(inst, kind, d.strip_punctuation):
            key = (item,) if kind == "unigram" else item
            postings.setdefault(key, []).append(pos)

    n_labels = len(d.label_vocab)
    labels = d.labels_array
    features, counts, plists = [], [], []
    for key in sorted(postings):
        if kind == "unigram" and key[0] in stop_words:
            continue
        ids = postings[key]
        if len(ids) < min_count:
            continue
        row = np.bincount(labels[ids], minlength=n_labels)
        if require_all_labels and (row == 0).any():
            continue
        features.append(FeatureId(kind, key))
        counts.append(row)
        plists.append(np.array(ids, dtype=np.int64))

    counts = (
        np.array(counts, dtype=np.int64)
        if counts
        else np.zeros((0, n_labels), dtype=np.int64)
    )
    return FeatureTable(
        kind, features, counts, plists, d.n, labels, d.label_vocab.labels
    )


def z_score(table, j, y, null_dist):
    """One-proportion z statistic of label y among instances with feature j.

    (p_hat - p0) / sqrt(p0 (1 - p0) / doc_count), p0 = null_dist[y].
    """
    p0 = float(null_dist[y])
    if not 0.0 < p0 < 1.0:
        raise ValueError("degenerate null proportion %r for label %d" % (p0, y))
    dc = int(table.doc_count[j])
    if dc < 1:
        raise ValueError("feature %d has empty postings" % j)
    phat = table.counts[j, y] / dc
    return (phat - p0) / math.sqrt(p0 * (1.0 - p0) / dc)


def z_score_matrix(table, null_dist):
    """All z-scores at once: shape (n_features, n_labels)."""
    p0 = np.asarray(null_dist, dtype=float)
    if ((p0 <= 0.0) | (p0 >= 1.0)).any():
        raise ValueError("degenerate null proportion in %r" % (p0,))
    dc = table.doc_count[:, None].astype(float)
    phat = table.counts / dc
    return (phat - p0) / np.sqrt(p0 * (1.0 - p0) / dc)


@dataclass(frozen=True)
class FeatureStats:
    """Selected-feature summary: conditional distribution, z-scores, and
    the usual (maximally associated) label."""

    feature: FeatureId
    doc_count: int
    cond_dist: tuple
    z_scores: tuple
    usual_label: int


def _stats_for(table, j, Z):
    zrow = Z[j]
    return FeatureStats(
        feature=table.features[j],
        doc_count=int(table.doc_count[j]),
        cond_dist=tuple(float(p) for p in table.cond_dist(j)),
        z_scores=tuple(float(z) for z in zrow),
        usual_label=int(np.argmax(zrow)),
    )


def select_top_features(table, null_dist, k):
    """Top-k features per label by z-score, deduplicated.

    For each label, take the k features with the highest z-score for
    that label (ties broken by feature key). A feature ranked for more
    than one label appears once, with usual_label = its argmax-z label.
    Returns FeatureStats sorted by feature key.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if table.n_features == 0:
        raise InputError("feature table is empty")
    Z = z_score_matrix(table, null_dist)
    if table.n_features < k:
        logger.warning(
            "only %d features available, fewer than k=%d per label",
            table.n_features, k,
        )
    chosen = set()
    for y in range(table.n_labels):
        order = sorted(
            range(table.n_features),
            key=lambda j: (-Z[j, y], table.features[j].key),
        )
        chosen.update(order[: min(k, table.n_features)])
    return [
        _stats_for(table, j, Z)
        for j in sorted(chosen, key=lambda j: table.features[j].key)
    ]


@dataclass
class BalanceReport:
    """Label-balance summary against a reference distribution.

    per_feature maps FeatureId to the feature's mean absolute deviation
    from the reference; aggregate_err is the mean over all included
    (feature, label) cells; excluded counts features with zero weighted
    mass, which are left out of the mean rather than treated as zero.
    """

    per_feature: dict
    aggregate_err: float
    target: np.ndarray
    excluded: int


def label_balance(table, weights=None, reference=None):
    """Per-feature and aggregate deviation of the (weighted) conditional
    label distributions from *reference*.

    With weights absent, the conditional distribution of feature j is
    counts[j]/doc_count[j]; with weights w it is the w-mass of each
    label among instances containing j, normalized. reference defaults
    to the uniform distribution.
    """
    n_labels = table.n_labels
    reference = (
        np.full(n_labels, 1.0 / n_labels)
        if reference is None
        else np.asarray(reference, dtype=float)
    )
    if reference.shape != (n_labels,):
        raise ValueError("reference has wrong length")

    if weights is None:
        mass = table.counts.astype(float)
    else:
        weights = np.asarray(weights, dtype=float)
        if table.postings is None or table.instance_labels is None:
            raise ValueError("weighted balance needs a table with postings")
        if weights.shape != (table.n_instances,):
            raise ValueError(
                "weights length %d != n_instances %d"
                % (len(weights), table.n_instances)
            )
        A = table.presence_matrix()
        onehot = np.zeros((table.n_instances, n_labels))
        onehot[np.arange(table.n_instances), table.instance_labels] = 1.0
        mass = np.asarray(A @ (weights[:, None] * onehot))

    totals = mass.sum(axis=1)
    per_feature = {}
    included = []
    excluded = 0
    for j in range(table.n_features):
        if totals[j] <= 0.0:
            excluded += 1
            continue
        dev = np.abs(mass[j] / totals[j] - reference)
        val = float(dev.mean())
        per_feature[table.features[j]] = val
        included.append(val)
    aggregate = sum(included) / len(included) if included else 0.0
    return BalanceReport(
        per_feature=per_feature,
        aggregate_err=aggregate,
        target=reference,
        excluded=excluded,
    )


def sample_eligible_bigrams(table, count, seed):
    """Uniform sample (without replacement) of bigrams that occur with
    every label at least once. Deterministic given *seed*."""
    if table.kind != "bigram":
        raise ValueError("table kind is %r, expected bigram" % table.kind)
    if count < 1:
        raise ValueError("count must be >= 1")
    eligible = np.flatnonzero((table.counts >= 1).all(axis=1))
    if len(eligible) == 0:
        raise InputError("no bigram occurs with every label")
    rng = np.random.default_rng(seed)
    take = min(count, len(eligible))
    picked = rng.choice(len(eligible), size=take, replace=False)
    return [table.features[eligible[i]] for i in picked]


def restrict_table(table, feature_ids):
    """Sub-table containing only *feature_ids* (in the given order)."""
    pos = {fid: j for j, fid in enumerate(table.features)}
    idx = []
    for fid in feature_ids:
        if fid not in pos:
            raise InputError("feature %r not in table" % (fid,))
        idx.append(pos[fid])
    return FeatureTable(
        table.kind,
        [table.features[j] for j in idx],
        table.counts[idx],
        None if table.postings is None else [table.postings[j] for j in idx],
        table.n_instances,
        table.instance_labels,
        table.label_names,
    )


# ---------------------------------------------------------------------------
# CSV formats

def write_feature_table_csv(table, path, run_id=None):
    """Columns: kind, key, doc_count, count_<label> per label. Metadata
    rides in leading '#' comment lines."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# n_instances=%d\n" % table.n_instances)
        fh.write("# labels=%s\n" % ",".join(table.label_names))
        if run_id:
            fh.write("# run_id=%s\n" % run_id)
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "key", "doc_count"]
            + ["count_%s" % name for name in table.label_names]
        )
        for j, fid in enumerate(table.features):
            writer.writerow(
                [fid.kind, fid.text, int(table.doc_count[j])]
                + [int(c) for c in table.counts[j]]
            )


def _read_commented_csv(path):
    meta = {}
    body = []
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                text = line[1:].strip()
                if "=" in text:
                    key, _, value = text.partition("=")
                    meta[key.strip()] = value
            else:
                body.append(line)
    rows = [row for row in csv.reader(body) if row]
    return meta, rows


def read_feature_table_csv(path):
    """Load an exported table. Postings are not stored in the CSV, so
    the result supports uniform-weight statistics only."""
    meta, rows = _read_commented_csv(path)
    if "labels" not in meta or "n_instances" not in meta:
        raise InputError("%s: missing '# labels=' / '# n_instances=' metadata" % path)
    label_names = tuple(meta["labels"].split(","))
    header, data = rows[0], rows[1:]
    expected = ["kind", "key", "doc_count"] + [
        "count_%s" % name for name in label_names
    ]
    if header != expected:
        raise InputError("%s: unexpected header %r" % (path, header))
    features, counts = [], []
    kind = None
    for row in data:
        fid = _feature_from_text(row[0], row[1])
        kind = fid.kind if kind is None else kind
        if fid.kind != kind:
            raise InputError("%s: mixed feature kinds" % path)
        features.append(fid)
        counts.append([int(c) for c in row[3:]])
    counts = (
        np.array(counts, dtype=np.int64)
        if counts
        else np.zeros((0, len(label_names)), dtype=np.int64)
    )
    return FeatureTable(
        kind or "unigram", features, counts, None,
        int(meta["n_instances"]), None, label_names,
    )


def write_feature_stats_csv(stats, label_names, path, run_id=None):
    """Selected-feature export consumed by permutation-test pooling."""
    label_names = tuple(label_names)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# labels=%s\n" % ",".join(label_names))
        if run_id:
            fh.write("# run_id=%s\n" % run_id)
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "key", "doc_count"]
            + ["p_%s" % n for n in label_names]
            + ["z_%s" % n for n in label_names]
            + ["usual_label"]
        )
        for s in stats:
            writer.writerow(
                [s.feature.kind, s.feature.text, s.doc_count]
                + [repr(p) for p in s.cond_dist]
                + [repr(z) for z in s.z_scores]
                + [label_names[s.usual_label]]
            )


def read_feature_stats_csv(path):
    """Returns (list of FeatureStats, label_names)."""
    meta, rows = _read_commented_csv(path)
    if "labels" not in meta:
        raise InputError("%s: missing '# labels=' metadata" % path)
    label_names = tuple(meta["labels"].split(","))
    n = len(label_names)
    out = []
    for row in rows[1:]:
        fid = _feature_from_text(row[0], row[1])
        out.append(
            FeatureStats(
                feature=fid,
                doc_count=int(row[2]),
                cond_dist=tuple(float(v) for v in row[3:3 + n]),
                z_scores=tuple(float(v) for v in row[3 + n:3 + 2 * n]),
                usual_label=label_names.index(row[3 + 2 * n]),
            )
        )
    return out, label_names
