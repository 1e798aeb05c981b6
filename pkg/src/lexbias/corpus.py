"""Loading, tokenizing, and representing labeled text datasets.

A dataset is a sequence of instances, each carrying one or two raw text
segments (e.g. premise/hypothesis), a presence set of lowercase tokens,
and a label id. Datasets are immutable after load and safe to share
across workers.
"""

import json
import unicodedata
from dataclasses import dataclass
from importlib import resources

import numpy as np


class InputError(ValueError):
    """Bad input data or configuration (CLI maps this to exit code 2)."""


def token_stream(text, strip_punctuation=True):
    """Ordered lowercase tokens of *text*.

    Lowercases, removes Unicode punctuation characters, splits on
    whitespace, and drops empty tokens. The ordered stream (with
    duplicates) is what bigram extraction consumes; use tokenize() for
    presence semantics.
    """
    text = text.lower()
    if strip_punctuation:
        text = "".join(
            ch for ch in text if not unicodedata.category(ch).startswith("P")
        )
    return text.split()


def tokenize(text, strip_punctuation=True):
    """Presence set of tokens in *text* (deduplicated token_stream)."""
    return set(token_stream(text, strip_punctuation))


class LabelVocab:
    """Ordered distinct label names with a name -> integer id lookup."""

    def __init__(self, labels):
        labels = tuple(labels)
        if len(labels) < 2:
            raise InputError("need at least 2 distinct labels, got %d" % len(labels))
        if len(set(labels)) != len(labels):
            raise InputError("duplicate label names: %r" % (labels,))
        self.labels = labels
        self.index = {name: i for i, name in enumerate(labels)}

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return isinstance(other, LabelVocab) and self.labels == other.labels

    def __repr__(self):
        return "LabelVocab(%r)" % (self.labels,)


@dataclass(frozen=True)
class Instance:
    """One labeled example: raw segments plus its token presence set."""

    id: int
    segments: tuple
    tokens: frozenset
    label: int


def make_instance(idx, segments, label_id, strip_punctuation=True):
    segments = tuple(segments)
    toks = frozenset(tokenize(" ".join(segments), strip_punctuation))
    return Instance(id=idx, segments=segments, tokens=toks, label=label_id)


@dataclass(frozen=True)
class DatasetSchema:
    """Field-name configuration for reading/writing dataset files.

    text_fields: 1 or 2 field names holding the raw text segments.
    label_field: field name holding the label.
    labels: explicit label order; None means first-seen order.
    """

    text_fields: tuple = ("text",)
    label_field: str = "label"
    labels: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "text_fields", tuple(self.text_fields))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
        if not 1 <= len(self.text_fields) <= 2:
            raise InputError(
                "schema must configure 1 or 2 text fields, got %d"
                % len(self.text_fields)
            )


class Dataset:
    """Immutable collection of instances with label vocabulary and stats."""

    def __init__(self, instances, label_vocab, schema=None, strip_punctuation=True):
        self.instances = list(instances)
        if not self.instances:
            raise InputError("dataset has no instances")
        self.label_vocab = label_vocab
        self.schema = schema if schema is not None else DatasetSchema()
        self.strip_punctuation = strip_punctuation
        for inst in self.instances:
            if inst.label >= len(label_vocab):
                raise InputError(
                    "instance %d has label id %d outside vocabulary of size %d"
                    % (inst.id, inst.label, len(label_vocab))
                )
        self.labels_array = np.array([inst.label for inst in self.instances])
        self.overall_dist = overall_label_distribution(self)

    @property
    def n(self):
        return len(self.instances)

    def __len__(self):
        return len(self.instances)

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.instances == other.instances
            and self.label_vocab == other.label_vocab
            and self.schema == other.schema
            and self.strip_punctuation == other.strip_punctuation
        )

    def __repr__(self):
        return "Dataset(n=%d, labels=%r)" % (self.n, self.label_vocab.labels)


def overall_label_distribution(d):
    """Empirical probability of each label over the whole dataset."""
    counts = np.bincount(
        np.array([inst.label for inst in d.instances]), minlength=len(d.label_vocab)
    )
    return counts / counts.sum()


def _collect_label_id(name, vocab_names, vocab_index, explicit):
    if name not in vocab_index:
        if explicit:
            raise InputError("unknown label %r (explicit label list configured)" % name)
        vocab_index[name] = len(vocab_names)
        vocab_names.append(name)
    return vocab_index[name]


def load_dataset(path, format="jsonl", schema=None, strip_punctuation=True):
    """Read a labeled dataset from *path*.

    format "jsonl": one JSON object per line, field names per *schema*.
    format "tsv": tab-separated with a header row naming the columns.
    Labels are collected in first-seen order unless the schema fixes an
    explicit list. Malformed records raise InputError naming the line.
    """
    schema = schema if schema is not None else DatasetSchema()
    if format not in ("jsonl", "tsv"):
        raise InputError("unknown dataset format %r" % format)

    explicit = schema.labels is not None
    vocab_names = list(schema.labels) if explicit else []
    vocab_index = {name: i for i, name in enumerate(vocab_names)}

    instances = []
    with open(path, encoding="utf-8") as fh:
        if format == "jsonl":
            records = _iter_jsonl(fh)
        else:
            records = _iter_tsv(fh)
        for lineno, record in records:
            missing = [f for f in schema.text_fields if f not in record]
            if schema.label_field not in record:
                raise InputError(
                    "line %d: missing label field %r" % (lineno, schema.label_field)
                )
            if missing:
                raise InputError(
                    "line %d: missing text field(s) %s" % (lineno, ", ".join(missing))
                )
            segments = tuple(str(record[f]) for f in schema.text_fields)
            label_id = _collect_label_id(
                str(record[schema.label_field]), vocab_names, vocab_index, explicit
            )
            instances.append(
                make_instance(len(instances), segments, label_id, strip_punctuation)
            )

    if not instances:
        raise InputError("%s: empty dataset file" % path)
    return Dataset(
        instances, LabelVocab(vocab_names), schema=schema,
        strip_punctuation=strip_punctuation,
    )


def _iter_jsonl(fh):
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError("line %d: malformed JSON record (%s)" % (lineno, exc))
        if not isinstance(record, dict):
            raise InputError("line %d: record is not a JSON object" % lineno)
        yield lineno, record


def _iter_tsv(fh):
    header = fh.readline()
    if not header:
        return
    columns = header.rstrip("\n").split("\t")
    for lineno, line in enumerate(fh, start=2):
        if not line.strip():
            continue
        values = line.rstrip("\n").split("\t")
        if len(values) != len(columns):
            raise InputError(
                "line %d: expected %d tab-separated fields, got %d"
                % (lineno, len(columns), len(values))
            )
        yield lineno, dict(zip(columns, values))


def save_dataset(d, path, format="jsonl"):
    """Write *d* back out in the schema's field names (round-trips with
    load_dataset)."""
    schema = d.schema
    with open(path, "w", encoding="utf-8") as fh:
        if format == "jsonl":
            for inst in d.instances:
                record = dict(zip(schema.text_fields, inst.segments))
                record[schema.label_field] = d.label_vocab.labels[inst.label]
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        elif format == "tsv":
            columns = list(schema.text_fields) + [schema.label_field]
            fh.write("\t".join(columns) + "\n")
            for inst in d.instances:
                values = list(inst.segments) + [d.label_vocab.labels[inst.label]]
                for v in values:
                    if "\t" in v or "\n" in v:
                        raise InputError(
                            "instance %d: tab/newline in field value, "
                            "use jsonl format" % inst.id
                        )
                fh.write("\t".join(values) + "\n")
        else:
            raise InputError("unknown dataset format %r" % format)


def split_dataset(d, heldout_fraction, seed):
    """Seeded train/heldout split. Instance ids are preserved."""
    if not 0.0 < heldout_fraction < 1.0:
        raise InputError("heldout_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    n_held = int(round(d.n * heldout_fraction))
    n_held = max(1, min(d.n - 1, n_held))
    perm = rng.permutation(d.n)
    held_ids = set(perm[:n_held].tolist())
    train = [inst for i, inst in enumerate(d.instances) if i not in held_ids]
    held = [inst for i, inst in enumerate(d.instances) if i in held_ids]
    mk = lambda insts: Dataset(
        insts, d.label_vocab, schema=d.schema, strip_punctuation=d.strip_punctuation
    )
    return mk(train), mk(held)


def relabel(d, label_vocab):
    """Re-index *d* under *label_vocab* (same label names, any order).

    Two files written from the same corpus can reload with different
    first-seen label orders; this maps one onto the other by name.
    """
    if set(label_vocab.labels) != set(d.label_vocab.labels):
        raise InputError(
            "label sets differ: %r vs %r"
            % (label_vocab.labels, d.label_vocab.labels)
        )
    if label_vocab.labels == d.label_vocab.labels:
        return d
    mapping = {
        old_id: label_vocab.index[name]
        for old_id, name in enumerate(d.label_vocab.labels)
    }
    instances = [
        Instance(inst.id, inst.segments, inst.tokens, mapping[inst.label])
        for inst in d.instances
    ]
    return Dataset(
        instances, label_vocab, schema=d.schema,
        strip_punctuation=d.strip_punctuation,
    )


def load_stop_words(path=None):
    """Stop-word set: the built-in English list when *path* is None,
    otherwise one token per line (UTF-8, '#' comments skipped)."""
    if path is None:
        text = resources.files("lexbias").joinpath("data/stopwords_en.txt").read_text(
            encoding="utf-8"
        )
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return words
