"""Synthetic labeled corpora with planted token-label skews.

Every pipeline stage gets a ground-truth-known harness: background
tokens are drawn uniformly (so their label associations are pure noise)
and each planted token is placed so that, among instances containing
it, the fraction carrying its target label is Binomial-concentrated on
a configured skew. Instances are rendered as space-joined text and fed
through the real tokenizer path, so bigram structure arises from random
adjacency exactly as it would in loaded data.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

from .corpus import Dataset, DatasetSchema, InputError, LabelVocab, make_instance, token_stream


@dataclass(frozen=True)
class PlantedToken:
    token: str
    target_label: int
    skew: float
    occurrences: int


@dataclass(frozen=True)
class SynthConfig:
    n_instances: int
    n_labels: int
    background_vocab_size: int
    planted: tuple
    tokens_per_instance: int
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "planted",
            tuple(p if isinstance(p, PlantedToken) else PlantedToken(*p)
                  for p in self.planted),
        )
        if self.n_instances < 1:
            raise InputError("n_instances must be >= 1")
        if self.n_labels < 2:
            raise InputError("n_labels must be >= 2")
        if self.background_vocab_size < 1:
            raise InputError("background_vocab_size must be >= 1")
        if self.tokens_per_instance < 1:
            raise InputError("tokens_per_instance must be >= 1")
        background = set(self.background_vocab())
        seen = set()
        for p in self.planted:
            # skew == 1/n_labels is the null (no planted bias) configuration
            if not 1.0 / self.n_labels <= p.skew <= 1.0:
                raise InputError(
                    "skew %r for %r outside [1/%d, 1]"
                    % (p.skew, p.token, self.n_labels)
                )
            if not 0 <= p.target_label < self.n_labels:
                raise InputError("bad target label for %r" % p.token)
            if p.occurrences < 1 or p.occurrences > self.n_instances:
                raise InputError(
                    "planted token %r frequency %d infeasible for %d instances"
                    % (p.token, p.occurrences, self.n_instances)
                )
            if p.token in background:
                raise InputError(
                    "planted token %r collides with background vocabulary" % p.token
                )
            if p.token in seen:
                raise InputError("duplicate planted token %r" % p.token)
            if token_stream(p.token) != [p.token]:
                raise InputError(
                    "planted token %r does not survive tokenization" % p.token
                )
            seen.add(p.token)

    def background_vocab(self):
        return ["w%04d" % i for i in range(self.background_vocab_size)]

    def label_names(self):
        return ["label%d" % y for y in range(self.n_labels)]


def generate(cfg):
    """Deterministically generate the configured corpus as a Dataset."""
    rng = np.random.default_rng(cfg.seed)
    n, n_labels = cfg.n_instances, cfg.n_labels
    labels = rng.integers(0, n_labels, size=n)
    background = cfg.background_vocab()
    bg_draws = rng.integers(0, cfg.background_vocab_size,
                            size=(n, cfg.tokens_per_instance))

    extra = [[] for _ in range(n)]
    for p in cfg.planted:
        n_target = int(rng.binomial(p.occurrences, p.skew))
        target_pool = np.flatnonzero(labels == p.target_label)
        other_pool = np.flatnonzero(labels != p.target_label)
        if n_target > len(target_pool) or p.occurrences - n_target > len(other_pool):
            raise InputError(
                "planted token %r: %d placements infeasible "
                "(label pools: %d target, %d other)"
                % (p.token, p.occurrences, len(target_pool), len(other_pool))
            )
        chosen = np.concatenate([
            rng.choice(target_pool, size=n_target, replace=False),
            rng.choice(other_pool, size=p.occurrences - n_target, replace=False),
        ])
        for i in chosen:
            extra[i].append(p.token)

    label_names = cfg.label_names()
    instances = []
    for i in range(n):
        toks = [background[t] for t in bg_draws[i]] + extra[i]
        order = rng.permutation(len(toks))
        text = " ".join(toks[j] for j in order)
        instances.append(make_instance(i, (text,), int(labels[i])))
    return Dataset(
        instances, LabelVocab(label_names), schema=DatasetSchema(("text",), "label")
    )


def heldout_split_with_coverage(d, fraction, seed, required_tokens=(),
                                min_occurrences=5, max_tries=100):
    """Seeded split whose held-out part contains every required token at
    least *min_occurrences* times; the split seed is advanced until the
    coverage holds (deterministic)."""
    from .corpus import split_dataset

    required = list(required_tokens)
    for attempt in range(max_tries):
        train, held = split_dataset(d, fraction, seed + attempt)
        counts = {tok: 0 for tok in required}
        for inst in held.instances:
            for tok in required:
                if tok in inst.tokens:
                    counts[tok] += 1
        if all(counts[tok] >= min_occurrences for tok in required):
            return train, held
    raise InputError(
        "no split within %d attempts covers every required token %d times"
        % (max_tries, min_occurrences)
    )


def save_config_json(cfg, path, run_id=None):
    payload = asdict(cfg)
    if run_id:
        payload["run_id"] = run_id
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
