import numpy as np
import pytest

from lexbias.corpus import Dataset, LabelVocab, make_instance


def build_dataset(texts, labels, label_names=None, schema=None):
    """Single-segment dataset from parallel text/label-name lists."""
    if label_names is None:
        label_names = []
        for name in labels:
            if name not in label_names:
                label_names.append(name)
    vocab = LabelVocab(tuple(label_names))
    instances = [
        make_instance(i, (text,), vocab.index[label])
        for i, (text, label) in enumerate(zip(texts, labels))
    ]
    return Dataset(instances, vocab, schema=schema)


@pytest.fixture
def toy4():
    """Feature "f" in instances {0,1,2} with labels A,A,B; instance 3
    has no "f" and label B. With min_count=2 the unigram table contains
    exactly "f": counts (2,1), doc_count 3, postings [0,1,2]."""
    return build_dataset(["f", "f", "f", "g"], ["A", "A", "B", "B"])


@pytest.fixture
def separable_toy():
    """100 instances, token "a" implies label L0 and "b" implies L1."""
    texts = ["a"] * 50 + ["b"] * 50
    labels = ["L0"] * 50 + ["L1"] * 50
    return build_dataset(texts, labels)


@pytest.fixture
def hand10():
    """10 instances, 2 labels, several overlapping multi-token texts;
    used for brute-force balance comparisons."""
    texts = [
        "red blue",
        "red green",
        "blue green red",
        "blue",
        "green",
        "red red blue",
        "green blue",
        "red",
        "blue green",
        "green red",
    ]
    labels = ["A", "A", "A", "A", "B", "B", "B", "B", "B", "A"]
    return build_dataset(texts, labels)


@pytest.fixture
def bigram20():
    """20 instances with repeated two-token phrases so bigram tables have
    real mass; labels alternate with a skew on 'x y'."""
    texts = []
    labels = []
    for i in range(8):
        texts.append("x y z")
        labels.append("A" if i < 6 else "B")
    for i in range(6):
        texts.append("y z x")
        labels.append("A" if i % 2 == 0 else "B")
    for i in range(6):
        texts.append("z x y w")
        labels.append("B" if i < 4 else "A")
    return build_dataset(texts, labels)
