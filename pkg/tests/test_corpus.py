import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lexbias import corpus
from lexbias.corpus import (
    Dataset,
    DatasetSchema,
    InputError,
    LabelVocab,
    load_dataset,
    load_stop_words,
    overall_label_distribution,
    save_dataset,
    split_dataset,
    token_stream,
    tokenize,
)

from conftest import build_dataset


def test_tokenize_lowercases_and_strips_punctuation():
    assert tokenize("Nobody runs!") == {"nobody", "runs"}


def test_tokenize_deduplicates():
    assert tokenize("A dog, a DOG.") == {"a", "dog"}


def test_tokenize_whitespace_only():
    assert tokenize("  ") == set()


def test_token_stream_keeps_order_and_duplicates():
    assert token_stream("A dog, a DOG.") == ["a", "dog", "a", "dog"]


def test_tokenize_collapses_apostrophes():
    # punctuation removal, not replacement: "there's" -> "theres"
    assert tokenize("There's a dog") == {"theres", "a", "dog"}


def test_tokenize_keep_punctuation_flag():
    assert tokenize("dog!", strip_punctuation=False) == {"dog!"}


@given(st.text(max_size=80))
def test_tokenize_idempotent_on_own_output(text):
    toks = tokenize(text)
    assert tokenize(" ".join(sorted(toks))) == toks


def test_label_vocab_rejects_duplicates_and_singletons():
    with pytest.raises(InputError):
        LabelVocab(("A", "A"))
    with pytest.raises(InputError):
        LabelVocab(("A",))


def test_load_jsonl_nli_record(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text(
        '{"premise":"A dog runs.","hypothesis":"Nobody runs.","label":"contradiction"}\n'
        '{"premise":"A cat sits.","hypothesis":"A cat sits.","label":"entailment"}\n'
    )
    schema = DatasetSchema(("premise", "hypothesis"), "label")
    d = load_dataset(path, schema=schema)
    inst = d.instances[0]
    assert len(inst.segments) == 2
    assert inst.label == d.label_vocab.index["contradiction"]
    assert inst.tokens == {"a", "dog", "runs", "nobody"}


def test_load_tsv_with_header(tmp_path):
    path = tmp_path / "data.tsv"
    path.write_text("text\tlabel\none two\tA\nthree\tB\nfour five\tA\n")
    d = load_dataset(path, format="tsv")
    assert d.n == 3
    assert d.label_vocab.labels == ("A", "B")


def test_missing_label_column_names_line(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"text":"one","label":"A"}\n{"text":"two"}\n{"text":"x","label":"B"}\n')
    with pytest.raises(InputError, match="line 2"):
        load_dataset(path)


def test_malformed_json_names_line(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"text":"one","label":"A"}\nnot json\n')
    with pytest.raises(InputError, match="line 2"):
        load_dataset(path)


def test_empty_file_errors(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text("")
    with pytest.raises(InputError, match="empty"):
        load_dataset(path)


def test_missing_text_field_errors(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"label":"A"}\n')
    with pytest.raises(InputError, match="text field"):
        load_dataset(path)


def test_schema_rejects_zero_text_fields():
    with pytest.raises(InputError):
        DatasetSchema((), "label")


def test_explicit_label_list(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"text":"one","label":"B"}\n{"text":"two","label":"A"}\n')
    d = load_dataset(path, schema=DatasetSchema(("text",), "label", ("A", "B")))
    assert d.label_vocab.labels == ("A", "B")
    assert d.instances[0].label == 1
    with pytest.raises(InputError, match="unknown label"):
        load_dataset(path, schema=DatasetSchema(("text",), "label", ("A", "C")))


def test_first_seen_label_order(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text(
        '{"text":"one","label":"z"}\n{"text":"two","label":"a"}\n'
        '{"text":"three","label":"z"}\n'
    )
    assert load_dataset(path).label_vocab.labels == ("z", "a")


@pytest.mark.parametrize("fmt", ["jsonl", "tsv"])
def test_round_trip(tmp_path, fmt, hand10):
    first = tmp_path / ("a." + fmt)
    second = tmp_path / ("b." + fmt)
    save_dataset(hand10, first, format=fmt)
    loaded = load_dataset(first, format=fmt)
    save_dataset(loaded, second, format=fmt)
    assert load_dataset(second, format=fmt) == loaded
    assert loaded == hand10


def test_overall_distribution_two_thirds():
    d = build_dataset(["x", "y", "z"], ["A", "A", "B"])
    np.testing.assert_allclose(d.overall_dist, [2 / 3, 1 / 3])


def test_overall_distribution_one_hot():
    d = build_dataset(["x", "y"], ["A", "A"], label_names=("A", "B"))
    np.testing.assert_array_equal(d.overall_dist, [1.0, 0.0])


def test_overall_distribution_uniform_three_labels():
    d = build_dataset(
        ["a", "b", "c", "d", "e", "f"], ["A", "A", "B", "B", "C", "C"]
    )
    np.testing.assert_allclose(d.overall_dist, [1 / 3, 1 / 3, 1 / 3])


def test_overall_dist_matches_recompute(hand10):
    np.testing.assert_array_equal(
        hand10.overall_dist, overall_label_distribution(hand10)
    )
    assert abs(hand10.overall_dist.sum() - 1.0) < 1e-12


def test_instance_tokens_match_segment_concatenation(hand10):
    for inst in hand10.instances:
        assert inst.tokens == frozenset(tokenize(" ".join(inst.segments)))


def test_split_preserves_ids_and_sizes(hand10):
    train, held = split_dataset(hand10, 0.3, seed=4)
    assert train.n + held.n == hand10.n
    assert held.n == 3
    ids = sorted(i.id for i in train.instances) + sorted(i.id for i in held.instances)
    assert sorted(ids) == list(range(hand10.n))
    # same seed, same split
    train2, held2 = split_dataset(hand10, 0.3, seed=4)
    assert [i.id for i in held2.instances] == [i.id for i in held.instances]


def test_builtin_stop_words():
    words = load_stop_words()
    assert "the" in words and "and" in words
    assert "dog" not in words


def test_custom_stop_word_file(tmp_path):
    path = tmp_path / "stops.txt"
    path.write_text("# comment\nfoo\nbar\n\n")
    assert load_stop_words(path) == {"foo", "bar"}
