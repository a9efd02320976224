import json

import numpy as np
import pytest

from cbrs import corpus as cp
from cbrs.synth import adversarial_negatives


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_load_three_valid_lines(tmp_path):
    f = tmp_path / "c.jsonl"
    write_lines(
        f,
        [
            json.dumps({"text": "hello there", "label": 0}),
            json.dumps({"text": "urgent O- blood needed", "label": 1, "language": "en"}),
            json.dumps({"text": "rokto dorkar", "label": 1, "source": "telegram"}),
        ],
    )
    c = cp.load_corpus(f)
    assert len(c) == 3
    assert c.skipped_lines == 0
    assert c.samples[1].language == "en"
    assert c.samples[2].source == "telegram"


def test_load_skips_malformed_line(tmp_path):
    f = tmp_path / "c.jsonl"
    write_lines(
        f,
        [
            json.dumps({"text": "one", "label": 0}),
            "{not json at all",
            json.dumps({"text": "two", "label": 1}),
        ],
    )
    c = cp.load_corpus(f)
    assert len(c) == 2
    assert c.skipped_lines == 1


def test_load_skips_bad_label_and_empty_text(tmp_path):
    f = tmp_path / "c.jsonl"
    write_lines(
        f,
        [
            json.dumps({"text": "fine", "label": 1}),
            json.dumps({"text": "bad label", "label": 2}),
            json.dumps({"text": "   ", "label": 0}),
            json.dumps({"label": 0}),
        ],
    )
    c = cp.load_corpus(f)
    assert len(c) == 1
    assert c.skipped_lines == 3


def test_load_missing_file_fatal(tmp_path):
    with pytest.raises(cp.CorpusError):
        cp.load_corpus(tmp_path / "nope.jsonl")


def test_load_adversarial_600_fixture(tmp_path):
    f = tmp_path / "adversarial.jsonl"
    cp.save_corpus(adversarial_negatives(600), f)
    c = cp.load_corpus(f)
    assert len(c) == 600
    assert all(s.label == 0 for s in c)


def test_dedup_keeps_first_occurrence():
    mk = lambda t: cp.LabeledSample(text=t, label=0)
    c = cp.Corpus(samples=(mk("A"), mk("A"), mk("B")))
    d = cp.deduplicate(c)
    assert [s.text for s in d.samples] == ["A", "B"]


def test_dedup_distinct_corpus_unchanged():
    mk = lambda t: cp.LabeledSample(text=t, label=0)
    c = cp.Corpus(samples=(mk("A"), mk("B"), mk("C")))
    assert cp.deduplicate(c).samples == c.samples


def test_dedup_whitespace_variants_collapse():
    # Oracle: pairwise comparison of the normalized strings says these two
    # are the same message, so exactly one survives.
    a = "  Urgent  O- blood needed \n"
    b = "urgent o- blood needed"
    assert cp.normalize_text(a) == cp.normalize_text(b)
    c = cp.Corpus(
        samples=(cp.LabeledSample(text=a, label=1), cp.LabeledSample(text=b, label=1))
    )
    assert len(cp.deduplicate(c)) == 1


def test_dedup_idempotent():
    rng = np.random.default_rng(5)
    texts = [f"message {rng.integers(0, 30)}" for _ in range(100)]
    c = cp.Corpus(samples=tuple(cp.LabeledSample(text=t, label=0) for t in texts))
    once = cp.deduplicate(c)
    twice = cp.deduplicate(once)
    assert once.samples == twice.samples


def test_tag_language_bengali_script():
    assert cp.tag_language("জরুরি ভিত্তিতে রক্ত দরকার") == "bn"


def test_tag_language_english():
    assert cp.tag_language("Urgent O- blood needed at AIIMS") == "en"


def test_tag_language_transliterated():
    text = "rokto dorkar jogajog korun"
    lexicon = cp.romanized_lexicon()
    hits = [w for w in text.split() if w in lexicon]
    assert len(hits) >= 2  # hand-checked against the bundled lexicon
    assert cp.tag_language(text) == "tbn"


def test_tag_language_unknown_for_non_alpha():
    assert cp.tag_language("") == "unknown"
    assert cp.tag_language("12345 !!! 900") == "unknown"


def test_tag_language_total_and_deterministic():
    rng = np.random.default_rng(11)
    for _ in range(300):
        points = rng.integers(1, 0x2FFF, size=rng.integers(1, 40))
        text = "".join(chr(int(p)) for p in points)
        first = cp.tag_language(text)
        assert first in cp.LANGUAGES
        assert cp.tag_language(text) == first


def _corpus(n, positives):
    samples = tuple(
        cp.LabeledSample(text=f"msg {i}", label=1 if i < positives else 0) for i in range(n)
    )
    return cp.Corpus(samples=samples)


def test_split_sizes_80_10_10():
    train, val, test = cp.split(_corpus(100, 40), (0.8, 0.1, 0.1), seed=7)
    assert (len(train), len(val), len(test)) == (80, 10, 10)


def test_split_all_in_train():
    train, val, test = cp.split(_corpus(57, 10), (1.0, 0.0, 0.0), seed=3)
    assert (len(train), len(val), len(test)) == (57, 0, 0)


def test_split_deterministic():
    c = _corpus(123, 31)
    a = cp.split(c, (0.8, 0.1, 0.1), seed=9)
    b = cp.split(c, (0.8, 0.1, 0.1), seed=9)
    for pa, pb in zip(a, b):
        assert pa.samples == pb.samples


def test_split_is_partition_and_stratified():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(10, 300))
        pos = int(rng.integers(1, n))
        c = _corpus(n, pos)
        train, val, test = cp.split(c, (0.8, 0.1, 0.1), seed=int(rng.integers(0, 1000)))
        texts = [s.text for part in (train, val, test) for s in part]
        assert len(texts) == n
        assert len(set(texts)) == n
        # Stratification: each part's positive count within 1 of its share.
        for part, ratio in ((train, 0.8), (val, 0.1), (test, 0.1)):
            got = sum(s.label for s in part)
            assert abs(got - pos * ratio) <= 1


def test_split_bad_ratios_fatal():
    with pytest.raises(cp.CorpusError):
        cp.split(_corpus(10, 5), (0.5, 0.2, 0.2), seed=1)


def test_tag_corpus_languages_fills_field():
    c = cp.Corpus(
        samples=(
            cp.LabeledSample(text="জরুরি রক্ত দরকার", label=1),
            cp.LabeledSample(text="rokto dorkar bhai", label=1),
            cp.LabeledSample(text="see you at the meeting", label=0),
        )
    )
    tagged = cp.tag_corpus_languages(c)
    assert [s.language for s in tagged.samples] == ["bn", "tbn", "en"]
