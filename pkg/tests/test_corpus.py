import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from glyphscribe.codes import code_group, is_valid_code, validate_code
from glyphscribe.corpus import (
    ClassWeightTable, DatasetSplit, LabeledSample, class_frequencies, class_weights,
    load_dataset, make_splits,
)


def test_code_pattern():
    for code in ["A1", "Aa15", "N35", "T9D", "G190", "G17+M17", "H6A"]:
        assert is_valid_code(code)
    for bad in ["1bad", "a1", "N", "A1+", "+A1", "A", ""]:
        assert not is_valid_code(bad)
    with pytest.raises(ValueError, match="1bad"):
        validate_code("1bad")


def test_code_group():
    assert code_group("Aa15") == "Aa"
    assert code_group("A1") == "A"
    assert code_group("Aa15", collapse_to_letter=True) == "A"
    assert code_group("G17+M17") == "G"


def _write_png(path, size=20, value=128):
    Image.fromarray(np.full((size, size), value, dtype=np.uint8)).save(path)


def _make_tree(root, spec, manifest=None):
    for code, count in spec.items():
        d = root / code
        d.mkdir()
        for i in range(count):
            _write_png(d / f"img{i:02d}.png")
    if manifest:
        lines = ["path,page_id"] + [f"{p},{pg}" for p, pg in manifest.items()]
        (root / "manifest.csv").write_text("\n".join(lines) + "\n")


def test_load_dataset_counts_and_codes(tmp_path):
    _make_tree(tmp_path, {"A1": 3, "Y1": 2})
    samples = load_dataset(tmp_path, canonical_size=32)
    assert len(samples) == 5
    assert class_frequencies(samples) == {"A1": 3, "Y1": 2}
    assert all(s.image.shape == (32, 32) for s in samples)


def test_load_dataset_rejects_bad_directory(tmp_path):
    _make_tree(tmp_path, {"A1": 1})
    (tmp_path / "1bad").mkdir()
    _write_png(tmp_path / "1bad" / "x.png")
    with pytest.raises(ValueError, match="1bad"):
        load_dataset(tmp_path)


def test_load_dataset_empty_root(tmp_path):
    with pytest.raises(ValueError, match="no samples found"):
        load_dataset(tmp_path)


def test_load_dataset_skips_unreadable(tmp_path, caplog):
    _make_tree(tmp_path, {"A1": 2})
    (tmp_path / "A1" / "broken.png").write_bytes(b"\x89PNG-not-really")
    with caplog.at_level("WARNING"):
        samples = load_dataset(tmp_path)
    assert len(samples) == 2
    assert any("skipp" in r.message for r in caplog.records)


def test_load_dataset_deterministic_and_manifest(tmp_path):
    _make_tree(tmp_path, {"A1": 3, "B1": 2}, manifest={"A1/img00.png": "p7"})
    first = load_dataset(tmp_path, canonical_size=16)
    second = load_dataset(tmp_path, canonical_size=16)
    assert [s.sample_id for s in first] == [s.sample_id for s in second]
    by_id = {s.sample_id: s for s in first}
    assert by_id["A1/img00.png"].page_id == "p7"
    assert by_id["A1/img01.png"].page_id is None


def _samples(spec, pages=None):
    out = []
    img = np.zeros((4, 4), dtype=np.uint8)
    for code, count in spec.items():
        for i in range(count):
            sid = f"{code}/{i}"
            out.append(LabeledSample(image=img, code=code, page_id=(pages or {}).get(sid), sample_id=sid))
    return out


def test_make_splits_floor_rounding():
    samples = _samples({"A1": 100})
    split = make_splits(samples, (0.70, 0.15, 0.15), seed=1)
    assert (len(split.train), len(split.validation), len(split.test_random)) == (70, 15, 15)


def test_make_splits_degenerate_ratios():
    samples = _samples({"A1": 10, "B1": 5})
    split = make_splits(samples, (1.0, 0.0, 0.0), seed=0)
    assert len(split.train) == 15
    assert not split.validation and not split.test_random


def test_make_splits_held_out_pages():
    samples = _samples({"A1": 10}, pages={f"A1/{i}": "p1" for i in range(4)})
    split = make_splits(samples, (0.5, 0.25, 0.25), held_out_pages={"p1"}, seed=0)
    assert len(split.test_pages) == 4
    assert split.test_pages.isdisjoint(split.train | split.validation | split.test_random)


def test_make_splits_large_corpus_held_out_fraction():
    # 43023 samples with 4622 on held-out pages -> test_pages is 10.74%
    samples = _samples({"A1": 43023})
    pages = {s.sample_id: ("hold" if i < 4622 else "keep") for i, s in enumerate(samples)}
    for s in samples:
        s.page_id = pages[s.sample_id]
    split = make_splits(samples, (0.694, 0.153, 0.153), held_out_pages={"hold"}, seed=0)
    assert len(split.test_pages) == 4622
    assert round(100 * len(split.test_pages) / len(samples), 2) == 10.74


def test_make_splits_small_class_goes_to_train(caplog):
    samples = _samples({"A1": 2, "B1": 30})
    with caplog.at_level("WARNING"):
        split = make_splits(samples, (0.5, 0.25, 0.25), seed=0)
    assert {f"A1/{i}" for i in range(2)} <= split.train
    assert any("A1" in r.message for r in caplog.records)


def test_make_splits_bad_ratios():
    with pytest.raises(ValueError):
        make_splits(_samples({"A1": 4}), (0.5, 0.4, 0.2), seed=0)


@settings(deadline=None, max_examples=40)
@given(
    counts=st.lists(st.integers(min_value=1, max_value=40), min_size=1, max_size=6),
    seed=st.integers(0, 2**16),
    ratio_idx=st.integers(0, 2),
    held_fraction=st.sampled_from([0.0, 0.3]),
)
def test_split_disjoint_and_covering(counts, seed, ratio_idx, held_fraction):
    ratios = [(0.7, 0.15, 0.15), (0.6, 0.2, 0.2), (0.8, 0.1, 0.1)][ratio_idx]
    spec = {f"A{i+1}": c for i, c in enumerate(counts)}
    samples = _samples(spec)
    rng = np.random.default_rng(seed)
    for s in samples:
        s.page_id = "held" if rng.random() < held_fraction else "free"
    split = make_splits(samples, ratios, held_out_pages={"held"}, seed=seed)
    parts = [split.train, split.validation, split.test_random, split.test_pages]
    union = set().union(*parts)
    assert len(union) == len(samples)
    assert sum(len(p) for p in parts) == len(samples)  # pairwise disjoint
    # every held-out-page sample is in test_pages only
    held = {s.sample_id for s in samples if s.page_id == "held"}
    assert split.test_pages == held


def test_split_stratification_within_one_sample():
    samples = _samples({"A1": 40, "B1": 25, "C1": 100})
    ratios = (0.7, 0.15, 0.15)
    split = make_splits(samples, ratios, seed=3)
    for code, n in [("A1", 40), ("B1", 25), ("C1", 100)]:
        ids = {s.sample_id for s in samples if s.code == code}
        for part, ratio in [(split.train, 0.7), (split.validation, 0.15), (split.test_random, 0.15)]:
            got = len(ids & part)
            assert abs(got - ratio * n) <= 1


def test_split_json_round_trip(tmp_path):
    split = make_splits(_samples({"A1": 20, "B1": 10}), (0.7, 0.15, 0.15), seed=5)
    path = tmp_path / "split.json"
    split.save(path)
    assert DatasetSplit.load(path) == split


def test_class_frequencies():
    assert class_frequencies([]) == {}
    assert class_frequencies(_samples({"A1": 3, "Y1": 1})) == {"A1": 3, "Y1": 1}


def test_class_weights_values():
    assert class_weights({"A1": 50, "B1": 50}).weights == {"A1": 1.0, "B1": 1.0}
    table = class_weights({"A1": 100, "B1": 50})
    assert table["A1"] == pytest.approx(0.75)
    assert table["B1"] == pytest.approx(1.5)
    assert class_weights({"A1": 7}).weights == {"A1": 1.0}


def test_class_weights_zero_count():
    with pytest.raises(ValueError):
        class_weights({"A1": 0})


def test_class_weight_table_rejects_nonpositive():
    with pytest.raises(ValueError):
        ClassWeightTable({"A1": 0.0})


@settings(deadline=None, max_examples=50)
@given(
    counts=st.dictionaries(
        st.sampled_from(["A1", "B2", "C3", "D4"]),
        st.integers(min_value=1, max_value=500),
        min_size=1,
    ),
    k=st.integers(min_value=1, max_value=20),
)
def test_class_weights_scale_invariant_and_mean_one(counts, k):
    base = class_weights(counts)
    scaled = class_weights({c: n * k for c, n in counts.items()})
    for code in counts:
        assert scaled[code] == pytest.approx(base[code])
    total = sum(counts.values())
    mean = sum(base[c] * n for c, n in counts.items()) / total
    assert mean == pytest.approx(1.0)
    # non-increasing in frequency
    ordered = sorted(counts.items(), key=lambda kv: kv[1])
    for (c1, n1), (c2, n2) in zip(ordered, ordered[1:]):
        if n1 < n2:
            assert base[c1] >= base[c2]
