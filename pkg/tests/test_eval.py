import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_span_f1, random_segmentation
from seglm.eval import (
    EvalError,
    EvalReport,
    boundary_vector,
    confusion,
    evaluate,
    f1_score,
    mcc,
    score_segmentations,
    segments_from_vector,
    span_prf,
)


def test_mcc_perfect():
    gold = [[1, 0, 1, 0], [0, 1]]
    assert mcc(gold, gold) == 1.0


def test_mcc_balanced_confusion_is_zero():
    pred, gold = [[1, 1, 0, 0]], [[1, 0, 1, 0]]
    assert confusion(pred, gold) == (1, 1, 1, 1)
    assert mcc(pred, gold) == 0.0


def test_mcc_zero_factor_convention():
    assert mcc([[0, 0, 0]], [[1, 0, 1]]) == 0.0
    assert mcc([[1, 1]], [[1, 1]]) == 0.0  # no negatives anywhere


def test_mcc_hand_value():
    pred, gold = [[1, 0, 1, 1, 0]], [[1, 0, 0, 1, 0]]
    tp, tn, fp, fn = 2, 2, 1, 0
    expected = (tp * tn - fp * fn) / math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    assert mcc(pred, gold) == pytest.approx(expected)


def test_mcc_length_mismatch_names_line():
    with pytest.raises(EvalError, match="line 2"):
        mcc([[1], [1, 0]], [[1], [1]])


@given(st.lists(st.lists(st.integers(0, 1), min_size=1, max_size=6), min_size=1, max_size=5), st.data())
def test_mcc_label_swap_invariance(gold, data):
    pred = [data.draw(st.lists(st.integers(0, 1), min_size=len(g), max_size=len(g))) for g in gold]
    flip = lambda vs: [[1 - b for b in v] for v in vs]  # noqa: E731
    assert mcc(flip(pred), flip(gold)) == pytest.approx(mcc(pred, gold), abs=1e-12)
    assert -1.0 <= mcc(pred, gold) <= 1.0


def test_span_fixture():
    pred, gold = [["kin", "ch'aw"]], [["k", "in", "ch'aw"]]
    p, r, f = span_prf(pred, gold)
    assert (p, r) == (0.5, pytest.approx(1 / 3))
    assert f == pytest.approx(0.4)


def test_span_identity_and_whole_lines():
    gold = [["ab", "c"], ["d"]]
    assert span_prf(gold, gold) == (1.0, 1.0, 1.0)
    whole = [["abc"], ["d"]]
    p, r, f = span_prf(whole, gold)
    # only the single-segment line matches exactly
    assert (p, r) == (0.5, pytest.approx(1 / 3))


def test_span_refuses_mismatched_text():
    with pytest.raises(EvalError, match="line 2"):
        span_prf([["ab"], ["cd"]], [["ab"], ["ce"]])


def test_random_fixtures_match_oracle():
    rng = random.Random(11)
    for _ in range(100):
        texts = ["".join(rng.choice("abcd") for _ in range(rng.randint(1, 12))) for _ in range(rng.randint(1, 5))]
        pred = [random_segmentation(rng, t) for t in texts]
        gold = [random_segmentation(rng, t) for t in texts]
        assert span_prf(pred, gold) == brute_span_f1(pred, gold)


@given(st.lists(st.text(alphabet="xyz", min_size=1, max_size=10), min_size=1, max_size=4), st.integers(0, 1000))
def test_span_symmetry(texts, seed):
    rng = random.Random(seed)
    pred = [random_segmentation(rng, t) for t in texts]
    gold = [random_segmentation(rng, t) for t in texts]
    p, r, f = span_prf(pred, gold)
    p2, r2, f2 = span_prf(gold, pred)
    assert (p, r) == (r2, p2)
    assert f == pytest.approx(f2, abs=1e-12)


@given(st.text(alphabet="ab", min_size=1, max_size=12), st.integers(0, 1000))
def test_boundary_segment_duality(text, seed):
    segs = random_segmentation(random.Random(seed), text)
    bits = boundary_vector(segs)
    assert len(bits) == len(text) - 1
    assert segments_from_vector(text, bits) == segs


def test_macro_average():
    pred, gold = [["a", "b"], ["cd"]], [["ab"], ["c", "d"]]
    assert span_prf(pred, gold, macro=True) == (0.0, 0.0, 0.0)
    pred2 = [["ab"], ["c", "d"]]
    assert span_prf(pred2, gold, macro=True) == (1.0, 1.0, 1.0)


def test_report_consistency():
    rep = score_segmentations([["kin", "ch'aw"]], [["k", "in", "ch'aw"]])
    assert rep.f1 == pytest.approx(f1_score(rep.precision, rep.recall), abs=1e-9)
    assert rep.lines_evaluated == 1
    head, row = rep.tsv().split("\n")
    assert head.split("\t") == ["P", "R", "F1", "MCC", "lines"]
    assert float(row.split("\t")[2]) == pytest.approx(0.4)
    assert "F1" in rep.text()


def test_f1_zero_when_nothing_right():
    assert f1_score(0.0, 0.0) == 0.0


def _write(path, lines):
    path.write_text("".join(x + "\n" for x in lines), encoding="utf-8")


def test_evaluate_files(tmp_path):
    gold = tmp_path / "gold.txt"
    _write(gold, ["k in ch'aw r uk' le nu nan", "ab c"])
    rep = evaluate(gold, gold)
    assert (rep.f1, rep.mcc, rep.lines_evaluated) == (1.0, 1.0, 2)

    g, p = tmp_path / "g.txt", tmp_path / "p.txt"
    _write(g, ["k in ch'aw"])
    _write(p, ["kin ch'aw"])
    assert evaluate(p, g).f1 == pytest.approx(0.4)


def test_evaluate_errors(tmp_path):
    g, p = tmp_path / "g.txt", tmp_path / "p.txt"
    _write(g, ["ab", "cd"])
    _write(p, ["ab"])
    with pytest.raises(EvalError, match="line counts"):
        evaluate(p, g)
    _write(p, ["ab", "ce"])
    with pytest.raises(EvalError, match="line 2"):
        evaluate(p, g)
    _write(g, [])
    _write(p, [])
    with pytest.raises(EvalError):
        evaluate(p, g)


def test_evaluate_deterministic(tmp_path):
    g, p = tmp_path / "g.txt", tmp_path / "p.txt"
    _write(g, ["ab cd e", "fg h"])
    _write(p, ["a bcd e", "fgh"])
    assert evaluate(p, g) == evaluate(p, g)
    assert isinstance(evaluate(p, g), EvalReport)
