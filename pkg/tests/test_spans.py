import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from groundkit.errors import EmptyInput, OutOfWindow, ZeroLengthInput
from groundkit.spans import Category, GroundingRecord, TimeSpan, aggregate_metrics, categorize, iou
from reference import ref_categorize

B, M, E, T = Category.BEGINNING, Category.MIDDLE, Category.END, Category.THROUGHOUT


@pytest.mark.parametrize(
    "seg, expected",
    [((0, 30), B), ((20, 80), T), ((40, 60), M), ((60, 90), E), ((0, 50), B), ((50, 100), E), ((25, 75), M)],
)
def test_categorize_examples(seg, expected):
    assert categorize(TimeSpan(*seg), TimeSpan(0, 100)) is expected


def test_categorize_errors():
    with pytest.raises(ZeroLengthInput):
        categorize(TimeSpan(5, 5), TimeSpan(0, 10))
    with pytest.raises(ZeroLengthInput):
        categorize(TimeSpan(0, 1), TimeSpan(3, 3))
    with pytest.raises(OutOfWindow):
        categorize(TimeSpan(5, 15), TimeSpan(0, 10))


def test_timespan_validation():
    with pytest.raises(ValueError):
        TimeSpan(3, 2)
    with pytest.raises(ValueError):
        TimeSpan(0, math.inf)
    with pytest.raises(ValueError):
        TimeSpan(-1, 2)
    assert TimeSpan(2, 2).length == 0


def _random_pair(rng, grid):
    if grid:
        ws = rng.randrange(0, 50)
        we = ws + rng.randrange(1, 60)
        s = rng.randrange(ws, we)
        e = rng.randrange(s + 1, we + 1)
    else:
        ws = rng.uniform(0, 1000)
        we = ws + rng.uniform(1e-3, 500)
        s = rng.uniform(ws, we)
        e = rng.uniform(s, we)
        if e <= s:
            e = we
    return (float(s), float(e)), (float(ws), float(we))


@pytest.mark.parametrize("grid", [True, False])
def test_categorize_matches_reference(grid):
    rng = random.Random(1234 + grid)
    mismatches = 0
    for _ in range(50_000):
        seg, win = _random_pair(rng, grid)
        if categorize(TimeSpan(*seg), TimeSpan(*win)).value != ref_categorize(seg, win):
            mismatches += 1
    assert mismatches == 0


spans_in_window = st.tuples(
    st.floats(0, 1e4), st.floats(1e-3, 1e4), st.floats(0, 1), st.floats(0, 1)
).map(lambda t: (t[0], t[0] + t[1], t[2], t[3]))


@given(spans_in_window)
def test_partition_exactly_one_predicate(t):
    ws, we, u, v = t
    lo, hi = sorted((ws + u * (we - ws), ws + v * (we - ws)))
    hi = min(hi, we)
    if hi <= lo or we <= ws:
        return
    seg, win = TimeSpan(lo, hi), TimeSpan(ws, we)
    got = categorize(seg, win)
    preds = {
        T: 2 * seg.length > win.length,
        B: 2 * seg.length <= win.length and 2 * seg.end_s <= ws + we,
        E: 2 * seg.length <= win.length and 2 * seg.end_s > ws + we and 2 * seg.start_s >= ws + we,
        M: 2 * seg.length <= win.length and 2 * seg.start_s < ws + we < 2 * seg.end_s,
    }
    assert [c for c, ok in preds.items() if ok] == [got]


@pytest.mark.parametrize("a, b, expected", [((0, 10), (5, 15), 1 / 3), ((3, 7), (3, 7), 1.0), ((0, 1), (2, 3), 0.0)])
def test_iou_examples(a, b, expected):
    assert iou(TimeSpan(*a), TimeSpan(*b)) == pytest.approx(expected, abs=1e-15)


def test_iou_zero_length():
    with pytest.raises(ZeroLengthInput):
        iou(TimeSpan(1, 1), TimeSpan(0, 2))


span_st = st.tuples(st.floats(0, 1e6), st.floats(1e-6, 1e6)).map(lambda t: TimeSpan(t[0], t[0] + t[1])).filter(
    lambda s: s.length > 0
)


@given(span_st, span_st)
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert (v == 1.0) == (a == b)
    assert iou(a, a) == 1.0


def test_aggregate_examples():
    gt = TimeSpan(0, 1)
    # predictions [0, x] against [0, 1] have IoU x
    rep = aggregate_metrics([(TimeSpan(0, x), gt) for x in (0.6, 0.4, 0.8)])
    assert rep.mIoU == pytest.approx(0.6)
    assert rep.recall_at == pytest.approx({0.3: 1.0, 0.5: 2 / 3, 0.7: 1 / 3})

    rep = aggregate_metrics([(TimeSpan(0, 0.5), gt)])
    assert rep.recall_at[0.5] == 0.0
    assert aggregate_metrics([(TimeSpan(0, 0.5), gt)], inclusive=True).recall_at[0.5] == 1.0

    rep = aggregate_metrics([(None, gt), (TimeSpan(0, 1), gt)])
    assert rep.mIoU == 0.5 and rep.n_failed == 1 and rep.n_examples == 2


def test_aggregate_formatted_only():
    gt = TimeSpan(0, 1)
    rep = aggregate_metrics([(None, gt), (TimeSpan(0, 1), gt)], mode="formatted-only")
    assert rep.mIoU == 1.0 and rep.n_failed == 1
    with pytest.raises(EmptyInput):
        aggregate_metrics([(None, gt)], mode="formatted-only")
    with pytest.raises(EmptyInput):
        aggregate_metrics([])


@given(st.lists(st.tuples(span_st, span_st), min_size=1, max_size=30))
def test_aggregate_invariants(pairs):
    rep = aggregate_metrics(pairs, thresholds=(0.1, 0.3, 0.5, 0.7, 0.9))
    values = [rep.recall_at[t] for t in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert values == sorted(values, reverse=True)
    assert 0.0 <= rep.mIoU <= 1.0
    assert rep.mIoU == pytest.approx(sum(iou(p, g) for p, g in pairs) / len(pairs))


def test_record_json_roundtrip():
    rec = GroundingRecord("a", 30.5, "q", TimeSpan(1.25, 4.0), TimeSpan(1.25, 4.0), TimeSpan(0.0, 10.0))
    assert GroundingRecord.from_json(rec.to_json()) == rec
    assert set(rec.to_json()) == {"id", "duration", "query", "gt", "pos", "neg"}
    with pytest.raises(OutOfWindow):
        GroundingRecord("b", 10.0, "q", TimeSpan(5, 12))
