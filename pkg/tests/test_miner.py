import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundkit.errors import DimensionMismatch, EmptyInput, IndexOutOfRange, MissingField, ZeroVector
from groundkit.miner import (
    SceneRecord,
    caption_threshold,
    cosine_similarity,
    filter_captions,
    merge_scenes,
    mine_corpus,
    mine_negative_span,
    similar_mask,
)
from groundkit.spans import TimeSpan
from reference import ref_negative_span


def scene(i, start, end, emb, **kw):
    return SceneRecord(str(i), TimeSpan(start, end), tuple(emb), **kw)


def unit(angle):
    return (math.cos(angle), math.sin(angle))


def test_cosine():
    assert cosine_similarity([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0)
    assert cosine_similarity([1, -2], [-1, 2]) == pytest.approx(-1.0)
    with pytest.raises(DimensionMismatch):
        cosine_similarity([1, 0], [1, 0, 0])
    with pytest.raises(ZeroVector):
        cosine_similarity([0, 0], [1, 0])


def _chain(sim_ab, sim_bc):
    # three unit vectors with prescribed neighbour cosines
    a = 0.0
    b = a + math.acos(sim_ab)
    c = b + math.acos(sim_bc)
    return [scene("A", 0, 10, unit(a)), scene("B", 10, 20, unit(b)), scene("C", 20, 30, unit(c))]


def test_merge_examples():
    merged = merge_scenes(_chain(0.9, 0.2), 0.5)
    assert [s.scene_id for s in merged] == ["A+B", "C"]
    assert merged[0].span == TimeSpan(0, 20)
    merged = merge_scenes(_chain(0.6, 0.6), 0.5)
    assert [s.scene_id for s in merged] == ["A+B+C"] and merged[0].span == TimeSpan(0, 30)
    scenes = _chain(0.1, 0.2)
    assert merge_scenes(scenes, 0.5) == scenes
    with pytest.raises(EmptyInput):
        merge_scenes([], 0.5)


def test_merge_embedding_is_weighted_mean():
    s = [scene("a", 0, 30, (1.0, 0.0)), scene("b", 30, 40, (0.8, 0.6))]
    (m,) = merge_scenes(s, 0.5)
    expected = np.array([30 * 1.0 + 10 * 0.8, 10 * 0.6]) / 40
    expected /= np.linalg.norm(expected)
    assert m.embedding == pytest.approx(tuple(expected))
    assert m.caption is None


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 20), st.floats(0, 5), st.floats(-3, 3)), min_size=1, max_size=12), st.floats(-1, 1))
def test_merge_invariants(parts, theta):
    t = 0.0
    scenes = []
    for i, (length, gap, angle) in enumerate(parts):
        t += gap
        scenes.append(scene(i, t, t + length, unit(angle)))
        t += length
    merged = merge_scenes(scenes, theta)
    for x, y in zip(merged, merged[1:]):
        assert x.span.end_s <= y.span.start_s
    covered = lambda ss: sum(s.span.length for s in ss)
    # union preserved: every input scene sits inside exactly one merged hull
    for s in scenes:
        assert sum(m.span.contains(s.span) for m in merged) == 1
    assert covered(merged) >= covered(scenes) - 1e-9
    assert sum(len(m.scene_id.split("+")) for m in merged) == len(scenes)


def _captioned(sims):
    return [scene(i, i, i + 1, (1.0, 0.0), caption=f"c{i}", caption_similarity=s) for i, s in enumerate(sims)]


def test_filter_examples():
    kept = filter_captions(_captioned([0.9, 0.8, 0.4, 0.3]))
    assert [s.caption_similarity for s in kept] == [0.9, 0.8]
    assert len(filter_captions(_captioned([0.5, 0.5, 0.5]))) == 3
    assert len(filter_captions(_captioned([0.1]))) == 1
    with pytest.raises(MissingField):
        filter_captions([scene(0, 0, 1, (1, 0))])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_filter_invariants(sims):
    segs = _captioned(sims)
    th = caption_threshold(segs)
    kept = filter_captions(segs)
    assert len(kept) >= math.ceil(len(segs) / 2)
    assert all(s.caption_similarity >= th for s in kept)
    # idempotent only when re-applied with the original threshold
    assert filter_captions(kept, th) == kept


def test_filter_rethreshold_shrinks():
    segs = _captioned([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2])
    once = filter_captions(segs)
    twice = filter_captions(once)
    assert len(once) == 4 and len(twice) == 2


def _layout(n):
    return [scene(i, 10 * i, 10 * (i + 1), (1.0, 0.0)) for i in range(n)]


def test_negative_span_examples():
    segs = _layout(5)
    mined = mine_negative_span(segs, 2, 0.5, similar=[True, False, False, False, False])
    assert mined.neg_span == TimeSpan(10, 50)
    assert mined.pos_span == TimeSpan(20, 30)
    mined = mine_negative_span(segs, 2, 0.5, similar=[False] * 5)
    assert mined.neg_span == TimeSpan(0, 50)
    with pytest.raises(IndexOutOfRange):
        mine_negative_span(segs, 5, 0.5)


def test_fig1_segment_seven_blocks():
    # segment 7 ends at 40.60 s and matches segment 10's caption; the scenes in between do not
    spans = [(0, 6.2), (6.2, 12.0), (12.0, 19.4), (19.4, 25.0), (25.0, 31.5), (31.5, 36.0), (36.0, 40.6),
             (40.6, 47.3), (47.3, 52.0), (52.0, 58.8)]
    probe = (1.0, 0.0)
    segs = []
    for i, (a, b) in enumerate(spans, start=1):
        emb = (0.95, math.sqrt(1 - 0.95**2)) if i == 7 else (0.1, math.sqrt(1 - 0.01))
        segs.append(scene(i, a, b, emb, caption_embedding=probe if i == 10 else None))
    mined = mine_negative_span(segs, 9, theta_sim=0.8)
    assert mined.neg_span.start_s == pytest.approx(40.60)
    assert mined.neg_span.end_s == pytest.approx(58.8)


def _random_layout(rng):
    n = rng.randint(1, 12)
    t = 0.0
    segs = []
    for i in range(n):
        t += rng.choice([0.0, 0.0, rng.uniform(0, 3)])
        length = rng.uniform(0.5, 15)
        segs.append(scene(i, round(t, 2), round(t + length, 2), unit(rng.uniform(-math.pi, math.pi))))
        t = round(t + length, 2)
    return segs


def test_negative_span_matches_reference_random_layouts():
    rng = random.Random(99)
    mismatches = 0
    for _ in range(10_000):
        segs = _random_layout(rng)
        k = rng.randrange(len(segs))
        theta = rng.uniform(-1, 1)
        mined = mine_negative_span(segs, k, theta)
        sim = similar_mask(segs, k, theta)
        expected = ref_negative_span([s.span.to_list() for s in segs], k, sim)
        if mined.neg_span.to_list() != list(expected):
            mismatches += 1
        assert mined.neg_span.contains(mined.pos_span)
        for i, s in enumerate(segs):
            if sim[i]:
                # no similar segment reaches into the context around the positive
                inter = s.span.intersection(mined.neg_span)
                assert inter is None
    assert mismatches == 0


def test_theta_sim_monotone():
    rng = random.Random(5)
    for _ in range(2000):
        segs = _random_layout(rng)
        k = rng.randrange(len(segs))
        lo, hi = sorted((rng.uniform(-1, 1), rng.uniform(-1, 1)))
        a = mine_negative_span(segs, k, lo).neg_span
        b = mine_negative_span(segs, k, hi).neg_span
        assert b.contains(a)


def test_mine_corpus_pipeline():
    videos = {
        "v1": [
            scene("a", 0, 10, unit(0.0), caption="a", caption_similarity=0.9),
            scene("b", 10, 20, unit(0.05), caption="b", caption_similarity=0.2),
            scene("c", 20, 30, unit(2.0), caption="c", caption_similarity=0.8),
            scene("d", 30, 40, unit(0.1), caption="d", caption_similarity=0.7),
        ],
        "v2": [scene("e", 0, 5, unit(1.0), caption="e", caption_similarity=0.1)],
    }
    mined, summary = mine_corpus(videos, theta_sim=0.9, theta_merge=0.99)
    # a and b merge (cos 0.05 rad > 0.99) and lose their captions
    assert summary.n_scenes_in == 5 and summary.n_scenes_merged == 4
    assert summary.n_uncaptioned == 1 and summary.n_captioned == 3
    assert summary.caption_threshold == 0.7
    assert [m.segment_id for m in mined] == ["v1/c", "v1/d"]
    d = mined[1]
    # the merged a+b block is similar to d and blocks its context
    assert d.neg_span == TimeSpan(20, 40)
