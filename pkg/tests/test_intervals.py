import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundqa.errors import DegenerateIntervalError
from groundqa.intervals import (
    FusedSegment,
    FusionConfig,
    GroundedProposal,
    TimeInterval,
    fuse_intervals,
    fuse_question,
    fuse_question_segments,
    iop,
    iou,
    iou_at_least,
    merge_pair,
    nms,
    overlap,
)

from oracles import frac_iou, fuse_all_orders, fuse_fixpoint, nms_exhaustive, ticks

T = TimeInterval
TAUS = [round(0.1 * i, 1) for i in range(1, 10)]


def gp(s, e, score, opt=0):
    return GroundedProposal(T(s, e), score, opt)


# -- construction -------------------------------------------------------------------


@pytest.mark.parametrize("s,e", [(-0.1, 1), (2, 1), (float("nan"), 1), (0, float("inf"))])
def test_invalid_interval_rejected(s, e):
    with pytest.raises(ValueError):
        T(s, e)


def test_zero_length_allowed_but_degenerate_for_ratios():
    z = T(3, 3)
    assert z.length == 0
    with pytest.raises(DegenerateIntervalError):
        iou(z, z)
    with pytest.raises(DegenerateIntervalError):
        iop(z, T(0, 10))
    assert iou(z, T(0, 10)) == 0.0


def test_fusion_config_defaults_and_validation():
    cfg = FusionConfig(tau_intra=0.3)
    assert cfg.tau_inter == 0.3
    for bad in (dict(tau_intra=0), dict(tau_intra=1.1), dict(nms_threshold=0), dict(top_k=0)):
        with pytest.raises(ValueError):
            FusionConfig(**bad)


def test_proposal_score_range():
    with pytest.raises(ValueError):
        gp(0, 1, 1.2)


# -- fixed examples -------------------------------------------------------------------


def test_overlap_examples_against_tick_count():
    inter, _ = ticks((0, 10), (5, 15))
    assert overlap(T(0, 10), T(5, 15)) == pytest.approx(inter / 100)
    assert overlap(T(0, 10), T(5, 15)) == 5
    assert overlap(T(2, 4), T(2, 4)) == 2
    assert overlap(T(0, 1), T(2, 3)) == 0


def test_iou_examples_against_tick_count():
    inter, union = ticks((0, 10), (5, 15))
    assert iou(T(0, 10), T(5, 15)) == pytest.approx(inter / union, abs=1e-9)
    assert iou(T(0, 10), T(5, 15)) == pytest.approx(0.3333, abs=1e-4)
    assert iou(T(2, 4), T(2, 4)) == 1.0
    assert iou(T(0, 1), T(5, 6)) == 0.0


def test_iop_examples():
    assert iop(T(5, 8), T(0, 10)) == 1.0
    assert iop(T(0, 10), T(5, 15)) == 0.5
    assert iop(T(0, 1), T(2, 3)) == 0.0


def test_merge_pair_examples():
    assert merge_pair(T(0, 10), T(5, 15), 0.3) == (T(0, 15),)
    assert merge_pair(T(0, 10), T(5, 15), 0.5) == (T(0, 10), T(5, 15))
    for tau in (0.1, 0.5, 1.0):
        assert merge_pair(T(2, 4), T(2, 4), tau) == (T(2, 4),)
    with pytest.raises(ValueError):
        merge_pair(T(0, 1), T(0, 2), 0)


def test_exact_threshold_is_inclusive():
    # IoU is exactly 0.5 in decimal terms; float subtraction alone would give 0.49999...
    a, b = T(0.1, 0.4), T(0.2, 0.5)
    assert frac_iou((0.1, 0.4), (0.2, 0.5)) == Fraction(1, 2)
    assert iou_at_least(a, b, 0.5)
    assert not iou_at_least(a, b, 0.5000001)


def test_fuse_intervals_examples():
    # [0,15] vs [14,20] has IoU 1/20, so the chain stops after the first merge;
    # every merge order reaches the same fixpoint.
    chain = [(0, 10), (5, 15), (14, 20)]
    assert fuse_all_orders(chain, 0.3) == {((0, 15), (14, 20))}
    assert fuse_intervals([T(*p) for p in chain], 0.3) == [T(0, 15), T(14, 20)]
    assert fuse_intervals([T(0, 10), T(5, 15), T(8, 20)], 0.3) == [T(0, 20)]
    assert fuse_intervals([T(0, 1), T(5, 6)], 0.1) == [T(0, 1), T(5, 6)]
    assert fuse_intervals([], 0.5) == []


def test_fuse_merges_non_adjacent_qualifying_pair():
    # [0,10] and [1,10] qualify at 0.9 although [0.5,2] sits between them in start order.
    items = [T(0, 10), T(0.5, 2), T(1, 10)]
    out = fuse_intervals(items, 0.9)
    assert T(0, 10) in out and T(0.5, 2) in out and len(out) == 2
    assert out == [T(*p) for p in fuse_fixpoint([(0, 10), (0.5, 2), (1, 10)], 0.9)]


def test_nms_examples():
    props = [gp(0, 10, 0.9), gp(1, 9, 0.8), gp(20, 30, 0.7)]
    kept = nms(props, 0.5)
    assert [(p.interval, p.score) for p in kept] == [(T(0, 10), 0.9), (T(20, 30), 0.7)]
    assert nms([gp(1, 2, 0.4)], 0.5) == [gp(1, 2, 0.4)]
    assert nms([], 0.3) == []


def test_nms_tie_break_is_deterministic():
    props = [gp(5, 9, 0.5), gp(1, 6, 0.5), gp(1, 3, 0.5)]
    kept = nms(props, 0.99)
    assert [p.interval for p in kept] == [T(1, 3), T(1, 6), T(5, 9)]


def test_fuse_question_examples():
    cfg = FusionConfig(tau_intra=0.3, tau_inter=0.3)
    assert fuse_question([[gp(0, 10, 0.9, 0)], [gp(0, 10, 0.8, 1)]], cfg) == [T(0, 10)]
    a = [gp(0, 10, 0.9, 0), gp(5, 15, 0.6, 0)]
    b = [gp(40, 50, 0.5, 1)]
    assert fuse_question([a, b], cfg) == [T(0, 15), T(40, 50)]
    assert fuse_question([[] for _ in range(5)], cfg) == []


def test_fuse_question_keeps_provenance_and_max_score():
    cfg = FusionConfig(tau_intra=0.3)
    segs = fuse_question_segments([[gp(0, 10, 0.4, 0)], [gp(1, 10, 0.8, 1)], [gp(30, 31, 0.2, 2)]], cfg)
    assert segs[0] == FusedSegment(T(0, 10), 0.8, frozenset({0, 1}))
    assert segs[1].options == frozenset({2})


def test_intra_threshold_applies_before_inter():
    # inside option 0 the pair has IoU 1/3: merged at tau_intra=0.3, not at tau_inter=0.9
    a = [gp(0, 10, 0.9, 0), gp(5, 15, 0.6, 0)]
    cfg = FusionConfig(tau_intra=0.3, tau_inter=0.9)
    assert fuse_question([a], cfg) == [T(0, 15)]
    cfg = FusionConfig(tau_intra=0.9, tau_inter=0.3)
    assert fuse_question([a], cfg) == [T(0, 15)]
    cfg = FusionConfig(tau_intra=0.9, tau_inter=0.9)
    assert fuse_question([a], cfg) == [T(0, 10), T(5, 15)]


# -- randomized oracle agreement -------------------------------------------------------


def _grid_intervals(rng, n):
    out = []
    for _ in range(n):
        s = rng.randint(0, 80)
        e = s + rng.randint(1, 40)
        out.append((s / 10, e / 10))
    return out


def test_fuse_matches_fixpoint_oracle_randomized():
    rng = random.Random(7)
    for _ in range(1000):
        items = _grid_intervals(rng, rng.randint(0, 8))
        tau = rng.choice(TAUS)
        got = [iv.to_list() for iv in fuse_intervals([T(*p) for p in items], tau)]
        assert got == [list(p) for p in fuse_fixpoint(items, tau)], (items, tau)


def test_nms_matches_exhaustive_oracle_randomized():
    rng = random.Random(11)
    for _ in range(1000):
        items = [(s, e, rng.choice([0.1, 0.3, 0.5, 0.5, 0.7, 0.9])) for s, e in _grid_intervals(rng, rng.randint(0, 8))]
        thr = rng.choice(TAUS)
        got = [(p.interval.t_start, p.interval.t_end, p.score) for p in nms([gp(*it) for it in items], thr)]
        assert got == nms_exhaustive(items, thr), (items, thr)


# -- properties ----------------------------------------------------------------------

grid = st.integers(min_value=0, max_value=200).map(lambda x: x / 10)


@st.composite
def intervals(draw, min_len=0.0):
    s = draw(grid)
    length = draw(st.integers(min_value=int(min_len * 10), max_value=100)) / 10
    return T(s, round(s + length, 1))


@given(intervals(min_len=0.1), intervals(min_len=0.1))
def test_iou_symmetric_bounded_and_below_iop(a, b):
    assert iou(a, b) == iou(b, a)
    assert overlap(a, b) == overlap(b, a)
    assert 0.0 <= iou(a, b) <= 1.0
    assert overlap(a, b) <= min(a.length, b.length)
    assert iou(a, b) <= iop(a, b)
    assert (iou(a, b) == 1.0) == (a == b)


@given(intervals(min_len=0.1), intervals(min_len=0.1))
def test_iop_is_one_iff_contained(pred, gt):
    assert (iop(pred, gt) == 1.0) == gt.contains(pred)


def _measure_of_union(ivs):
    total, cur = Fraction(0), None
    for iv in sorted(ivs):
        s, e = Fraction(repr(iv.t_start)), Fraction(repr(iv.t_end))
        if cur is None or s > cur[1]:
            if cur is not None:
                total += cur[1] - cur[0]
            cur = [s, e]
        else:
            cur[1] = max(cur[1], e)
    if cur is not None:
        total += cur[1] - cur[0]
    return total


@settings(max_examples=200)
@given(st.lists(intervals(min_len=0.1), max_size=8), st.sampled_from(TAUS))
def test_fuse_invariants(items, tau):
    out = fuse_intervals(items, tau)
    assert out == sorted(out)
    for iv in items:
        assert any(o.contains(iv) for o in out)
    for i in range(len(out)):
        for j in range(i + 1, len(out)):
            assert not iou_at_least(out[i], out[j], tau)
    if items:
        hull = max(i.t_end for i in items) - min(i.t_start for i in items)
        assert _measure_of_union(out) <= Fraction(repr(hull)) + Fraction(1, 10**9)
    assert fuse_intervals(out, tau) == out


@settings(max_examples=200)
@given(
    st.lists(st.tuples(intervals(min_len=0.1), st.sampled_from([0.2, 0.4, 0.6, 0.8, 1.0])), max_size=8),
    st.sampled_from(TAUS),
)
def test_nms_invariants(items, thr):
    props = [GroundedProposal(iv, s) for iv, s in items]
    kept = nms(props, thr)
    assert all(k in props for k in kept)
    assert [k.score for k in kept] == sorted((k.score for k in kept), reverse=True)
    for i in range(len(kept)):
        for j in range(i + 1, len(kept)):
            assert not iou_at_least(kept[i].interval, kept[j].interval, thr)
