"""Grounding losses with analytic gradients w.r.t. the model's predictions.

Every loss returns ``(value, gradient)``. Gradients are exact away from the
documented kink sets and are checked against central differences by
:func:`finite_diff_check` / :func:`gradcheck_report`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateIntervalError, NoPositiveError
from .grounder.types import ClipPrediction
from .intervals import TimeInterval

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_f: float = 1.0
    lambda_l1: float = 1.0
    lambda_iou: float = 1.0
    lambda_inter: float = 1.0
    lambda_intra: float = 1.0
    smooth_l1_beta: float = 1.0
    contrastive_temperature: float = 0.07

    def __post_init__(self):
        for name in ("lambda_f", "lambda_l1", "lambda_iou", "lambda_inter", "lambda_intra"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.smooth_l1_beta <= 0:
            raise ValueError("smooth_l1_beta must be positive")
        if self.contrastive_temperature <= 0:
            raise ValueError("contrastive_temperature must be positive")


@dataclass(frozen=True)
class ClipTarget:
    """Ground truth for one clip; offsets and interval only matter when foreground."""

    foreground_label: int
    target_offsets: tuple[float, float] | None = None
    target_interval: TimeInterval | None = None

    def __post_init__(self):
        if self.foreground_label not in (0, 1):
            raise ValueError(f"foreground_label must be 0 or 1, got {self.foreground_label}")
        if self.foreground_label == 1 and (self.target_offsets is None or self.target_interval is None):
            raise ValueError("foreground targets need both offsets and an interval")

    @classmethod
    def foreground(cls, interval: TimeInterval, clip_center: float) -> "ClipTarget":
        return cls(1, (interval.t_start - clip_center, interval.t_end - clip_center), interval)

    @classmethod
    def background(cls) -> "ClipTarget":
        return cls(0)


def loss_foreground(f_pred: float, f_label: int, lambda_f: float = 1.0) -> tuple[float, float]:
    """Weighted binary cross-entropy on the clamped foreground probability."""
    f = min(max(float(f_pred), PROB_EPS), 1.0 - PROB_EPS)
    y = float(f_label)
    loss = -lambda_f * (y * math.log(f) + (1.0 - y) * math.log(1.0 - f))
    grad = -lambda_f * (y / f - (1.0 - y) / (1.0 - f))
    return loss, grad


def smooth_l1(pred: float, target: float, beta: float = 1.0) -> tuple[float, float]:
    """Huber-style loss; kinked (second derivative jumps) at ``|pred - target| == beta``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    x = float(pred) - float(target)
    if abs(x) < beta:
        return 0.5 * x * x / beta, x / beta
    return abs(x) - 0.5 * beta, math.copysign(1.0, x)


def _endpoints(iv) -> tuple[float, float]:
    if isinstance(iv, TimeInterval):
        return iv.t_start, iv.t_end
    s, e = iv
    return float(s), float(e)


def loss_iou_1d(pred, target) -> tuple[float, np.ndarray]:
    """``1 - IoU`` and its gradient w.r.t. the predicted ``(start, end)``.

    Endpoints may be any reals (raw predictions can go negative). The loss is
    not differentiable where ``pred_start == target_start``,
    ``pred_end == target_end`` or the intervals just touch; at an exact match
    the zero subgradient is returned. For disjoint intervals the true
    gradient is zero; a translation surrogate of magnitude
    ``1 / (len(pred) + len(target))`` pointing toward the target is returned
    instead so optimisation still has a direction.
    """
    ps, pe = _endpoints(pred)
    ts, te = _endpoints(target)
    if pe - ps <= 0 or te - ts <= 0:
        raise DegenerateIntervalError("IoU loss needs positive-length prediction and target")
    if (ps, pe) == (ts, te):
        # the optimum; zero is a valid subgradient there
        return 0.0, np.zeros(2)
    inter = min(pe, te) - max(ps, ts)
    if inter <= 0:
        direction = math.copysign(1.0, (ts + te) - (ps + pe))
        g = -direction / ((pe - ps) + (te - ts))
        return 1.0, np.array([g, g])
    union = (pe - ps) + (te - ts) - inter
    di_ds = -1.0 if ps > ts else 0.0
    di_de = 1.0 if pe < te else 0.0
    du_ds = -1.0 - di_ds
    du_de = 1.0 - di_de
    u2 = union * union
    g_s = -(di_ds * union - inter * du_ds) / u2
    g_e = -(di_de * union - inter * du_de) / u2
    return 1.0 - inter / union, np.array([g_s, g_e])


def _boundary_terms(
    offsets: Sequence[float], target: ClipTarget, clip_center: float, w: LossWeights
) -> tuple[float, np.ndarray]:
    if target.foreground_label == 0:
        return 0.0, np.zeros(2)
    ds, de = float(offsets[0]), float(offsets[1])
    ts_off, te_off = target.target_offsets
    tiv = target.target_interval
    if abs(clip_center + ts_off - tiv.t_start) > 1e-9 or abs(clip_center + te_off - tiv.t_end) > 1e-9:
        raise ValueError("target interval does not match clip center plus target offsets")
    l1_s, g1_s = smooth_l1(ds, ts_off, w.smooth_l1_beta)
    l1_e, g1_e = smooth_l1(de, te_off, w.smooth_l1_beta)
    l_iou, g_iou = loss_iou_1d((clip_center + ds, clip_center + de), tiv)
    loss = w.lambda_l1 * (l1_s + l1_e) + w.lambda_iou * l_iou
    # d(center + offset)/d(offset) == 1
    grad = w.lambda_l1 * np.array([g1_s, g1_e]) + w.lambda_iou * g_iou
    return loss, grad


def loss_boundary(
    pred: ClipPrediction, target: ClipTarget, clip_center: float, w: LossWeights
) -> tuple[float, np.ndarray]:
    """Gated smooth-L1 on offsets plus IoU loss on the implied segment.

    Background clips contribute nothing. Gradient is w.r.t. the predicted
    ``(d_start, d_end)`` offsets.
    """
    return _boundary_terms(pred.offsets, target, clip_center, w)


def _info_nce(pos: np.ndarray, neg: np.ndarray, temperature: float):
    """Mean over positives of ``-log(e^p / (e^p + sum e^neg))`` at ``temperature``.

    Returns the loss plus gradients for the positive and negative scores.
    """
    if pos.size == 0:
        raise NoPositiveError("contrastive term needs at least one positive")
    p = pos / temperature
    n = neg / temperature
    g_pos = np.zeros_like(pos)
    g_neg = np.zeros_like(neg)
    total = 0.0
    for i, pi in enumerate(p):
        logits = np.concatenate(([pi], n))
        m = logits.max()
        e = np.exp(logits - m)
        z = e.sum()
        total += m + math.log(z) - pi
        prob = e / z
        g_pos[i] += (prob[0] - 1.0) / temperature
        g_neg += prob[1:] / temperature
    k = pos.size
    return total / k, g_pos / k, g_neg / k


def loss_saliency(
    sal_scores: Sequence[float],
    pos_mask: Sequence[bool],
    cross_video_scores: Sequence[float],
    w: LossWeights,
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Intra- plus inter-video contrastive saliency loss.

    Intra: each positive clip against the non-positive clips of the same
    video. Inter: each positive clip against ``cross_video_scores``
    (distractor scores supplied by the caller). Returns the loss and the
    gradients w.r.t. ``sal_scores`` and ``cross_video_scores``.
    """
    s = np.asarray(sal_scores, dtype=np.float64)
    mask = np.asarray(pos_mask, dtype=bool)
    cross = np.asarray(cross_video_scores, dtype=np.float64).reshape(-1)
    if mask.shape != s.shape:
        raise ValueError("pos_mask must match sal_scores in length")
    if not mask.any():
        raise NoPositiveError("saliency loss needs at least one positive clip")
    t = w.contrastive_temperature
    pos_idx = np.flatnonzero(mask)
    neg_idx = np.flatnonzero(~mask)

    intra, gp_intra, gn_intra = _info_nce(s[pos_idx], s[neg_idx], t)
    inter, gp_inter, g_cross = _info_nce(s[pos_idx], cross, t)

    grad_s = np.zeros_like(s)
    grad_s[pos_idx] += w.lambda_intra * gp_intra + w.lambda_inter * gp_inter
    grad_s[neg_idx] += w.lambda_intra * gn_intra
    loss = w.lambda_inter * inter + w.lambda_intra * intra
    return loss, (grad_s, w.lambda_inter * g_cross)


def loss_total(
    foreground: Sequence[float],
    boundary: Sequence[float],
    saliency: Sequence[float],
    n: int | None = None,
) -> float:
    """Mean over clips of the summed per-clip loss components."""
    if not (len(foreground) == len(boundary) == len(saliency)):
        raise ValueError("component lists must have equal length")
    count = len(foreground)
    if n is not None and n != count:
        raise ValueError(f"declared N={n} but got {count} clips")
    if count == 0:
        raise ValueError("loss_total needs at least one clip")
    return math.fsum(f + b + s for f, b, s in zip(foreground, boundary, saliency)) / count


LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def finite_diff_check(loss_fn: LossFn, point, epsilon: float = 1e-6) -> float:
    """Max over coordinates of ``|fd - analytic| / max(1, |analytic|)``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(point, dtype=np.float64).reshape(-1)
    _, analytic = loss_fn(x.copy())
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    worst = 0.0
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += epsilon
        down[i] -= epsilon
        fd = (loss_fn(up)[0] - loss_fn(down)[0]) / (2.0 * epsilon)
        worst = max(worst, abs(fd - analytic[i]) / max(1.0, abs(analytic[i])))
    return float(worst)


# -- randomized gradient-check suite -------------------------------------------------

_MARGIN = 1e-3


def _far(a: float, b: float) -> bool:
    return abs(a - b) > _MARGIN


def _fg_case(rng):
    f = rng.uniform(0.05, 0.95)
    label = int(rng.integers(0, 2))
    lam = rng.uniform(0.1, 2.0)
    return lambda x: loss_foreground(x[0], label, lam), np.array([f])


def _smooth_case(rng):
    beta = rng.uniform(0.2, 2.0)
    target = rng.uniform(-3, 3)
    while True:
        pred = rng.uniform(-5, 5)
        if _far(abs(pred - target), beta) and _far(pred, target):
            break

    def fn(x):
        loss, grad = smooth_l1(x[0], target, beta)
        return loss, np.array([grad])

    return fn, np.array([pred])


def _overlapping_pair(rng):
    while True:
        ts = rng.uniform(0, 20)
        te = ts + rng.uniform(0.5, 10)
        ps = rng.uniform(ts - 5, te - 0.2)
        pe = ps + rng.uniform(0.2, 12)
        inter = min(pe, te) - max(ps, ts)
        if inter > _MARGIN and _far(ps, ts) and _far(pe, te):
            return (ps, pe), (ts, te)


def _iou_case(rng):
    pred, target = _overlapping_pair(rng)
    return lambda x: loss_iou_1d((x[0], x[1]), target), np.array(pred)


def _boundary_case(rng):
    w = LossWeights(
        lambda_l1=rng.uniform(0.1, 2), lambda_iou=rng.uniform(0.1, 2), smooth_l1_beta=rng.uniform(0.3, 2)
    )
    while True:
        center = rng.uniform(5, 30)
        t_off = (-rng.uniform(0.1, 4), rng.uniform(0.1, 4))
        p_off = (-rng.uniform(0.05, 5), rng.uniform(0.05, 5))
        inter = min(p_off[1], t_off[1]) - max(p_off[0], t_off[0])
        ok = (
            inter > _MARGIN
            and _far(p_off[0], t_off[0])
            and _far(p_off[1], t_off[1])
            and _far(abs(p_off[0] - t_off[0]), w.smooth_l1_beta)
            and _far(abs(p_off[1] - t_off[1]), w.smooth_l1_beta)
        )
        if ok:
            break
    target = ClipTarget.foreground(TimeInterval(center + t_off[0], center + t_off[1]), center)

    def fn(x):
        return _boundary_terms(x, target, center, w)

    return fn, np.array(p_off)


def _saliency_case(rng):
    n_clips = int(rng.integers(2, 10))
    n_cross = int(rng.integers(0, 6))
    mask = rng.random(n_clips) < 0.4
    mask[rng.integers(0, n_clips)] = True
    w = LossWeights(
        lambda_inter=rng.uniform(0.1, 2),
        lambda_intra=rng.uniform(0.1, 2),
        contrastive_temperature=rng.uniform(0.07, 1.0),
    )
    point = rng.uniform(0, 1, n_clips + n_cross)

    def fn(x):
        loss, (gs, gc) = loss_saliency(x[:n_clips], mask, x[n_clips:], w)
        return loss, np.concatenate([gs, gc])

    return fn, point


GRADCHECK_CASES = {
    "loss_foreground": _fg_case,
    "smooth_l1": _smooth_case,
    "loss_iou_1d": _iou_case,
    "loss_boundary": _boundary_case,
    "loss_saliency": _saliency_case,
}


def gradcheck_report(n_points: int = 100, seed: int = 0, epsilon: float = 1e-6) -> dict[str, float]:
    """Max relative analytic-vs-central-difference error per loss over random points."""
    rng = np.random.default_rng(seed)
    report = {}
    for name, make in GRADCHECK_CASES.items():
        worst = 0.0
        for _ in range(n_points):
            fn, point = make(rng)
            worst = max(worst, finite_diff_check(fn, point, epsilon))
        report[name] = float(worst)
    return report
