"""Ranking metrics with explicit tie handling.

AUROC is the rank (Mann-Whitney) statistic: the probability that a random
positive outranks a random negative, ties counting one half. Average
precision is the non-interpolated step sum over the ranked list, with tied
scores collapsed into a single step. These definitions, not curve
integrals, are the primary ones; the trapezoid area under the emitted ROC
is only a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class SingleClassError(ValueError):
    """Raised when a metric needs both classes and got one."""


def _as_labels_scores(y_true, y_score) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y_true, dtype=bool)
    s = np.asarray(y_score, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError(f"labels and scores must be 1-d and congruent, got {y.shape} vs {s.shape}")
    if y.size == 0:
        raise ValueError("empty score list")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain non-finite values")
    return y, s


def _average_ranks(s: np.ndarray) -> np.ndarray:
    """1-based ranks of s, tied values sharing their average rank."""
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[order[j + 1]] == s[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(y_true, y_score) -> float:
    """Probability a random positive outranks a random negative (ties = 1/2)."""
    y, s = _as_labels_scores(y_true, y_score)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUROC is undefined with a single class present")
    ranks = _average_ranks(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(y_true, y_score) -> float:
    """Step-sum AP over the descending ranked list; tied scores form one step."""
    y, s = _as_labels_scores(y_true, y_score)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise SingleClassError("average precision is undefined without positives")
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    ap = 0.0
    tp = 0
    seen = 0
    prev_recall = 0.0
    i = 0
    while i < y_sorted.size:
        j = i
        while j + 1 < y_sorted.size and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i : j + 1].sum())
        seen = j + 1
        recall = tp / n_pos
        precision = tp / seen
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(ap)


@dataclass(frozen=True)
class F1Result:
    f1: float
    precision: float
    recall: float
    # rows = actual [negative, positive], cols = predicted [negative, positive]
    confusion: tuple[tuple[int, int], tuple[int, int]]


def f1_at_threshold(y_true, y_score, threshold: float) -> F1Result:
    """F1/precision/recall with positive = score >= threshold; F1 is 0 when P+R = 0."""
    y, s = _as_labels_scores(y_true, y_score)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return F1Result(f1=f1, precision=precision, recall=recall, confusion=((tn, fp), (fn, tp)))


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    mean_f1: float
    degenerate: bool


def select_f1_threshold(folds: Sequence[tuple[Sequence[int], Sequence[float]]]) -> ThresholdChoice:
    """Pick the threshold maximizing mean F1 across folds of (labels, scores).

    Candidates are 0, 1, and the midpoints between adjacent distinct scores
    pooled over all folds. Ties go to the smaller threshold. A pool with a
    single distinct score is degenerate and yields threshold 0.
    """
    if not folds:
        raise ValueError("need at least one fold of scores")
    pooled = np.sort(np.unique(np.concatenate([np.asarray(s, dtype=np.float64) for _, s in folds])))
    candidates = [0.0]
    candidates.extend(0.5 * (pooled[:-1] + pooled[1:]))
    candidates.append(1.0)
    best_threshold = None
    best_mean = -1.0
    for threshold in candidates:
        mean_f1 = float(np.mean([f1_at_threshold(y, s, threshold).f1 for y, s in folds]))
        if mean_f1 > best_mean:
            best_mean = mean_f1
            best_threshold = float(threshold)
    return ThresholdChoice(threshold=best_threshold, mean_f1=best_mean, degenerate=pooled.size == 1)


def roc_points(y_true, y_score) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) at every distinct threshold, from (0,0) to (1,1)."""
    y, s = _as_labels_scores(y_true, y_score)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC is undefined with a single class present")
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    distinct = np.nonzero(np.diff(s_sorted))[0]
    cut = np.r_[distinct, y_sorted.size - 1]
    tps = np.cumsum(y_sorted)[cut]
    fps = cut + 1 - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thresholds = np.r_[np.inf, s_sorted[cut]]
    return fpr, tpr, thresholds


def pr_points(y_true, y_score) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(recall, precision, thresholds) per ranked step, tied scores grouped."""
    y, s = _as_labels_scores(y_true, y_score)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise SingleClassError("PR curve is undefined without positives")
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    distinct = np.nonzero(np.diff(s_sorted))[0]
    cut = np.r_[distinct, y_sorted.size - 1]
    tps = np.cumsum(y_sorted)[cut]
    recall = tps / n_pos
    precision = tps / (cut + 1)
    return recall, precision, s_sorted[cut]


def trapezoid_roc_area(fpr: np.ndarray, tpr: np.ndarray) -> float:
    fpr = np.asarray(fpr, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    return float(0.5 * np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])))


def mean_curve(
    xs: Sequence[np.ndarray],
    ys: Sequence[np.ndarray],
    grid: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vertically average fold curves on a fixed grid.

    Each curve is linearly interpolated onto the grid (default: 101 points
    on [0, 1]); the band is the normal-approximation 95% interval of the
    mean, mean +- 1.96 * sd / sqrt(k), clipped to [0, 1].
    """
    if grid is None:
        grid = np.linspace(0.0, 1.0, 101)
    stack = np.vstack([np.interp(grid, np.asarray(x), np.asarray(y)) for x, y in zip(xs, ys)])
    mean = stack.mean(axis=0)
    if stack.shape[0] > 1:
        se = stack.std(axis=0, ddof=1) / np.sqrt(stack.shape[0])
    else:
        se = np.zeros_like(mean)
    lo = np.clip(mean - 1.96 * se, 0.0, 1.0)
    hi = np.clip(mean + 1.96 * se, 0.0, 1.0)
    return grid, mean, lo, hi
