"""Object-centric distribution metrics and regime statistics from box labels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .dataio import AnnotationSet, Box, ImageLabels
from .embed_metrics import MetricValue

SMALL_AREA_THRESHOLD = 0.01
JSD_CONTINUOUS_BINS = 16

OBJECT_METRIC_DIRECTIONS: dict[str, str] = {
    "object_count_wass_mean": "lower_better",
    "object_count_jsd_mean": "lower_better",
    "complexity_wass_mean": "lower_better",
    "complexity_jsd_mean": "lower_better",
    "difficult_object_ratio_diff_mean": "lower_better",
}


@dataclass(frozen=True)
class ImageStats:
    n: int
    areas: tuple[float, ...]
    f_small: float
    c: float
    mean_pair_iou: float


@dataclass(frozen=True)
class RegimeStats:
    n_images: int
    inst_mean: float
    inst_std: float
    pct_small: float
    area_mean: float
    area_std: float
    iou_mean: float
    iou_std: float


def box_iou(a: Box, b: Box) -> float:
    ax1, ax2 = a.cx - a.w / 2, a.cx + a.w / 2
    ay1, ay2 = a.cy - a.h / 2, a.cy + a.h / 2
    bx1, bx2 = b.cx - b.w / 2, b.cx + b.w / 2
    by1, by2 = b.cy - b.h / 2, b.cy + b.h / 2
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def complexity_score(n: int, f_small: float) -> float:
    """Default per-image complexity: instance count scaled up by the
    prevalence of small boxes. Reduces to n when no box is small."""
    return n * (1.0 + f_small)


def image_stats(labels: ImageLabels,
                small_threshold: float = SMALL_AREA_THRESHOLD,
                scorer=complexity_score) -> ImageStats:
    """Per-image label statistics. Images with fewer than two boxes
    contribute pairwise IoU 0."""
    areas = tuple(b.area for b in labels.boxes)
    n = len(areas)
    f_small = (sum(1 for a in areas if a < small_threshold) / n) if n else 0.0
    if n < 2:
        iou = 0.0
    else:
        pairs = list(combinations(labels.boxes, 2))
        iou = sum(box_iou(a, b) for a, b in pairs) / len(pairs)
    return ImageStats(n=n, areas=areas, f_small=f_small,
                      c=scorer(n, f_small) if n else 0.0, mean_pair_iou=iou)


def _mean_std(values, sample_std: bool) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return 0.0, 0.0
    if sample_std and arr.size > 1:
        return float(arr.mean()), float(arr.std(ddof=1))
    return float(arr.mean()), float(arr.std(ddof=0))


def regime_stats(labels: AnnotationSet,
                 small_threshold: float = SMALL_AREA_THRESHOLD,
                 sample_std: bool = False) -> RegimeStats:
    """Aggregate label statistics across an annotation set.

    Instance counts and pairwise IoU are averaged over images; box areas and
    the small-box percentage pool boxes across images. Standard deviations
    are population by default.
    """
    if len(labels) == 0:
        raise ValueError("empty annotation set")
    stats = [image_stats(img, small_threshold) for img in labels.images]
    counts = [s.n for s in stats]
    ious = [s.mean_pair_iou for s in stats]
    areas = [a for s in stats for a in s.areas]
    n_small = sum(1 for a in areas if a < small_threshold)
    inst_mean, inst_std = _mean_std(counts, sample_std)
    area_mean, area_std = _mean_std(areas, sample_std)
    iou_mean, iou_std = _mean_std(ious, sample_std)
    return RegimeStats(
        n_images=len(labels),
        inst_mean=inst_mean, inst_std=inst_std,
        pct_small=100.0 * n_small / len(areas) if areas else 0.0,
        area_mean=area_mean, area_std=area_std,
        iou_mean=iou_mean, iou_std=iou_std)


def wasserstein_1d(a, b) -> float:
    """Exact 1-D transport distance via the quantile-function integral."""
    av = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    bv = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if av.size == 0 or bv.size == 0:
        raise ValueError("empty input")
    grid = np.concatenate([av, bv])
    grid.sort(kind="stable")
    deltas = np.diff(grid)
    cdf_a = np.searchsorted(av, grid[:-1], side="right") / av.size
    cdf_b = np.searchsorted(bv, grid[:-1], side="right") / bv.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


def _entropy2(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def jsd_1d(a, b, kind: str = "continuous") -> float:
    """Histogram Jensen-Shannon divergence, base-2 logarithm, in [0, 1].

    ``count`` uses unit-width integer bins over the pooled range;
    ``continuous`` uses 16 equal-width bins over the pooled min-max.
    """
    av = np.asarray(a, dtype=np.float64).reshape(-1)
    bv = np.asarray(b, dtype=np.float64).reshape(-1)
    if av.size == 0 or bv.size == 0:
        raise ValueError("empty input")
    if kind == "count":
        lo = math.floor(min(av.min(), bv.min()))
        hi = math.floor(max(av.max(), bv.max()))
        edges = np.arange(lo, hi + 2) - 0.5
    elif kind == "continuous":
        lo, hi = min(av.min(), bv.min()), max(av.max(), bv.max())
        if lo == hi:
            # Both sets are the same constant; the distributions coincide.
            return 0.0
        edges = np.linspace(lo, hi, JSD_CONTINUOUS_BINS + 1)
    else:
        raise ValueError(f"unknown kind: {kind!r}")
    p = np.histogram(av, bins=edges)[0].astype(np.float64)
    q = np.histogram(bv, bins=edges)[0].astype(np.float64)
    p /= p.sum()
    q /= q.sum()
    m = (p + q) / 2.0
    jsd = _entropy2(m) - 0.5 * (_entropy2(p) + _entropy2(q))
    return min(max(jsd, 0.0), 1.0)


def _pooled_small_ratio(labels: AnnotationSet, small_threshold: float) -> float:
    areas = [b.area for img in labels.images for b in img.boxes]
    if not areas:
        return 0.0
    return sum(1 for a in areas if a < small_threshold) / len(areas)


def object_centric_metrics(real_labels: AnnotationSet, syn_labels: AnnotationSet,
                           small_threshold: float = SMALL_AREA_THRESHOLD,
                           scorer=complexity_score) -> list[MetricValue]:
    """The five object-centric metrics over per-image count and complexity
    distributions plus the pooled small-box ratio gap. All lower is better."""
    if len(real_labels) == 0 or len(syn_labels) == 0:
        raise ValueError("empty annotation set")
    real_stats = [image_stats(img, small_threshold, scorer) for img in real_labels.images]
    syn_stats = [image_stats(img, small_threshold, scorer) for img in syn_labels.images]
    real_n = [s.n for s in real_stats]
    syn_n = [s.n for s in syn_stats]
    real_c = [s.c for s in real_stats]
    syn_c = [s.c for s in syn_stats]
    ratio_gap = abs(_pooled_small_ratio(real_labels, small_threshold)
                    - _pooled_small_ratio(syn_labels, small_threshold))
    values = {
        "object_count_wass_mean": wasserstein_1d(real_n, syn_n),
        "object_count_jsd_mean": jsd_1d(real_n, syn_n, kind="count"),
        "complexity_wass_mean": wasserstein_1d(real_c, syn_c),
        "complexity_jsd_mean": jsd_1d(real_c, syn_c, kind="continuous"),
        "difficult_object_ratio_diff_mean": ratio_gap,
    }
    return [MetricValue(name=name, value=float(values[name]), direction=direction)
            for name, direction in OBJECT_METRIC_DIRECTIONS.items()]
