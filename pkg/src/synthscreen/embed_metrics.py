"""Global embedding-space metrics between a real reference set and a synthetic set.

All operations are pure functions of two feature matrices and accept either an
EmbeddingSet or a plain (N, D) array. Distances are Euclidean in raw feature
space; no normalization is applied here. Seeded operations are bit-stable for
a fixed seed regardless of thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

# Canonical metric names in output order, with the direction that means
# "better synthetic data".
EMBED_METRIC_DIRECTIONS: dict[str, str] = {
    "fid": "lower_better",
    "fid_inf": "lower_better",
    "kd_value": "lower_better",
    "precision": "higher_better",
    "recall": "higher_better",
    "density": "higher_better",
    "coverage": "higher_better",
    "authpct": "higher_better",
    "sw_approx": "lower_better",
    "ct": "higher_better",
    "ct_mod": "higher_better",
    "fls": "lower_better",
    "fls_overfit": "lower_better",
}

SEEDED_OPS = ("fid_inf", "sw_approx", "ct", "fls")


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    direction: str


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    """Mean/covariance fit to one feature set."""

    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean size {mean.size}")
        scale = max(1.0, float(np.abs(cov).max()))
        if float(np.abs(cov - cov.T).max()) > 1e-9 * scale:
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)


def _features(x) -> np.ndarray:
    data = getattr(x, "data", x)
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {arr.shape}")
    return arr


def _check_pair(x: np.ndarray, y: np.ndarray, min_rows: int = 1) -> None:
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if x.shape[0] < min_rows or y.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} rows per set, "
                         f"got {x.shape[0]} and {y.shape[0]}")


def gaussian_summary(x) -> GaussianSummary:
    arr = _features(x)
    if arr.shape[0] < 2:
        raise ValueError("need at least 2 samples to fit a Gaussian")
    mean = arr.mean(axis=0)
    cov = np.atleast_2d(np.cov(arr, rowvar=False, ddof=1))
    return GaussianSummary(mean=mean, cov=cov, n=arr.shape[0])


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def frechet_from_summaries(a: GaussianSummary, b: GaussianSummary) -> float:
    """Squared-mean gap plus covariance transport term, clamped at 0.

    The cross term uses the symmetric eigendecomposition of
    cov_a^{1/2} cov_b cov_a^{1/2}, with eigenvalue clamping at 0 so that
    rank-deficient covariances (small N, large D) stay well defined.
    """
    if a.mean.size != b.mean.size:
        raise ValueError(f"dimension mismatch: {a.mean.size} vs {b.mean.size}")
    diff = a.mean - b.mean
    sa = _psd_sqrt(a.cov)
    inner = sa @ b.cov @ sa
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    trace_sqrt = float(np.sqrt(np.clip(w, 0.0, None)).sum())
    val = float(diff @ diff) + float(np.trace(a.cov) + np.trace(b.cov)) - 2.0 * trace_sqrt
    return max(val, 0.0)


def frechet_distance(real, synthetic) -> float:
    x, y = _features(real), _features(synthetic)
    _check_pair(x, y, min_rows=2)
    return frechet_from_summaries(gaussian_summary(x), gaussian_summary(y))


def frechet_distance_inf(real, synthetic, rng_seed: int, n_sizes: int = 8,
                         repeats: int = 3) -> float:
    """Bias-reduced Frechet distance extrapolated to infinite sample size.

    Evaluates frechet_distance at n_sizes evenly spaced subsample sizes from
    ceil(N/2) to N (N = smaller set size, 3 seeded repeats each, both sets
    subsampled), fits OLS of value against 1/size and returns the intercept
    clamped at 0.
    """
    x, y = _features(real), _features(synthetic)
    _check_pair(x, y, min_rows=2)
    n = min(x.shape[0], y.shape[0])
    if n < 20:
        raise ValueError(f"too few samples for the size ladder: {n} < 20")
    sizes = np.rint(np.linspace(math.ceil(n / 2), n, n_sizes)).astype(int)
    rng = np.random.default_rng(rng_seed)
    inv_sizes = []
    values = []
    for m in sizes:
        for _ in range(repeats):
            xi = rng.choice(x.shape[0], size=m, replace=False)
            yi = rng.choice(y.shape[0], size=m, replace=False)
            inv_sizes.append(1.0 / m)
            values.append(frechet_distance(x[xi], y[yi]))
    design = np.column_stack([np.ones(len(values)), inv_sizes])
    coef, *_ = np.linalg.lstsq(design, np.asarray(values), rcond=None)
    return max(float(coef[0]), 0.0)


def kernel_distance(real, synthetic) -> float:
    """Unbiased squared-MMD estimate with kernel k(x, y) = (x.y/D + 1)^3.

    For equal set sizes (always the case under the matched-size protocol) the
    paired form excludes matched cross terms, so identical sets score exactly
    0. May be slightly negative for close distributions; reported as-is.
    """
    x, y = _features(real), _features(synthetic)
    _check_pair(x, y, min_rows=2)
    m, n = x.shape[0], y.shape[0]
    d = x.shape[1]
    k_xx = (x @ x.T / d + 1.0) ** 3
    k_yy = (y @ y.T / d + 1.0) ** 3
    k_xy = (x @ y.T / d + 1.0) ** 3
    term_xx = (k_xx.sum() - np.trace(k_xx)) / (m * (m - 1))
    term_yy = (k_yy.sum() - np.trace(k_yy)) / (n * (n - 1))
    if m == n:
        term_xy = (k_xy.sum() - np.trace(k_xy)) / (m * (m - 1))
    else:
        term_xy = k_xy.mean()
    return float(term_xx + term_yy - 2.0 * term_xy)


def _knn_radii(dists: np.ndarray, k: int) -> np.ndarray:
    # Row-wise distance to the k-th nearest neighbor excluding self; the
    # self-distance 0 occupies one slot of the sorted row.
    return np.sort(dists, axis=1)[:, k]


def precision_recall(real, synthetic, k: int = 3) -> tuple[float, float]:
    """Improved precision/recall over kNN manifolds. Both values in [0, 1].

    A synthetic point counts toward precision when it lies within the kNN
    radius of any real point; recall swaps the roles.
    """
    x, y = _features(real), _features(synthetic)
    _check_pair(x, y, min_rows=2)
    if k >= x.shape[0] or k >= y.shape[0]:
        raise ValueError(f"k={k} must be smaller than both set sizes "
                         f"({x.shape[0]}, {y.shape[0]})")
    r_real = _knn_radii(cdist(x, x), k)
    r_syn = _knn_radii(cdist(y, y), k)
    d_xy = cdist(x, y)
    precision = float((d_xy <= r_real[:, None]).any(axis=0).mean())
    recall = float((d_xy <= r_syn[None, :]).any(axis=1).mean())
    return precision, recall


def density_coverage(real, synthetic, k: int = 3) -> tuple[float, float]:
    """Density (may exceed 1) and coverage (in [0, 1]) over kNN manifolds."""
    x, y = _features(real), _features(synthetic)
    _check_pair(x, y, min_rows=2)
    if k >= x.shape[0] or k >= y.shape[0]:
        raise ValueError(f"k={k} must be smaller than both set sizes "
                         f"({x.shape[0]}, {y.shape[0]})")
    r_real = _knn_radii(cdist(x, x), k)
    d_xy = cdist(x, y)
    within = d_xy <= r_real[:, None]
    density = float(within.sum() / (k * y.shape[0]))
    coverage = float((d_xy.min(axis=1) <= r_real).mean())
    return density, coverage


def authpct(real, synthetic) -> float:
    """Percent of synthetic points farther from their nearest real point than
    that real point is from its own nearest real neighbor."""
    x, y = _features(real), _features(synthetic)
    _check_pair(x, y, min_rows=1)
    if x.shape[0] < 2:
        raise ValueError("authpct needs at least 2 real points")
    d_rr = cdist(x, x)
    np.fill_diagonal(d_rr, np.inf)
    nn_real = d_rr.min(axis=1)
    d_yx = cdist(y, x)
    star = d_yx.argmin(axis=1)
    d_star = d_yx[np.arange(y.shape[0]), star]
    return float(100.0 * (d_star > nn_real[star]).mean())


def sliced_wasserstein(real, synthetic, n_projections: int = 128,
                       rng_seed: int = 0) -> float:
    """Mean 1-D transport distance over seeded random unit directions.

    Requires equal set sizes (guaranteed under the matched-size protocol);
    each direction contributes the mean absolute difference of the sorted
    projections.
    """
    x, y = _features(real), _features(synthetic)
    _check_pair(x, y, min_rows=1)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"size mismatch: {x.shape[0]} vs {y.shape[0]} "
                         "(resample to matched sizes first)")
    rng = np.random.default_rng(rng_seed)
    dirs = rng.standard_normal((n_projections, x.shape[1]))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    proj_x = np.sort(x @ dirs.T, axis=0)
    proj_y = np.sort(y @ dirs.T, axis=0)
    return max(float(np.abs(proj_x - proj_y).mean()), 0.0)


def mann_whitney_u_z(b_values, a_values) -> tuple[float, float]:
    """Rank-sum statistic U(B, A) and its z-score under the normal approximation.

    U counts pairs with b > a (ties count 1/2). z is positive when B values
    are stochastically larger than A values.
    """
    b = np.asarray(b_values, dtype=np.float64).reshape(-1)
    a = np.asarray(a_values, dtype=np.float64).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    gt = (b[:, None] > a[None, :]).sum()
    eq = (b[:, None] == a[None, :]).sum()
    u = float(gt) + 0.5 * float(eq)
    m, n = b.size, a.size
    mu = m * n / 2.0
    sigma = math.sqrt(m * n * (m + n + 1) / 12.0)
    return u, (u - mu) / sigma


def ct_scores(real, synthetic, rng_seed: int = 0) -> tuple[float, float]:
    """Coverage-test pair (z-statistic, common-language effect size).

    The real set is split in half (seeded); both halves' nearest-neighbor
    distances into the train half are compared with a rank-sum test. Positive
    z / effect size above 0.5 mean synthetic points sit closer to the real
    manifold than held-out real points do.
    """
    x, y = _features(real), _features(synthetic)
    _check_pair(x, y, min_rows=1)
    n = x.shape[0]
    if n < 10:
        raise ValueError(f"real set too small to split: {n} < 10")
    perm = np.random.default_rng(rng_seed).permutation(n)
    train, test = perm[: n // 2], perm[n // 2:]
    a = cdist(y, x[train]).min(axis=1)
    b = cdist(x[test], x[train]).min(axis=1)
    u, z = mann_whitney_u_z(b, a)
    return z, u / (a.size * b.size)


def _kde_mean_loglik(points: np.ndarray, fit: np.ndarray, sigma: float) -> float:
    d = fit.shape[1]
    sq = cdist(points, fit, "sqeuclidean")
    ll = logsumexp(-sq / (2.0 * sigma * sigma), axis=1)
    ll -= math.log(fit.shape[0]) + d * math.log(sigma) + 0.5 * d * math.log(2.0 * math.pi)
    return float(ll.mean())


def fls_scores(real, synthetic, rng_seed: int = 0,
               bandwidth_grid=None, grid_size: int = 20) -> tuple[float, float]:
    """Feature-likelihood score and its overfit companion (both lower is better).

    An isotropic Gaussian kernel density is fit on half the synthetic set with
    a single bandwidth chosen from a log-spaced grid by held-out synthetic
    likelihood. The score is the negative mean log-likelihood of the real set
    per dimension; the overfit gap subtracts the held-out synthetic term.
    """
    x, y = _features(real), _features(synthetic)
    _check_pair(x, y, min_rows=1)
    m = y.shape[0]
    if m < 10:
        raise ValueError(f"synthetic set too small to split: {m} < 10")
    perm = np.random.default_rng(rng_seed).permutation(m)
    fit, held = y[perm[: m // 2]], y[perm[m // 2:]]
    if bandwidth_grid is None:
        scale = math.sqrt(float(fit.var(axis=0).mean()))
        if scale == 0.0:
            raise ValueError("degenerate bandwidth grid (all-identical points)")
        bandwidth_grid = np.logspace(math.log10(scale * 0.05),
                                     math.log10(scale * 5.0), grid_size)
    bandwidth_grid = np.asarray(bandwidth_grid, dtype=np.float64)
    if bandwidth_grid.size == 0 or (bandwidth_grid <= 0).any():
        raise ValueError("bandwidth grid must be non-empty and positive")
    held_ll = [_kde_mean_loglik(held, fit, s) for s in bandwidth_grid]
    sigma = float(bandwidth_grid[int(np.argmax(held_ll))])
    d = y.shape[1]
    fls = -_kde_mean_loglik(x, fit, sigma) / d
    fls_held = -max(held_ll) / d
    return fls, fls - fls_held


def compute_embed_metrics(real, synthetic, rng_seeds: Mapping[str, int] | int = 0,
                          k: int = 3) -> list[MetricValue]:
    """Evaluate all 13 global metrics on one (real, synthetic) pair.

    ``rng_seeds`` is either one seed shared by every seeded operation or a
    mapping with keys fid_inf / sw_approx / ct / fls.
    """
    if isinstance(rng_seeds, int):
        rng_seeds = {op: rng_seeds for op in SEEDED_OPS}
    fid = frechet_distance(real, synthetic)
    fid_inf = frechet_distance_inf(real, synthetic, rng_seed=rng_seeds["fid_inf"])
    kd = kernel_distance(real, synthetic)
    precision, recall = precision_recall(real, synthetic, k=k)
    density, coverage = density_coverage(real, synthetic, k=k)
    auth = authpct(real, synthetic)
    sw = sliced_wasserstein(real, synthetic, rng_seed=rng_seeds["sw_approx"])
    ct, ct_mod = ct_scores(real, synthetic, rng_seed=rng_seeds["ct"])
    fls, fls_overfit = fls_scores(real, synthetic, rng_seed=rng_seeds["fls"])
    values = {
        "fid": fid, "fid_inf": fid_inf, "kd_value": kd,
        "precision": precision, "recall": recall,
        "density": density, "coverage": coverage,
        "authpct": auth, "sw_approx": sw,
        "ct": ct, "ct_mod": ct_mod,
        "fls": fls, "fls_overfit": fls_overfit,
    }
    return [MetricValue(name=name, value=float(values[name]), direction=direction)
            for name, direction in EMBED_METRIC_DIRECTIONS.items()]
