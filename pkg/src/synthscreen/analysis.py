"""Metric-performance alignment: raw and augmentation-residualized correlations
with BH-FDR control, key-metric shortlisting, per-budget correlations and the
categorical augmentation fixed-effects regression.

Baseline runs (ratio 0) never enter these analyses; no metric exists for them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .dataio import ConfigKey, MetricTable, RunsTable
from .distributions import t_ppf, t_two_sided_p

VIEWS = ("raw", "residual")
CORR_TYPES = ("pearson", "spearman")
DEFAULT_BUDGETS = (25, 50, 100)
SIGNIFICANCE_Q = 0.05

# Values whose spread is below this (relative to magnitude) are treated as
# constant; covers exact constants and residuals that are pure roundoff.
_VARIANCE_TOL = 1e-9


class ZeroVarianceError(ValueError):
    """A correlation input is (numerically) constant."""

    def __init__(self, note: str):
        super().__init__(note)
        self.note = note


class CollinearityError(ValueError):
    pass


@dataclass
class CorrCell:
    dataset: str
    regime: str
    view: str
    corr_type: str
    metric: str
    n: int
    rho: float | None = None
    p: float | None = None
    q: float | None = None
    note: str = ""

    @property
    def significant(self) -> bool:
        return self.q is not None and self.q < SIGNIFICANCE_Q


@dataclass
class BudgetCell:
    dataset: str
    regime: str
    metric: str
    budget: int
    n: int
    rho: float | None = None
    p: float | None = None
    note: str = ""


@dataclass(frozen=True)
class FixedEffectsFit:
    theta: dict[int, float]
    beta_fe: float
    beta_se: float
    p_fe: float
    alpha: float
    n: int
    dof: int


def _is_constant(x: np.ndarray) -> bool:
    return float(np.ptp(x)) <= _VARIANCE_TOL * max(1.0, float(np.abs(x).max()))


def pearson(x, y) -> tuple[float, float]:
    """Sample Pearson correlation with the t(n-2) two-sided p-value.

    The first argument plays the metric role and the second the mAP role for
    zero-variance reporting.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 samples, got {n}")
    if _is_constant(x):
        raise ZeroVarianceError("zero metric variance")
    if _is_constant(y):
        raise ZeroVarianceError("zero map variance")
    xc = x - x.mean()
    yc = y - y.mean()
    rho = float(xc @ yc / np.sqrt((xc @ xc) * (yc @ yc)))
    rho = min(max(rho, -1.0), 1.0)
    if 1.0 - rho * rho <= 1e-15:
        return rho, 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, t_two_sided_p(float(t), n - 2)


def spearman(x, y, permutations: int | None = None,
             rng_seed: int = 0) -> tuple[float, float]:
    """Pearson on average-tie ranks; p via the same t approximation.

    With ``permutations`` set, the p-value is instead estimated from that many
    seeded permutations of y (small-n audit mode).
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise ValueError(f"need at least 3 samples, got {x.size}")
    if _is_constant(x):
        raise ZeroVarianceError("zero metric variance")
    if _is_constant(y):
        raise ZeroVarianceError("zero map variance")
    rx = rankdata(x)
    ry = rankdata(y)
    rho, p = pearson(rx, ry)
    if permutations:
        rng = np.random.default_rng(rng_seed)
        hits = 0
        for _ in range(permutations):
            perm_rho, _ = pearson(rx, rng.permutation(ry))
            if abs(perm_rho) >= abs(rho) - 1e-12:
                hits += 1
        p = (hits + 1) / (permutations + 1)
    return rho, p


def residualize(a, v) -> np.ndarray:
    """Ordinary-least-squares residuals of v on (1, a).

    Residuals sum to zero and are uncorrelated with a (within roundoff).
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.size != v.size:
        raise ValueError(f"length mismatch: {a.size} vs {v.size}")
    if a.size < 3:
        raise ValueError(f"need at least 3 samples, got {a.size}")
    ac = a - a.mean()
    denom = float(ac @ ac)
    if denom == 0.0:
        raise ValueError("constant augmentation vector")
    slope = float(ac @ (v - v.mean())) / denom
    return (v - v.mean()) - slope * ac


def paired_samples(metrics: MetricTable, runs: RunsTable):
    """Join the tables into per-(dataset, regime, metric) aligned vectors.

    Returns ``{(dataset, regime, metric): (a, m, y)}``. mAP is averaged over
    seeds per configuration; baseline rows are excluded; rows with a
    non-finite metric or mAP are dropped.
    """
    y_by_key: dict[ConfigKey, list[float]] = {}
    for r in runs.records:
        if not r.key.is_baseline:
            y_by_key.setdefault(r.key, []).append(r.map5095)
    y_mean = {k: float(np.mean(v)) for k, v in y_by_key.items()}
    samples: dict[tuple[str, str, str], list[tuple[int, float, float]]] = {}
    for rec in metrics.records:
        y = y_mean.get(rec.key)
        if y is None or not np.isfinite(rec.value) or not np.isfinite(y):
            continue
        samples.setdefault((rec.key.dataset, rec.key.regime, rec.metric),
                           []).append((rec.key.aug_ratio, rec.value, y))
    out = {}
    for sk, rows in samples.items():
        rows.sort()
        a = np.asarray([r[0] for r in rows], dtype=np.float64)
        m = np.asarray([r[1] for r in rows], dtype=np.float64)
        y = np.asarray([r[2] for r in rows], dtype=np.float64)
        out[sk] = (a, m, y)
    return out


def correlation_matrix(metrics: MetricTable, runs: RunsTable, view: str,
                       corr_type: str) -> list[CorrCell]:
    """One correlation cell per (dataset, regime, metric) under the requested
    view. q-values are left unset; fill them with apply_fdr."""
    if view not in VIEWS:
        raise ValueError(f"unknown view: {view!r}")
    if corr_type not in CORR_TYPES:
        raise ValueError(f"unknown corr_type: {corr_type!r}")
    corr = pearson if corr_type == "pearson" else spearman
    samples = paired_samples(metrics, runs)
    if not samples:
        raise ValueError("empty join between metric and runs tables")
    cells = []
    for (dataset, regime, metric) in sorted(samples):
        a, m, y = samples[(dataset, regime, metric)]
        cell = CorrCell(dataset=dataset, regime=regime, view=view,
                        corr_type=corr_type, metric=metric, n=int(a.size))
        if a.size < 3:
            cell.note = f"insufficient sample (n={a.size})"
            cells.append(cell)
            continue
        try:
            if view == "residual":
                m = residualize(a, m)
                y = residualize(a, y)
            cell.rho, cell.p = corr(m, y)
        except ZeroVarianceError as exc:
            cell.note = exc.note
        except ValueError as exc:
            cell.note = str(exc)
        cells.append(cell)
    return cells


def bh_fdr(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up q-values (monotone in p, clamped at 1).

    p = 0 is tolerated as the degenerate limit of a perfect association.
    """
    p = np.asarray(p_values, dtype=np.float64).reshape(-1)
    if p.size == 0:
        return np.empty(0)
    if (p < 0).any() or (p > 1).any():
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    q_sorted = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(q_sorted[::-1])[::-1]
    q_sorted = np.minimum(q_sorted, 1.0)
    q = np.empty(m)
    q[order] = q_sorted
    return q


def apply_fdr(cells: list[CorrCell]) -> list[CorrCell]:
    """Fill q-values in place. One BH family per (regime, view, corr_type)
    over every metric x dataset cell with a finite p-value."""
    families: dict[tuple[str, str, str], list[CorrCell]] = {}
    for c in cells:
        if c.p is not None:
            families.setdefault((c.regime, c.view, c.corr_type), []).append(c)
    for members in families.values():
        qs = bh_fdr([c.p for c in members])
        for c, q in zip(members, qs):
            c.q = float(q)
    return cells


def key_metric_shortlist(cells: list[CorrCell], k: int = 15) -> list[str]:
    """Top-k metrics by their strongest absolute residual Spearman correlation
    across datasets; ties broken by metric name."""
    strength: dict[str, float] = {}
    for c in cells:
        if c.view == "residual" and c.corr_type == "spearman" and c.rho is not None:
            strength[c.metric] = max(strength.get(c.metric, 0.0), abs(c.rho))
    if not strength:
        raise ValueError("no defined residual Spearman cells")
    ranked = sorted(strength, key=lambda name: (-strength[name], name))
    return ranked[:k]


def per_budget_correlations(metrics: MetricTable, runs: RunsTable,
                            budgets=DEFAULT_BUDGETS) -> list[BudgetCell]:
    """Spearman across generators only, at each fixed budget."""
    budgets = tuple(int(b) for b in budgets)
    samples = paired_samples(metrics, runs)
    if not samples:
        raise ValueError("empty join between metric and runs tables")
    present = {int(a) for (_, _, _), (av, _, _) in samples.items() for a in av}
    for b in budgets:
        if b not in present:
            raise ValueError(f"budget {b} absent from the configuration grid")
    cells = []
    for (dataset, regime, metric) in sorted(samples):
        a, m, y = samples[(dataset, regime, metric)]
        for b in budgets:
            mask = a == b
            cell = BudgetCell(dataset=dataset, regime=regime, metric=metric,
                              budget=b, n=int(mask.sum()))
            if cell.n < 3:
                cell.note = f"insufficient generators (n={cell.n})"
            else:
                try:
                    cell.rho, cell.p = spearman(m[mask], y[mask])
                except ZeroVarianceError:
                    cell.note = "constant"
            cells.append(cell)
    return cells


def fixed_effects(a, m, y) -> FixedEffectsFit:
    """OLS of y on augmentation-level indicators plus the metric.

    The first (lowest) level is absorbed into the intercept; theta maps every
    level to its offset (reference level 0). The metric coefficient's
    two-sided t-test p-value is reported.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    m = np.asarray(m, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not (a.size == m.size == y.size):
        raise ValueError("length mismatch")
    levels = np.unique(a)
    if levels.size < 2:
        raise ValueError(f"need at least 2 augmentation levels, got {levels.size}")
    n = a.size
    n_params = levels.size + 1
    dof = n - n_params
    if dof < 1:
        raise ValueError(f"not enough samples: n={n}, parameters={n_params}")
    cols = [np.ones(n)]
    cols += [(a == lv).astype(np.float64) for lv in levels[1:]]
    cols.append(m)
    design = np.column_stack(cols)
    if np.linalg.matrix_rank(design) < n_params:
        raise CollinearityError(
            "rank-deficient design: metric collinear with augmentation level "
            "indicators")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    beta = float(coef[-1])
    se = float(np.sqrt(max(cov[-1, -1], 0.0)))
    if se == 0.0:
        p = 1.0 if beta == 0.0 else 0.0
    else:
        p = t_two_sided_p(beta / se, dof)
    theta = {int(levels[0]): 0.0}
    theta.update({int(lv): float(c) for lv, c in zip(levels[1:], coef[1:-1])})
    return FixedEffectsFit(theta=theta, beta_fe=beta, beta_se=se, p_fe=p,
                           alpha=float(coef[0]), n=n, dof=dof)


def fixed_effects_ci(fit: FixedEffectsFit, confidence: float = 0.95) -> tuple[float, float]:
    half = t_ppf(0.5 + confidence / 2.0, fit.dof) * fit.beta_se
    return fit.beta_fe - half, fit.beta_fe + half


@dataclass
class RobustnessRow:
    """Table row combining per-budget correlations with the fixed-effects fit."""

    dataset: str
    regime: str
    metric: str
    rho_by_budget: dict[int, float | None]
    rho_bar: float | None
    beta_fe: float | None
    p_fe: float | None
    notes: str


def robustness_table(metrics: MetricTable, runs: RunsTable,
                     budgets=DEFAULT_BUDGETS,
                     metric_names=None) -> list[RobustnessRow]:
    """Per-budget Spearman correlations plus the categorical augmentation
    fixed-effects coefficient, one row per (dataset, regime, metric)."""
    budgets = tuple(int(b) for b in budgets)
    cells = per_budget_correlations(metrics, runs, budgets)
    samples = paired_samples(metrics, runs)
    by_row: dict[tuple[str, str, str], dict[int, BudgetCell]] = {}
    for c in cells:
        by_row.setdefault((c.dataset, c.regime, c.metric), {})[c.budget] = c
    rows = []
    for rk in sorted(by_row):
        dataset, regime, metric = rk
        if metric_names is not None and metric not in metric_names:
            continue
        budget_cells = by_row[rk]
        rho_by_budget = {b: budget_cells[b].rho for b in budgets}
        defined = [r for r in rho_by_budget.values() if r is not None]
        notes = [f"{b}:{budget_cells[b].note}" for b in budgets if budget_cells[b].note]
        a, m, y = samples[rk]
        beta = p_fe = None
        try:
            fit = fixed_effects(a, m, y)
            beta, p_fe = fit.beta_fe, fit.p_fe
        except (ValueError, CollinearityError) as exc:
            notes.append(f"fe:{exc}")
        rows.append(RobustnessRow(
            dataset=dataset, regime=regime, metric=metric,
            rho_by_budget=rho_by_budget,
            rho_bar=float(np.mean(defined)) if defined else None,
            beta_fe=beta, p_fe=p_fe, notes="; ".join(notes)))
    return rows


def format_fe(beta: float, p: float) -> tuple[str, str]:
    """Publication-style formatting of a fixed-effects coefficient and p-value."""
    return f"{beta:+.3f}", ("<0.001" if p < 0.001 else f"{p:.3f}")
