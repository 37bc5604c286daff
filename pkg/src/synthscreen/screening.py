"""Decision-oriented screening: fixed-budget generator selection, the
best-vs-baseline summary and seed-robustness confidence intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import CorrCell, ZeroVarianceError
from .dataio import ConfigKey, MetricTable, RunsTable
from .distributions import t_ppf
from .embed_metrics import EMBED_METRIC_DIRECTIONS
from .object_metrics import OBJECT_METRIC_DIRECTIONS

DEFAULT_BUDGETS = (25, 50, 100)
SHORTLIST_RHO_THRESHOLD = 0.35
SHORTLIST_Q_THRESHOLD = 0.05


def metric_direction(name: str) -> str:
    """Direction for a table-level metric name (encoder suffix allowed)."""
    if name in OBJECT_METRIC_DIRECTIONS:
        return OBJECT_METRIC_DIRECTIONS[name]
    base = name
    for suffix in ("_inception", "_dino"):
        if name.endswith(suffix):
            base = name[: -len(suffix)]
            break
    if base in EMBED_METRIC_DIRECTIONS:
        return EMBED_METRIC_DIRECTIONS[base]
    raise KeyError(f"unknown metric name: {name!r}")


def kendall_tau(a_values, b_values) -> float:
    """Tie-corrected rank agreement (tau-b) between two value lists."""
    a = np.asarray(a_values, dtype=np.float64).reshape(-1)
    b = np.asarray(b_values, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise ValueError("need at least 2 items to rank")
    sa = np.sign(a[:, None] - a[None, :])
    sb = np.sign(b[:, None] - b[None, :])
    iu = np.triu_indices(n, k=1)
    concordance = float((sa[iu] * sb[iu]).sum())
    n0 = n * (n - 1) / 2.0
    ties_a = float((sa[iu] == 0).sum())
    ties_b = float((sb[iu] == 0).sum())
    denom = math.sqrt((n0 - ties_a) * (n0 - ties_b))
    if denom == 0.0:
        raise ZeroVarianceError("all-tied ranking")
    return concordance / denom


@dataclass(frozen=True)
class BudgetSlice:
    """Generator entries (metric value, mAP) at one fixed budget."""

    dataset: str
    regime: str
    budget: int
    entries: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        names = [e[0] for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate generator in budget slice")


@dataclass(frozen=True)
class ScreenResult:
    budget: int
    picked: str
    best: str
    regret: float
    top1_hit: bool
    tau: float | None
    metric_tie: bool
    best_tie: bool
    note: str = ""


@dataclass
class ScreeningSummary:
    dataset: str
    regime: str
    metric: str
    direction: str
    avg_tau: float | None
    top1: str
    avg_regret: float
    per_budget: tuple[ScreenResult, ...]
    winner: bool = False


def screen_budget(slice_: BudgetSlice, direction: str) -> ScreenResult:
    """Pick the metric-best generator at one budget and score the pick.

    Regret is the mAP gap to the best generator (0 is optimal). Top-1 counts a
    hit only when the pick equals the unique mAP argmax. Metric ties are
    broken by generator name and flagged.
    """
    if not slice_.entries:
        raise ValueError("empty budget slice")
    if direction not in ("lower_better", "higher_better"):
        raise ValueError(f"unknown direction: {direction!r}")
    sign = 1.0 if direction == "lower_better" else -1.0
    ranked = sorted(slice_.entries, key=lambda e: (sign * e[1], e[0]))
    picked_name, _, picked_map = ranked[0]
    metric_tie = len(slice_.entries) > 1 and ranked[0][1] == ranked[1][1]
    best_map = max(e[2] for e in slice_.entries)
    best_names = sorted(e[0] for e in slice_.entries if e[2] == best_map)
    best_tie = len(best_names) > 1
    regret = best_map - picked_map
    tau = None
    note = ""
    try:
        oriented = [-e[1] if direction == "lower_better" else e[1]
                    for e in slice_.entries]
        tau = kendall_tau(oriented, [e[2] for e in slice_.entries])
    except (ZeroVarianceError, ValueError) as exc:
        note = str(exc)
    return ScreenResult(budget=slice_.budget, picked=picked_name,
                        best=best_names[0], regret=regret,
                        top1_hit=(not best_tie) and picked_name == best_names[0],
                        tau=tau, metric_tie=metric_tie, best_tie=best_tie,
                        note=note)


def _grid_values(metrics: MetricTable, runs: RunsTable):
    y_by_key: dict[ConfigKey, list[float]] = {}
    for r in runs.records:
        if not r.key.is_baseline:
            y_by_key.setdefault(r.key, []).append(r.map5095)
    y_mean = {k: float(np.mean(v)) for k, v in y_by_key.items()}
    m_by_key = {(rec.key, rec.metric): rec.value for rec in metrics.records}
    return y_mean, m_by_key


def build_budget_slice(metrics: MetricTable, runs: RunsTable, dataset: str,
                       regime: str, metric: str, budget: int) -> BudgetSlice:
    y_mean, m_by_key = _grid_values(metrics, runs)
    entries = []
    for key, y in sorted(y_mean.items(), key=lambda kv: kv[0].generator):
        if key.dataset != dataset or key.regime != regime or key.aug_ratio != budget:
            continue
        m = m_by_key.get((key, metric))
        if m is not None and np.isfinite(m):
            entries.append((key.generator, float(m), y))
    return BudgetSlice(dataset=dataset, regime=regime, budget=budget,
                       entries=tuple(entries))


def screening_summary(metrics: MetricTable, runs: RunsTable,
                      shortlist: list[str],
                      budgets=DEFAULT_BUDGETS) -> list[ScreeningSummary]:
    """Average tau / Top-1 / regret per shortlisted metric and (dataset, regime).

    The winner flag marks the metric with the lowest average regret, ties
    broken by higher average tau then metric name.
    """
    if not shortlist:
        raise ValueError("empty shortlist")
    budgets = tuple(int(b) for b in budgets)
    y_mean, _ = _grid_values(metrics, runs)
    pairs = sorted({(k.dataset, k.regime) for k in y_mean})
    ratios_present = {k.aug_ratio for k in y_mean}
    for b in budgets:
        if b not in ratios_present:
            raise ValueError(f"budget {b} missing from runs")
    summaries: list[ScreeningSummary] = []
    for dataset, regime in pairs:
        group: list[ScreeningSummary] = []
        for metric in shortlist:
            direction = metric_direction(metric)
            results = []
            for b in budgets:
                s = build_budget_slice(metrics, runs, dataset, regime, metric, b)
                if len(s.entries) < 2:
                    continue
                results.append(screen_budget(s, direction))
            if not results:
                continue
            taus = [r.tau for r in results if r.tau is not None]
            group.append(ScreeningSummary(
                dataset=dataset, regime=regime, metric=metric,
                direction=direction,
                avg_tau=float(np.mean(taus)) if taus else None,
                top1=f"{sum(r.top1_hit for r in results)}/{len(budgets)}",
                avg_regret=float(np.mean([r.regret for r in results])),
                per_budget=tuple(results)))
        if group:
            def rank(s: ScreeningSummary):
                tau = s.avg_tau if s.avg_tau is not None else -math.inf
                return (s.avg_regret, -tau, s.metric)
            winner = min(group, key=rank)
            winner.winner = True
        summaries.extend(group)
    return summaries


def screening_shortlist(residual_cells: list[CorrCell],
                        q_threshold: float = SHORTLIST_Q_THRESHOLD,
                        rho_threshold: float = SHORTLIST_RHO_THRESHOLD) -> list[str]:
    """Shortlist rule tied to the residual heatmaps: keep metrics with any
    BH-FDR significant cell or any |rho| at or above the threshold."""
    strength: dict[str, float] = {}
    qualified: set[str] = set()
    for c in residual_cells:
        if c.rho is None:
            continue
        strength[c.metric] = max(strength.get(c.metric, 0.0), abs(c.rho))
        if (c.q is not None and c.q < q_threshold) or abs(c.rho) >= rho_threshold:
            qualified.add(c.metric)
    return sorted(qualified, key=lambda m: (-strength[m], m))


@dataclass(frozen=True)
class BaselineComparison:
    dataset: str
    regime: str
    baseline: float
    best: float
    delta: float
    delta_pct: float
    best_generator: str
    best_ratio: int

    @property
    def best_label(self) -> str:
        return f"{self.best_generator}@{self.best_ratio}%"


def best_vs_baseline(runs: RunsTable) -> list[BaselineComparison]:
    """Per (dataset, regime): real-only baseline vs best augmented run.

    mAP is averaged over seeds per configuration; best-augmented ties are
    broken by generator name then lower ratio.
    """
    by_key: dict[ConfigKey, list[float]] = {}
    for r in runs.records:
        by_key.setdefault(r.key, []).append(r.map5095)
    y = {k: float(np.mean(v)) for k, v in by_key.items()}
    pairs = sorted({(k.dataset, k.regime) for k in y})
    rows = []
    for dataset, regime in pairs:
        base = [v for k, v in y.items()
                if k.dataset == dataset and k.regime == regime and k.is_baseline]
        if not base:
            raise ValueError(f"missing baseline for {dataset}/{regime}")
        baseline = base[0]
        augmented = sorted(
            ((k, v) for k, v in y.items()
             if k.dataset == dataset and k.regime == regime and not k.is_baseline),
            key=lambda kv: (-kv[1], kv[0].generator, kv[0].aug_ratio))
        if not augmented:
            raise ValueError(f"no augmented runs for {dataset}/{regime}")
        best_key, best = augmented[0]
        delta = best - baseline
        rows.append(BaselineComparison(
            dataset=dataset, regime=regime, baseline=baseline, best=best,
            delta=delta, delta_pct=delta / baseline,
            best_generator=best_key.generator, best_ratio=best_key.aug_ratio))
    return rows


def format_delta(delta: float) -> str:
    return f"{delta:+.4f}"


def format_delta_pct(delta_pct: float) -> str:
    return f"{delta_pct:+.1%}"


@dataclass(frozen=True)
class SeedCI:
    delta_mean: float
    delta_std: float
    ci_low: float
    ci_high: float
    n: int

    @property
    def contains_zero(self) -> bool:
        return self.ci_low <= 0.0 <= self.ci_high


def seed_ci(baseline_maps, augmented_maps, confidence: float = 0.95) -> SeedCI:
    """Student-t confidence interval on the per-seed paired delta
    (augmented - baseline)."""
    base = np.asarray(baseline_maps, dtype=np.float64).reshape(-1)
    aug = np.asarray(augmented_maps, dtype=np.float64).reshape(-1)
    if base.size != aug.size:
        raise ValueError(f"length mismatch: {base.size} vs {aug.size}")
    n = base.size
    if n < 2:
        raise ValueError(f"need at least 2 seeds, got {n}")
    delta = aug - base
    mean = float(delta.mean())
    std = float(delta.std(ddof=1))
    half = t_ppf(0.5 + confidence / 2.0, n - 1) * std / math.sqrt(n)
    return SeedCI(delta_mean=mean, delta_std=std,
                  ci_low=mean - half, ci_high=mean + half, n=n)
