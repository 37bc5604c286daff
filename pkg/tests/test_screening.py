import numpy as np
import pytest

from synthscreen import screening as sc
from synthscreen.analysis import CorrCell, ZeroVarianceError
from synthscreen.dataio import ConfigKey, MetricRecord, MetricTable, RunRecord, RunsTable

from oracles import kendall_oracle


# --- kendall tau -----------------------------------------------------------------

def test_kendall_identical_and_reversed():
    assert sc.kendall_tau([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
    assert sc.kendall_tau([1, 2, 3, 4], [40, 30, 20, 10]) == -1.0


def test_kendall_hand_case():
    assert sc.kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(2 / 3, abs=1e-12)


def test_kendall_matches_oracle_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        a = rng.integers(0, 4, size=n).astype(float)
        b = rng.integers(0, 4, size=n).astype(float)
        want = kendall_oracle(a.tolist(), b.tolist())
        if want is None:
            with pytest.raises(ZeroVarianceError):
                sc.kendall_tau(a, b)
        else:
            assert sc.kendall_tau(a, b) == pytest.approx(want, abs=1e-12)


def test_kendall_all_tied_undefined():
    with pytest.raises(ZeroVarianceError, match="all-tied"):
        sc.kendall_tau([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


# --- metric directions --------------------------------------------------------------

def test_metric_direction_lookup():
    assert sc.metric_direction("kd_value_inception") == "lower_better"
    assert sc.metric_direction("coverage_dino") == "higher_better"
    assert sc.metric_direction("difficult_object_ratio_diff_mean") == "lower_better"
    with pytest.raises(KeyError):
        sc.metric_direction("made_up_metric")


# --- screen_budget -------------------------------------------------------------------

def _slice(entries, budget=25):
    return sc.BudgetSlice(dataset="d", regime="scratch", budget=budget,
                          entries=tuple(entries))


def test_screen_budget_oracle_metric():
    entries = [("g1", 0.40, 0.40), ("g2", 0.48, 0.48), ("g3", 0.44, 0.44)]
    res = sc.screen_budget(_slice(entries), "higher_better")
    assert res.picked == "g2" and res.top1_hit
    assert res.regret == 0.0
    assert res.tau == 1.0


def test_screen_budget_anti_oracle():
    # Metric ranks generators exactly backwards.
    entries = [("g1", 0.1, 0.48), ("g2", 0.2, 0.44), ("g3", 0.3, 0.40)]
    res = sc.screen_budget(_slice(entries), "higher_better")
    assert res.picked == "g3"
    assert res.regret == pytest.approx(0.08)
    assert res.tau == -1.0
    assert not res.top1_hit


def test_screen_budget_lower_better_direction():
    entries = [("g1", 5.0, 0.45), ("g2", 2.0, 0.48), ("g3", 9.0, 0.40)]
    res = sc.screen_budget(_slice(entries), "lower_better")
    assert res.picked == "g2" and res.top1_hit and res.tau == 1.0


def test_screen_budget_metric_tie_flagged():
    entries = [("gb", 1.0, 0.40), ("ga", 1.0, 0.45)]
    res = sc.screen_budget(_slice(entries), "lower_better")
    assert res.picked == "ga"  # name order breaks the tie
    assert res.metric_tie


def test_screen_budget_best_tie_not_a_hit():
    entries = [("ga", 1.0, 0.45), ("gb", 2.0, 0.45)]
    res = sc.screen_budget(_slice(entries), "lower_better")
    assert res.best_tie and not res.top1_hit


def test_screen_budget_empty():
    with pytest.raises(ValueError, match="empty"):
        sc.screen_budget(_slice([]), "lower_better")


# --- screening summary over the grid ---------------------------------------------------

RATIOS = (10, 25, 50, 75, 100, 125, 150)
GENS = ("g1", "g2", "g3", "g4")


def _tables(metric_specs, y_fn):
    metric_records, run_records = [], []
    run_records.append(RunRecord(ConfigKey("d", "scratch", "baseline", 0), 0, 0.30))
    for gi, gen in enumerate(GENS):
        for ratio in RATIOS:
            key = ConfigKey("d", "scratch", gen, ratio)
            run_records.append(RunRecord(key, 0, y_fn(gi, ratio)))
            for name, fn in metric_specs.items():
                metric_records.append(MetricRecord(key, name, fn(gi, ratio), 0.0, 5))
    return MetricTable(tuple(metric_records)), RunsTable(tuple(run_records))


def _y(gi, ratio):
    return 0.3 + 0.0005 * ratio + 0.02 * gi


def test_screening_summary_oracle_metric_perfect():
    metrics, runs = _tables({"coverage_inception": _y}, _y)
    (summary,) = sc.screening_summary(metrics, runs, ["coverage_inception"])
    assert summary.winner
    assert summary.top1 == "3/3"
    assert summary.avg_regret == 0.0
    assert summary.avg_tau == 1.0
    assert f"{summary.avg_regret:.4f}" == "0.0000"


def test_screening_summary_anti_oracle():
    metrics, runs = _tables({"coverage_inception": lambda g, r: -_y(g, r)}, _y)
    (summary,) = sc.screening_summary(metrics, runs, ["coverage_inception"])
    assert summary.avg_tau == -1.0
    assert summary.top1 == "0/3"
    for res in summary.per_budget:
        best = _y(len(GENS) - 1, res.budget)
        worst = _y(0, res.budget)
        assert res.regret == pytest.approx(best - worst)


def test_screening_summary_oracle_beats_noise():
    noise = {(g, r): ((g * 31 + r) % 7) / 7.0 for g in range(4) for r in RATIOS}
    metrics, runs = _tables({
        "coverage_inception": _y,
        "fid_inception": lambda g, r: noise[(g, r)],
    }, _y)
    summaries = sc.screening_summary(metrics, runs,
                                     ["coverage_inception", "fid_inception"])
    by_name = {s.metric: s for s in summaries}
    assert by_name["coverage_inception"].winner
    assert not by_name["fid_inception"].winner
    assert by_name["coverage_inception"].avg_regret == 0.0


def test_screening_summary_monotone_transform_invariant():
    metrics, runs = _tables({"coverage_inception": _y}, _y)
    transformed, _ = _tables({"coverage_inception": lambda g, r: np.exp(3 * _y(g, r))}, _y)
    a = sc.screening_summary(metrics, runs, ["coverage_inception"])[0]
    b = sc.screening_summary(transformed, runs, ["coverage_inception"])[0]
    assert (a.avg_tau, a.top1, a.avg_regret) == (b.avg_tau, b.top1, b.avg_regret)


def test_screening_summary_missing_budget():
    metrics, runs = _tables({"coverage_inception": _y}, _y)
    with pytest.raises(ValueError, match="missing"):
        sc.screening_summary(metrics, runs, ["coverage_inception"], budgets=(33,))


def test_screening_summary_empty_shortlist():
    metrics, runs = _tables({"coverage_inception": _y}, _y)
    with pytest.raises(ValueError, match="empty shortlist"):
        sc.screening_summary(metrics, runs, [])


# --- shortlist rule ----------------------------------------------------------------------

def test_screening_shortlist_rule():
    def cell(metric, rho, q):
        c = CorrCell(dataset="d", regime="scratch", view="residual",
                     corr_type="spearman", metric=metric, n=42)
        c.rho, c.p, c.q = rho, 0.01, q
        return c

    cells = [cell("m_significant", 0.2, 0.01),   # q < 0.05
             cell("m_strong", 0.4, 0.30),        # |rho| >= 0.35
             cell("m_neither", 0.2, 0.30)]
    assert sc.screening_shortlist(cells) == ["m_strong", "m_significant"]


# --- best vs baseline ----------------------------------------------------------------------

def _runs_rows(rows):
    return RunsTable(tuple(
        RunRecord(ConfigKey(ds, rg, gen, ratio), seed, v)
        for ds, rg, gen, ratio, seed, v in rows))


def test_best_vs_baseline_published_arithmetic():
    runs = _runs_rows([
        ("Pedestrian", "scratch", "baseline", 0, 0, 0.4562),
        ("Pedestrian", "scratch", "DiffusionGAN", 75, 0, 0.4910),
        ("Pedestrian", "scratch", "DiT", 25, 0, 0.4700),
        ("PottedPlant", "scratch", "baseline", 0, 0, 0.1599),
        ("PottedPlant", "scratch", "DiffusionGAN", 100, 0, 0.2088),
    ])
    rows = {(r.dataset): r for r in sc.best_vs_baseline(runs)}
    ped = rows["Pedestrian"]
    assert sc.format_delta(ped.delta) == "+0.0348"
    assert sc.format_delta_pct(ped.delta_pct) == "+7.6%"
    assert ped.best_label == "DiffusionGAN@75%"
    plant = rows["PottedPlant"]
    assert sc.format_delta(plant.delta) == "+0.0489"
    assert sc.format_delta_pct(plant.delta_pct) == "+30.6%"


def test_best_vs_baseline_flat_regime():
    runs = _runs_rows([
        ("Traffic", "pretrained", "baseline", 0, 0, 0.9949),
        ("Traffic", "pretrained", "StyleGAN2-ADA", 25, 0, 0.9949),
        ("Traffic", "pretrained", "DiT", 50, 0, 0.9900),
    ])
    (row,) = sc.best_vs_baseline(runs)
    assert sc.format_delta(row.delta) == "+0.0000"
    assert sc.format_delta_pct(row.delta_pct) == "+0.0%"
    assert row.best_label == "StyleGAN2-ADA@25%"


def test_best_vs_baseline_delta_pct_machine_precision():
    runs = _runs_rows([
        ("d", "scratch", "baseline", 0, 0, 0.37),
        ("d", "scratch", "g", 50, 0, 0.41),
    ])
    (row,) = sc.best_vs_baseline(runs)
    assert row.delta_pct == (0.41 - 0.37) / 0.37


def test_best_vs_baseline_tie_breaks_by_name_then_ratio():
    rows = [
        ("d", "scratch", "baseline", 0, 0, 0.30),
        ("d", "scratch", "zeta", 25, 0, 0.40),
        ("d", "scratch", "alpha", 75, 0, 0.40),
        ("d", "scratch", "alpha", 50, 0, 0.40),
    ]
    for perm_seed in range(4):
        rng = np.random.default_rng(perm_seed)
        shuffled = [rows[i] for i in rng.permutation(len(rows))]
        (row,) = sc.best_vs_baseline(_runs_rows(shuffled))
        assert row.best_label == "alpha@50%"


def test_best_vs_baseline_missing_baseline():
    runs = _runs_rows([("d", "scratch", "g", 50, 0, 0.41)])
    with pytest.raises(ValueError, match="missing baseline"):
        sc.best_vs_baseline(runs)


# --- seed confidence intervals -----------------------------------------------------------------

def test_seed_ci_hand_case():
    base = [0.93, 0.93, 0.93]
    aug = [0.93 + d for d in (0.0122, 0.0131, 0.0139)]
    ci = sc.seed_ci(base, aug)
    assert round(ci.delta_mean, 4) == 0.0131
    assert round(ci.delta_std, 4) == 0.0009
    assert round(ci.ci_low, 4) == 0.0110
    assert round(ci.ci_high, 4) == 0.0152
    assert not ci.contains_zero


def test_seed_ci_identical_lists():
    ci = sc.seed_ci([0.5, 0.6, 0.7], [0.5, 0.6, 0.7])
    assert (ci.delta_mean, ci.delta_std, ci.ci_low, ci.ci_high) == (0, 0, 0, 0)
    assert ci.contains_zero


def test_seed_ci_t_quantile_df2():
    from synthscreen.distributions import t_ppf
    assert round(t_ppf(0.975, 2), 3) == 4.303
    assert t_ppf(0.975, 2) == pytest.approx(4.302652729696, abs=1e-9)


def test_seed_ci_scaling():
    base = [0.0, 0.0, 0.0]
    deltas = [0.01, 0.02, 0.015]
    one = sc.seed_ci(base, deltas)
    two = sc.seed_ci(base, [2 * d for d in deltas])
    assert two.delta_mean == pytest.approx(2 * one.delta_mean, rel=1e-12)
    assert two.delta_std == pytest.approx(2 * one.delta_std, rel=1e-12)
    assert two.ci_low == pytest.approx(2 * one.ci_low, rel=1e-12)
    assert two.ci_high == pytest.approx(2 * one.ci_high, rel=1e-12)


def test_seed_ci_width_shrinks_with_sqrt_n():
    deltas3 = [0.01, 0.02, 0.015]
    ci3 = sc.seed_ci([0.0] * 3, deltas3)
    width3 = ci3.ci_high - ci3.ci_low
    from synthscreen.distributions import t_ppf
    want = 2 * t_ppf(0.975, 2) * ci3.delta_std / np.sqrt(3)
    assert width3 == pytest.approx(want, rel=1e-12)


def test_seed_ci_errors():
    with pytest.raises(ValueError, match="length mismatch"):
        sc.seed_ci([0.1, 0.2], [0.1])
    with pytest.raises(ValueError, match="at least 2"):
        sc.seed_ci([0.1], [0.2])
