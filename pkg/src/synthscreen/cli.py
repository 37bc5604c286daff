"""Command-line entry point wiring the pipeline.

Subcommands: metrics, stats, correlate, robustness, screen, seedci, report.
All outputs are deterministic for identical inputs and seed, independent of
the thread count.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import analysis, bootstrap, dataio, screening
from .object_metrics import regime_stats

log = logging.getLogger("synthscreen")

THREADS_ENV = "SYNTHSCREEN_THREADS"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # plain-float repr regardless of numpy scalars
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _parse_budgets(text: str) -> tuple[int, ...]:
    return tuple(int(b) for b in text.split(","))


# --- metrics -------------------------------------------------------------

def cmd_metrics(args) -> int:
    _require_files(args.manifest)
    specs = bootstrap.load_manifest(args.manifest)
    seed = args.plan_seed if args.plan_seed is not None else args.seed
    match_size = args.match_size if args.match_size == "auto" else int(args.match_size)
    table, errors = bootstrap.compute_manifest_metrics(
        specs, master_seed=seed, trials=args.trials, match_size=match_size,
        threads=args.threads, k_nn=args.knn_k)
    out = Path(args.out)
    dataio.write_metrics(table, out)
    log.info("wrote %d metric rows to %s", len(table), out)
    if errors:
        report = Path(str(out) + ".errors.txt")
        report.write_text(
            "".join(f"{ds}/{gen}@{ratio}: {msg}\n" for ds, gen, ratio, msg in errors),
            encoding="utf-8")
        for ds, gen, ratio, msg in errors:
            log.error("config failed: %s/%s@%s: %s", ds, gen, ratio, msg)
        return 1
    return 0


# --- stats ---------------------------------------------------------------

STATS_HEADER = ("dataset", "n_images", "inst_per_img_mean", "inst_per_img_std",
                "pct_small", "mean_area", "mean_area_std", "mean_iou",
                "mean_iou_std")


def cmd_stats(args) -> int:
    targets = []
    if args.manifest:
        _require_files(args.manifest)
        for ds in bootstrap.load_manifest(args.manifest):
            targets.append((ds.name, ds.real.labels_dir, ds.real.index))
    else:
        if not args.labels_dir or not args.index:
            raise ValueError("stats needs either --manifest or --labels-dir and --index")
        _require_files(args.index)
        targets.append((args.dataset, Path(args.labels_dir), Path(args.index)))
    rows = []
    for name, labels_dir, index in targets:
        rs = regime_stats(dataio.load_labels(labels_dir, index))
        rows.append([name, rs.n_images, rs.inst_mean, rs.inst_std, rs.pct_small,
                     rs.area_mean, rs.area_std, rs.iou_mean, rs.iou_std])
        print(f"{name}: inst/img {rs.inst_mean:.2f}+-{rs.inst_std:.2f}  "
              f"small {rs.pct_small:.2f}%  area {rs.area_mean:.3f}+-{rs.area_std:.3f}  "
              f"iou {rs.iou_mean:.3f}+-{rs.iou_std:.3f}")
    if args.out:
        _write_csv(Path(args.out), STATS_HEADER, rows)
    return 0


# --- correlate -----------------------------------------------------------

HEATMAP_HEADER = ("dataset", "regime", "view", "corr_type", "metric", "rho",
                  "p", "q", "n", "note", "significant")


def _heatmap_rows(cells):
    for c in cells:
        yield [c.dataset, c.regime, c.view, c.corr_type, c.metric, c.rho, c.p,
               c.q, c.n, c.note, int(c.significant)]


def _correlation_cells(metrics_table, runs_table, view, corr_type):
    cells = analysis.correlation_matrix(metrics_table, runs_table, view, corr_type)
    analysis.apply_fdr(cells)
    return cells


def cmd_correlate(args) -> int:
    _require_files(args.metrics, args.runs)
    metrics_table = dataio.load_metrics(args.metrics)
    runs_table = dataio.load_runs(args.runs)
    cells = _correlation_cells(metrics_table, runs_table, args.view, args.corr)
    _write_csv(Path(args.out), HEATMAP_HEADER, _heatmap_rows(cells))
    log.info("wrote %d heatmap cells to %s", len(cells), args.out)
    return 0


# --- robustness ----------------------------------------------------------

def _robustness_rows(rows, budgets):
    for r in rows:
        out = [r.dataset, r.regime, r.metric]
        out += [r.rho_by_budget[b] for b in budgets]
        out += [r.rho_bar, r.beta_fe, r.p_fe, r.notes]
        yield out


def cmd_robustness(args) -> int:
    _require_files(args.metrics, args.runs)
    metrics_table = dataio.load_metrics(args.metrics)
    runs_table = dataio.load_runs(args.runs)
    budgets = _parse_budgets(args.budgets)
    rows = analysis.robustness_table(metrics_table, runs_table, budgets)
    header = ["dataset", "regime", "metric"]
    header += [f"rho_{b}" for b in budgets]
    header += ["rho_bar", "beta_fe", "p_fe", "notes"]
    _write_csv(Path(args.out), header, _robustness_rows(rows, budgets))
    log.info("wrote %d robustness rows to %s", len(rows), args.out)
    return 0


# --- screen --------------------------------------------------------------

def _resolve_shortlist(arg: str, metrics_table, runs_table) -> list[str]:
    if arg == "auto":
        cells = _correlation_cells(metrics_table, runs_table, "residual", "spearman")
        shortlist = screening.screening_shortlist(cells)
        if not shortlist:
            log.warning("auto shortlist empty; falling back to key-metric ranking")
            shortlist = analysis.key_metric_shortlist(cells)
        return shortlist
    _require_files(arg)
    names = [line.strip() for line in Path(arg).read_text(encoding="utf-8").splitlines()
             if line.strip()]
    if not names:
        raise ValueError(f"shortlist file is empty: {arg}")
    return names


def _screening_rows(summaries, budgets):
    for s in summaries:
        row = [s.dataset, s.regime, s.metric, s.direction, s.avg_tau, s.top1,
               f"{s.avg_regret:.4f}", int(s.winner)]
        by_budget = {r.budget: r for r in s.per_budget}
        for b in budgets:
            r = by_budget.get(b)
            row += [r.tau if r else None, r.picked if r else None,
                    r.regret if r else None, int(r.top1_hit) if r else None]
        yield row


def cmd_screen(args) -> int:
    _require_files(args.metrics, args.runs)
    metrics_table = dataio.load_metrics(args.metrics)
    runs_table = dataio.load_runs(args.runs)
    budgets = _parse_budgets(args.budgets)
    shortlist = _resolve_shortlist(args.shortlist, metrics_table, runs_table)
    summaries = screening.screening_summary(metrics_table, runs_table,
                                            shortlist, budgets)
    header = ["dataset", "regime", "metric", "direction", "avg_tau", "top1",
              "avg_regret", "winner"]
    for b in budgets:
        header += [f"tau_{b}", f"picked_{b}", f"regret_{b}", f"top1_{b}"]
    _write_csv(Path(args.out), header, _screening_rows(summaries, budgets))
    log.info("wrote %d screening rows to %s", len(summaries), args.out)
    return 0


# --- seedci --------------------------------------------------------------

def _parse_pair(text: str):
    # dataset:regime:baseline-vs-generator@ratio
    try:
        dataset, regime, tail = text.split(":")
        left, right = tail.split("-vs-")
        generator, ratio = right.split("@")
        if left != "baseline":
            raise ValueError("pair must compare against the baseline")
        return dataset, regime, generator, int(ratio.rstrip("%"))
    except ValueError as exc:
        raise ValueError(
            f"bad --pair {text!r}; expected dataset:regime:baseline-vs-generator@ratio"
        ) from exc


def cmd_seedci(args) -> int:
    _require_files(args.runs)
    runs_table = dataio.load_runs(args.runs)
    dataset, regime, generator, ratio = _parse_pair(args.pair)
    base_key = dataio.ConfigKey(dataset=dataset, regime=regime,
                                generator=dataio.BASELINE_GENERATOR, aug_ratio=0)
    aug_key = dataio.ConfigKey(dataset=dataset, regime=regime,
                               generator=generator, aug_ratio=ratio)
    base = {r.seed: r.map5095 for r in runs_table.records if r.key == base_key}
    aug = {r.seed: r.map5095 for r in runs_table.records if r.key == aug_key}
    seeds = sorted(set(base) & set(aug))
    if len(seeds) < 2:
        raise ValueError(f"need at least 2 common seeds, found {len(seeds)}")
    ci = screening.seed_ci([base[s] for s in seeds], [aug[s] for s in seeds])
    flag = "  [not separable from seed variation]" if ci.contains_zero else ""
    print(f"{dataset}/{regime} {generator}@{ratio}% vs baseline over "
          f"{ci.n} seeds: delta {ci.delta_mean:+.4f}+-{ci.delta_std:.4f}, "
          f"95% CI [{ci.ci_low:.4f}, {ci.ci_high:.4f}]{flag}")
    if args.out:
        _write_csv(Path(args.out),
                   ("dataset", "regime", "generator", "aug_ratio", "n_seeds",
                    "delta_mean", "delta_std", "ci_low", "ci_high", "contains_zero"),
                   [[dataset, regime, generator, ratio, ci.n, ci.delta_mean,
                     ci.delta_std, ci.ci_low, ci.ci_high, int(ci.contains_zero)]])
    return 0


# --- report --------------------------------------------------------------

BASELINE_HEADER = ("dataset", "regime", "baseline", "best", "delta",
                   "delta_pct", "best_config")


def cmd_report(args) -> int:
    _require_files(args.metrics, args.runs)
    if args.manifest:
        _require_files(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_table = dataio.load_metrics(args.metrics)
    runs_table = dataio.load_runs(args.runs)
    budgets = _parse_budgets(args.budgets)
    outputs: dict[str, str] = {}
    warnings: list[str] = []

    # Best-vs-baseline summary.
    try:
        comparisons = screening.best_vs_baseline(runs_table)
        rows = [[c.dataset, c.regime, c.baseline, c.best,
                 screening.format_delta(c.delta),
                 screening.format_delta_pct(c.delta_pct), c.best_label]
                for c in comparisons]
        _write_csv(out_dir / "best_vs_baseline.csv", BASELINE_HEADER, rows)
        outputs["best_vs_baseline"] = "best_vs_baseline.csv"
    except ValueError as exc:
        warnings.append(f"best_vs_baseline skipped: {exc}")
        log.warning("best_vs_baseline skipped: %s", exc)

    # Regime statistics need the label sets from the manifest.
    if args.manifest:
        specs = bootstrap.load_manifest(args.manifest)
        rows = []
        for ds in specs:
            rs = regime_stats(dataio.load_labels(ds.real.labels_dir, ds.real.index))
            rows.append([ds.name, rs.n_images, rs.inst_mean, rs.inst_std,
                         rs.pct_small, rs.area_mean, rs.area_std, rs.iou_mean,
                         rs.iou_std])
        _write_csv(out_dir / "regime_stats.csv", STATS_HEADER, rows)
        outputs["regime_stats"] = "regime_stats.csv"
    else:
        warnings.append("regime_stats skipped: no manifest supplied")

    # Raw and residual heatmaps, both correlation types.
    residual_spearman_cells = None
    for view in analysis.VIEWS:
        for corr_type in analysis.CORR_TYPES:
            cells = _correlation_cells(metrics_table, runs_table, view, corr_type)
            name = f"heatmap_{view}_{corr_type}.csv"
            _write_csv(out_dir / name, HEATMAP_HEADER, _heatmap_rows(cells))
            outputs[f"heatmap_{view}_{corr_type}"] = name
            if view == "residual" and corr_type == "spearman":
                residual_spearman_cells = cells

    # Key-metric shortlist from the residual Spearman matrix.
    shortlist = analysis.key_metric_shortlist(residual_spearman_cells,
                                              k=args.shortlist_size)
    (out_dir / "shortlist.txt").write_text(
        "".join(m + "\n" for m in shortlist), encoding="utf-8")
    outputs["shortlist"] = "shortlist.txt"

    # Screening shortlist drives the robustness and screening tables.
    screen_list = screening.screening_shortlist(residual_spearman_cells)
    if not screen_list:
        warnings.append("screening shortlist empty; using key-metric shortlist")
        screen_list = shortlist

    rob_rows = analysis.robustness_table(metrics_table, runs_table, budgets,
                                         metric_names=set(screen_list))
    header = ["dataset", "regime", "metric"]
    header += [f"rho_{b}" for b in budgets]
    header += ["rho_bar", "beta_fe", "p_fe", "notes"]
    _write_csv(out_dir / "robustness.csv", header, _robustness_rows(rob_rows, budgets))
    outputs["robustness"] = "robustness.csv"

    summaries = screening.screening_summary(metrics_table, runs_table,
                                            screen_list, budgets)
    header = ["dataset", "regime", "metric", "direction", "avg_tau", "top1",
              "avg_regret", "winner"]
    for b in budgets:
        header += [f"tau_{b}", f"picked_{b}", f"regret_{b}", f"top1_{b}"]
    _write_csv(out_dir / "screening.csv", header, _screening_rows(summaries, budgets))
    outputs["screening"] = "screening.csv"

    index = {"outputs": outputs, "warnings": warnings,
             "significance_threshold": analysis.SIGNIFICANCE_Q,
             "budgets": list(budgets)}
    (out_dir / "index.json").write_text(
        json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("report bundle written to %s", out_dir)
    return 0


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthscreen",
        description="Pre-training synthetic-dataset metrics and screening analysis")
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default: {THREADS_ENV} or cpu count)")

    p = sub.add_parser("metrics", help="compute the bootstrap metric table")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--plan-seed", type=int, default=None,
                   help="bootstrap plan seed (defaults to --seed)")
    p.add_argument("--trials", type=int, default=bootstrap.DEFAULT_TRIALS)
    p.add_argument("--match-size", default="auto",
                   help="matched subset size N, or 'auto' for 10%% of the real train size")
    p.add_argument("--knn-k", type=int, default=3,
                   help="neighborhood size for precision/recall and density/coverage")
    p.add_argument("--out", default="metrics.csv")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("stats", help="regime statistics of a label set")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--labels-dir")
    p.add_argument("--index")
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("correlate", help="metric-mAP correlation heatmap data")
    common(p)
    p.add_argument("--metrics", required=True)
    p.add_argument("--runs", required=True)
    p.add_argument("--view", choices=list(analysis.VIEWS), default="residual")
    p.add_argument("--corr", choices=list(analysis.CORR_TYPES), default="spearman")
    p.add_argument("--out", default="heatmap.csv")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("robustness",
                       help="per-budget correlations and fixed-effects model")
    common(p)
    p.add_argument("--metrics", required=True)
    p.add_argument("--runs", required=True)
    p.add_argument("--budgets", default="25,50,100")
    p.add_argument("--out", default="robustness.csv")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("screen", help="fixed-budget generator screening")
    common(p)
    p.add_argument("--metrics", required=True)
    p.add_argument("--runs", required=True)
    p.add_argument("--shortlist", default="auto",
                   help="'auto' or a file with one metric name per line")
    p.add_argument("--budgets", default="25,50,100")
    p.add_argument("--out", default="screening.csv")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("seedci", help="seed-robustness confidence interval")
    common(p)
    p.add_argument("--runs", required=True)
    p.add_argument("--pair", required=True,
                   help="dataset:regime:baseline-vs-generator@ratio")
    p.add_argument("--out")
    p.set_defaults(func=cmd_seedci)

    p = sub.add_parser("report", help="publication-shaped output bundle")
    common(p)
    p.add_argument("--metrics", required=True)
    p.add_argument("--runs", required=True)
    p.add_argument("--manifest", help="needed for the regime-stats section")
    p.add_argument("--budgets", default="25,50,100")
    p.add_argument("--shortlist-size", type=int, default=15)
    p.add_argument("--out", default="report")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is None:
        args.threads = _default_threads()
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
