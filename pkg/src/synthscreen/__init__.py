"""Pre-training quality metrics and screening analysis for synthetic
detection datasets."""

from .dataio import (AnnotationSet, Box, ConfigKey, EmbeddingSet, ImageLabels,
                     MetricRecord, MetricTable, RunRecord, RunsTable,
                     load_embeddings, load_labels, load_metrics, load_runs,
                     make_fixture, write_embeddings, write_labels,
                     write_metrics, write_runs)
from .embed_metrics import (EMBED_METRIC_DIRECTIONS, GaussianSummary,
                            MetricValue, authpct, compute_embed_metrics,
                            ct_scores, density_coverage, fls_scores,
                            frechet_distance, frechet_distance_inf,
                            frechet_from_summaries, gaussian_summary,
                            kernel_distance, mann_whitney_u_z,
                            precision_recall, sliced_wasserstein)
from .object_metrics import (OBJECT_METRIC_DIRECTIONS, ImageStats, RegimeStats,
                             image_stats, jsd_1d, object_centric_metrics,
                             regime_stats, wasserstein_1d)
from .bootstrap import (BootstrapPlan, auto_match_size, compute_manifest_metrics,
                        draw_synthetic, load_manifest, make_plan,
                        ratio_pool_size, run_config)
from .analysis import (CollinearityError, CorrCell, FixedEffectsFit,
                       ZeroVarianceError, apply_fdr, bh_fdr,
                       correlation_matrix, fixed_effects, key_metric_shortlist,
                       pearson, per_budget_correlations, residualize,
                       robustness_table, spearman)
from .screening import (BaselineComparison, BudgetSlice, ScreeningSummary,
                        SeedCI, best_vs_baseline, kendall_tau,
                        metric_direction, screen_budget, screening_shortlist,
                        screening_summary, seed_ci)

__version__ = "0.1.0"
