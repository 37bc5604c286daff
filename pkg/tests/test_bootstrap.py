import copy
import json

import numpy as np
import pytest

from synthscreen import bootstrap as bs
from synthscreen.dataio import (AnnotationSet, Box, ConfigKey, EmbeddingSet,
                                ImageLabels, make_fixture)

RATIOS = (10, 25, 50, 75, 100, 125, 150)


def _key(generator="gan_a", ratio=25, dataset="toy", regime="scratch"):
    return ConfigKey(dataset=dataset, regime=regime, generator=generator,
                     aug_ratio=ratio)


# --- plans -------------------------------------------------------------------

def test_make_plan_paper_constants():
    plan = bs.make_plan("TrafficSigns", real_pool_size=1798, n_match=179,
                        n_trials=5, master_seed=7)
    assert len(plan.real_subset_indices) == 5
    for subset in plan.real_subset_indices:
        assert subset.size == 179
        assert np.unique(subset).size == 179
        assert subset.min() >= 0 and subset.max() < 1798


def test_make_plan_deterministic():
    a = bs.make_plan("d", 100, 40, n_trials=5, master_seed=3)
    b = bs.make_plan("d", 100, 40, n_trials=5, master_seed=3)
    for ia, ib in zip(a.real_subset_indices, b.real_subset_indices):
        assert np.array_equal(ia, ib)
    c = bs.make_plan("d", 100, 40, n_trials=5, master_seed=4)
    assert not all(np.array_equal(x, y) for x, y in
                   zip(a.real_subset_indices, c.real_subset_indices))


def test_make_plan_exhaustive_draw():
    plan = bs.make_plan("d", 25, 25, n_trials=3, master_seed=0)
    for subset in plan.real_subset_indices:
        assert set(subset.tolist()) == set(range(25))


def test_make_plan_pool_too_small():
    with pytest.raises(ValueError, match="exceeds"):
        bs.make_plan("d", 10, 11)


def test_plan_serialization_round_trip():
    plan = bs.make_plan("d", 200, 50, n_trials=5, master_seed=11)
    restored = bs.BootstrapPlan.from_json(plan.to_json())
    assert restored.dataset == plan.dataset
    assert restored.n_match == plan.n_match
    for ia, ib in zip(plan.real_subset_indices, restored.real_subset_indices):
        assert np.array_equal(ia, ib)


# --- synthetic draws ------------------------------------------------------------

def test_draw_pool_equal_match_is_full_pool():
    plan = bs.make_plan("d", 1000, 179, n_trials=5, master_seed=1)
    for trial in range(5):
        assert np.array_equal(bs.draw_synthetic(plan, trial, 179, _key()),
                              np.arange(179))


def test_draw_large_pool_without_replacement():
    plan = bs.make_plan("d", 1000, 100, n_trials=5, master_seed=1)
    draws = [bs.draw_synthetic(plan, t, 200, _key()) for t in range(5)]
    for d in draws:
        assert d.size == 100 and np.unique(d).size == 100 and d.max() < 200
    assert len({tuple(sorted(d.tolist())) for d in draws}) > 1


def test_draw_small_pool_with_replacement():
    plan = bs.make_plan("d", 1000, 100, n_trials=5, master_seed=1)
    d = bs.draw_synthetic(plan, 0, 50, _key())
    assert d.size == 100 and d.max() < 50
    assert np.unique(d).size < 100  # pigeonhole: duplicates must appear


def test_draw_independent_across_configs():
    plan = bs.make_plan("d", 1000, 100, n_trials=5, master_seed=1)
    a = bs.draw_synthetic(plan, 0, 300, _key("gan_a", 25))
    b = bs.draw_synthetic(plan, 0, 300, _key("gan_b", 25))
    c = bs.draw_synthetic(plan, 0, 300, _key("gan_a", 50))
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_draw_invalid_trial():
    plan = bs.make_plan("d", 100, 10, n_trials=5, master_seed=1)
    with pytest.raises(ValueError, match="invalid trial"):
        bs.draw_synthetic(plan, 5, 50, _key())


def test_frozen_reference_untouched_by_draws():
    plan = bs.make_plan("d", 500, 60, n_trials=5, master_seed=2)
    before = copy.deepcopy([ix.tolist() for ix in plan.real_subset_indices])
    for gen in ("gan_a", "gan_b"):
        for ratio in RATIOS:
            for trial in range(5):
                bs.draw_synthetic(plan, trial, 90, _key(gen, ratio))
    after = [ix.tolist() for ix in plan.real_subset_indices]
    assert before == after


# --- run_config --------------------------------------------------------------------

def _labels(n, seed, image_prefix="img"):
    rng = np.random.default_rng(seed)
    images = []
    for i in range(n):
        boxes = tuple(
            Box(0, float(c[0]), float(c[1]), float(c[2]), float(c[3]))
            for c in zip(rng.uniform(0.3, 0.7, rng.integers(0, 4)),
                         rng.uniform(0.3, 0.7, 10),
                         rng.uniform(0.05, 0.3, 10),
                         rng.uniform(0.05, 0.3, 10)))
        images.append(ImageLabels(image_id=f"{image_prefix}_{i:04d}", boxes=boxes))
    return AnnotationSet(images=tuple(images))


def _pools(n_real=64, n_syn=64, dims=8, shift=0.0, seed=0):
    real, syn = make_fixture(seed, n_real, n_syn, dims, shift)
    return ({"inception": real}, _labels(n_real, seed + 1, "r"),
            {"inception": syn}, _labels(n_syn, seed + 2, "s"))


def test_run_config_identity_config():
    # Synthetic pool equals the real pool content: every distance vanishes and
    # the kNN ratios hit their perfect end.
    n = 64
    real_emb, real_lab, _, _ = _pools(n_real=n)
    plan = bs.make_plan("toy", n, n, n_trials=5, master_seed=0)
    records = bs.run_config(plan, real_emb, real_lab, real_emb, real_lab, _key())
    values = {r.metric: r.value for r in records}
    assert values["fid_inception"] <= 1e-6
    assert values["sw_approx_inception"] <= 1e-9
    assert values["kd_value_inception"] == 0.0
    assert values["precision_inception"] == 1.0
    assert values["recall_inception"] == 1.0
    assert values["coverage_inception"] == 1.0
    assert values["object_count_wass_mean"] == 0.0
    assert values["difficult_object_ratio_diff_mean"] == 0.0


def test_run_config_single_trial_zero_dispersion():
    real_emb, real_lab, syn_emb, syn_lab = _pools()
    plan = bs.make_plan("toy", 64, 32, n_trials=1, master_seed=0)
    records = bs.run_config(plan, real_emb, real_lab, syn_emb, syn_lab, _key())
    assert all(r.dispersion == 0.0 for r in records)
    assert all(r.trials == 1 for r in records)


def test_run_config_shift_ordering():
    plan = bs.make_plan("toy", 64, 32, n_trials=5, master_seed=0)
    fids = []
    for shift in (0.0, 2.0):
        real_emb, real_lab, syn_emb, syn_lab = _pools(shift=shift)
        records = bs.run_config(plan, real_emb, real_lab, syn_emb, syn_lab, _key())
        fids.append({r.metric: r.value for r in records}["fid_inception"])
    assert fids[0] < fids[1]


def test_run_config_deterministic():
    real_emb, real_lab, syn_emb, syn_lab = _pools()
    plan = bs.make_plan("toy", 64, 32, n_trials=3, master_seed=5)
    a = bs.run_config(plan, real_emb, real_lab, syn_emb, syn_lab, _key())
    b = bs.run_config(plan, real_emb, real_lab, syn_emb, syn_lab, _key())
    assert [(r.metric, r.value, r.dispersion) for r in a] == \
           [(r.metric, r.value, r.dispersion) for r in b]


def test_run_config_row_count():
    real_emb, real_lab, syn_emb, syn_lab = _pools()
    dino_real = {"dino": EmbeddingSet(data=real_emb["inception"].data,
                                      encoder="dino", set_id="r")}
    dino_syn = {"dino": EmbeddingSet(data=syn_emb["inception"].data,
                                     encoder="dino", set_id="s")}
    both_real = {**real_emb, **dino_real}
    both_syn = {**syn_emb, **dino_syn}
    plan = bs.make_plan("toy", 64, 32, n_trials=2, master_seed=0)
    records = bs.run_config(plan, both_real, real_lab, both_syn, syn_lab, _key())
    assert len(records) == 13 * 2 + 5


def test_run_config_encoder_mismatch():
    real_emb, real_lab, syn_emb, syn_lab = _pools()
    wrong = {"dino": syn_emb["inception"]}  # tag in sidecar says inception
    plan = bs.make_plan("toy", 64, 32, n_trials=2, master_seed=0)
    with pytest.raises(ValueError, match="encoder mismatch"):
        bs.run_config(plan, real_emb, real_lab, wrong, syn_lab, _key())


def test_run_config_pool_size_mismatch():
    real_emb, real_lab, syn_emb, syn_lab = _pools()
    plan = bs.make_plan("toy", 100, 32, n_trials=2, master_seed=0)
    with pytest.raises(ValueError, match="pool size"):
        bs.run_config(plan, real_emb, real_lab, syn_emb, syn_lab, _key())


# --- pool sizing -----------------------------------------------------------------

def test_ratio_pool_size_floor():
    assert bs.ratio_pool_size(10, 1798) == 179
    assert bs.ratio_pool_size(10, 1536) == 153
    assert bs.ratio_pool_size(150, 400) == 600
    assert bs.auto_match_size(1798) == 179


def test_manifest_requires_configurations(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"datasets": []}))
    with pytest.raises(ValueError, match="no configurations"):
        bs.load_manifest(path)
