"""Matched-size bootstrap protocol.

Real reference subsets are drawn once per dataset (frozen, reused for every
generator, ratio and encoder); each trial pairs a frozen real subset with a
size-matched synthetic draw. Per-trial randomness is derived by hashing
(master_seed, dataset, generator, aug_ratio, trial) into a counter-based
Philox stream, so extending the configuration grid never perturbs existing
draws.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import (AnnotationSet, ConfigKey, EmbeddingSet, MetricRecord,
                     MetricTable, REGIMES, load_embeddings, load_labels)
from .embed_metrics import SEEDED_OPS, compute_embed_metrics
from .object_metrics import object_centric_metrics

DEFAULT_TRIALS = 5


def _stream(*parts) -> np.random.Generator:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _op_seed(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True, eq=False)
class BootstrapPlan:
    """Frozen real reference subsets for one dataset."""

    dataset: str
    n_match: int
    n_trials: int
    master_seed: int
    real_pool_size: int
    real_subset_indices: tuple[np.ndarray, ...]

    def to_json(self) -> str:
        return json.dumps({
            "dataset": self.dataset, "n_match": self.n_match,
            "n_trials": self.n_trials, "master_seed": self.master_seed,
            "real_pool_size": self.real_pool_size,
            "real_subset_indices": [idx.tolist() for idx in self.real_subset_indices],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BootstrapPlan":
        obj = json.loads(text)
        return cls(dataset=obj["dataset"], n_match=int(obj["n_match"]),
                   n_trials=int(obj["n_trials"]), master_seed=int(obj["master_seed"]),
                   real_pool_size=int(obj["real_pool_size"]),
                   real_subset_indices=tuple(np.asarray(ix, dtype=np.int64)
                                             for ix in obj["real_subset_indices"]))


def make_plan(dataset: str, real_pool_size: int, n_match: int,
              n_trials: int = DEFAULT_TRIALS, master_seed: int = 0) -> BootstrapPlan:
    """Draw the frozen real subsets: n_trials subsets of n_match distinct
    indices, uniform without replacement, deterministic in master_seed."""
    if n_match > real_pool_size:
        raise ValueError(f"n_match={n_match} exceeds real pool size {real_pool_size}")
    if n_match < 1 or n_trials < 1:
        raise ValueError("n_match and n_trials must be >= 1")
    # Subsets are kept in sorted index order: the draw is a set, and a
    # canonical order keeps every downstream pairing deterministic.
    subsets = tuple(
        np.sort(_stream(master_seed, dataset, "real-subset", b)
                .choice(real_pool_size, size=n_match, replace=False)).astype(np.int64)
        for b in range(n_trials))
    return BootstrapPlan(dataset=dataset, n_match=n_match, n_trials=n_trials,
                         master_seed=master_seed, real_pool_size=real_pool_size,
                         real_subset_indices=subsets)


def draw_synthetic(plan: BootstrapPlan, trial: int, syn_pool_size: int,
                   key: ConfigKey | None = None) -> np.ndarray:
    """Size-matched synthetic indices for one trial.

    Without replacement when the pool is at least n_match; with replacement
    otherwise. When the pool size equals n_match exactly, the draw is the full
    pool, identical across trials. The stream is keyed by the configuration so
    different generators/ratios get independent draws.
    """
    if not (0 <= trial < plan.n_trials):
        raise ValueError(f"invalid trial {trial} (plan has {plan.n_trials})")
    if syn_pool_size < 1:
        raise ValueError("synthetic pool must be non-empty")
    n = plan.n_match
    if syn_pool_size == n:
        return np.arange(n, dtype=np.int64)
    generator = key.generator if key is not None else ""
    aug_ratio = key.aug_ratio if key is not None else ""
    rng = _stream(plan.master_seed, plan.dataset, generator, aug_ratio,
                  "syn-draw", trial)
    replace = syn_pool_size < n
    return np.sort(rng.choice(syn_pool_size, size=n, replace=replace)).astype(np.int64)


def _subset_labels(labels: AnnotationSet, idx: np.ndarray) -> AnnotationSet:
    return AnnotationSet(images=tuple(labels.images[int(i)] for i in idx))


def run_config(plan: BootstrapPlan, real_embeddings: dict[str, EmbeddingSet],
               real_labels: AnnotationSet, syn_embeddings: dict[str, EmbeddingSet],
               syn_labels: AnnotationSet, key: ConfigKey,
               k_nn: int = 3) -> list[MetricRecord]:
    """Evaluate every metric for one configuration and aggregate over trials.

    Returns one record per metric with the mean and sample standard deviation
    over the plan's trials. Embedding metric names are suffixed with the
    encoder tag; object-centric metrics use the same index subsets.
    """
    if set(real_embeddings) != set(syn_embeddings):
        raise ValueError(f"encoder mismatch: real {sorted(real_embeddings)} "
                         f"vs synthetic {sorted(syn_embeddings)}")
    if not real_embeddings:
        raise ValueError("no encoders supplied")
    syn_pool = len(syn_labels)
    for enc in real_embeddings:
        for tag, es in (("real", real_embeddings[enc]), ("synthetic", syn_embeddings[enc])):
            if es.encoder != enc:
                raise ValueError(f"encoder mismatch between sidecar and request: "
                                 f"{tag} file says {es.encoder!r}, requested {enc!r}")
        if real_embeddings[enc].rows != plan.real_pool_size:
            raise ValueError(
                f"real embedding rows {real_embeddings[enc].rows} != declared "
                f"pool size {plan.real_pool_size} ({enc})")
        if syn_embeddings[enc].rows != syn_pool:
            raise ValueError(
                f"synthetic embedding rows {syn_embeddings[enc].rows} != label "
                f"count {syn_pool} ({enc})")
    if len(real_labels) != plan.real_pool_size:
        raise ValueError(f"real label count {len(real_labels)} != declared "
                         f"pool size {plan.real_pool_size}")

    per_metric: dict[str, list[float]] = {}
    directions: dict[str, str] = {}
    for b in range(plan.n_trials):
        r_idx = plan.real_subset_indices[b]
        s_idx = draw_synthetic(plan, b, syn_pool, key)
        seeds = {op: _op_seed(plan.master_seed, plan.dataset, key.generator,
                              key.aug_ratio, b, op) for op in SEEDED_OPS}
        for enc in sorted(real_embeddings):
            r = real_embeddings[enc].data[r_idx]
            s = syn_embeddings[enc].data[s_idx]
            for mv in compute_embed_metrics(r, s, rng_seeds=seeds, k=k_nn):
                name = f"{mv.name}_{enc}"
                per_metric.setdefault(name, []).append(mv.value)
                directions[name] = mv.direction
        r_lab = _subset_labels(real_labels, r_idx)
        s_lab = _subset_labels(syn_labels, s_idx)
        for mv in object_centric_metrics(r_lab, s_lab):
            per_metric.setdefault(mv.name, []).append(mv.value)
            directions[mv.name] = mv.direction

    records = []
    for name, vals in per_metric.items():
        arr = np.asarray(vals, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        records.append(MetricRecord(key=key, metric=name, value=float(arr.mean()),
                                    dispersion=std, trials=plan.n_trials))
    return records


# --- manifest -----------------------------------------------------------

@dataclass(frozen=True)
class PoolSpec:
    embeddings: dict[str, Path]
    labels_dir: Path
    index: Path
    pool_size: int


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    pool: PoolSpec


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    train_size: int
    regimes: tuple[str, ...]
    ratios: tuple[int, ...]
    real: PoolSpec
    generators: tuple[GeneratorSpec, ...]


def ratio_pool_size(ratio: int, train_size: int) -> int:
    """Synthetic pool size at an augmentation ratio: the ratio share of the
    real training split, floored so the +10% pool equals the matched size."""
    return (ratio * train_size) // 100


def auto_match_size(train_size: int) -> int:
    return ratio_pool_size(10, train_size)


def _parse_pool(obj: dict, base: Path, where: str) -> PoolSpec:
    try:
        embeddings = {enc: base / p for enc, p in sorted(obj["embeddings"].items())}
        return PoolSpec(embeddings=embeddings,
                        labels_dir=base / obj["labels_dir"],
                        index=base / obj["index"],
                        pool_size=int(obj["pool_size"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad manifest pool entry at {where}: {exc}") from exc


def load_manifest(path: str | Path) -> list[DatasetSpec]:
    path = Path(path)
    base = path.parent
    obj = json.loads(path.read_text(encoding="utf-8"))
    datasets = obj.get("datasets", [])
    specs = []
    for d in datasets:
        try:
            name = d["name"]
            train_size = int(d["train_size"])
            ratios = tuple(sorted(int(r) for r in d["ratios"]))
            regimes = tuple(d.get("regimes", list(REGIMES)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad manifest dataset entry: {exc}") from exc
        for rg in regimes:
            if rg not in REGIMES:
                raise ValueError(f"unknown regime tag in manifest: {rg!r}")
        if any(r <= 0 for r in ratios):
            raise ValueError(f"ratios must be positive, got {ratios}")
        real = _parse_pool(d["real"], base, f"{name}/real")
        gens = tuple(GeneratorSpec(name=g["name"],
                                   pool=_parse_pool(g, base, f"{name}/{g['name']}"))
                     for g in d.get("generators", []))
        specs.append(DatasetSpec(name=name, train_size=train_size, regimes=regimes,
                                 ratios=ratios, real=real, generators=gens))
    if not specs or not any(ds.generators and ds.ratios for ds in specs):
        raise ValueError("no configurations in manifest")
    return specs


def _load_pool(pool: PoolSpec, expect_encoders=None):
    embeddings = {enc: load_embeddings(p) for enc, p in pool.embeddings.items()}
    if expect_encoders is not None and set(embeddings) != set(expect_encoders):
        raise ValueError(f"encoder set {sorted(embeddings)} does not match "
                         f"real pool encoders {sorted(expect_encoders)}")
    labels = load_labels(pool.labels_dir, pool.index)
    for enc, es in embeddings.items():
        if es.rows != pool.pool_size:
            raise ValueError(f"embedding rows {es.rows} != declared pool size "
                             f"{pool.pool_size} ({enc})")
    if len(labels) != pool.pool_size:
        raise ValueError(f"label count {len(labels)} != declared pool size "
                         f"{pool.pool_size}")
    return embeddings, labels


def _prefix_pool(embeddings: dict[str, EmbeddingSet], labels: AnnotationSet,
                 size: int, tag: str):
    sliced = {enc: EmbeddingSet(data=es.data[:size], encoder=es.encoder,
                                set_id=f"{es.set_id}{tag}")
              for enc, es in embeddings.items()}
    return sliced, AnnotationSet(images=labels.images[:size])


def compute_manifest_metrics(specs: list[DatasetSpec], master_seed: int = 0,
                             trials: int = DEFAULT_TRIALS,
                             match_size: int | str = "auto",
                             threads: int = 1, k_nn: int = 3):
    """Run the full manifest grid.

    Returns (MetricTable, errors) where errors is a list of
    (dataset, generator, ratio, message) for configurations that failed;
    successful configurations are always retained. Metric values do not
    depend on the training regime, so each configuration is computed once and
    emitted under every regime the manifest declares.
    """
    all_records: list[MetricRecord] = []
    errors: list[tuple[str, str, int, str]] = []
    for ds in specs:
        if match_size == "auto":
            n_match = auto_match_size(ds.train_size)
        else:
            n_match = int(match_size)
        try:
            plan = make_plan(ds.name, ds.real.pool_size, n_match,
                             n_trials=trials, master_seed=master_seed)
            real_emb, real_lab = _load_pool(ds.real)
        except (ValueError, OSError) as exc:
            errors.append((ds.name, "*", 0, str(exc)))
            continue

        def eval_config(gen: GeneratorSpec, ratio: int):
            pool_size = ratio_pool_size(ratio, ds.train_size)
            if pool_size < 1:
                raise ValueError(f"empty synthetic pool at ratio {ratio}")
            if pool_size > gen.pool.pool_size:
                raise ValueError(
                    f"ratio {ratio} needs {pool_size} items but pool "
                    f"{gen.name} has {gen.pool.pool_size}")
            syn_emb, syn_lab = _load_pool(gen.pool, expect_encoders=real_emb)
            syn_emb, syn_lab = _prefix_pool(syn_emb, syn_lab, pool_size, f"@{ratio}")
            key = ConfigKey(dataset=ds.name, regime=ds.regimes[0],
                            generator=gen.name, aug_ratio=ratio)
            return run_config(plan, real_emb, real_lab, syn_emb, syn_lab, key,
                              k_nn=k_nn)

        configs = [(gen, ratio) for gen in ds.generators for ratio in ds.ratios]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(eval_config, gen, ratio)
                           for gen, ratio in configs]
                results = []
                for (gen, ratio), fut in zip(configs, futures):
                    try:
                        results.append(fut.result())
                    except Exception as exc:
                        results.append(exc)
        else:
            results = []
            for gen, ratio in configs:
                try:
                    results.append(eval_config(gen, ratio))
                except Exception as exc:
                    results.append(exc)

        for (gen, ratio), res in zip(configs, results):
            if isinstance(res, Exception):
                errors.append((ds.name, gen.name, ratio, str(res)))
                continue
            for regime in ds.regimes:
                for rec in res:
                    key = ConfigKey(dataset=rec.key.dataset, regime=regime,
                                    generator=rec.key.generator,
                                    aug_ratio=rec.key.aug_ratio)
                    all_records.append(MetricRecord(
                        key=key, metric=rec.metric, value=rec.value,
                        dispersion=rec.dispersion, trials=rec.trials))
    return MetricTable(records=tuple(all_records)), errors
