"""On-disk formats: embedding payloads, YOLO-style label sets, runs/metrics tables.

Embedding payloads are row-major little-endian float32 (``<name>.emb``) with a
JSON sidecar (``<name>.emb.json``) holding ``{rows, dims, dtype, encoder,
set_id}``. Labels follow the single-class YOLO text convention (one
``class cx cy w h`` line per box, normalized coordinates), with an index file
listing image ids in row order so labels and embeddings align by index.
Runs and metrics tables are comma-delimited UTF-8 with a mandatory header and
shared configuration-key columns so they join directly.

All loaders are pure functions and every loaded type is immutable after
construction, so instances are safe to share across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ENCODERS = ("inception", "dino")
REGIMES = ("scratch", "pretrained")
AUG_RATIOS = (0, 10, 25, 50, 75, 100, 125, 150)
BASELINE_GENERATOR = "baseline"

# Raw label coordinates may exceed [0, 1] by at most this much before
# clamping is refused.
CLAMP_TOL = 1e-6

_EMB_DTYPE = np.dtype("<f4")

RUNS_HEADER = ("dataset", "regime", "generator", "aug_ratio", "seed", "map5095")
METRICS_HEADER = ("dataset", "regime", "generator", "aug_ratio", "metric",
                  "value", "dispersion", "trials")


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """One image set's feature matrix under one encoder."""

    data: np.ndarray
    encoder: str
    set_id: str

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"embedding data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"embedding data must be at least 1x1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("non-finite feature in embedding data")
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder tag: {self.encoder!r}")
        object.__setattr__(self, "data", arr)
        self.data.setflags(write=False)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Box:
    """One normalized bounding box (center-size form, already clamped)."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class ImageLabels:
    image_id: str
    boxes: tuple[Box, ...] = ()


@dataclass(frozen=True)
class AnnotationSet:
    images: tuple[ImageLabels, ...] = ()

    def __len__(self) -> int:
        return len(self.images)


def clamp_box(class_id: int, cx: float, cy: float, w: float, h: float) -> Box:
    """Validate raw box fields and clamp the box edges into [0, 1].

    Raw fields may exceed [0, 1] by at most CLAMP_TOL. Edges that stick out
    (e.g. a box centered near the image border) are pulled back in and the
    center/size recomputed. Edges are quantized to 9 decimals, well below
    annotation precision, so clamping is an exact fixed point.
    """
    for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
        if not np.isfinite(v):
            raise ValueError(f"non-finite coordinate {name}={v}")
        if v < -CLAMP_TOL or v > 1.0 + CLAMP_TOL:
            raise ValueError(f"coordinate outside [0,1] beyond clamp tolerance: {name}={v}")
    if w <= 0 or h <= 0:
        raise ValueError(f"degenerate box: w={w}, h={h}")
    cx, cy, w, h = (min(max(v, 0.0), 1.0) for v in (cx, cy, w, h))

    def edge(v: float) -> float:
        return round(min(max(v, 0.0), 1.0), 9)

    x1, x2 = edge(cx - w / 2.0), edge(cx + w / 2.0)
    y1, y2 = edge(cy - h / 2.0), edge(cy + h / 2.0)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise ValueError(f"degenerate box after clamping: cx={cx}, cy={cy}, w={w}, h={h}")
    return Box(class_id=class_id, cx=(x1 + x2) / 2.0, cy=(y1 + y2) / 2.0,
               w=x2 - x1, h=y2 - y1)


@dataclass(frozen=True)
class ConfigKey:
    """(dataset, regime, generator, augmentation-ratio) coordinate of one cell."""

    dataset: str
    regime: str
    generator: str
    aug_ratio: int

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime tag: {self.regime!r}")
        if self.aug_ratio not in AUG_RATIOS:
            raise ValueError(f"unknown aug_ratio: {self.aug_ratio!r}")
        if (self.generator == BASELINE_GENERATOR) != (self.aug_ratio == 0):
            raise ValueError(
                f"generator={self.generator!r} with aug_ratio={self.aug_ratio} "
                f"(baseline must have ratio 0 and vice versa)")

    @property
    def is_baseline(self) -> bool:
        return self.generator == BASELINE_GENERATOR


@dataclass(frozen=True)
class RunRecord:
    key: ConfigKey
    seed: int
    map5095: float

    def __post_init__(self):
        if not (0.0 <= self.map5095 <= 1.0):
            raise ValueError(f"mAP out of range: {self.map5095}")


@dataclass(frozen=True)
class RunsTable:
    records: tuple[RunRecord, ...]

    def __post_init__(self):
        seen = set()
        for r in self.records:
            k = (r.key, r.seed)
            if k in seen:
                raise ValueError(f"duplicate run record: {r.key} seed={r.seed}")
            seen.add(k)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class MetricRecord:
    key: ConfigKey
    metric: str
    value: float
    dispersion: float
    trials: int

    def __post_init__(self):
        if self.dispersion < 0:
            raise ValueError(f"negative dispersion: {self.dispersion}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")


@dataclass(frozen=True)
class MetricTable:
    records: tuple[MetricRecord, ...]

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.key.is_baseline:
                raise ValueError(f"baseline key in metric table: {r.key}")
            k = (r.key, r.metric)
            if k in seen:
                raise ValueError(f"duplicate metric record: {r.key} {r.metric}")
            seen.add(k)

    def __len__(self) -> int:
        return len(self.records)


def _sidecar_path(path: Path) -> Path:
    return Path(str(path) + ".json")


def load_embeddings(path: str | Path) -> EmbeddingSet:
    """Load a validated EmbeddingSet from ``path`` (+ JSON sidecar). Bit-exact."""
    path = Path(path)
    sidecar = _sidecar_path(path)
    if not sidecar.is_file():
        raise FileNotFoundError(f"missing sidecar: {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    for k in ("rows", "dims", "dtype", "encoder", "set_id"):
        if k not in meta:
            raise ValueError(f"sidecar missing field {k!r}: {sidecar}")
    if meta["dtype"] != "f32le":
        raise ValueError(f"unsupported payload dtype: {meta['dtype']!r}")
    rows, dims = int(meta["rows"]), int(meta["dims"])
    raw = np.fromfile(path, dtype=_EMB_DTYPE)
    if raw.size != rows * dims:
        raise ValueError(
            f"rows x dims mismatch: sidecar says {rows}x{dims}={rows * dims} "
            f"elements, payload has {raw.size}")
    return EmbeddingSet(data=raw.reshape(rows, dims), encoder=meta["encoder"],
                        set_id=str(meta["set_id"]))


def write_embeddings(es: EmbeddingSet, path: str | Path) -> None:
    """Write payload + sidecar. load_embeddings(write_embeddings(x)) is identity."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    es.data.astype(_EMB_DTYPE).tofile(path)
    meta = {"rows": es.rows, "dims": es.dims, "dtype": "f32le",
            "encoder": es.encoder, "set_id": es.set_id}
    _sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n",
                                   encoding="utf-8")


def _read_index(index_path: Path) -> list[str]:
    ids = []
    for line in index_path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            ids.append(line)
    return ids


def load_labels(labels_dir: str | Path, index_path: str | Path) -> AnnotationSet:
    """Parse YOLO-style label files for every id listed in the index.

    An id without a label file contributes an image with zero boxes.
    """
    labels_dir = Path(labels_dir)
    images = []
    for image_id in _read_index(Path(index_path)):
        label_file = labels_dir / f"{image_id}.txt"
        boxes: list[Box] = []
        if label_file.is_file():
            for lineno, line in enumerate(label_file.read_text(encoding="utf-8").splitlines(), 1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 5:
                    raise ValueError(
                        f"malformed label line ({label_file}:{lineno}): {line!r}")
                try:
                    class_id = int(parts[0])
                    cx, cy, w, h = (float(p) for p in parts[1:])
                except ValueError as exc:
                    raise ValueError(
                        f"malformed label line ({label_file}:{lineno}): {line!r}") from exc
                boxes.append(clamp_box(class_id, cx, cy, w, h))
        images.append(ImageLabels(image_id=image_id, boxes=tuple(boxes)))
    return AnnotationSet(images=tuple(images))


def write_labels(aset: AnnotationSet, labels_dir: str | Path,
                 index_path: str | Path) -> None:
    labels_dir = Path(labels_dir)
    labels_dir.mkdir(parents=True, exist_ok=True)
    ids = []
    for img in aset.images:
        ids.append(img.image_id)
        lines = [f"{b.class_id} {b.cx!r} {b.cy!r} {b.w!r} {b.h!r}" for b in img.boxes]
        (labels_dir / f"{img.image_id}.txt").write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8")
    Path(index_path).parent.mkdir(parents=True, exist_ok=True)
    Path(index_path).write_text("".join(i + "\n" for i in ids), encoding="utf-8")


def _parse_key(row: dict, where: str) -> ConfigKey:
    try:
        return ConfigKey(dataset=row["dataset"], regime=row["regime"],
                         generator=row["generator"], aug_ratio=int(row["aug_ratio"]))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad configuration key at {where}: {exc}") from exc


def load_runs(path: str | Path) -> RunsTable:
    """Load detector results (held-out test mAP@0.50:0.95 per config and seed)."""
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RUNS_HEADER:
            raise ValueError(f"runs table must have header {','.join(RUNS_HEADER)}")
        for i, row in enumerate(reader, 2):
            key = _parse_key(row, f"{path}:{i}")
            try:
                seed = int(row["seed"])
                map5095 = float(row["map5095"])
            except ValueError as exc:
                raise ValueError(f"bad run record at {path}:{i}: {exc}") from exc
            records.append(RunRecord(key=key, seed=seed, map5095=map5095))
    return RunsTable(records=tuple(records))


def write_runs(table: RunsTable, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RUNS_HEADER)
        for r in table.records:
            writer.writerow([r.key.dataset, r.key.regime, r.key.generator,
                             r.key.aug_ratio, r.seed, repr(float(r.map5095))])


def load_metrics(path: str | Path) -> MetricTable:
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != METRICS_HEADER:
            raise ValueError(f"metric table must have header {','.join(METRICS_HEADER)}")
        for i, row in enumerate(reader, 2):
            key = _parse_key(row, f"{path}:{i}")
            try:
                records.append(MetricRecord(
                    key=key, metric=row["metric"], value=float(row["value"]),
                    dispersion=float(row["dispersion"]), trials=int(row["trials"])))
            except ValueError as exc:
                raise ValueError(f"bad metric record at {path}:{i}: {exc}") from exc
    return MetricTable(records=tuple(records))


def write_metrics(table: MetricTable, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for r in table.records:
            writer.writerow([r.key.dataset, r.key.regime, r.key.generator,
                             r.key.aug_ratio, r.metric, repr(float(r.value)),
                             repr(float(r.dispersion)), r.trials])


def make_fixture(seed: int, n_real: int, n_syn: int, dims: int, shift: float,
                 encoder: str = "inception") -> tuple[EmbeddingSet, EmbeddingSet]:
    """Deterministic Gaussian point-cloud pair for tests.

    Both clouds are standard normal draws from one seeded stream; the
    synthetic cloud is mean-shifted by ``shift`` along the first axis.
    Equal seeds produce bit-identical matrices.
    """
    if n_real < 2 or n_syn < 2:
        raise ValueError("fixture clouds need at least 2 points each")
    if dims < 1:
        raise ValueError("dims must be >= 1")
    rng = np.random.default_rng(seed)
    real = rng.standard_normal((n_real, dims))
    syn = rng.standard_normal((n_syn, dims))
    syn[:, 0] += shift
    return (
        EmbeddingSet(data=real.astype(np.float32), encoder=encoder,
                     set_id=f"fixture-real-{seed}"),
        EmbeddingSet(data=syn.astype(np.float32), encoder=encoder,
                     set_id=f"fixture-syn-{seed}"),
    )
