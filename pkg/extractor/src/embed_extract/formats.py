"""The embedding file pair: raw little-endian float32 payload plus a JSON
sidecar with {rows, dims, dtype, encoder, set_id} and provenance fields."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PAYLOAD_DTYPE = np.dtype("<f4")
ENCODER_TAGS = ("inception", "dino")


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def write_embedding_file(features: np.ndarray, encoder: str, set_id: str,
                         path: str | Path, provenance: dict | None = None) -> None:
    """Write payload + sidecar atomically (temp file, then rename)."""
    path = Path(path)
    arr = np.ascontiguousarray(features, dtype=PAYLOAD_DTYPE)
    if arr.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("non-finite feature in extraction output")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    arr.tofile(tmp)
    os.replace(tmp, path)
    meta = {"rows": int(arr.shape[0]), "dims": int(arr.shape[1]),
            "dtype": "f32le", "encoder": encoder, "set_id": set_id}
    meta.update(provenance or {})
    tmp_meta = sidecar_path(path).with_name(sidecar_path(path).name + ".tmp")
    tmp_meta.write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp_meta, sidecar_path(path))


def read_embedding_file(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    sidecar = sidecar_path(path)
    if not sidecar.is_file():
        raise FileNotFoundError(f"missing sidecar: {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    for key in ("rows", "dims", "dtype", "encoder", "set_id"):
        if key not in meta:
            raise ValueError(f"sidecar missing field {key!r}: {sidecar}")
    if meta["dtype"] != "f32le":
        raise ValueError(f"unsupported payload dtype: {meta['dtype']!r}")
    raw = np.fromfile(path, dtype=PAYLOAD_DTYPE)
    rows, dims = int(meta["rows"]), int(meta["dims"])
    if raw.size != rows * dims:
        raise ValueError(f"shape mismatch: sidecar says {rows}x{dims}, payload "
                         f"has {raw.size} elements")
    return raw.reshape(rows, dims), meta


@dataclass(frozen=True)
class VerifyReport:
    rows: int
    dims: int
    encoder: str
    set_id: str
    mean_norm: float

    def summary(self) -> str:
        return (f"OK rows={self.rows} dims={self.dims} encoder={self.encoder} "
                f"set_id={self.set_id} mean_norm={self.mean_norm:.4f}")


def verify_file(path: str | Path) -> VerifyReport:
    """Re-check the format invariants and summarize the payload."""
    data, meta = read_embedding_file(path)
    finite_rows = np.isfinite(data).all(axis=1)
    if not finite_rows.all():
        bad = int(np.argmin(finite_rows))
        raise ValueError(f"non-finite feature at row {bad}")
    if meta["encoder"] not in ENCODER_TAGS:
        raise ValueError(f"unknown encoder tag: {meta['encoder']!r}")
    if data.shape[0] < 1:
        raise ValueError("empty embedding file")
    return VerifyReport(rows=data.shape[0], dims=data.shape[1],
                        encoder=meta["encoder"], set_id=str(meta["set_id"]),
                        mean_norm=float(np.linalg.norm(data, axis=1).mean()))
