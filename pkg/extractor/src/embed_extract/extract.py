"""Batch extraction of image embeddings into the embedding file format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import load_encoder
from .formats import write_embedding_file

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


@dataclass(frozen=True)
class ExtractJob:
    image_dir: Path
    encoder: str
    out_path: Path
    batch_size: int = 32
    device: str = "cpu"
    resize: str = "encoder-default"
    set_id: str | None = None

    def __post_init__(self):
        if self.resize != "encoder-default":
            raise ValueError(f"unsupported resize policy: {self.resize!r}")


@dataclass(frozen=True)
class ExtractResult:
    rows: int
    dims: int
    image_ids: tuple[str, ...]
    skipped: tuple[tuple[str, str], ...] = ()


def list_images(image_dir: str | Path) -> list[Path]:
    """Image files in sorted filename order; this order defines the row
    order, so an index built the same way aligns labels to embeddings."""
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise FileNotFoundError(f"not a directory: {image_dir}")
    return sorted((p for p in image_dir.iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES),
                  key=lambda p: p.name)


def extract(job: ExtractJob, encoder=None) -> ExtractResult:
    """Run the encoder over every decodable image and write payload, sidecar
    and a row-order index file (``<out>.idx``).

    Undecodable images are skipped and reported in the result. One row per
    image in sorted filename order; deterministic for fixed weights.
    """
    if job.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    paths = list_images(job.image_dir)
    if not paths:
        raise ValueError(f"no images found in {job.image_dir}")
    if encoder is None:
        encoder = load_encoder(job.encoder, device=job.device)

    ids: list[str] = []
    skipped: list[tuple[str, str]] = []
    chunks: list[np.ndarray] = []
    batch: list[np.ndarray] = []

    def flush():
        if batch:
            chunks.append(encoder.embed(np.stack(batch)))
            batch.clear()

    for path in paths:
        try:
            with Image.open(path) as img:
                batch.append(encoder.preprocess(img))
        except (UnidentifiedImageError, OSError) as exc:
            skipped.append((path.name, str(exc)))
            continue
        ids.append(path.stem)
        if len(batch) == job.batch_size:
            flush()
    flush()
    if not ids:
        raise ValueError(f"no decodable images in {job.image_dir}")

    features = np.concatenate(chunks, axis=0)
    set_id = job.set_id if job.set_id is not None else Path(job.image_dir).name
    write_embedding_file(
        features, encoder=encoder.name, set_id=set_id, path=job.out_path,
        provenance={"preprocess": encoder.preprocess_id,
                    "weights": encoder.weights_id,
                    "skipped": [name for name, _ in skipped]})
    index_path = Path(str(job.out_path) + ".idx")
    index_path.write_text("".join(i + "\n" for i in ids), encoding="utf-8")
    return ExtractResult(rows=features.shape[0], dims=features.shape[1],
                         image_ids=tuple(ids), skipped=tuple(skipped))
