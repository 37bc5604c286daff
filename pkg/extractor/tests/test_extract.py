import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from embed_extract import (ExtractJob, extract, list_images,
                           read_embedding_file, verify_file,
                           write_embedding_file)


class StubEncoder:
    """Deterministic torch-free encoder: 8x8 RGB thumbnail through a fixed
    random projection."""

    name = "inception"
    dims = 16
    weights_id = "stub"
    preprocess_id = "thumbnail8-stub"

    def __init__(self):
        self._proj = np.random.default_rng(0).standard_normal((192, self.dims))

    def preprocess(self, img):
        arr = np.asarray(img.convert("RGB").resize((8, 8), Image.BILINEAR),
                         dtype=np.float32) / 255.0
        return arr.reshape(-1)

    def embed(self, batch):
        return (batch @ self._proj).astype(np.float32)


def _write_images(root, n=20, size=(24, 32)):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)
    names = []
    for i in range(n):
        name = f"img_{i:03d}.png"
        arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
        Image.fromarray(arr).save(root / name)
        names.append(name)
    return names


@pytest.fixture()
def probe_dir(tmp_path):
    _write_images(tmp_path / "images", n=20)
    return tmp_path / "images"


def test_list_images_sorted_and_filtered(probe_dir):
    (probe_dir / "notes.txt").write_text("not an image")
    paths = list_images(probe_dir)
    assert [p.name for p in paths] == sorted(p.name for p in paths)
    assert len(paths) == 20
    assert all(p.suffix == ".png" for p in paths)


def test_extract_round_trip_and_verify(probe_dir, tmp_path):
    out = tmp_path / "probe.emb"
    job = ExtractJob(image_dir=probe_dir, encoder="inception", out_path=out,
                     batch_size=7)
    result = extract(job, encoder=StubEncoder())
    assert result.rows == 20 and result.dims == 16

    report = verify_file(out)
    assert report.summary().startswith("OK rows=20 dims=16")

    # The sidecar row count equals the decoded-image count and the file
    # loads through the screening toolkit's reader bit-exactly.
    meta = json.loads((tmp_path / "probe.emb.json").read_text())
    assert meta["rows"] == 20 and meta["encoder"] == "inception"
    from synthscreen.dataio import load_embeddings

    es = load_embeddings(out)
    assert es.rows == 20 and es.dims == 16
    data, _ = read_embedding_file(out)
    assert np.array_equal(es.data, data)


def test_extract_rerun_byte_identical(probe_dir, tmp_path):
    payloads = []
    for name in ("a.emb", "b.emb"):
        job = ExtractJob(image_dir=probe_dir, encoder="inception",
                         out_path=tmp_path / name, batch_size=6)
        extract(job, encoder=StubEncoder())
        payloads.append((tmp_path / name).read_bytes())
    assert payloads[0] == payloads[1]


def test_extract_row_order_is_sorted_filename_order(probe_dir, tmp_path):
    out = tmp_path / "probe.emb"
    result = extract(ExtractJob(image_dir=probe_dir, encoder="inception",
                                out_path=out, batch_size=3),
                     encoder=StubEncoder())
    sorted_stems = [p.stem for p in sorted(probe_dir.iterdir(),
                                           key=lambda p: p.name)]
    assert list(result.image_ids) == sorted_stems
    assert (tmp_path / "probe.emb.idx").read_text().splitlines() == sorted_stems

    # Row i really is image i: recompute each embedding independently.
    encoder = StubEncoder()
    data, _ = read_embedding_file(out)
    for i, stem in enumerate(sorted_stems):
        with Image.open(probe_dir / f"{stem}.png") as img:
            want = encoder.embed(encoder.preprocess(img)[None, :])[0]
        assert np.array_equal(data[i], want)


def test_index_joins_labels_with_zero_mismatches(probe_dir, tmp_path):
    # Build YOLO labels for every image id; the extractor's index must join
    # them 1:1 in row order.
    out = tmp_path / "probe.emb"
    result = extract(ExtractJob(image_dir=probe_dir, encoder="inception",
                                out_path=out, batch_size=4),
                     encoder=StubEncoder())
    labels_dir = tmp_path / "labels"
    labels_dir.mkdir()
    for stem in result.image_ids:
        (labels_dir / f"{stem}.txt").write_text("0 0.5 0.5 0.2 0.2\n")
    from synthscreen.dataio import load_embeddings, load_labels

    aset = load_labels(labels_dir, tmp_path / "probe.emb.idx")
    es = load_embeddings(out)
    assert len(aset) == es.rows
    mismatches = [i for i, img in enumerate(aset.images)
                  if img.image_id != result.image_ids[i]]
    assert mismatches == []


def test_extract_skips_undecodable_image(probe_dir, tmp_path):
    (probe_dir / "img_999.png").write_text("this is not a png")
    out = tmp_path / "probe.emb"
    result = extract(ExtractJob(image_dir=probe_dir, encoder="inception",
                                out_path=out, batch_size=8),
                     encoder=StubEncoder())
    assert result.rows == 20
    assert [name for name, _ in result.skipped] == ["img_999.png"]
    meta = json.loads((tmp_path / "probe.emb.json").read_text())
    assert meta["skipped"] == ["img_999.png"]
    assert "img_999" not in (tmp_path / "probe.emb.idx").read_text()


def test_extract_empty_directory(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError, match="no images"):
        extract(ExtractJob(image_dir=tmp_path / "empty", encoder="inception",
                           out_path=tmp_path / "x.emb"), encoder=StubEncoder())


# --- verify error paths -------------------------------------------------------

def test_verify_truncated_payload(tmp_path):
    write_embedding_file(np.ones((4, 3), dtype=np.float32), "inception", "x",
                         tmp_path / "t.emb")
    payload = (tmp_path / "t.emb").read_bytes()
    (tmp_path / "t.emb").write_bytes(payload[:-4])
    with pytest.raises(ValueError, match="shape mismatch"):
        verify_file(tmp_path / "t.emb")


def test_verify_nan_row_named(tmp_path):
    data = np.ones((4, 3), dtype=np.float32)
    path = tmp_path / "n.emb"
    write_embedding_file(data, "inception", "x", path)
    data[2, 1] = np.nan
    data.tofile(path)  # bypass the writer's finiteness check
    with pytest.raises(ValueError, match="row 2"):
        verify_file(path)


def test_write_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        write_embedding_file(np.array([[np.inf, 0.0]], dtype=np.float32),
                             "inception", "x", "/tmp/never-written.emb")


def test_extract_job_rejects_unknown_resize_policy(tmp_path):
    with pytest.raises(ValueError, match="resize policy"):
        ExtractJob(image_dir=tmp_path, encoder="inception",
                   out_path=tmp_path / "x.emb", resize="stretch")
