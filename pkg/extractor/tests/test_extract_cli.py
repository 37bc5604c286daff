import importlib

import numpy as np
from embed_extract.cli import main
from embed_extract.formats import write_embedding_file

# The package re-exports the extract() function under the submodule's name,
# so fetch the module itself for monkeypatching.
extract_mod = importlib.import_module("embed_extract.extract")

from test_extract import StubEncoder, _write_images


def test_cli_extract_and_verify(tmp_path, monkeypatch, capsys):
    _write_images(tmp_path / "images", n=6)
    monkeypatch.setattr(extract_mod, "load_encoder",
                        lambda tag, device="cpu": StubEncoder())
    out = tmp_path / "set.emb"
    assert main(["extract", "--dir", str(tmp_path / "images"),
                 "--encoder", "inception", "--out", str(out),
                 "--batch-size", "4"]) == 0
    assert "wrote 6 rows x 16 dims" in capsys.readouterr().out
    assert main(["verify", str(out)]) == 0
    assert capsys.readouterr().out.startswith("OK rows=6 dims=16")


def test_cli_verify_failure(tmp_path, capsys):
    path = tmp_path / "t.emb"
    write_embedding_file(np.ones((2, 2), dtype=np.float32), "inception", "x", path)
    path.write_bytes(path.read_bytes()[:-4])
    assert main(["verify", str(path)]) == 1
    assert "shape mismatch" in capsys.readouterr().err


def test_cli_extract_missing_dir(tmp_path, capsys):
    assert main(["extract", "--dir", str(tmp_path / "nope"),
                 "--encoder", "inception", "--out", str(tmp_path / "x.emb")]) == 1
    assert "not a directory" in capsys.readouterr().err
