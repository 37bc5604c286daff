"""Command line: extract embeddings from an image directory, verify files."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import ExtractJob, extract
from .formats import verify_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-extract",
        description="Image embedding extraction for the screening pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="embed an image directory")
    p.add_argument("--dir", required=True, help="image directory")
    p.add_argument("--encoder", required=True, choices=["inception", "dino"])
    p.add_argument("--out", required=True, help="output payload path (.emb)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu")
    p.add_argument("--set-id", default=None,
                   help="set_id recorded in the sidecar (default: dir name)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify", help="re-check an embedding file pair")
    p.add_argument("path", help="payload path (.emb)")
    p.set_defaults(func=cmd_verify)
    return parser


def cmd_extract(args) -> int:
    job = ExtractJob(image_dir=Path(args.dir), encoder=args.encoder,
                     out_path=Path(args.out), batch_size=args.batch_size,
                     device=args.device, set_id=args.set_id)
    result = extract(job)
    print(f"wrote {result.rows} rows x {result.dims} dims to {args.out}")
    for name, reason in result.skipped:
        print(f"skipped {name}: {reason}", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    print(verify_file(args.path).summary())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
