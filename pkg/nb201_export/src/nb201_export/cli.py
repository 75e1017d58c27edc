"""Command-line driver for the archive converter.

Exit codes: 0 success, 2 usage error, 1 runtime failure (messages on
stderr).  Output bytes depend only on the input archive and the epoch
selection, never on the environment.
"""

from __future__ import annotations

import argparse
import sys

from .export import DATASETS, EXPECTED_ARCHS, ExportManifest, export
from .upstream import UpstreamFormatError


def _epoch_selection(text: str) -> tuple[int, ...] | None:
    if text.strip().lower() == "all":
        return None
    picks = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            picks.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"{part!r} is not an integer epoch label") from None
    if not picks:
        raise argparse.ArgumentTypeError("empty selection; use 'all' or a comma-separated list like 30,60,90,120")
    if any(p < 0 for p in picks):
        raise argparse.ArgumentTypeError(f"epoch labels must be >= 0, got {text!r}")
    if len(set(picks)) != len(picks):
        raise argparse.ArgumentTypeError(f"duplicate epoch labels in {text!r}")
    return tuple(picks)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nb201-export", description="Convert NAS-Bench-201 result archives to tabular-benchmark JSONL files.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("export", help="convert one archive to one benchmark file")
    p.add_argument("--in", dest="upstream", required=True, metavar="PATH", help="result archive (torch .pth)")
    p.add_argument("--out", required=True, metavar="PATH", help="benchmark file to write (.jsonl or .jsonl.gz)")
    p.add_argument(
        "--epochs",
        type=_epoch_selection,
        default="all",
        metavar="SEL",
        help="'all' (default) or comma-separated training-epoch labels, e.g. 30,60,90,120",
    )
    p.set_defaults(func=_cmd_export)
    return parser


def _cmd_export(args) -> int:
    epochs = export(ExportManifest(upstream=args.upstream, out=args.out, epochs=args.epochs))
    print(f"wrote {args.out}: {EXPECTED_ARCHS} cells, {len(epochs)} epochs, datasets {','.join(DATASETS)}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse already printed usage/help
        return int(e.code or 0)
    try:
        return int(args.func(args))
    except (UpstreamFormatError, ValueError, TypeError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
