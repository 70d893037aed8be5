"""Command-line front end: one subcommand per batch workflow.

Every subcommand reads a JSON manifest, runs deterministically, and writes
its data files plus a summary.json into the output directory.  On failure a
machine-readable error object is printed to stderr and the exit code is
nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import RydoctError
from .manifest import (
    load_manifest,
    run_analyze,
    run_basis,
    run_decode_test,
    run_optimize,
    run_optimize_universal,
    run_propagate,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydoct",
        description="Shaped-terahertz-pulse design for Rydberg wave-packet registers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, needs_field=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--manifest", required=True, help="path to the JSON run manifest")
        p.add_argument("--out", default=None, help="output directory (default from manifest)")
        p.add_argument("--verbose", action="store_true", help="print progress information")
        if needs_field:
            p.add_argument("--field", required=True, help="field CSV to analyze")
        return p

    add("basis", "build the model Hamiltonian and write it to a file")
    add("propagate", "propagate the encoded register under the manifest pulse")
    add("optimize", "optimize the field for the single marked bit")
    add("optimize-universal", "optimize one field for all listed marked bits")
    add("analyze", "spectrum and time-frequency map of a field file", needs_field=True)
    add("decode-test", "apply a field file to every marked register", needs_field=True)
    return parser


_RUNNERS = {
    "basis": run_basis,
    "propagate": run_propagate,
    "optimize": run_optimize,
    "optimize-universal": run_optimize_universal,
}

_FIELD_RUNNERS = {
    "analyze": run_analyze,
    "decode-test": run_decode_test,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        manifest = load_manifest(args.manifest)
        out_dir = args.out if args.out is not None else manifest.output_dir
        if args.verbose:
            print(f"[rydoct] {args.command}: writing to {out_dir}", file=sys.stderr)
        if args.command in _RUNNERS:
            result = _RUNNERS[args.command](manifest, out_dir)
        else:
            result = _FIELD_RUNNERS[args.command](manifest, args.field, out_dir)
        if args.verbose:
            print(f"[rydoct] metrics: {json.dumps(result['metrics'])}", file=sys.stderr)
        return 0
    except RydoctError as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 1
    except OSError as exc:
        error = {"error": "IOError", "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
