"""Reduce every netlist under circuits/ and print its summary.

Usage: python3 scripts/reproduce_examples.py [--out DIR]

With --out, the model (or obstruction) documents are written there too.
"""

import argparse
from pathlib import Path

from fjq import load_netlist, run_reduction
from fjq.fj_reduction import flux_to_sources
from fjq.model_io import emit_summary, write_document

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--circuits", type=Path, default=ROOT / "circuits")
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for path in sorted(args.circuits.glob("*.net")):
        graph = load_netlist(path)
        if graph.external_fluxes:
            graph = flux_to_sources(graph)
        result = run_reduction(graph)
        print(f"== {path.stem}")
        print(emit_summary(result).rstrip())
        if args.out:
            write_document(result, args.out / f"{path.stem}.fjq.json")


if __name__ == "__main__":
    main()
