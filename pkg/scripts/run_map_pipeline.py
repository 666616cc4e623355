#!/usr/bin/env python3
"""Full singular-map pipeline over a lambda grid.

Samples all four singular maps on an 11-point grid across the folded-node
window, fits them (affine / quadratic with shared-breakpoint continuity),
emits the fit-error table and coefficient families, and runs the global
analysis (funnel margins, fixed points, relaxation onset).  Everything is
written under ./out/pipeline as plot-ready CSV/JSON.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from mmodecomp.cli import main  # noqa: E402

OUT = "out/pipeline"
LAMBDAS = "-7.8,-7.4,-7.0,-6.6,-6.2,-5.8,-5.4,-5.0,-4.6,-4.2,-4.0"


def run(args):
    rc = main(args)
    if rc != 0:
        sys.exit(rc)


if __name__ == "__main__":
    run(["maps-compute", f"--lambda-grid={LAMBDAS}", "--out", OUT])
    run(["maps-fit", "--input-dir", OUT, "--families", "--out", OUT])
    run(["mmo-analyze", "--bracket=-7.5,-6.0", "--out", OUT])
    print(f"pipeline outputs in {OUT}/")
