#!/usr/bin/env python3
"""Reproduce the reference hybrid signature sweeps.

Runs the folded-node and singular-Hopf sweeps over their m0 grids with the
default section and counting conventions, prints both tables, then runs
the quadratic-return configuration with a bounded-period chaos check.
Output files land in ./out/sweeps (CSV return logs + signature JSONs).
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from mmodecomp.cli import main  # noqa: E402

OUT = "out/sweeps"

FOLDED_NODE_M0 = "-0.015,-0.01,-0.005,-0.0025,-0.001,0.0"
SINGULAR_HOPF_M0 = "0.0,0.01,0.025,0.05,0.075,0.1"


def run(args):
    rc = main(args)
    if rc != 0:
        sys.exit(rc)


if __name__ == "__main__":
    print("== folded node (eps=0.01, mu=0.006), m(z) = 0.1 z + m0 ==")
    run(["hybrid-run", "--normal-form", "folded_node",
         f"--m0-list={FOLDED_NODE_M0}", "--out", f"{OUT}/folded_node"])

    print("== singular Hopf (eps=0.01, nu=0.01), m(z) = 0.1 z + m0 ==")
    run(["hybrid-run", "--normal-form", "singular_hopf",
         f"--m0-list={SINGULAR_HOPF_M0}", "--out", f"{OUT}/singular_hopf"])

    print("== singular Hopf, quadratic return m(z) = 3 z^2 + 0.2 z - 0.8 ==")
    run(["hybrid-run", "--normal-form", "singular_hopf",
         "--m2", "3.0", "--m1", "0.2", "--m0=-0.8",
         "--n-returns", "500", "--chaos-check",
         "--out", f"{OUT}/quadratic_return"])
