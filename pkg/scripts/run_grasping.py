#!/usr/bin/env python3
"""Reproduce the object-wrapping experiment.

Writes a scenario file placing a 2 cm circular object at (12,12) cm and
runs the grasp pipeline: two-phase penalty continuation for the static
activations, then a damped dynamic replay.

Usage: python3 scripts/run_grasping.py [--out DIR] [--max-iters N]
"""

import argparse
import sys
import tempfile
from pathlib import Path

from octoarm.cli import main as cli_main

SCENARIO = """\
# reference arm, circular object to wrap
grasp_center = [12, 12] cm
grasp_radius = "2 cm"
max_iters = 20000
segment_duration = "2 s"
sample_stride = 1000
"""


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/grasping")
    parser.add_argument("--max-iters", type=int, default=None)
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "grasping.cfg"
        cfg.write_text(SCENARIO)
        argv = ["grasp", "--config", str(cfg), "--out", args.out]
        if args.max_iters is not None:
            argv += ["--max-iters", str(args.max_iters)]
        if args.quiet:
            argv.append("--quiet")
        return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
