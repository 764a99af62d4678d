#!/usr/bin/env python3
"""Reproduce the three-target reaching experiment.

Writes a scenario file with the reference arm parameters and the target
sequence (12,14), (16,6), (2,-2) cm, then runs the reaching pipeline:
static activation design per target followed by damped dynamic segments.

Usage: python3 scripts/run_reaching.py [--out DIR] [--max-iters N]
"""

import argparse
import sys
import tempfile
from pathlib import Path

from octoarm.cli import main as cli_main

SCENARIO = """\
# reference arm, three reaching targets
targets = [[12, 14], [16, 6], [2, -2]] cm
max_iters = 20000
segment_duration = "2 s"
sample_stride = 1000
"""


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/reaching")
    parser.add_argument("--max-iters", type=int, default=None)
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "reaching.cfg"
        cfg.write_text(SCENARIO)
        argv = ["reach", "--config", str(cfg), "--out", args.out]
        if args.max_iters is not None:
            argv += ["--max-iters", str(args.max_iters)]
        if args.quiet:
            argv.append("--quiet")
        return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
