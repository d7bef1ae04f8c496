#!/usr/bin/env python3
"""Temporal and spatial convergence orders for the smooth and the kinked control case.

Usage: python3 scripts/convergence_study.py [config ...]
"""

import sys
from pathlib import Path

from timomem.cli import cmd_convergence
from timomem.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    paths = (argv if argv is not None else sys.argv[1:]) or [
        str(ROOT / "configs" / "convergence.toml"), str(ROOT / "configs" / "convergence_kink.toml")]
    codes = []
    for path in paths:
        print(f"# {path}")
        codes.append(cmd_convergence(load_config(path)))
    # the kinked case is expected to fail the order threshold
    return 0 if codes and codes[0] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
