#!/usr/bin/env python3
"""Run one config with the direct and the Prony memory path and compare energies.

The direct path keeps every strain snapshot, so a T = 2000 run takes minutes.
Usage: python3 scripts/compare_memory_paths.py [configs/nu3.toml] [--T 2000]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from timomem.cli import write_report
from timomem.config import load_config
from timomem.simulate import run

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", nargs="?", default=str(ROOT / "configs" / "nu3.toml"))
    p.add_argument("--T", type=float, default=None, help="override the run length")
    args = p.parse_args(argv)
    rc = load_config(args.config)
    changes = {} if args.T is None else {"T": args.T}
    timings, series = {}, {}
    for mode in ("prony", "direct"):
        t0 = time.perf_counter()
        series[mode] = run(rc.sim_config(memory_mode=mode, **changes))
        timings[mode] = time.perf_counter() - t0
    d, q = series["direct"], series["prony"]
    rel = np.abs(q.E_total - d.E_total) / d.E_total
    write_report(dict(config=args.config, T=float(d.t[-1]), max_rel_difference=float(rel.max()),
                      prony_terms=q.meta["prony_terms"], prony_fit_error=q.meta["prony_fit_error"],
                      seconds_prony=timings["prony"], seconds_direct=timings["direct"],
                      status="pass" if rel.max() <= 1e-4 else "fail"))
    return 0 if rel.max() <= 1e-4 else 1


if __name__ == "__main__":
    sys.exit(main())
