#!/usr/bin/env python3
"""Write a matplotlib recipe next to a run CSV (matplotlib is not a package dependency).

Usage: python3 scripts/emit_plot_recipe.py results/nu3.csv
"""

import sys
from pathlib import Path

from timomem.cli import PLOT_RECIPE


def main(argv=None) -> int:
    args = argv if argv is not None else sys.argv[1:]
    if not args:
        print(__doc__)
        return 2
    for name in args:
        csv = Path(name)
        target = csv.with_suffix(".plot.py")
        target.write_text(PLOT_RECIPE.format(csv=csv.name, png=csv.with_suffix(".png").name))
        print(target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
