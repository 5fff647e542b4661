"""Redraw sweep.png from an existing sweep directory (sweep.csv and, if present, fit.json)."""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from experiments import RateFit, read_sweep_csv, render_sweep_png  # noqa: E402


def main(argv=None):
    parser = argparse.ArgumentParser(description="plot E(nu) from a sweep directory")
    parser.add_argument("directory")
    parser.add_argument("--out", help="png path (default: <directory>/sweep.png)")
    args = parser.parse_args(argv)

    directory = Path(args.directory)
    rows = read_sweep_csv(directory / "sweep.csv")
    fit = None
    fit_path = directory / "fit.json"
    if fit_path.exists():
        with open(fit_path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        fit = RateFit(*(payload[name] for name in RateFit._fields))
    out = Path(args.out) if args.out else directory / "sweep.png"
    if render_sweep_png(rows, out, fit) is None:
        print("no finite rows to plot")
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
