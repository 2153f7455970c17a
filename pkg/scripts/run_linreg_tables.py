"""Linear-regression ratio tables (p0 = 3, 5, 10; t3 and normal errors) through the CLI.

    python scripts/run_linreg_tables.py --draws 20 --replicates 50 --out results/linreg
"""
import argparse
from pathlib import Path

from aftercast.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ["linreg_p0_3_t3.toml", "linreg_p0_3_normal.toml", "linreg_p0_5_t3.toml", "linreg_p0_10_t3.toml"]


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=20)
    ap.add_argument("--replicates", type=int, default=50)
    ap.add_argument("--jobs", type=int)
    ap.add_argument("--out", default="results/linreg")
    ap.add_argument("--only", nargs="*", help="subset of config file names")
    args = ap.parse_args(argv)
    for name in args.only or CONFIGS:
        cmd = ["simulate", str(ROOT / "configs" / name), "--draws", str(args.draws),
               "--replicates", str(args.replicates), "--out", str(Path(args.out) / Path(name).stem)]
        if args.jobs:
            cmd += ["--jobs", str(args.jobs)]
        code = main(cmd)
        if code:
            return code
        print((Path(args.out) / Path(name).stem / "table.txt").read_text())
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
