"""Write a small synthetic forecast panel CSV for trying the bench/screen/combine commands."""
import argparse

import numpy as np

from aftercast.panel import PanelRecord, write_panel_csv


def make_panel(n_series=12, n_test=18, n_train=72, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for k in range(n_series):
        heavy = k % 2 == 1
        n = n_train + n_test
        e = rng.standard_t(3, n) if heavy else rng.normal(size=n)
        months = np.arange(n) % 12 + 1
        y = 50 + np.cumsum(0.3 * e) + 3 * np.sin(2 * np.pi * months / 12)
        test = y[n_train:]
        bias = rng.normal(0, 1.5, 5)
        noise = rng.uniform(0.3, 3.0, 5)
        F = test[:, None] + bias + rng.normal(size=(n_test, 5)) * noise
        recs.append(PanelRecord(f"S{k + 1:03d}", y[:n_train], months[:n_train], test, months[n_train:], F,
                                tuple(f"m{j + 1}" for j in range(5))))
    return recs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--series", type=int, default=12)
    ap.add_argument("--single", action="store_true", help="write only the first series")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    recs = make_panel(args.series, seed=args.seed)
    write_panel_csv(recs[:1] if args.single else recs, args.out)


if __name__ == "__main__":
    main()
