"""False- and true-positive rates of the heavy-tail screen on a seasonal AR(2).

Normal innovations should not be flagged; t3 innovations should.  Sweeps the
history length since the false-positive rate depends strongly on it.
"""
import argparse

import numpy as np

from aftercast.panel import heavy_tail_screen_history


def seasonal_ar(n, rng, heavy, burn=60):
    e = rng.standard_t(3, n + burn) if heavy else rng.normal(size=n + burn)
    months = np.arange(n + burn) % 12 + 1
    y = np.zeros(n + burn)
    for i in range(2, n + burn):
        y[i] = 0.5 * y[i - 1] - 0.2 * y[i - 2] + 2 * np.sin(2 * np.pi * months[i] / 12) + e[i]
    return y[burn:], months[burn:]


def rate(n, seeds, heavy, offset):
    hits = sum(heavy_tail_screen_history(*seasonal_ar(n, np.random.default_rng(offset + s), heavy)).heavy
               for s in range(seeds))
    return hits / seeds


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lengths", type=int, nargs="+", default=[48, 72, 120, 240, 480, 1000])
    ap.add_argument("--seeds", type=int, default=500)
    args = ap.parse_args(argv)
    print(f"{'n':>6} {'FPR':>7} {'TPR':>7}")
    for n in args.lengths:
        print(f"{n:>6} {rate(n, args.seeds, False, 0):>7.3f} {rate(n, args.seeds, True, 10_000):>7.3f}")


if __name__ == "__main__":
    main()
