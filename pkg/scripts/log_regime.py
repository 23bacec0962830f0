"""Critical (log) regime for fBm(0.75) and f = H_2.

Prints Var[F_eps(1)] / |log eps| from the exact discrete variance, the
local slope d Var / d|log eps|, and the candidate limit constants.
The slope converges much faster than the ratio, which still carries an
O(1/|log eps|) offset.

    python scripts/log_regime.py --kmax 16
"""
import argparse
import math

from bmlab.asymptotics import log_constants_report
from bmlab.hermite import builtin_expansion
from bmlab.mcstats import discretized_variance
from bmlab.models import SelfSimilarModel


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--kmin", type=int, default=4)
    ap.add_argument("--kmax", type=int, default=14)
    ap.add_argument("--delta", type=float, default=0.25)
    a = ap.parse_args()

    m = SelfSimilarModel.fbm(0.75)
    e = builtin_expansion("hermite2", 4)
    rep = log_constants_report(m, e)
    for key, val in rep.items():
        print(f"# {key:32s} {val:.6f}")
    print(f"{'k':>3} {'Var':>10} {'Var/|log eps|':>14} {'slope':>10}")
    prev = None
    for k in range(a.kmin, a.kmax + 1, 2):
        v = discretized_variance(e, m, 2.0**-k, a.delta, 1.0)
        L = k * math.log(2)
        slope = "" if prev is None else f"{(v - prev[0]) / (L - prev[1]):10.5f}"
        print(f"{k:3d} {v:10.5f} {v / L:14.5f} {slope:>10}")
        prev = (v, L)


if __name__ == "__main__":
    main()
