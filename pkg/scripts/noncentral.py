"""Non-central regime: second moment of eps^(1/2 - d(1 - alpha/2)) F_eps(1)
against c_d^2 K_d(1, 1).

    python scripts/noncentral.py --H 0.9 --replicates 10000
"""
import argparse
import math

import numpy as np

from bmlab.asymptotics import kd_covariance
from bmlab.hermite import builtin_expansion
from bmlab.mcstats import EnsembleConfig, discretized_variance, run_ensemble
from bmlab.models import SelfSimilarModel


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--H", type=float, default=0.9)
    ap.add_argument("--replicates", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--workers", type=int, default=4)
    a = ap.parse_args()

    m = SelfSimilarModel.fbm(a.H)
    e = builtin_expansion("hermite2", 4)
    target = e.coeffs[2] ** 2 * kd_covariance(m, 2, 1.0, 1.0)
    print(f"# {m.model_id}: c_2^2 K_2(1,1) = {target:.5f}")
    print(f"{'eps':>12} {'MC':>9} {'SE':>7} {'exact':>9}")
    for k in (4, 6, 8, 10, 12):
        eps = 2.0**-k
        cfg = EnsembleConfig(m, "F", eps, 0.25, (1.0,), a.replicates, a.seed + k, e,
                             normalize=True, workers=a.workers)
        col = run_ensemble(cfg).column(0)
        m2 = float(np.mean(col**2))
        se = float(np.std(col**2, ddof=1)) / math.sqrt(len(col))
        exact = cfg.scale() ** 2 * discretized_variance(e, m, eps, 0.25, 1.0)
        print(f"{eps:12.3e} {m2:9.4f} {se:7.4f} {exact:9.4f}")


if __name__ == "__main__":
    main()
