"""Regularized length of fBm and bifBm: mean, fluctuation variance, the
exact discrete variance and the continuum constant with its 2^(1-K) factor.

    python scripts/length_fluctuations.py --HK 0.55 --K 0.6
"""
import argparse
import math

from bmlab.asymptotics import sigma2_length
from bmlab.mcstats import (
    EnsembleConfig,
    empirical_cov,
    length_discretized_variance,
    run_ensemble,
)
from bmlab.models import SelfSimilarModel


def report(m, eps, delta, replicates, seed, workers, target):
    base = dict(model=m, eps=eps, delta=delta, times=(1.0,), replicates=replicates,
                seed=seed, workers=workers)
    mean = run_ensemble(EnsembleConfig(kind="length", **base)).mean(0)
    v, se = empirical_cov(run_ensemble(EnsembleConfig(kind="length_fluct", **base)), 0, 0)
    dv = length_discretized_variance(m, eps, delta, 1.0)
    print(f"{m.model_id:>22} eps={eps:.2e} mean={mean:.4f} var={v:.4f}±{se:.4f} "
          f"discrete={dv:.4f} limit={target:.4f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--HK", type=float, default=0.55)
    ap.add_argument("--K", type=float, default=0.6)
    ap.add_argument("--k", type=int, default=9)
    ap.add_argument("--replicates", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--workers", type=int, default=4)
    a = ap.parse_args()

    s2 = sigma2_length(a.HK)
    print(f"# sigma2_length({a.HK}) = {s2.value:.5f}; displayed series {s2.displayed_series:.5f}")
    eps = 2.0**-a.k
    fbm = SelfSimilarModel.fbm(a.HK)
    print(f"# expected mean for fBm: {eps ** (a.HK - 1) * math.sqrt(2 / math.pi):.4f}")
    report(fbm, eps, eps / 8, a.replicates, a.seed, a.workers, s2.value)
    bif = SelfSimilarModel.bifbm(a.HK / a.K, a.K)
    report(bif, eps, eps / 4, a.replicates, a.seed + 1, a.workers, 2 ** (1 - a.K) * s2.value)


if __name__ == "__main__":
    main()
