"""Monte Carlo ensembles and the statistics run on them."""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .asymptotics import normalization
from .errors import BMLabError, FitError, InputError, PreconditionError, SizeError
from .hermite import HermiteExpansion, hermite_rank
from .models import SelfSimilarModel, StationaryModel, a_alpha, increment_corr_scaled
from .sampler import BLOCK, plan_for, sample_block

KINDS = ("Z", "F", "length", "length_fluct")
STATIONARY_GUARD = 2**22
DENSE_GUARD = 2**14


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class EnsembleConfig:
    model: object
    kind: str
    eps: float
    delta: float
    times: tuple
    replicates: int
    seed: int
    expansion: HermiteExpansion | None = None
    regime: str | None = None
    normalize: bool = False
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown functional {self.kind!r}")
        if self.replicates < 1:
            raise InputError("replicates must be >= 1")
        if not 0 < self.eps < 1:
            raise InputError("eps must lie in (0, 1)")
        if self.delta <= 0:
            raise InputError("delta must be positive")
        t = tuple(float(x) for x in self.times)
        if not t or any(b <= a for a, b in zip(t, t[1:])) or t[0] < 0:
            raise InputError("times must be nonnegative and strictly increasing")
        object.__setattr__(self, "times", t)
        if self.kind in ("Z", "F") and self.expansion is None:
            raise InputError(f"functional {self.kind} needs an expansion")
        if self.kind == "Z" and not isinstance(self.model, StationaryModel):
            raise InputError("Z needs a stationary model")
        if self.kind != "Z" and not isinstance(self.model, SelfSimilarModel):
            raise InputError(f"{self.kind} needs a self-similar model")

    def semantic(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "kind": self.kind,
            "eps": self.eps,
            "delta": self.delta,
            "times": list(self.times),
            "replicates": self.replicates,
            "seed": self.seed,
            "expansion": list(self.expansion.coeffs) if self.expansion is not None else None,
            "regime": self.regime,
            "normalize": self.normalize,
        }

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.semantic(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def grid_points(self) -> int:
        tmax = self.times[-1]
        if self.kind == "Z":
            end = tmax / self.eps
        elif self.kind == "F":
            end = tmax / self.eps + 1.0
        else:
            end = tmax + self.eps
        return fn.needed_points(end, self.delta) + 1

    def scale(self) -> float:
        """Factor applied to Z/F when ``normalize`` is set."""
        if not self.normalize or self.kind not in ("Z", "F"):
            return 1.0
        alpha = self.model.alpha if self.model.alpha is not None else 1.0
        return normalization(alpha, hermite_rank(self.expansion), self.eps)


@dataclass(frozen=True)
class FluctuationEnsemble:
    config_hash: str
    kind: str
    times: tuple
    eps: float
    values: np.ndarray
    normalization: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise BMLabError("non-finite ensemble value")
        self.values.setflags(write=False)

    @property
    def replicates(self) -> int:
        return self.values.shape[0]

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i]

    def mean(self, i: int) -> float:
        return math.fsum(self.values[:, i]) / self.replicates

    def var(self, i: int) -> float:
        return empirical_cov(self, i, i)[0]

    def rows(self):
        for r in range(self.replicates):
            for t, v in zip(self.times, self.values[r]):
                yield r, self.kind, self.eps, t, float(v)


def _block_values(cfg: EnsembleConfig, plan, reps) -> np.ndarray:
    x = sample_block(plan, cfg.seed, reps)
    m, e, d = cfg.model, cfg.expansion, cfg.delta
    if cfg.kind == "Z":
        out = fn.z_array(x, e, cfg.eps, d, cfg.times)
    elif cfg.kind == "F":
        out = fn.f_array(m, x, e, cfg.eps, d, cfg.times)
    elif cfg.kind == "length":
        out = fn.length_array(x, cfg.eps, d, cfg.times)
    else:
        out = fn.length_fluctuation_array(m, x, cfg.eps, d, cfg.times, cfg.regime)
    return out * cfg.scale()


def run_ensemble(cfg: EnsembleConfig) -> FluctuationEnsemble:
    """R replicates of the configured functional, row r from substream r."""
    plan = plan_for(cfg.model, cfg.grid_points(), cfg.delta)
    R = cfg.replicates
    chunks = [list(range(b, min(b + BLOCK, R))) for b in range(0, R, BLOCK)]

    def work(reps):
        try:
            return _block_values(cfg, plan, reps)
        except BMLabError as exc:
            exc.args = (f"replicate block starting at {reps[0]}: {exc}",)
            raise

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    vals = np.concatenate(parts, axis=0)
    return FluctuationEnsemble(cfg.config_hash, cfg.kind, cfg.times, cfg.eps, vals, cfg.scale())


# ---------------------------------------------------------------------------
# statistics


def _cov_from(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    R = len(x)
    if R < 2:
        raise PreconditionError("need at least two replicates")
    # center first for accuracy, then a closed-form jackknife
    mx, my = math.fsum(x) / R, math.fsum(y) / R
    dx, dy = x - mx, y - my
    est = math.fsum(dx * dy) / (R - 1)
    if R < 3:
        return est, float("nan")
    sdx, sdy = math.fsum(dx), math.fsum(dy)
    sdxy = math.fsum(dx * dy)
    loo = (sdxy - dx * dy - (sdx - dx) * (sdy - dy) / (R - 1)) / (R - 2)
    lm = math.fsum(loo) / R
    se = math.sqrt((R - 1) / R * math.fsum((loo - lm) ** 2))
    return est, se


def empirical_cov(ens: FluctuationEnsemble, i: int, j: int) -> tuple[float, float]:
    """Unbiased covariance of columns i and j with its jackknife standard error."""
    return _cov_from(ens.values[:, i], ens.values[:, j])


def sample_variance(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return _cov_from(x, x)


def normal_cdf(x):
    x = np.asarray(x, dtype=float)
    erf = np.vectorize(math.erf, otypes=[float])
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0)))


def kolmogorov_sf(x: float) -> float:
    """P(K > x) for the Kolmogorov distribution."""
    if x <= 0:
        return 1.0
    if x < 1.0:
        s = sum(math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * x * x)) for k in range(1, 21))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / x * s))
    s = sum((-1) ** (k - 1) * math.exp(-2 * k * k * x * x) for k in range(1, 21))
    return min(1.0, max(0.0, 2.0 * s))


def ks_normal_test(samples, mean: float, var: float) -> tuple[float, float]:
    """One-sample Kolmogorov statistic against N(mean, var) and asymptotic p-value."""
    if not var > 0:
        raise PreconditionError("variance must be positive")
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < 20:
        raise PreconditionError("need at least 20 samples")
    F = normal_cdf((x - mean) / math.sqrt(var))
    i = np.arange(1, n + 1)
    stat = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    return stat, kolmogorov_sf(math.sqrt(n) * stat)


def moment_scaling(increments_by_gap: dict, p: float) -> float:
    """Least-squares slope of log E|increment|^p against log gap."""
    if len(increments_by_gap) < 4:
        raise FitError("need at least four gap sizes")
    gaps, moms = [], []
    for g, inc in sorted(increments_by_gap.items()):
        inc = np.asarray(inc, dtype=float)
        mom = math.fsum(np.abs(inc) ** p) / len(inc)
        if not (g > 0 and mom > 0 and math.isfinite(mom)):
            raise FitError(f"degenerate moment {mom} at gap {g}")
        gaps.append(math.log(g))
        moms.append(math.log(mom))
    if len(set(gaps)) < 2:
        raise FitError("gaps are not distinct")
    return float(np.polyfit(gaps, moms, 1)[0])


def dyadic_increments(ens: FluctuationEnsemble, gaps) -> dict:
    """Pool Z(t) - Z(s) over all ensemble time pairs at each gap."""
    times = np.asarray(ens.times)
    out = {}
    for g in gaps:
        cols = []
        for i, s in enumerate(times):
            j = np.flatnonzero(np.abs(times - (s + g)) < 1e-12)
            if len(j):
                cols.append(ens.values[:, j[0]] - ens.values[:, i])
        if cols:
            out[g] = np.concatenate(cols)
    return out


# ---------------------------------------------------------------------------
# exact variance of the discrete estimator


def _chaos_kernel(e: HermiteExpansion) -> np.ndarray:
    return np.array([0.0] + [c * c * math.factorial(q) for q, c in enumerate(e.coeffs) if q > 0])


def _lag_autocorr(w: np.ndarray) -> np.ndarray:
    """A(l) = sum_j w_j w_{j+l} for weights delta, ..., delta, last."""
    n = len(w)
    delta, last = w[0], w[-1]
    lags = np.arange(n)
    if n == 1:
        return np.array([last * last])
    # pairs among the n-1 full cells plus the pair touching the last cell
    A = delta * delta * np.maximum(n - 1 - lags, 0).astype(float)
    A[1:] += delta * last
    A[0] += last * last
    return A


def discretized_variance(e: HermiteExpansion, corr, eps: float, delta: float, t: float) -> float:
    """Exact variance of sqrt(eps) sum_j w_j f(Y(s_j)) over [0, t/eps].

    ``corr`` is a StationaryModel (lags k delta), a SelfSimilarModel (unit
    increments, exact correlations) or a callable (u, v) -> correlation.
    """
    w = fn.riemann_weights(t / eps, delta)
    n = len(w)
    kern = _chaos_kernel(e)
    if not np.any(kern):
        return 0.0
    G = lambda r: np.polynomial.polynomial.polyval(r, kern)  # noqa: E731
    stationary = isinstance(corr, StationaryModel) or (
        isinstance(corr, SelfSimilarModel) and corr.kind == "fbm")
    if stationary:
        if n > STATIONARY_GUARD:
            raise SizeError(f"{n} grid points exceed the guard {STATIONARY_GUARD}")
        rho = corr if isinstance(corr, StationaryModel) else StationaryModel.fgn(corr.params[0])
        A = _lag_autocorr(w)
        r = np.asarray(rho.rho(np.arange(n) * delta), dtype=float)
        g = G(r)
        total = A[0] * g[0] + 2.0 * math.fsum(A[1:] * g[1:])
        return eps * total
    if n > DENSE_GUARD:
        raise SizeError(f"{n} grid points exceed the dense guard {DENSE_GUARD}")
    u = np.arange(n) * delta
    if isinstance(corr, SelfSimilarModel):
        fcorr = lambda a, b: increment_corr_scaled(corr, 1.0, 1.0, a, b)  # noqa: E731
    else:
        fcorr = corr
    parts = []
    step = max(1, 2**22 // n)
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        r = np.asarray(fcorr(u[lo:hi, None], u[None, :]), dtype=float)
        parts.append(float(w[lo:hi] @ G(r) @ w))
    return eps * math.fsum(parts)


def _abs_pair_cov(r):
    """Cov(|X|, |Y|) for standard normals with correlation r."""
    r = np.clip(r, -1.0, 1.0)
    return (2.0 / math.pi) * (r * np.arcsin(r) + np.sqrt(1.0 - r * r) - 1.0)


def length_discretized_variance(m: SelfSimilarModel, eps: float, delta: float, t: float) -> float:
    """Exact variance of the scaled, discretized length fluctuation at time t.

    Uses the closed form of Cov(|X|, |Y|) for jointly Gaussian increments,
    so no chaos truncation is involved.
    """
    k = fn.lag_steps_for(eps, delta)
    w = fn.riemann_weights(t, delta)
    n = len(w)
    scale = (fn.length_scale(m, eps) / eps) ** 2
    if m.kind == "fbm":
        if n > STATIONARY_GUARD:
            raise SizeError(f"{n} grid points exceed the guard {STATIONARY_GUARD}")
        H = m.params[0]
        r = np.asarray(a_alpha(2 * H, np.arange(n) / k), dtype=float)
        A = _lag_autocorr(w)
        g = _abs_pair_cov(r)
        return scale * eps ** (2 * H) * (A[0] * g[0] + 2.0 * math.fsum(A[1:] * g[1:]))
    if n > DENSE_GUARD:
        raise SizeError(f"{n} grid points exceed the dense guard {DENSE_GUARD}")
    u = np.arange(n) * delta
    sd = np.sqrt(np.asarray(m.increment_cov(u, u, eps, eps), dtype=float))
    ws = w * sd
    parts = []
    step = max(1, 2**22 // n)
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        c = np.asarray(m.increment_cov(u[lo:hi, None], u[None, :], eps, eps), dtype=float)
        r = c / np.outer(sd[lo:hi], sd)
        parts.append(float(ws[lo:hi] @ _abs_pair_cov(r) @ ws))
    return scale * math.fsum(parts)
