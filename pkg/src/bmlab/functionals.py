"""Path functionals: Z_eps, F_eps, the regularized length and its fluctuation.

All integrals are left-rectangle Riemann sums on the sampling grid, with
the last partial cell weighted by the fraction it covers. The ``*_array``
functions work on stacked replicates (rows) and back the GridPath API.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .asymptotics import RegimeReport, classify_regime, normalization
from .errors import CoverageError, InputError, RegimeError
from .hermite import HermiteExpansion
from .models import SelfSimilarModel, StationaryModel
from .sampler import (
    GridPath,
    increment_sd_on_grid,
    lag_steps_for,
    normalized_increments_array,
)

_SNAP = 1e-9
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass
class FunctionalResult:
    times: tuple
    values: np.ndarray
    eps: float
    delta: float
    normalization: float
    kind: str

    def rows(self, replicate: int):
        for t, v in zip(self.times, self.values):
            yield replicate, self.kind, self.eps, t, float(v)


def _check_times(times) -> tuple:
    times = tuple(float(t) for t in times)
    if not times:
        raise InputError("need at least one time")
    if any(t < 0 for t in times):
        raise InputError("times must be nonnegative")
    return times


def cells(end: float, delta: float) -> tuple[int, float]:
    """Full cells and trailing fraction (in time units) covering [0, end]."""
    k = end / delta
    full = int(math.floor(k + _SNAP))
    part = end - full * delta
    if part < _SNAP * delta:
        part = 0.0
    return full, part


def needed_points(end: float, delta: float) -> int:
    full, part = cells(end, delta)
    return full + (1 if part > 0 else 0)


def riemann_weights(end: float, delta: float) -> np.ndarray:
    full, part = cells(end, delta)
    w = np.full(full + (1 if part > 0 else 0), delta)
    if part > 0:
        w[-1] = part
    return w


def riemann_sums(vals: np.ndarray, delta: float, ends) -> np.ndarray:
    """sum_j w_j(end) vals[..., j] for each end, stacked on the last axis."""
    vals = np.asarray(vals, dtype=float)
    out = np.empty(vals.shape[:-1] + (len(ends),))
    for i, end in enumerate(ends):
        full, part = cells(end, delta)
        if full + (1 if part > 0 else 0) > vals.shape[-1]:
            raise CoverageError(
                f"grid covers {vals.shape[-1] * delta:g} but {end:g} is required")
        acc = delta * np.sum(vals[..., :full], axis=-1)
        if part > 0:
            acc = acc + part * vals[..., full]
        out[..., i] = acc
    return out


def _as_function(e) -> Callable:
    if isinstance(e, HermiteExpansion):
        return e.centered() if e.coeffs[0] != 0.0 else e
    if callable(e):
        return e
    raise InputError("expected a HermiteExpansion or a callable")


# ---------------------------------------------------------------------------
# Z and F


def z_array(y: np.ndarray, e, eps: float, delta: float, times) -> np.ndarray:
    f = _as_function(e)
    ends = [t / eps for t in times]
    return math.sqrt(eps) * riemann_sums(f(y), delta, ends)


def compute_Z(y: GridPath, e, eps: float, times) -> FunctionalResult:
    """sqrt(eps) int_0^{t/eps} f(Y(s)) ds for a stationary sampled Y."""
    times = _check_times(times)
    vals = z_array(y.values, e, eps, y.delta, times)
    return FunctionalResult(times, vals, eps, y.delta, 1.0, "Z")


def unit_increments_array(m, x: np.ndarray, delta: float) -> np.ndarray:
    k = lag_steps_for(1.0, delta)
    n_out = np.shape(x)[-1] - k
    if n_out < 1:
        raise CoverageError("path shorter than one unit lag")
    sd = increment_sd_on_grid(m, n_out, k, delta)
    return normalized_increments_array(x, k, sd)


def f_array(m, x: np.ndarray, e, eps: float, delta: float, times) -> np.ndarray:
    y = unit_increments_array(m, x, delta)
    return z_array(y, e, eps, delta, times)


def compute_F(m: SelfSimilarModel, x: GridPath, e, eps: float, times) -> FunctionalResult:
    """sqrt(eps) int_0^{t/eps} f(Y_1(u)) du with Y_1 the normalized unit increments."""
    times = _check_times(times)
    vals = f_array(m, x.values, e, eps, x.delta, times)
    return FunctionalResult(times, vals, eps, x.delta, 1.0, "F")


# ---------------------------------------------------------------------------
# length


def length_array(x: np.ndarray, eps: float, delta: float, times) -> np.ndarray:
    k = lag_steps_for(eps, delta)
    x = np.asarray(x, dtype=float)
    d = np.abs(x[..., k:] - x[..., :-k])
    return riemann_sums(d, delta, list(times)) / eps


def regularized_length(x: GridPath, eps: float, times) -> FunctionalResult:
    """eps^{-1} int_0^t |X(u+eps) - X(u)| du."""
    times = _check_times(times)
    vals = length_array(x.values, eps, x.delta, times)
    return FunctionalResult(times, vals, eps, x.delta, 1.0, "length")


def length_mean(m, eps: float, delta: float, times) -> np.ndarray:
    """Exact mean of the discretized length at each time."""
    k = lag_steps_for(eps, delta)
    n_out = needed_points(max(times), delta)
    if isinstance(m, SelfSimilarModel) and m.kind == "fbm":
        sd = np.full(n_out, eps ** m.params[0])
    else:
        sd = increment_sd_on_grid(m, n_out, k, delta)
    return SQRT_2_OVER_PI * riemann_sums(sd, delta, list(times)) / eps


def length_regime(m: SelfSimilarModel) -> RegimeReport:
    return classify_regime(m.alpha, 2)


def length_scale(m: SelfSimilarModel, eps: float) -> float:
    """eps^{1/2 - beta} times the regime normalization for d = 2."""
    return eps ** (0.5 - m.beta) * normalization(m.alpha, 2, eps)


def _check_regime(m: SelfSimilarModel, regime) -> RegimeReport:
    actual = length_regime(m)
    if regime is not None:
        name = regime.regime if isinstance(regime, RegimeReport) else str(regime)
        if name != actual.regime:
            raise RegimeError(f"model {m.model_id} is {actual.regime}, not {name}")
    return actual


def length_fluctuation_array(m: SelfSimilarModel, x: np.ndarray, eps: float, delta: float,
                             times, regime=None) -> np.ndarray:
    _check_regime(m, regime)
    raw = length_array(x, eps, delta, times)
    return (raw - length_mean(m, eps, delta, times)) * length_scale(m, eps)


def length_fluctuation(m: SelfSimilarModel, x: GridPath, eps: float, times,
                       regime=None) -> FunctionalResult:
    """Length centered by its exact mean and scaled per regime."""
    times = _check_times(times)
    vals = length_fluctuation_array(m, x.values, eps, x.delta, times, regime)
    return FunctionalResult(times, vals, eps, x.delta, length_scale(m, eps), "length_fluct")


def is_stationary(m) -> bool:
    return isinstance(m, StationaryModel)
