"""Exact Gaussian path sampling on uniform grids.

Stationary correlations use circulant embedding, fBm is the cumulative sum
of fGn, and other self-similar models use a Cholesky factor computed once
per plan. Randomness comes from a counter-based generator with one
substream per (seed, replicate); replicates are always produced in fixed
blocks of ``BLOCK`` so that a replicate's bits never depend on how many
others are requested alongside it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import lapack
from scipy.special import ndtri

from .errors import (
    AlignmentError,
    DegeneracyError,
    EmbeddingError,
    InputError,
    NotPositiveDefiniteError,
    SizeError,
)
from .models import SelfSimilarModel, StationaryModel

BLOCK = 64
CHOLESKY_CAP = 2**13
EMBED_GROWTH_CAP = 2**10
DEFAULT_TOL_PSD = 1e-10
_U_OFFSET = 2.0**-54
_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# random streams


def substream(seed: int, replicate: int) -> np.random.Generator:
    """Philox generator keyed by (seed, replicate)."""
    if seed < 0 or replicate < 0:
        raise InputError("seed and replicate must be nonnegative")
    key = ((int(seed) & _MASK64) << 64) | (int(replicate) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def normals(seed: int, replicate: int, n: int) -> np.ndarray:
    """n standard normals by inverse CDF, one uniform each."""
    u = substream(seed, replicate).random(n) + _U_OFFSET
    return ndtri(u)


def _block_normals(seed: int, block: int, n: int) -> np.ndarray:
    first = block * BLOCK
    return np.stack([normals(seed, first + i, n) for i in range(BLOCK)])


def _blocks_for(replicates) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for r in replicates:
        out.setdefault(int(r) // BLOCK, []).append(int(r))
    return out


# ---------------------------------------------------------------------------
# containers


@dataclass
class GridPath:
    delta: float
    values: np.ndarray
    model_id: str
    seed: int
    replicate: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise InputError("a grid path needs at least two points")
        if not np.all(np.isfinite(self.values)):
            raise InputError("non-finite path value")

    @property
    def n(self) -> int:
        return len(self.values)

    def header(self) -> dict:
        return {"n": self.n, "delta": self.delta, "model_id": self.model_id,
                "seed": self.seed, "replicate": self.replicate}

    def dump(self, path) -> None:
        """JSON header line followed by little-endian float64 values."""
        with open(path, "wb") as fh:
            fh.write((json.dumps(self.header(), sort_keys=True) + "\n").encode())
            fh.write(self.values.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GridPath":
        with open(path, "rb") as fh:
            head = json.loads(fh.readline().decode())
            vals = np.frombuffer(fh.read(), dtype="<f8")
        if len(vals) != head["n"]:
            raise InputError("path dump is truncated")
        return cls(head["delta"], vals.copy(), head["model_id"], head["seed"], head["replicate"])


@dataclass(frozen=True)
class SamplerPlan:
    kind: str  # circulant, unit_increments, fbm or cholesky
    n: int
    delta: float
    model_id: str
    embed_size: int = 0
    sqrt_spectrum: np.ndarray | None = field(default=None, repr=False, compare=False)
    factor: np.ndarray | None = field(default=None, repr=False, compare=False)
    min_eigenvalue: float = 0.0
    clipped_mass: float = 0.0
    total_mass: float = 0.0
    jittered: bool = False
    hurst: float | None = None
    inner: "SamplerPlan | None" = field(default=None, repr=False, compare=False)

    @property
    def clipped_fraction(self) -> float:
        return self.clipped_mass / self.total_mass if self.total_mass else 0.0


# ---------------------------------------------------------------------------
# circulant embedding


def _next_pow2(k: int) -> int:
    return 1 << max(0, int(k - 1).bit_length())


def plan_circulant(rho: StationaryModel, n: int, delta: float = 1.0,
                   tol_psd: float = DEFAULT_TOL_PSD) -> SamplerPlan:
    """Embed rho(k delta), k = 0..n-1, in a nonnegative circulant of size 2m."""
    if n < 2:
        raise InputError("n must be at least 2")
    if delta <= 0:
        raise InputError("delta must be positive")
    m = _next_pow2(n - 1)
    while True:
        row = np.asarray(rho.rho(np.arange(m + 1) * delta), dtype=float)
        circ = np.concatenate([row, row[-2:0:-1]])
        lam = np.fft.rfft(circ).real
        lam_full = np.concatenate([lam, lam[-2:0:-1]])
        top = lam_full.max()
        low = lam_full.min()
        if low >= -tol_psd * top or 2 * m > EMBED_GROWTH_CAP * n:
            break
        m *= 2
    if low < -tol_psd * top:
        raise EmbeddingError(
            f"circulant embedding not nonnegative (min eigenvalue {low:.3g}) at size {2 * m}",
            min_eigenvalue=float(low))
    clipped = float(np.abs(lam_full[lam_full < 0]).sum())
    lam_full = np.clip(lam_full, 0.0, None)
    size = 2 * m
    return SamplerPlan("circulant", n, delta, rho.model_id, size,
                       sqrt_spectrum=np.sqrt(lam_full / size), min_eigenvalue=float(low),
                       clipped_mass=clipped, total_mass=float(lam_full.sum()))


def _circulant_block(plan: SamplerPlan, seed: int, block: int) -> np.ndarray:
    size = plan.embed_size
    z = _block_normals(seed, block, 2 * size)
    w = plan.sqrt_spectrum * (z[:, :size] + 1j * z[:, size:])
    return np.fft.fft(w, axis=1).real[:, : plan.n]


def sample_stationary(plan: SamplerPlan, seed: int, replicate: int) -> GridPath:
    if plan.kind not in ("circulant", "unit_increments"):
        raise InputError("sample_stationary needs a stationary plan")
    vals = sample_block(plan, seed, [replicate])[0]
    return GridPath(plan.delta, vals, plan.model_id, seed, replicate)


# ---------------------------------------------------------------------------
# fBm


@lru_cache(maxsize=16)
def _fgn_plan(H: float, n_incr: int) -> SamplerPlan:
    return plan_circulant(StationaryModel.fgn(H), n_incr, 1.0)


def plan_fbm(H: float, n: int, delta: float) -> SamplerPlan:
    """fBm on n grid points as the cumulative sum of n-1 fGn steps."""
    if not 0 < H < 1:
        raise InputError("H must lie in (0, 1)")
    if n < 2:
        raise InputError("n must be at least 2")
    inner = _fgn_plan(float(H), n - 1)
    return SamplerPlan("fbm", n, delta, SelfSimilarModel.fbm(H).model_id, inner.embed_size,
                       min_eigenvalue=inner.min_eigenvalue, clipped_mass=inner.clipped_mass,
                       total_mass=inner.total_mass, hurst=float(H), inner=inner)


def _fbm_block(plan: SamplerPlan, seed: int, block: int) -> np.ndarray:
    incr = _circulant_block(plan.inner, seed, block)
    out = np.zeros((BLOCK, plan.n))
    np.cumsum(incr, axis=1, out=out[:, 1:])
    return out * plan.delta**plan.hurst


def sample_fbm(H: float, n: int, delta: float, seed: int, replicate: int) -> GridPath:
    plan = plan_fbm(H, n, delta)
    return GridPath(delta, sample_block(plan, seed, [replicate])[0], plan.model_id, seed, replicate)


# ---------------------------------------------------------------------------
# Cholesky


def covariance_matrix(m: SelfSimilarModel, n: int, delta: float) -> np.ndarray:
    """Covariance of X(k delta), k = 1..n-1 (X(0) = 0 is pinned)."""
    t = np.arange(1, n) * delta
    return np.asarray(m.cov(t[:, None], t[None, :]), dtype=float)


def plan_cholesky(m: SelfSimilarModel, n: int, delta: float) -> SamplerPlan:
    if n < 2:
        raise InputError("n must be at least 2")
    if n > CHOLESKY_CAP:
        raise SizeError(f"Cholesky grid of {n} points exceeds the cap {CHOLESKY_CAP}")
    cov = covariance_matrix(m, n, delta)
    fac, info = lapack.dpotrf(cov, lower=1, clean=1)
    jittered = False
    if info != 0:
        jitter = 1e-12 * float(np.max(np.diag(cov)))
        fac, info = lapack.dpotrf(cov + jitter * np.eye(len(cov)), lower=1, clean=1)
        jittered = True
    if info != 0:
        raise NotPositiveDefiniteError(
            f"covariance not positive definite at pivot {info}", pivot=int(info))
    return SamplerPlan("cholesky", n, delta, m.model_id, factor=np.ascontiguousarray(fac),
                       jittered=jittered)


def _cholesky_block(plan: SamplerPlan, seed: int, block: int) -> np.ndarray:
    z = _block_normals(seed, block, plan.n - 1)
    out = np.zeros((BLOCK, plan.n))
    out[:, 1:] = z @ plan.factor.T
    return out


def sample_self_similar(plan: SamplerPlan, seed: int, replicate: int) -> GridPath:
    if plan.kind not in ("cholesky", "fbm"):
        raise InputError("sample_self_similar needs a Cholesky or fBm plan")
    vals = sample_block(plan, seed, [replicate])[0]
    return GridPath(plan.delta, vals, plan.model_id, seed, replicate)


def plan_unit_increments(alpha: float, n: int, delta: float) -> SamplerPlan:
    """Stationary a_alpha on a grid of step 1/L as unit-lag differences of fBm.

    Exact, and far cheaper than embedding a_alpha(k delta) directly, whose
    circulant needs many doublings on fine grids.
    """
    L = lag_steps_for(1.0, delta)
    H = alpha / 2.0
    inner = plan_fbm(H, n + L, delta)
    return SamplerPlan("unit_increments", n, delta, StationaryModel.a(alpha).model_id,
                       inner.embed_size, min_eigenvalue=inner.min_eigenvalue,
                       clipped_mass=inner.clipped_mass, total_mass=inner.total_mass,
                       hurst=H, inner=inner)


def _unit_increments_block(plan: SamplerPlan, seed: int, block: int) -> np.ndarray:
    x = _fbm_block(plan.inner, seed, block)
    L = plan.inner.n - plan.n
    return x[:, L:] - x[:, :-L]


def plan_for(m, n: int, delta: float) -> SamplerPlan:
    """Exact sampler for a model: fBm differences for the a_alpha family on
    grids with 1/delta integer, circulant for other stationary models, fGn
    cumsum for fBm, Cholesky otherwise."""
    if isinstance(m, StationaryModel):
        if m.alpha is not None and m.alpha < 2:
            try:
                return plan_unit_increments(m.alpha, n, delta)
            except AlignmentError:
                pass
        return plan_circulant(m, n, delta)
    if m.kind == "fbm":
        return plan_fbm(m.params[0], n, delta)
    return plan_cholesky(m, n, delta)


_BLOCK_FN = {"circulant": _circulant_block, "fbm": _fbm_block, "cholesky": _cholesky_block,
             "unit_increments": _unit_increments_block}


def sample_block(plan: SamplerPlan, seed: int, replicates) -> np.ndarray:
    """Rows of sampled values for the given replicate indices, in order."""
    reps = [int(r) for r in replicates]
    out = np.empty((len(reps), plan.n))
    pos = {r: i for i, r in enumerate(reps)}
    for block, members in _blocks_for(reps).items():
        rows = _BLOCK_FN[plan.kind](plan, seed, block)
        for r in members:
            out[pos[r]] = rows[r - block * BLOCK]
    return out


# ---------------------------------------------------------------------------
# increments


def increment_sd_on_grid(m, n_out: int, lag_steps: int, delta: float) -> np.ndarray:
    """Exact standard deviation of X(u_j + lag) - X(u_j) on the grid."""
    lag = lag_steps * delta
    if isinstance(m, StationaryModel):
        v = 2.0 * (1.0 - float(m.rho(lag)))
        if v <= 0:
            raise DegeneracyError("increment variance vanishes")
        return np.full(n_out, math.sqrt(v))
    if m.kind == "fbm":
        return np.full(n_out, lag ** m.params[0])
    u = np.arange(n_out) * delta
    v = np.asarray(m.increment_cov(u, u, lag), dtype=float)
    if np.any(v <= 0):
        raise DegeneracyError(f"increment variance vanishes at u={u[np.argmax(v <= 0)]}")
    return np.sqrt(v)


def lag_steps_for(lag: float, delta: float) -> int:
    k = round(lag / delta)
    if k < 1 or abs(k * delta - lag) > 1e-9 * lag:
        raise AlignmentError(f"lag {lag} is not a positive multiple of the grid step {delta}")
    return int(k)


def normalized_increments_array(values: np.ndarray, lag_steps: int, sd: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    return (values[..., lag_steps:] - values[..., :-lag_steps]) / sd


def normalized_increments(path: GridPath, lag_steps: int, m) -> GridPath:
    """(X(u+lag) - X(u)) / ||X(u+lag) - X(u)|| with exact model denominators."""
    if lag_steps < 1:
        raise InputError("lag_steps must be >= 1")
    if path.n <= lag_steps + 1:
        raise InputError("path too short for this lag")
    n_out = path.n - lag_steps
    sd = increment_sd_on_grid(m, n_out, lag_steps, path.delta)
    vals = normalized_increments_array(path.values, lag_steps, sd)
    return GridPath(path.delta, vals, path.model_id, path.seed, path.replicate)
