"""Probabilists' Hermite polynomials and chaos expansions on (R, gamma).

All projections are taken against the standard Gaussian measure gamma, so
E[H_q(N) H_r(N)] = q! 1{q=r} for N ~ N(0, 1).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import (
    EmptyExpansionError,
    EvaluationError,
    PreconditionError,
    RankUndeterminedError,
    UnsupportedOrderError,
)

MAX_ORDER = 200
DEFAULT_QMAX = 16
DEFAULT_RANK_TOL = 1e-8
# Truncation of the real line for piecewise (kinked) integrands.
_PIECEWISE_HALF_WIDTH = 40.0
_PIECEWISE_NODES = 160


def eval_hermite(q: int, x):
    """H_q(x) by the recurrence H_{q+1} = x H_q - q H_{q-1}."""
    if q < 0 or q > MAX_ORDER:
        raise UnsupportedOrderError(f"Hermite order {q} outside [0, {MAX_ORDER}]")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if q == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for k in range(1, q):
        h_prev, h = h, x * h - k * h_prev
    return h if h.ndim else float(h)


def hermite_table(qmax: int, x) -> np.ndarray:
    """Rows H_0(x), ..., H_qmax(x)."""
    if qmax > MAX_ORDER:
        raise UnsupportedOrderError(f"Hermite order {qmax} outside [0, {MAX_ORDER}]")
    x = np.asarray(x, dtype=float)
    out = np.empty((qmax + 1,) + x.shape)
    out[0] = 1.0
    if qmax >= 1:
        out[1] = x
    for k in range(1, qmax):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


@lru_cache(maxsize=64)
def _gauss_hermite_cached(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Seeds from the symmetric Jacobi matrix, then Newton on the orthonormal
    # recurrence for weight exp(-x^2); rescaled to the N(0,1) weight at the end.
    from scipy.linalg import eigh_tridiagonal

    seeds = eigh_tridiagonal(np.zeros(n), np.sqrt(np.arange(1, n) / 2.0),
                             eigvals_only=True)
    z = seeds.copy()
    for _ in range(50):
        p1 = np.full(n, math.pi ** -0.25)
        p2 = np.zeros(n)
        for j in range(1, n + 1):
            p1, p2 = z * math.sqrt(2.0 / j) * p1 - math.sqrt((j - 1) / j) * p2, p1
        pp = math.sqrt(2.0 * n) * p2
        step = p1 / pp
        z = z - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(z))):
            break
    else:
        raise EvaluationError("Gauss-Hermite Newton iteration did not converge")
    # recompute the derivative at the converged roots
    p1 = np.full(n, math.pi ** -0.25)
    p2 = np.zeros(n)
    for j in range(1, n + 1):
        p1, p2 = z * math.sqrt(2.0 / j) * p1 - math.sqrt((j - 1) / j) * p2, p1
    pp = math.sqrt(2.0 * n) * p2
    z = 0.5 * (z - z[::-1])  # exact symmetry
    nodes = math.sqrt(2.0) * z
    weights = 2.0 / (pp * pp) / math.sqrt(math.pi)
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with sum_i w_i g(x_i) ~ E[g(N)], N ~ N(0, 1)."""
    if n < 1:
        raise PreconditionError("need at least one node")
    return _gauss_hermite_cached(int(n))


@lru_cache(maxsize=8)
def _piecewise_rule(breakpoints: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
    cuts = sorted({-_PIECEWISE_HALF_WIDTH, _PIECEWISE_HALF_WIDTH,
                   *[b for b in breakpoints if abs(b) < _PIECEWISE_HALF_WIDTH]})
    t, wt = np.polynomial.legendre.leggauss(_PIECEWISE_NODES)
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        xs = 0.5 * (b - a) * t + 0.5 * (a + b)
        nodes.append(xs)
        weights.append(0.5 * (b - a) * wt * np.exp(-0.5 * xs**2) / math.sqrt(2 * math.pi))
    return np.concatenate(nodes), np.concatenate(weights)


def _quadrature(n_nodes: int, breakpoints: Sequence[float] | None):
    if breakpoints is None:
        return gauss_hermite(n_nodes)
    return _piecewise_rule(tuple(float(b) for b in breakpoints))


def _evaluate(f: Callable, nodes: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(nodes), dtype=float)
    if vals.shape != nodes.shape:
        vals = np.array([float(f(x)) for x in nodes])
    bad = ~np.isfinite(vals)
    if bad.any():
        node = float(nodes[np.argmax(bad)])
        raise EvaluationError(f"non-finite function value at node x={node!r}", node=node)
    return vals


@dataclass(frozen=True)
class HermiteExpansion:
    """Truncated expansion f = sum_q coeffs[q] H_q."""

    coeffs: tuple[float, ...]
    rank: int = 0
    tol_rank: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if not c:
            raise EmptyExpansionError("expansion has no coefficients")
        energy = sum(v * v * math.factorial(q) for q, v in enumerate(c))
        if not math.isfinite(energy):
            raise EvaluationError("sum c_q^2 q! overflows")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[float], tol: float = DEFAULT_RANK_TOL):
        c = tuple(float(v) for v in coeffs)
        return cls(c, rank=_rank_or_zero(c, tol), tol_rank=tol)

    @property
    def qmax(self) -> int:
        return len(self.coeffs) - 1

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coeffs)

    @property
    def mean(self) -> float:
        return self.coeffs[0]

    def variance(self) -> float:
        return sum(c * c * math.factorial(q) for q, c in enumerate(self.coeffs) if q >= 1)

    def centered(self) -> "HermiteExpansion":
        return HermiteExpansion.from_coeffs((0.0,) + self.coeffs[1:], self.tol_rank)

    def __call__(self, x):
        return np.polynomial.hermite_e.hermeval(np.asarray(x, dtype=float), self.array)

    def __add__(self, other: "HermiteExpansion") -> "HermiteExpansion":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[: len(self.coeffs)] += self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return HermiteExpansion.from_coeffs(a, self.tol_rank)

    def to_json(self) -> str:
        return json.dumps({"qmax": self.qmax, "coeffs": list(self.coeffs), "rank": self.rank})

    @classmethod
    def from_json(cls, text: str) -> "HermiteExpansion":
        obj = json.loads(text)
        coeffs = obj["coeffs"]
        if len(coeffs) != obj.get("qmax", len(coeffs) - 1) + 1:
            raise PreconditionError("qmax does not match coefficient count")
        return cls.from_coeffs(coeffs)


def _rank_or_zero(coeffs: Sequence[float], tol: float) -> int:
    try:
        return _rank(coeffs, tol)
    except RankUndeterminedError:
        return 0


def _rank(coeffs: Sequence[float], tol: float) -> int:
    tail = np.abs(np.asarray(coeffs[1:], dtype=float))
    if tail.size == 0 or tail.max() == 0.0:
        raise RankUndeterminedError("all coefficients of order >= 1 vanish")
    cut = tol * tail.max()
    above = np.nonzero(tail > cut)[0]
    return int(above[0]) + 1


def hermite_rank(e: HermiteExpansion, tol: float = DEFAULT_RANK_TOL) -> int:
    """Smallest q >= 1 with |c_q| > tol * max_{q>=1} |c_q|."""
    return _rank(e.coeffs, tol)


def project(f: Callable, qmax: int = DEFAULT_QMAX, n_nodes: int | None = None,
            breakpoints: Sequence[float] | None = None,
            tol: float = DEFAULT_RANK_TOL) -> HermiteExpansion:
    """Chaos coefficients c_q = E[f(N) H_q(N)] / q!.

    Gauss-Hermite quadrature by default. If ``f`` has kinks, pass their
    locations as ``breakpoints``; the integral is then split there and each
    piece done by Gauss-Legendre against the Gaussian density, which keeps
    full accuracy where Gauss-Hermite would converge only algebraically.
    """
    if n_nodes is None:
        n_nodes = 2 * qmax + 16
    if breakpoints is None and n_nodes < 2 * qmax + 2:
        raise PreconditionError(f"n_nodes={n_nodes} < 2*qmax+2={2 * qmax + 2}")
    nodes, weights = _quadrature(n_nodes, breakpoints)
    vals = _evaluate(f, nodes)
    table = hermite_table(qmax, nodes)
    fact = np.array([math.factorial(q) for q in range(qmax + 1)], dtype=float)
    coeffs = table @ (weights * vals) / fact
    return HermiteExpansion.from_coeffs(coeffs, tol)


def abs_coefficient(q: int) -> float:
    """Exact chaos coefficient of |x| at order q."""
    if q == 0:
        return math.sqrt(2.0 / math.pi)
    if q % 2:
        return 0.0
    k = q // 2
    return math.sqrt(2.0 / math.pi) * (-1) ** (k + 1) / (2**k * math.factorial(k) * (2 * k - 1))


def abs_coefficient_as_printed(q: int) -> float:
    """The coefficient 1/(k!(2k-1)) at q = 2k, as it is often quoted.

    It omits the factor sqrt(2/pi) (-1)^(k+1) 2^-k and therefore does not
    reproduce |x|; kept only for side-by-side reporting.
    """
    if q == 0:
        return math.sqrt(2.0 / math.pi)
    if q % 2:
        return 0.0
    k = q // 2
    return 1.0 / (math.factorial(k) * (2 * k - 1))


def abs_expansion(qmax: int = DEFAULT_QMAX, centered: bool = False,
                  convention: str = "exact") -> HermiteExpansion:
    """Closed-form chaos expansion of |x| (or |x| - sqrt(2/pi))."""
    if qmax < 2:
        raise PreconditionError("qmax must be at least 2")
    coef = {"exact": abs_coefficient, "printed": abs_coefficient_as_printed}[convention]
    c = [coef(q) for q in range(qmax + 1)]
    if centered:
        c[0] = 0.0
    return HermiteExpansion.from_coeffs(c)


def shift_expansion(e: HermiteExpansion, d: int) -> HermiteExpansion:
    """f_d = sum_{q>=d} c_q H_{q-d}: the coefficient index moved down by d."""
    if d > e.qmax:
        raise EmptyExpansionError(f"shift {d} exceeds qmax {e.qmax}")
    if e.rank and d > e.rank:
        raise PreconditionError(f"shift {d} exceeds Hermite rank {e.rank}")
    return HermiteExpansion.from_coeffs(e.coeffs[d:], e.tol_rank)


def malliavin_apply(op: str, e: HermiteExpansion) -> HermiteExpansion:
    """Coefficient action of D (g'), delta (xg - g') or L^{-1}."""
    c = e.array
    if op == "D":
        if len(c) == 1:
            return HermiteExpansion.from_coeffs([0.0], e.tol_rank)
        out = c[1:] * np.arange(1, len(c))
    elif op == "delta":
        out = np.concatenate([[0.0], c])
    elif op == "Linv":
        if abs(c[0]) > e.tol_rank * max(1.0, np.abs(c).max()):
            raise PreconditionError("L^{-1} needs a centered expansion (c_0 = 0)")
        out = np.zeros_like(c)
        out[1:] = -c[1:] / np.arange(1, len(c))
    else:
        raise PreconditionError(f"unknown operator {op!r}")
    return HermiteExpansion.from_coeffs(out, e.tol_rank)


def lp_norm_gaussian(f: Callable, p: float, n_nodes: int = 64,
                     breakpoints: Sequence[float] | None = None) -> float:
    """(E|f(N)|^p)^(1/p)."""
    if not (p > 0 and math.isfinite(p)):
        raise PreconditionError("p must be finite and positive")
    nodes, weights = _quadrature(n_nodes, breakpoints)
    vals = _evaluate(f, nodes)
    return float(np.dot(weights, np.abs(vals) ** p)) ** (1.0 / p)


# Named pointwise functions usable from configs and the CLI.
POINTWISE = {
    "abs": (lambda x: np.abs(x), (0.0,)),
    "abs_centered": (lambda x: np.abs(x) - math.sqrt(2.0 / math.pi), (0.0,)),
    "hermite2": (lambda x: np.asarray(x) ** 2 - 1.0, None),
    "hermite1": (lambda x: np.asarray(x, dtype=float), None),
    "cube": (lambda x: np.asarray(x) ** 3, None),
}


def builtin_expansion(name: str, qmax: int = DEFAULT_QMAX) -> HermiteExpansion:
    """Expansion for a named function; raises KeyError for unknown names."""
    if name == "abs":
        return abs_expansion(qmax)
    if name == "abs_centered":
        return abs_expansion(qmax, centered=True)
    f, bp = POINTWISE[name]
    return project(f, qmax, breakpoints=bp)
