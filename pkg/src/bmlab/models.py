"""Covariance models: stationary correlations and self-similar processes.

A self-similar process of order beta is described by phi(x) = E[X(1) X(x)]
on [1, inf), so that E[X(s) X(t)] = s^{2 beta} phi(t/s) for 0 < s <= t.
Under the decomposition phi(x) = psi(x) - lambda (x-1)^alpha the unit
increments behave like those of a fBm with Hurst index alpha/2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegeneracyError, EvaluationError, InputError, RangeError

_CS_SLACK = 1e-12


def a_alpha(alpha: float, h):
    """1/2 (|h-1|^alpha + |h+1|^alpha - 2|h|^alpha)."""
    h = np.abs(np.asarray(h, dtype=float))
    out = 0.5 * (np.abs(h - 1.0) ** alpha + (h + 1.0) ** alpha - 2.0 * h**alpha)
    # closed-form series for large |h| avoids cancellation
    big = h > 64.0
    if np.any(big):
        out = np.where(big, _a_alpha_series(alpha, np.where(big, h, 64.0)), out)
    return out if out.ndim else float(out)


def _a_alpha_series(alpha: float, h: np.ndarray, terms: int = 12) -> np.ndarray:
    # a_alpha(h) = sum_{k>=1} binom(alpha, 2k) h^{alpha-2k}, |h| > 1
    inv2 = 1.0 / (h * h)
    total = np.zeros_like(h)
    power = h**alpha
    for k in range(1, terms + 1):
        power = power * inv2
        total += _binom(alpha, 2 * k) * power
    return total


def _binom(a: float, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= (a - j) / (j + 1)
    return out


def a_alpha_tail_coefficients(alpha: float, terms: int = 8) -> list[tuple[float, float]]:
    """Pairs (coef, exponent) with a_alpha(h) = sum coef * h^exponent for h > 1."""
    return [(_binom(alpha, 2 * k), alpha - 2 * k) for k in range(1, terms + 1)]


# ---------------------------------------------------------------------------
# stationary correlations


@dataclass(frozen=True)
class StationaryModel:
    kind: str
    params: tuple = ()
    grid: tuple | None = None
    values: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("fgn", "a_alpha", "exponential", "white", "tabulated"):
            raise InputError(f"unknown stationary kind {self.kind!r}")
        if self.kind == "fgn" and not 0 < self.params[0] < 1:
            raise InputError("fGn needs H in (0, 1)")
        if self.kind == "a_alpha" and not 0 < self.params[0] <= 2:
            raise InputError("a_alpha needs alpha in (0, 2]")
        if self.kind == "tabulated":
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.ndim != 1 or g.shape != v.shape or g[0] != 0.0 or np.any(np.diff(g) <= 0):
                raise InputError("tabulated grid must start at 0 and increase")
            if abs(v[0] - 1.0) > 1e-12:
                raise InputError("tabulated correlation must equal 1 at lag 0")

    @classmethod
    def fgn(cls, H: float) -> "StationaryModel":
        return cls("fgn", (float(H),))

    @classmethod
    def a(cls, alpha: float) -> "StationaryModel":
        return cls("a_alpha", (float(alpha),))

    @classmethod
    def exponential(cls, theta: float) -> "StationaryModel":
        return cls("exponential", (float(theta),))

    @classmethod
    def white(cls) -> "StationaryModel":
        return cls("white")

    @classmethod
    def tabulated(cls, grid, values) -> "StationaryModel":
        return cls("tabulated", (), tuple(map(float, grid)), tuple(map(float, values)))

    @property
    def alpha(self) -> float | None:
        """Exponent of the a_alpha family, None otherwise."""
        if self.kind == "fgn":
            return 2.0 * self.params[0]
        if self.kind == "a_alpha":
            return self.params[0]
        return None

    @property
    def model_id(self) -> str:
        if self.kind == "tabulated":
            return f"tabulated[{len(self.grid)}]"
        return self.kind + (":" + ",".join(f"{p:g}" for p in self.params) if self.params else "")

    def rho(self, h):
        h = np.abs(np.asarray(h, dtype=float))
        if self.kind in ("fgn", "a_alpha"):
            out = np.asarray(a_alpha(self.alpha, h))
        elif self.kind == "exponential":
            out = np.exp(-self.params[0] * h)
        elif self.kind == "white":
            out = (h == 0.0).astype(float)
        else:
            g = np.asarray(self.grid)
            if np.any(h > g[-1]):
                raise RangeError(f"lag {float(h.max())!r} beyond tabulated range {g[-1]!r}")
            out = np.interp(h, g, np.asarray(self.values))
        if np.any(np.abs(out) > 1.0 + _CS_SLACK):
            raise EvaluationError("correlation exceeds 1 in absolute value")
        return out if out.ndim else float(out)

    __call__ = rho

    def to_dict(self) -> dict:
        if self.kind == "fgn":
            return {"kind": "fgn", "H": self.params[0]}
        if self.kind == "a_alpha":
            return {"kind": "a_alpha", "alpha": self.params[0]}
        if self.kind == "exponential":
            return {"kind": "exponential", "theta": self.params[0]}
        if self.kind == "white":
            return {"kind": "white"}
        return {"kind": "tabulated", "grid": list(self.grid), "values": list(self.values)}


def rho_eval(m: StationaryModel, h):
    return m.rho(h)


# ---------------------------------------------------------------------------
# self-similar processes


def _richardson_derivative(f: Callable, x: np.ndarray, order: int, h: np.ndarray) -> np.ndarray:
    """Central 5-point differences, one Richardson step (error O(h^6))."""

    def d(step):
        if order == 1:
            return (-f(x + 2 * step) + 8 * f(x + step) - 8 * f(x - step) + f(x - 2 * step)) / (12 * step)
        return (-f(x + 2 * step) + 16 * f(x + step) - 30 * f(x) + 16 * f(x - step)
                - f(x - 2 * step)) / (12 * step * step)

    return (16.0 * d(h / 2) - d(h)) / 15.0


@dataclass(frozen=True)
class SelfSimilarModel:
    """Self-similar centered Gaussian process described through phi and psi.

    ``lam`` is the coefficient of the singular part lambda (x-1)^alpha.
    Built-in kinds carry closed forms for psi and its derivatives; a custom
    model supplies ``psi`` (and optionally its derivatives) as callables.
    """

    kind: str
    params: tuple
    beta: float
    alpha: float
    lam: float
    h2_c: float = 2.0
    h2_nu: float | None = None
    psi_fn: Callable | None = field(default=None, compare=False, repr=False)
    dpsi_fn: Callable | None = field(default=None, compare=False, repr=False)
    d2psi_fn: Callable | None = field(default=None, compare=False, repr=False)
    expr: str | None = None

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise InputError(f"self-similarity order {self.beta} outside (0, 1)")
        if not 0 < self.alpha <= 2 * self.beta + 1e-15:
            raise InputError(f"alpha={self.alpha} outside (0, 2 beta]")
        if self.lam <= 0:
            raise InputError("lambda must be positive")
        if self.phi(1.0) <= 0:
            raise DegeneracyError("phi(1) = E[X(1)^2] must be positive")

    # constructors ----------------------------------------------------------
    @classmethod
    def fbm(cls, H: float) -> "SelfSimilarModel":
        if not 0 < H < 1:
            raise InputError("fBm needs H in (0, 1)")
        return cls("fbm", (float(H),), beta=H, alpha=2 * H, lam=0.5)

    @classmethod
    def bifbm(cls, H: float, K: float) -> "SelfSimilarModel":
        if not (0 < H < 1 and 0 < K <= 1):
            raise InputError("bifBm needs H in (0, 1), K in (0, 1]")
        return cls("bifbm", (float(H), float(K)), beta=H * K, alpha=2 * H * K, lam=2.0**-K)

    @classmethod
    def subfbm(cls, H: float) -> "SelfSimilarModel":
        if not 0 < H < 1:
            raise InputError("sub-fBm needs H in (0, 1)")
        return cls("subfbm", (float(H),), beta=H, alpha=2 * H, lam=0.5)

    @classmethod
    def custom(cls, psi: Callable, beta: float, alpha: float, lam: float,
               dpsi: Callable | None = None, d2psi: Callable | None = None,
               h2_c: float = 2.0, h2_nu: float | None = None, expr: str | None = None):
        return cls("custom", (), beta=beta, alpha=alpha, lam=lam, h2_c=h2_c, h2_nu=h2_nu,
                   psi_fn=psi, dpsi_fn=dpsi, d2psi_fn=d2psi, expr=expr)

    @classmethod
    def from_psi_expression(cls, psi: str, beta: float, alpha: float, lam: float,
                            h2_c: float = 2.0, h2_nu: float | None = None):
        """Custom model from a psi(x) expression, differentiated symbolically."""
        import sympy

        x = sympy.Symbol("x", positive=True)
        try:
            e = sympy.sympify(psi, locals={"x": x})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise InputError(f"cannot parse psi expression {psi!r}: {exc}") from None
        if e.free_symbols - {x}:
            raise InputError(f"psi expression has unknown symbols {e.free_symbols - {x}}")
        f0, f1, f2 = (sympy.lambdify(x, g, "numpy") for g in (e, e.diff(x), e.diff(x, 2)))

        def wrap(g):
            return lambda v: np.broadcast_to(np.asarray(g(np.asarray(v, dtype=float)), dtype=float),
                                             np.shape(v)).copy()

        return cls.custom(wrap(f0), beta, alpha, lam, wrap(f1), wrap(f2), h2_c, h2_nu, expr=psi)

    # identity ---------------------------------------------------------------
    @property
    def model_id(self) -> str:
        if self.kind == "custom":
            return f"custom(beta={self.beta:g},alpha={self.alpha:g},lambda={self.lam:g})"
        return self.kind + ":" + ",".join(f"{p:g}" for p in self.params)

    def to_dict(self) -> dict:
        if self.kind == "fbm":
            return {"kind": "fbm", "H": self.params[0]}
        if self.kind == "subfbm":
            return {"kind": "subfbm", "H": self.params[0]}
        if self.kind == "bifbm":
            return {"kind": "bifbm", "H": self.params[0], "K": self.params[1]}
        if self.expr is None:
            raise InputError("custom model defined by a callable cannot be serialized")
        return {"kind": "custom", "psi": self.expr, "beta": self.beta, "alpha": self.alpha,
                "lambda": self.lam, "c": self.h2_c}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    # psi / phi and derivatives ------------------------------------------------
    def psi(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "fbm":
            (H,) = self.params
            return 0.5 * (1.0 + x ** (2 * H))
        if self.kind == "bifbm":
            H, K = self.params
            return 2.0**-K * (1.0 + x ** (2 * H)) ** K
        if self.kind == "subfbm":
            (H,) = self.params
            return 1.0 + x ** (2 * H) - 0.5 * (1.0 + x) ** (2 * H)
        return np.asarray(self.psi_fn(x), dtype=float)

    def dpsi(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "fbm":
            (H,) = self.params
            return H * x ** (2 * H - 1)
        if self.kind == "bifbm":
            H, K = self.params
            return 2.0**-K * K * (1.0 + x ** (2 * H)) ** (K - 1) * 2 * H * x ** (2 * H - 1)
        if self.kind == "subfbm":
            (H,) = self.params
            return 2 * H * x ** (2 * H - 1) - H * (1.0 + x) ** (2 * H - 1)
        if self.dpsi_fn is not None:
            return np.asarray(self.dpsi_fn(x), dtype=float)
        return _richardson_derivative(self.psi, x, 1, 1e-3 * np.maximum(1.0, np.abs(x)))

    def d2psi(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "fbm":
            (H,) = self.params
            return H * (2 * H - 1) * x ** (2 * H - 2)
        if self.kind == "bifbm":
            H, K = self.params
            u = 1.0 + x ** (2 * H)
            return 2.0**-K * K * 2 * H * ((K - 1) * u ** (K - 2) * 2 * H * x ** (4 * H - 2)
                                          + u ** (K - 1) * (2 * H - 1) * x ** (2 * H - 2))
        if self.kind == "subfbm":
            (H,) = self.params
            return 2 * H * (2 * H - 1) * x ** (2 * H - 2) - H * (2 * H - 1) * (1.0 + x) ** (2 * H - 2)
        if self.d2psi_fn is not None:
            return np.asarray(self.d2psi_fn(x), dtype=float)
        return _richardson_derivative(self.psi, x, 2, 1e-2 * np.maximum(1.0, np.abs(x)))

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return self.psi(x) - self.lam * np.maximum(x - 1.0, 0.0) ** self.alpha

    def dphi(self, x):
        x = np.asarray(x, dtype=float)
        return self.dpsi(x) - self.lam * self.alpha * (x - 1.0) ** (self.alpha - 1)

    def d2phi(self, x):
        x = np.asarray(x, dtype=float)
        a = self.alpha
        return self.d2psi(x) - self.lam * a * (a - 1) * (x - 1.0) ** (a - 2)

    # covariance -------------------------------------------------------------
    def cov(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(s < 0) or np.any(t < 0):
            raise InputError("negative time")
        if self.kind == "fbm":
            (H,) = self.params
            out = 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))
        elif self.kind == "bifbm":
            H, K = self.params
            out = 2.0**-K * ((s ** (2 * H) + t ** (2 * H)) ** K - np.abs(t - s) ** (2 * H * K))
        elif self.kind == "subfbm":
            (H,) = self.params
            out = s ** (2 * H) + t ** (2 * H) - 0.5 * ((s + t) ** (2 * H) + np.abs(t - s) ** (2 * H))
        else:
            lo = np.minimum(s, t)
            hi = np.maximum(s, t)
            safe = np.where(lo > 0, lo, 1.0)
            out = np.where(lo > 0, safe ** (2 * self.beta) * self.phi(hi / safe), 0.0)
        return out if np.ndim(out) else float(out)

    def increment_cov(self, s, t, lag_s: float = 1.0, lag_t: float | None = None):
        """E[(X(s+lag_s) - X(s)) (X(t+lag_t) - X(t))]."""
        lag_t = lag_s if lag_t is None else lag_t
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.kind == "fbm":
            (H,) = self.params
            if np.any(s < 0) or np.any(t < 0):
                raise InputError("negative time")
            p = 2 * H
            d = t - s
            out = 0.5 * (np.abs(d + lag_t) ** p + np.abs(d - lag_s) ** p
                         - np.abs(d + lag_t - lag_s) ** p - np.abs(d) ** p)
            return out if np.ndim(out) else float(out)
        c = self.cov
        out = c(s + lag_s, t + lag_t) - c(s + lag_s, t) - c(s, t + lag_t) + c(s, t)
        return out

    def increment_sd(self, s, lag: float = 1.0):
        v = np.asarray(self.increment_cov(s, s, lag), dtype=float)
        if np.any(v <= 0):
            raise DegeneracyError("increment variance vanishes")
        out = np.sqrt(v)
        return out if out.ndim else float(out)

    def mixed_partial(self, u, v):
        """d^2/du dv E[X(u) X(v)] off the diagonal."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if np.any(u <= 0) or np.any(v <= 0):
            raise InputError("mixed partial needs u, v > 0")
        if np.any(u == v):
            raise DegeneracyError("mixed partial is singular on the diagonal u = v")
        d = np.abs(u - v)
        if self.kind == "fbm":
            (H,) = self.params
            out = H * (2 * H - 1) * d ** (2 * H - 2)
        elif self.kind == "bifbm":
            H, K = self.params
            out = 2.0**-K * (K * (K - 1) * (u ** (2 * H) + v ** (2 * H)) ** (K - 2) * (2 * H) ** 2
                             * (u * v) ** (2 * H - 1)
                             + 2 * H * K * (2 * H * K - 1) * d ** (2 * H * K - 2))
        elif self.kind == "subfbm":
            (H,) = self.params
            out = H * (2 * H - 1) * (d ** (2 * H - 2) - (u + v) ** (2 * H - 2))
        else:
            out = mixed_partial_fd(self, u, v, 1e-4)
        return out if np.ndim(out) else float(out)

    def to_stationary(self) -> StationaryModel:
        """Limit correlation a_alpha of the unit increments."""
        return StationaryModel.a(self.alpha)


def mixed_partial_fd(m: SelfSimilarModel, u, v, step: float):
    """Richardson-extrapolated central difference of the covariance."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)

    def d(h):
        return (m.cov(u + h, v + h) - m.cov(u + h, v - h) - m.cov(u - h, v + h)
                + m.cov(u - h, v - h)) / (4 * h * h)

    return (4.0 * d(step / 2) - d(step)) / 3.0


def model_from_dict(obj: dict):
    """Build a model from its JSON form; stationary or self-similar by kind."""
    kind = obj.get("kind")
    try:
        if kind == "fbm":
            return SelfSimilarModel.fbm(obj["H"])
        if kind == "bifbm":
            return SelfSimilarModel.bifbm(obj["H"], obj["K"])
        if kind == "subfbm":
            return SelfSimilarModel.subfbm(obj["H"])
        if kind == "custom":
            return SelfSimilarModel.from_psi_expression(
                obj["psi"], obj["beta"], obj["alpha"], obj["lambda"], obj.get("c", 2.0))
        if kind == "fgn":
            return StationaryModel.fgn(obj["H"])
        if kind == "a_alpha":
            return StationaryModel.a(obj["alpha"])
        if kind == "exponential":
            return StationaryModel.exponential(obj["theta"])
        if kind == "white":
            return StationaryModel.white()
        if kind == "tabulated":
            return StationaryModel.tabulated(obj["grid"], obj["values"])
    except KeyError as exc:
        raise InputError(f"model {kind!r} is missing field {exc}") from None
    raise InputError(f"unknown model kind {kind!r}")


def parse_model(spec: str):
    """Parse 'fbm:0.6', 'bifbm:0.6,0.75', 'fgn:0.7', 'exp:1' or a JSON object."""
    spec = spec.strip()
    if spec.startswith("{"):
        try:
            return model_from_dict(json.loads(spec))
        except json.JSONDecodeError as exc:
            raise InputError(f"bad model JSON: {exc}") from None
    name, _, rest = spec.partition(":")
    try:
        vals = [float(v) for v in rest.split(",")] if rest else []
    except ValueError:
        raise InputError(f"bad model parameters in {spec!r}") from None
    table = {
        "fbm": (1, SelfSimilarModel.fbm),
        "subfbm": (1, SelfSimilarModel.subfbm),
        "bifbm": (2, SelfSimilarModel.bifbm),
        "fgn": (1, StationaryModel.fgn),
        "a": (1, StationaryModel.a),
        "exp": (1, StationaryModel.exponential),
        "white": (0, lambda: StationaryModel.white()),
    }
    if name not in table:
        raise InputError(f"unknown model {name!r}")
    nargs, ctor = table[name]
    if len(vals) != nargs:
        raise InputError(f"model {name!r} takes {nargs} parameter(s)")
    return ctor(*vals)


# ---------------------------------------------------------------------------
# operation-style wrappers


def cov_self_similar(m: SelfSimilarModel, s, t):
    return m.cov(s, t)


def increment_cov(m: SelfSimilarModel, s, t, lag: float = 1.0):
    return m.increment_cov(s, t, lag)


def increment_corr(m: SelfSimilarModel, s, t):
    """Correlation of the unit increments at s and t."""
    return increment_corr_scaled(m, 1.0, 1.0, s, t)


def increment_corr_scaled(m: SelfSimilarModel, eps: float, dlt: float, u, v):
    """Correlation of X(u+eps) - X(u) and X(v+dlt) - X(v)."""
    num = m.increment_cov(u, v, eps, dlt)
    den = np.sqrt(np.asarray(m.increment_cov(u, u, eps)) * np.asarray(m.increment_cov(v, v, dlt)))
    if np.any(den <= 0):
        raise DegeneracyError("increment variance vanishes")
    out = np.clip(num / den, -1.0, 1.0)
    return out if np.ndim(out) else float(out)


def mixed_partial(m: SelfSimilarModel, u, v):
    return m.mixed_partial(u, v)


def u1_profile(m: SelfSimilarModel, s):
    """u_1(s) in E[(X(s+1)-X(s))^2] = 2 lambda s^{2beta-alpha} (1 + u_1(s))."""
    s = np.asarray(s, dtype=float)
    return m.increment_cov(s, s) / (2 * m.lam * s ** (2 * m.beta - m.alpha)) - 1.0


def u2_profile(m: SelfSimilarModel, s, t):
    """u_2(s,t) in E[D1X(s) D1X(t)] = lambda (s^t)^{2beta-alpha} (2 a_alpha(s-t) + u_2)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    lo = np.minimum(s, t)
    return m.increment_cov(s, t) / (m.lam * lo ** (2 * m.beta - m.alpha)) - 2.0 * np.asarray(
        a_alpha(m.alpha, s - t))


def delta1(alpha: float) -> float:
    """Decay exponent bounding |u_1(s)|: 1-alpha below 1, 2-alpha otherwise."""
    return 1.0 - alpha if alpha < 1 else 2.0 - alpha


def u2_bound_form(m: SelfSimilarModel, s, t):
    """Right-hand side shape of the u_2 bounds (near/far from the diagonal)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    lo = np.minimum(s, t)
    d = np.abs(s - t)
    a = m.alpha
    far = lo**-1.0 * d ** (a - 1) + lo ** (a - 2)
    near = lo ** (a - 1) if a < 1 else lo ** (a - 2)
    return np.where(d >= 1.0, far, near)


def far_cov_bound_form(m: SelfSimilarModel, s, t, nu: float | None = None):
    """Shape of the bound on E[D1X(s) D1X(t)] for |s-t| >= (c-1)(s^t) + c."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    lo = np.minimum(s, t)
    d = np.abs(s - t)
    if m.alpha < 1:
        nu = nu if nu is not None else (m.h2_nu or 2.0)
        return lo ** (2 * m.beta + nu - 2) * d**-nu
    return lo ** (2 * m.beta - m.alpha) * d ** (m.alpha - 2)


def near_far_regions(m: SelfSimilarModel, s, t):
    """Boolean masks (near, far): |s-t| <= M1 (s^t) + M2 and its complement."""
    c = m.h2_c
    lo = np.minimum(s, t)
    d = np.abs(np.asarray(s) - np.asarray(t))
    near = d <= (c - 1) * lo + c
    return near, ~near


# ---------------------------------------------------------------------------
# hypothesis diagnostics


@dataclass
class BoundCheck:
    name: str
    constant: float
    top_decade_slope: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "C": self.constant, "slope": self.top_decade_slope,
                "passed": self.passed}


@dataclass
class HypothesisReport:
    hypothesis: str
    model_id: str
    beta: float
    alpha: float
    lam: float
    bounds: list[BoundCheck]
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.bounds) and all(
            v for k, v in self.extra.items() if k.endswith("_passed"))

    def failing(self) -> list[str]:
        names = [b.name for b in self.bounds if not b.passed]
        names += [k[: -len("_passed")] for k, v in self.extra.items()
                  if k.endswith("_passed") and not v]
        return names

    def to_dict(self) -> dict:
        return {"hypothesis": self.hypothesis, "model": self.model_id, "beta": self.beta,
                "alpha": self.alpha, "lambda": self.lam, "passed": self.passed,
                "bounds": [b.to_dict() for b in self.bounds], **self.extra}


SLOPE_TOL = 0.05


def _bound_check(name: str, x: np.ndarray, target: np.ndarray, form: np.ndarray) -> BoundCheck:
    target = np.abs(np.asarray(target, dtype=float))
    form = np.asarray(form, dtype=float)
    if not (np.all(np.isfinite(target)) and np.all(np.isfinite(form))):
        raise EvaluationError(f"non-finite derivative estimate in bound {name}")
    ratio = target / form
    top = x >= x.max() / 10.0
    if np.all(ratio[top] == 0.0):
        slope = 0.0
    else:
        r = np.maximum(ratio[top], np.finfo(float).tiny)
        slope = float(np.polyfit(np.log(x[top]), np.log(r), 1)[0])
    return BoundCheck(name, float(ratio.max()), slope, bool(slope <= SLOPE_TOL))


def default_h1_grid() -> np.ndarray:
    return 1.0 + np.geomspace(1e-3, 1e4, 241)


def check_h1(m: SelfSimilarModel, x_grid=None) -> HypothesisReport:
    """Finite-grid diagnostic of the psi decomposition bounds (a), (b), (c).

    A bound passes when the ratio target/bound-shape stays bounded over the
    top decade of the grid (log-log slope at most SLOPE_TOL). C is the sup of
    the ratio over the grid.
    """
    x = np.asarray(default_h1_grid() if x_grid is None else x_grid, dtype=float)
    if np.any(x <= 1):
        raise InputError("check_h1 grid must lie in (1, inf)")
    a = m.alpha
    bounds = [
        _bound_check("H1a", x, m.dpsi(x), x ** (a - 1)),
        _bound_check("H1b", x, m.d2psi(x), x**-1.0 * (x - 1.0) ** (a - 1)),
    ]
    psi1 = float(m.psi(1.0))
    dpsi1 = float(m.dpsi(1.0))
    gap = dpsi1 - m.beta * psi1
    extra = {"psi(1)": psi1, "dpsi(1)": dpsi1, "H1c_gap": gap,
             "H1c_applies": bool(a >= 1), "H1c_passed": bool(a < 1 or abs(gap) <= 1e-6)}
    return HypothesisReport("H1", m.model_id, m.beta, a, m.lam, bounds, extra)


def default_h2_grid(c: float) -> np.ndarray:
    return np.geomspace(c, 1e4, 161)


def check_h2(m: SelfSimilarModel, x_grid=None) -> HypothesisReport:
    """Finite-grid diagnostic of the large-x bounds (d), (e) on phi', phi''.

    For alpha < 1 the largest nu in (1, 2] (step 0.01) for which both bounds
    pass is reported.
    """
    x = np.asarray(default_h2_grid(m.h2_c) if x_grid is None else x_grid, dtype=float)
    if np.any(x < m.h2_c):
        raise InputError("check_h2 grid must lie in [c, inf)")
    a = m.alpha
    d1 = m.dphi(x)
    d2 = m.d2phi(x)
    if a >= 1:
        bounds = [_bound_check("H2d", x, d1, x ** (a - 2)),
                  _bound_check("H2e", x, d2, x ** (a - 3))]
        return HypothesisReport("H2", m.model_id, m.beta, a, m.lam, bounds,
                                {"branch": "alpha>=1", "c": m.h2_c})
    candidates = [m.h2_nu] if m.h2_nu is not None else list(np.round(np.arange(2.0, 1.0, -0.01), 2))
    for nu in candidates:
        bounds = [_bound_check("H2d", x, d1, x**-nu), _bound_check("H2e", x, d2, x ** (-nu - 1))]
        if all(b.passed for b in bounds):
            return HypothesisReport("H2", m.model_id, m.beta, a, m.lam, bounds,
                                    {"branch": "alpha<1", "nu": float(nu), "c": m.h2_c})
    return HypothesisReport("H2", m.model_id, m.beta, a, m.lam, bounds,
                            {"branch": "alpha<1", "nu": None, "c": m.h2_c})
