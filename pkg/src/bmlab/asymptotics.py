"""Limiting constants and regime classification.

Central regime: sigma^2 = sum_q c_q^2 q! int rho^q. Critical regime
(alpha = 2 - 1/d): a logarithmic normalization. Non-central regime: the
covariance K_d of the limiting Hermite-type process.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi

from .errors import (
    IntegrabilityError,
    PrecisionError,
    RegimeError,
)
from .hermite import HermiteExpansion, abs_expansion, abs_coefficient_as_printed, hermite_rank
from .models import SelfSimilarModel, StationaryModel, a_alpha, a_alpha_tail_coefficients

TIE_TOL = 1e-9
_H_STAR = 64.0


# ---------------------------------------------------------------------------
# integrals of rho^q


@dataclass
class PowerIntegral:
    value: float
    error: float


def _series_power(coefs: list[float], q: int, nterms: int) -> np.ndarray:
    base = np.zeros(nterms)
    base[: min(nterms, len(coefs))] = coefs[:nterms]
    out = np.zeros(nterms)
    out[0] = 1.0
    for _ in range(q):
        out = np.convolve(out, base)[:nterms]
    return out


def _a_alpha_power_integral(alpha: float, q: int, h_star: float = _H_STAR) -> PowerIntegral:
    """int_R a_alpha(h)^q dh, quadrature up to h_star plus a series tail."""
    pts = [1.0] if h_star > 1 else None
    body, err = integrate.quad(lambda h: float(a_alpha(alpha, h)) ** q, 0.0, h_star,
                               points=pts, limit=400, epsabs=1e-14, epsrel=1e-13)
    # a(h) = h^(alpha-2) sum_j b_j h^(-2j) for h > 1
    nterms = 10
    b = [c for c, _ in a_alpha_tail_coefficients(alpha, nterms)]
    series = _series_power(b, q, nterms)
    tail_terms = []
    for j, s in enumerate(series):
        expo = (alpha - 2.0) * q - 2.0 * j + 1.0
        if s == 0.0:
            tail_terms.append(0.0)
            continue
        if expo >= 0:
            raise IntegrabilityError(
                f"a_{alpha:g}^{q} is not integrable ((alpha-2) q = {(alpha - 2) * q:g} >= -1)")
        tail_terms.append(s * h_star**expo / (-expo))
    tail = math.fsum(tail_terms)
    err_tail = abs(tail_terms[-1]) + 1e-15 * abs(tail)
    return PowerIntegral(2.0 * (body + tail), 2.0 * (err + err_tail))


def _generic_power_integral(rho: StationaryModel, q: int) -> PowerIntegral:
    if rho.kind == "white":
        return PowerIntegral(0.0, 0.0)
    if rho.kind == "exponential":
        theta = rho.params[0]
        return PowerIntegral(2.0 / (q * theta), 0.0)
    grid = np.asarray(rho.grid)
    h_end = grid[-1]
    f = lambda h: float(rho.rho(h)) ** q  # noqa: E731
    pts = list(grid[1:-1][:: max(1, len(grid) // 50)])
    body, err = integrate.quad(f, 0.0, h_end, points=pts or None, limit=1000)
    lo = grid[grid >= h_end / 2]
    vals = np.abs(np.asarray(rho.rho(lo))) ** q
    if np.all(vals == 0.0):
        return PowerIntegral(2.0 * body, 2.0 * err)
    if np.any(vals == 0.0) or len(lo) < 2:
        raise IntegrabilityError("cannot fit a tail to the tabulated correlation")
    slope = np.polyfit(np.log(lo), np.log(vals), 1)[0]
    if slope >= -1:
        raise IntegrabilityError(f"|rho|^{q} tail decays like h^{slope:.3g}: not integrable")
    tail = vals[-1] * h_end / (-slope - 1.0)
    return PowerIntegral(2.0 * body, 2.0 * (err + tail))


def power_integral(rho, q: int) -> PowerIntegral:
    """int_R rho(h)^q dh with an error bound."""
    if isinstance(rho, (int, float)):
        return _a_alpha_power_integral(float(rho), q)
    if rho.alpha is not None:
        return _a_alpha_power_integral(rho.alpha, q)
    return _generic_power_integral(rho, q)


def abs_power_integral(rho, q: int) -> PowerIntegral:
    """int_R |rho(h)|^q dh."""
    if q % 2 == 0:
        return power_integral(rho, q)
    alpha = float(rho) if isinstance(rho, (int, float)) else rho.alpha
    if alpha is not None:
        if alpha < 1:
            # a_alpha < 0 for |h| >= 1 when alpha < 1, > 0 when alpha > 1
            pi = _a_alpha_power_integral(alpha, q)
            body, err = integrate.quad(lambda h: float(a_alpha(alpha, h)) ** q, 0.0, 1.0,
                                       limit=200, epsabs=1e-14)
            return PowerIntegral(4.0 * body - pi.value, pi.error + 4 * err)
        return _a_alpha_power_integral(alpha, q)
    if rho.kind in ("exponential", "white"):
        return power_integral(rho, q)
    grid = np.asarray(rho.grid)
    body, err = integrate.quad(lambda h: abs(float(rho.rho(h))) ** q, 0.0, grid[-1], limit=1000)
    return PowerIntegral(2.0 * body, 2.0 * err)


# ---------------------------------------------------------------------------
# central regime


@dataclass
class Sigma2:
    value: float
    tail_bound: float
    terms: dict[int, float] = field(default_factory=dict)
    integrals: dict[int, float] = field(default_factory=dict)


def _as_rho(rho):
    if isinstance(rho, (int, float)):
        return StationaryModel.a(float(rho))
    return rho


def check_integrable(rho, d: int) -> None:
    alpha = float(rho) if isinstance(rho, (int, float)) else rho.alpha
    if alpha is not None and (alpha - 2.0) * d >= -1.0 and alpha != 1.0:
        raise IntegrabilityError(
            f"int |a_alpha|^{d} diverges for alpha={alpha:g} ((alpha-2) d >= -1)")


def sigma2_central(e: HermiteExpansion, rho, d: int | None = None,
                   rtol: float = 1e-6) -> Sigma2:
    """sigma^2 = sum_{q>=d} c_q^2 q! int rho^q, truncated at e.qmax.

    ``rho`` is a StationaryModel or a bare alpha meaning rho = a_alpha.
    """
    d = hermite_rank(e) if d is None else d
    rho = _as_rho(rho)
    check_integrable(rho, d)
    total, bound = [], 0.0
    terms, integrals = {}, {}
    for q in range(d, e.qmax + 1):
        c = e.coeffs[q]
        if c == 0.0:
            continue
        pi = power_integral(rho, q)
        w = c * c * math.factorial(q)
        terms[q] = w * pi.value
        integrals[q] = pi.value
        total.append(terms[q])
        bound += w * pi.error
    value = math.fsum(total)
    if bound > rtol * max(abs(value), 1e-300) and bound > 1e-12:
        raise PrecisionError(f"sigma^2 error bound {bound:.3g} exceeds tolerance", residual=bound)
    return Sigma2(value, bound, terms, integrals)


@dataclass
class LengthConstant:
    value: float
    tail_bound: float
    displayed_series: float
    terms: dict[int, float]


def sigma2_length(H: float, qmax: int = 16) -> LengthConstant:
    """Limit variance of the rescaled length fluctuations of a fBm, H < 3/4.

    Computed from the exact chaos expansion of |x| - sqrt(2/pi) against
    rho = a_{2H}. ``displayed_series`` is sum_{q>=2} int a_{2H}^q / (q!(2q-1)^2),
    the series as usually displayed, reported for comparison only.
    """
    if H >= 0.75:
        raise RegimeError(f"H={H} is not in the central regime H < 3/4")
    s = sigma2_central(abs_expansion(qmax, centered=True), 2.0 * H, d=2)
    disp = []
    for q in range(2, qmax + 1):
        disp.append(power_integral(2.0 * H, q).value / (math.factorial(q) * (2 * q - 1) ** 2))
    return LengthConstant(s.value, s.tail_bound, math.fsum(disp), s.terms)


# ---------------------------------------------------------------------------
# critical (logarithmic) regime


def sigma2_log(c_d: float, d: int, alpha: float, beta: float) -> float:
    """c_d^2 d! (1 + (beta - alpha/2) d) (1 - 1/(2d))^d (1 - 1/d)^d at alpha = 2 - 1/d."""
    if abs(alpha - (2.0 - 1.0 / d)) > 1e-12:
        raise RegimeError(f"alpha={alpha} is not the critical value 2-1/d={2 - 1 / d}")
    return (c_d**2 * math.factorial(d) * (1.0 + (beta - alpha / 2.0) * d)
            * (1.0 - 1.0 / (2 * d)) ** d * (1.0 - 1.0 / d) ** d)


def sigma2_log_first_principles(c_d: float, d: int, alpha: float) -> float:
    """lim Var[F_eps(1)] / |log eps| when beta = alpha/2.

    From a_alpha(h)^d ~ (alpha(alpha-1)/2)^d |h|^{-1} on both sides of 0.
    """
    if abs(alpha - (2.0 - 1.0 / d)) > 1e-12:
        raise RegimeError(f"alpha={alpha} is not the critical value 2-1/d")
    return c_d**2 * math.factorial(d) * 2.0 * (0.5 * alpha * (alpha - 1.0)) ** d


def log_constants_report(m: SelfSimilarModel, e: HermiteExpansion) -> dict:
    """Side-by-side log-regime constants; they are not forced to agree."""
    d = hermite_rank(e)
    c = e.coeffs[d]
    out = {
        "formula_69": sigma2_log(c, d, m.alpha, m.beta),
        "first_principles": sigma2_log_first_principles(c, d, m.alpha)
        * (1.0 + (m.beta - m.alpha / 2) * d),
    }
    if d == 2:
        # displayed limits for the length process: (1/8) W for fBm,
        # variance 2^-K / 64 for bifBm
        K = m.params[1] if m.kind == "bifbm" else 1.0
        out["length_display"] = 2.0**-K / 64.0 if m.kind == "bifbm" else 1.0 / 64.0
        out["length_first_principles"] = 2 * m.lam * sigma2_log_first_principles(
            abs_expansion(4).coeffs[2], 2, m.alpha)
        out["formula_69_printed_abs_coeff"] = sigma2_log(
            abs_coefficient_as_printed(2), 2, m.alpha, m.beta)
    return out


# ---------------------------------------------------------------------------
# regimes and normalizations


@dataclass
class RegimeReport:
    alpha: float
    d: int
    regime: str
    normalization_exponent: float
    log_factor: bool = False

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "d": self.d, "regime": self.regime,
                "normalization_exponent": self.normalization_exponent,
                "log_factor": self.log_factor}


def classify_regime(alpha: float, d: int, tie_tol: float = TIE_TOL) -> RegimeReport:
    if not (0 < alpha <= 2) or d < 1:
        raise RegimeError(f"need alpha in (0, 2] and d >= 1, got alpha={alpha}, d={d}")
    crit = 2.0 - 1.0 / d
    if abs(alpha - crit) <= tie_tol:
        return RegimeReport(alpha, d, "log_central", 0.0, True)
    if alpha < crit:
        return RegimeReport(alpha, d, "central", 0.0)
    return RegimeReport(alpha, d, "noncentral", 0.5 - d * (1.0 - alpha / 2.0))


def normalization(alpha: float, d: int, eps: float, tie_tol: float = TIE_TOL) -> float:
    """Factor multiplying F_eps: 1, |log eps|^{-1/2} or eps^{1/2 - d(1-alpha/2)}."""
    if not 0 < eps < 1:
        raise RegimeError(f"eps={eps} must lie in (0, 1)")
    r = classify_regime(alpha, d, tie_tol)
    if r.regime == "central":
        return 1.0
    if r.regime == "log_central":
        return 1.0 / math.sqrt(abs(math.log(eps)))
    return eps**r.normalization_exponent


# ---------------------------------------------------------------------------
# non-central regime: K_d


_GL_W = 12
_GL_U = 12
_LEVELS = 40


def _panels_toward(lo: float, hi: float, levels: int) -> list[tuple[float, float]]:
    """Intervals partitioning [lo, hi], geometrically refined toward lo."""
    width = hi - lo
    cuts = [lo + width * 2.0**-k for k in range(levels, -1, -1)]
    out = [(lo, cuts[0])]
    out += list(zip(cuts[:-1], cuts[1:]))
    return out


def _gl_on(panels, n):
    t, w = np.polynomial.legendre.leggauss(n)
    xs, ws = [], []
    for a, b in panels:
        xs.append(0.5 * (b - a) * t + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def _kd_integrand(m: SelfSimilarModel, d: int, u, v):
    g = m.mixed_partial(u, v) / (2.0 * m.lam * (u * v) ** (m.beta - m.alpha / 2.0))
    return g**d


def _w_rule(s: float, t: float, gamma: float):
    """Nodes/weights in w = v - u over [-s, t], graded toward w = 0.

    The innermost panel on each side uses Gauss-Jacobi with weight |w|^gamma;
    the returned weights there already include |w|^gamma, so callers divide
    the integrand by |w|^gamma at those nodes (flag array)."""
    xs, ws, flags = [], [], []
    tj, wj = roots_jacobi(_GL_W, 0.0, gamma)
    for side, length in ((1.0, t), (-1.0, s)):
        if length <= 0:
            continue
        panels = _panels_toward(0.0, length, _LEVELS)
        inner, rest = panels[0], panels[1:]
        # break rest at |t - s| so the u-range kink is a panel edge
        kink = abs(t - s)
        if side > 0 and t > s or side < 0 and s > t:
            split = []
            for a, b in rest:
                if a < kink < b:
                    split += [(a, kink), (kink, b)]
                else:
                    split.append((a, b))
            rest = split
        x, w = _gl_on(rest, _GL_W)
        xs.append(side * x)
        ws.append(w)
        flags.append(np.zeros_like(x, dtype=bool))
        a, b = inner
        # map [-1,1] -> [0, b] with weight (1+x)^gamma -> (w)^gamma (b/2)^-gamma
        xi = 0.5 * b * (tj + 1.0)
        wi = wj * (0.5 * b) ** (gamma + 1.0)
        xs.append(side * xi)
        ws.append(wi)
        flags.append(np.ones_like(xi, dtype=bool))
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(flags)


def kd_covariance(m: SelfSimilarModel, d: int, s: float, t: float) -> float:
    """Covariance K_d(s, t) of the non-central limit.

    d!/(2 lambda)^d int_0^s int_0^t (d_u d_v E[X(u)X(v)] / (uv)^{beta-alpha/2})^d du dv,
    integrated in (w = v - u, u) with geometric grading toward the diagonal
    singularity |w|^{(alpha-2) d} and toward the axes.
    """
    if d < 2:
        raise RegimeError("K_d is defined for d >= 2")
    if (m.alpha - 2.0) * d <= -1.0:
        raise RegimeError(f"alpha={m.alpha:g} <= 2 - 1/d: diagonal singularity not integrable")
    if s < 0 or t < 0:
        raise RegimeError("negative time")
    if s == 0 or t == 0:
        return 0.0
    if s > t:
        s, t = t, s
    gamma = (m.alpha - 2.0) * d
    wn, ww, wflag = _w_rule(s, t, gamma)
    total = []
    tu, wu = np.polynomial.legendre.leggauss(_GL_U)
    u_levels = 30
    for w, weight, jac in zip(wn, ww, wflag):
        lo = max(0.0, -w)
        hi = min(s, t - w)
        if hi <= lo:
            continue
        panels = _panels_toward(lo, hi, u_levels)
        a = np.array([p[0] for p in panels])
        b = np.array([p[1] for p in panels])
        u = (0.5 * (b - a)[:, None] * tu[None, :] + 0.5 * (a + b)[:, None]).ravel()
        wts = (0.5 * (b - a)[:, None] * wu[None, :]).ravel()
        vals = _kd_integrand(m, d, u, u + w)
        if jac:
            vals = vals / abs(w) ** gamma
        total.append(weight * float(np.dot(wts, vals)))
    value = math.factorial(d) * math.fsum(total)
    if not math.isfinite(value):
        raise PrecisionError("K_d quadrature produced a non-finite value")
    return value


def kd_closed_form_fbm(H: float, d: int, s: float, t: float) -> float:
    """K_d for fBm: d! (H(2H-1))^d int_0^s int_0^t |u-v|^{(2H-2)d}."""
    g = (2 * H - 2) * d
    dbl = (s ** (g + 2) + t ** (g + 2) - abs(t - s) ** (g + 2)) / ((g + 1) * (g + 2))
    return math.factorial(d) * (H * (2 * H - 1)) ** d * dbl


# ---------------------------------------------------------------------------
# Ben Hariz conditions


@dataclass
class BenHarizReport:
    bh1_terms: dict[int, float]
    bh1_value: float
    bh1_verdict: str
    bh2_positive: bool
    bh2_l4: float
    bh2: bool

    def to_dict(self) -> dict:
        return {"bh1_value": self.bh1_value, "bh1_verdict": self.bh1_verdict,
                "bh1_terms": {str(k): v for k, v in self.bh1_terms.items()},
                "bh2_positive": self.bh2_positive, "bh2_l4": self.bh2_l4, "bh2": self.bh2}


def benhariz_check(e: HermiteExpansion, rho, R: float, d: int | None = None,
                   f=None, breakpoints=None) -> BenHarizReport:
    """Truncated series sum_q |c_q|/sqrt(q!) (int |rho|^q)^{1/2} R^q with a ratio
    test verdict, and the positivity + L^4 condition.

    ``f`` (pointwise) is used for the L^4 norm when given, else the truncated
    expansion itself.
    """
    from .hermite import lp_norm_gaussian

    if R <= 1:
        raise RegimeError("R must exceed 1")
    d = hermite_rank(e) if d is None else d
    rho = _as_rho(rho)
    check_integrable(rho, d)
    terms = {}
    for q in range(d, e.qmax + 1):
        c = e.coeffs[q]
        if c == 0.0:
            continue
        iq = abs_power_integral(rho, q).value
        terms[q] = abs(c) / math.sqrt(math.factorial(q)) * math.sqrt(max(iq, 0.0)) * R**q
    vals = list(terms.values())
    if len(vals) < 3:
        verdict = "finite"
    else:
        ratios = [b / a for a, b in zip(vals[:-1], vals[1:]) if a > 0]
        tail = ratios[-3:]
        if max(tail) < 1.0:
            verdict = "convergent"
        elif min(tail) > 1.0:
            verdict = "divergent"
        else:
            verdict = "inconclusive"
    nz = [e.coeffs[q] for q in range(d, e.qmax + 1) if e.coeffs[q] != 0.0]
    positive = all(c > 0 for c in nz)
    l4 = lp_norm_gaussian(f if f is not None else e, 4.0, 96, breakpoints=breakpoints)
    return BenHarizReport(terms, math.fsum(vals), verdict, positive, l4,
                          bool(positive and math.isfinite(l4)))
