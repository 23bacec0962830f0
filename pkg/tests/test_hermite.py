import math

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st
from numpy.polynomial import hermite_e
from scipy import integrate

from bmlab.errors import (
    EmptyExpansionError,
    EvaluationError,
    PreconditionError,
    RankUndeterminedError,
    UnsupportedOrderError,
)
from bmlab.hermite import (
    HermiteExpansion,
    abs_coefficient,
    abs_expansion,
    eval_hermite,
    gauss_hermite,
    hermite_rank,
    hermite_table,
    lp_norm_gaussian,
    malliavin_apply,
    project,
    shift_expansion,
)


def sympy_hermite(q, x):
    # probabilists' H_q(x) = 2^{-q/2} He_q... use the Rodrigues formula directly
    t = sympy.symbols("t")
    expr = (-1) ** q * sympy.exp(t**2 / 2) * sympy.diff(sympy.exp(-t**2 / 2), t, q)
    return float(sympy.simplify(expr).subs(t, x))


def test_eval_hermite_small_cases():
    assert eval_hermite(2, 0.0) == -1.0
    assert eval_hermite(0, 7.3) == 1.0
    assert eval_hermite(3, 2.0) == pytest.approx(sympy_hermite(3, 2.0), abs=1e-12)


@given(st.integers(0, 30), st.floats(-6, 6))
def test_eval_hermite_matches_numpy_basis(q, x):
    basis = np.zeros(q + 1)
    basis[q] = 1.0
    ref = hermite_e.hermeval(x, basis)
    assert eval_hermite(q, x) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_order_guard():
    with pytest.raises(UnsupportedOrderError):
        eval_hermite(201, 1.0)
    with pytest.raises(UnsupportedOrderError):
        hermite_table(250, 0.0)


@pytest.mark.parametrize("n", [4, 17, 64, 128, 256])
def test_gauss_hermite_matches_numpy(n):
    x, w = gauss_hermite(n)
    xr, wr = hermite_e.hermegauss(n)
    wr = wr / math.sqrt(2 * math.pi)
    assert np.max(np.abs(np.sort(x) - np.sort(xr))) < 1e-10
    assert abs(w.sum() - 1.0) < 1e-13
    big = wr > 1e-200
    order = np.argsort(x)
    assert np.allclose(w[order][big], wr[np.argsort(xr)][big], rtol=1e-8, atol=0)


def _gram(n):
    x, w = gauss_hermite(n)
    table = hermite_table(10, x)
    return np.array([[math.fsum(w * table[q] * table[r]) for r in range(11)] for q in range(11)])


def test_orthogonality():
    gram = _gram(64)
    for q in range(11):
        for r in range(11):
            if q == r:
                assert gram[q, q] == pytest.approx(math.factorial(q), rel=1e-10)
            else:
                assert abs(gram[q, r]) < 1e-10


def test_orthonormality_at_default_node_count():
    gram = _gram(2 * 10 + 16)
    norm = np.sqrt([math.factorial(q) for q in range(11)])
    assert np.max(np.abs(gram / np.outer(norm, norm) - np.eye(11))) < 1e-12


def test_project_polynomials():
    e = project(lambda x: x**2 - 1.0, 6)
    assert e.coeffs[2] == pytest.approx(1.0, abs=1e-12)
    assert max(abs(c) for q, c in enumerate(e.coeffs) if q != 2) < 1e-12
    e = project(lambda x: x**3, 6)
    assert e.coeffs[1] == pytest.approx(3.0, abs=1e-12)
    assert e.coeffs[3] == pytest.approx(1.0, abs=1e-12)
    assert hermite_rank(e) == 1


def test_project_node_precondition():
    with pytest.raises(PreconditionError):
        project(lambda x: x, 10, n_nodes=12)


def test_project_reports_bad_node():
    with pytest.raises(EvaluationError) as info:
        project(lambda x: np.where(x > 3, np.inf, x), 4)
    assert info.value.node > 3


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=13))
def test_project_synthesis_roundtrip(coeffs):
    e = HermiteExpansion.from_coeffs(coeffs)
    back = project(e, e.qmax)
    assert np.allclose(back.array, e.array, atol=1e-9, rtol=0)


def _abs_coefficient_by_quad(q):
    # E|N| H_q(N) / q! with adaptive quadrature on the half line
    f = lambda x: x * eval_hermite(q, x) * math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    val, _ = integrate.quad(f, 0, 60, epsabs=1e-15, epsrel=1e-13, limit=200)
    return 2 * val / math.factorial(q)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("q", [0, 2, 4, 6, 8, 10, 12])
def test_abs_coefficient_against_quad(q):
    ref = _abs_coefficient_by_quad(q) if q else math.sqrt(2 / math.pi)
    assert abs_coefficient(q) == pytest.approx(ref, rel=1e-9)


def test_abs_expansion_matches_projection():
    proj = project(np.abs, 12, breakpoints=[0.0])
    exact = abs_expansion(12)
    for q in range(13):
        if exact.coeffs[q] == 0.0:
            assert abs(proj.coeffs[q]) < 1e-12
        else:
            assert proj.coeffs[q] == pytest.approx(exact.coeffs[q], rel=1e-9)


def test_abs_expansion_values():
    e = abs_expansion(8)
    c0 = math.sqrt(2 / math.pi)
    assert e.coeffs[0] == pytest.approx(c0)
    assert e.coeffs[2] == pytest.approx(c0 / 2)
    assert e.coeffs[4] == pytest.approx(-c0 / 24)
    assert e.coeffs[1] == e.coeffs[3] == 0.0
    assert hermite_rank(abs_expansion(8, centered=True)) == 2
    # the expansion reproduces E|N|^2 = 1 in the limit
    assert abs_expansion(60).variance() + c0**2 == pytest.approx(1.0, abs=2e-3)


def test_printed_convention_is_a_different_function():
    printed = abs_expansion(8, convention="printed")
    assert printed.coeffs[2] == 1.0
    assert printed.coeffs[4] == pytest.approx(1 / 6)
    assert printed.coeffs[6] == pytest.approx(1 / 30)
    # its chaos energy already exceeds Var|N| = 1 - 2/pi, so it cannot be |x|
    assert printed.centered().variance() > 1.0 > 1 - 2 / math.pi


def test_rank_errors():
    with pytest.raises(RankUndeterminedError):
        hermite_rank(HermiteExpansion.from_coeffs([0.0, 0.0, 0.0]), 1e-10)
    with pytest.raises(EmptyExpansionError):
        HermiteExpansion.from_coeffs([])


def test_shift_examples():
    assert shift_expansion(HermiteExpansion.from_coeffs([0, 0, 1]), 2).coeffs == (1.0,)
    s = shift_expansion(HermiteExpansion.from_coeffs([0, 3, 0, 1]), 1)
    assert s.coeffs == (3.0, 0.0, 1.0)
    with pytest.raises(EmptyExpansionError):
        shift_expansion(HermiteExpansion.from_coeffs([0, 1]), 3)


def test_shift_equals_minus_d_linv():
    e = abs_expansion(12, centered=True)
    g = e
    for _ in range(2):
        g = malliavin_apply("D", malliavin_apply("Linv", g))
        g = HermiteExpansion.from_coeffs(-g.array)
    s = shift_expansion(e, 2)
    assert np.allclose(g.array[: s.qmax + 1], s.array, atol=1e-12)


def test_malliavin_examples():
    assert malliavin_apply("D", HermiteExpansion.from_coeffs([0, 0, 0, 1])).coeffs == (0, 0, 3)
    with pytest.raises(PreconditionError):
        malliavin_apply("Linv", HermiteExpansion.from_coeffs([1.0, 1.0]))


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=10))
def test_delta_after_d_is_minus_l(coeffs):
    e = HermiteExpansion.from_coeffs(coeffs)
    out = malliavin_apply("delta", malliavin_apply("D", e)).array
    want = np.arange(len(coeffs)) * np.asarray(coeffs)
    assert np.array_equal(out[: len(coeffs)], want)


def test_d_matches_derivative():
    e = HermiteExpansion.from_coeffs([0.3, -1.0, 0.5, 2.0, 0.25])
    de = malliavin_apply("D", e)
    x = np.linspace(-2, 2, 9)
    deriv = hermite_e.hermeval(x, hermite_e.hermeder(e.array))
    assert np.allclose(de(x), deriv)


def test_lp_norms():
    assert lp_norm_gaussian(lambda x: np.ones_like(x), 3.0) == pytest.approx(1.0)
    assert lp_norm_gaussian(lambda x: x, 2.0) == pytest.approx(1.0)
    assert lp_norm_gaussian(np.abs, 4.0) == pytest.approx(3**0.25, rel=1e-12)
    with pytest.raises(PreconditionError):
        lp_norm_gaussian(np.abs, float("inf"))


def test_json_roundtrip():
    e = abs_expansion(6, centered=True)
    back = HermiteExpansion.from_json(e.to_json())
    assert back.coeffs == e.coeffs and back.rank == 2
