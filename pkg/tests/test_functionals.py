import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bmlab.errors import AlignmentError, CoverageError, InputError, RegimeError
from bmlab.functionals import (
    compute_F,
    compute_Z,
    length_fluctuation,
    length_mean,
    length_scale,
    regularized_length,
    riemann_sums,
    riemann_weights,
    z_array,
)
from bmlab.hermite import HermiteExpansion, abs_expansion, builtin_expansion
from bmlab.mcstats import discretized_variance, sample_variance
from bmlab.models import SelfSimilarModel, StationaryModel
from bmlab.sampler import (
    GridPath,
    plan_circulant,
    plan_cholesky,
    plan_fbm,
    sample_block,
    sample_fbm,
    sample_stationary,
)


@pytest.fixture(scope="module")
def fgn_path():
    return sample_stationary(plan_circulant(StationaryModel.fgn(0.7), 4096, 0.5), 3, 0)


def test_riemann_weights_partial_cell():
    assert np.allclose(riemann_weights(1.0, 0.25), [0.25] * 4)
    w = riemann_weights(1.1, 0.25)
    assert len(w) == 5 and w[-1] == pytest.approx(0.1)
    assert math.fsum(w) == pytest.approx(1.1)


def test_zero_expansion_and_time_zero(fgn_path):
    zero = HermiteExpansion.from_coeffs([0.0, 0.0])
    r = compute_Z(fgn_path, zero, 0.01, [0.5, 1.0])
    assert np.all(r.values == 0.0)
    r = compute_Z(fgn_path, builtin_expansion("hermite2", 4), 0.01, [0.0, 1.0])
    assert r.values[0] == 0.0


def test_z_is_linear(fgn_path):
    e1, e2 = builtin_expansion("hermite2", 4), builtin_expansion("cube", 4)
    a = compute_Z(fgn_path, e1, 0.01, [0.3, 1.0]).values
    b = compute_Z(fgn_path, e2, 0.01, [0.3, 1.0]).values
    ab = compute_Z(fgn_path, e1 + e2, 0.01, [0.3, 1.0]).values
    assert np.allclose(ab, a + b, atol=1e-12, rtol=0)


def test_z_rejects_bad_times(fgn_path):
    with pytest.raises(InputError):
        compute_Z(fgn_path, builtin_expansion("hermite2", 4), 0.01, [])
    with pytest.raises(CoverageError):
        compute_Z(fgn_path, builtin_expansion("hermite2", 4), 1e-4, [1.0])


def test_white_noise_z_matches_discrete_variance():
    eps, delta, t = 0.01, 0.5, 1.0
    e = builtin_expansion("hermite1", 2)
    p = plan_circulant(StationaryModel.white(), 201, delta)
    x = sample_block(p, 5, range(4000))
    z = z_array(x, e, eps, delta, [t])[:, 0]
    exact = discretized_variance(e, StationaryModel.white(), eps, delta, t)
    assert exact == pytest.approx(t * delta)
    v, se = sample_variance(z)
    assert abs(v - exact) < 3 * se


def test_f_on_fbm_equals_z_on_unit_increments():
    H, delta, eps = 0.7, 0.25, 0.02
    n = int(1 / eps / delta) + 5 + 4
    path = sample_fbm(H, n, delta, 8, 1)
    e = builtin_expansion("hermite2", 4)
    F = compute_F(SelfSimilarModel.fbm(H), path, e, eps, [0.5, 1.0])
    y = path.values[4:] - path.values[:-4]
    Z = compute_Z(GridPath(delta, y, "fgn", 8, 1), e, eps, [0.5, 1.0])
    assert np.allclose(F.values, Z.values, rtol=1e-12, atol=1e-12)


def test_length_mean_brownian():
    eps = 0.01
    m = SelfSimilarModel.fbm(0.5)
    mu = length_mean(m, eps, eps / 4, [1.0])[0]
    assert mu == pytest.approx(10 * math.sqrt(2 / math.pi), rel=1e-12)
    assert mu == pytest.approx(7.97885, abs=1e-5)
    p = plan_fbm(0.5, 406, eps / 4)
    x = sample_block(p, 2, range(1000))
    lengths = [regularized_length(GridPath(eps / 4, r, m.model_id, 2, i), eps, [1.0]).values[0]
               for i, r in enumerate(x)]
    assert np.mean(lengths) == pytest.approx(mu, rel=0.005)


def test_length_is_monotone_in_time():
    path = sample_fbm(0.6, 900, 1 / 512, 3, 0)
    times = np.linspace(0, 1.5, 31)
    v = regularized_length(path, 1 / 64, times).values
    assert v[0] == 0.0 and np.all(np.diff(v) >= 0)


@given(st.floats(0.1, 10.0), st.floats(-3, 3))
def test_length_scaling_identity(c, shift):
    path = sample_fbm(0.4, 300, 1 / 256, 4, 0)
    moved = GridPath(path.delta, c * path.values + shift, path.model_id, 4, 0)
    a = regularized_length(path, 1 / 32, [0.5, 1.0]).values
    b = regularized_length(moved, 1 / 32, [0.5, 1.0]).values
    assert np.allclose(b, c * a, rtol=1e-10, atol=0)


def test_length_alignment_and_coverage():
    path = sample_fbm(0.6, 300, 1 / 256, 4, 0)
    with pytest.raises(AlignmentError):
        regularized_length(path, 0.01, [1.0])
    with pytest.raises(CoverageError):
        regularized_length(path, 1 / 32, [1.2])


def test_length_fluctuation_regime_check():
    m = SelfSimilarModel.fbm(0.55)
    path = sample_fbm(0.55, 300, 1 / 256, 4, 0)
    length_fluctuation(m, path, 1 / 32, [1.0], regime="central")
    with pytest.raises(RegimeError):
        length_fluctuation(m, path, 1 / 32, [1.0], regime="noncentral")


def test_length_fluctuation_centering():
    m = SelfSimilarModel.bifbm(0.7, 0.5)
    eps, delta = 1 / 16, 1 / 64
    x = sample_block(plan_cholesky(m, 70, delta), 6, range(4000))
    vals = np.array([length_fluctuation(m, GridPath(delta, r, m.model_id, 6, i), eps, [1.0]).values[0]
                     for i, r in enumerate(x)])
    v, _ = sample_variance(vals)
    assert abs(vals.mean()) < 3 * math.sqrt(v / len(vals))
    assert length_scale(m, eps) == pytest.approx(eps ** (0.5 - m.beta))


def test_riemann_sums_stack():
    vals = np.arange(12.0).reshape(3, 4)
    out = riemann_sums(vals, 0.5, [1.0, 1.75])
    assert out.shape == (3, 2)
    assert np.allclose(out[:, 0], 0.5 * vals[:, :2].sum(axis=1))
    assert np.allclose(out[:, 1], 0.5 * vals[:, :3].sum(axis=1) + 0.25 * vals[:, 3])


def test_abs_expansion_is_centered_before_use(fgn_path):
    e = abs_expansion(6)
    a = compute_Z(fgn_path, e, 0.01, [1.0]).values
    b = compute_Z(fgn_path, e.centered(), 0.01, [1.0]).values
    assert np.array_equal(a, b)
