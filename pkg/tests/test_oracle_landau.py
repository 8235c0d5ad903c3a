import numpy as np
import pytest

from magtorus.errors import BadFlux
from magtorus.field_gauge import build_field, build_gauge
from magtorus.operator_grid import apply, assemble, magnetic_translate
from magtorus.oracle_landau import hermite_function, landau_eigenfunction, landau_function, landau_spectrum

from conftest import PI, TWO_PI


def test_flux_one_levels():
    ladder = landau_spectrum(TWO_PI, (0, 0), 3)
    assert [lv.eigenvalue for lv in ladder.levels] == pytest.approx([2 * PI, 6 * PI, 10 * PI])
    assert all(lv.multiplicity == 1 for lv in ladder.levels)


def test_flux_two_levels():
    ladder = landau_spectrum(4 * PI, (0.3, 0.1), 2)
    assert [lv.eigenvalue for lv in ladder.levels] == pytest.approx([4 * PI, 12 * PI])
    np.testing.assert_allclose(ladder.eigenvalues, [4 * PI, 4 * PI, 12 * PI, 12 * PI])


def test_level_spacing_and_alpha_independence():
    a = landau_spectrum(6 * PI, (0, 0), 10)
    b = landau_spectrum(6 * PI, (1.3, -0.4), 10)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    vals = [lv.eigenvalue for lv in a.levels]
    np.testing.assert_allclose(np.diff(vals), 2 * 6 * PI)
    # exact odd multiples of B
    np.testing.assert_allclose(np.array(vals) / (6 * PI), 2 * np.arange(1, 11) - 1)


def test_empty_ladder():
    assert landau_spectrum(TWO_PI, (0, 0), 0).levels == []


@pytest.mark.parametrize("b0", [0.0, -TWO_PI, 3.0])
def test_bad_flux(b0):
    with pytest.raises(BadFlux):
        landau_spectrum(b0)


def test_hermite_functions_orthonormal_at_high_degree():
    t = np.linspace(-40, 40, 40001)
    dt = t[1] - t[0]
    H = np.array([hermite_function(d, t) for d in (0, 1, 5, 30, 79)])
    G = H @ H.T * dt
    np.testing.assert_allclose(G, np.eye(5), atol=1e-10)
    assert np.all(np.isfinite(hermite_function(200, np.array([0.0, 50.0, 1e3]))))


@pytest.mark.parametrize("j", [1, 2, 5, 12])
@pytest.mark.parametrize("b0,alpha,p", [(TWO_PI, (0.0, 0.0), 0), (TWO_PI, (0.7, -1.1), 0), (4 * PI, (0.2, 0.5), 1)])
def test_residual_against_assembled_operator(j, b0, alpha, p):
    n = 128
    u = landau_eigenfunction(b0, alpha, j, p, n)
    H = assemble(build_gauge(build_field([((0, 0), b0)]), alpha), None, n)
    lam = (2 * j - 1) * b0
    r = np.sqrt(np.mean(np.abs(apply(H, u).values - lam * u.values) ** 2))
    assert r / lam <= 5e-3


def test_wrap_rule_consistency():
    b0, alpha = 6 * PI, (0.3, 0.8)
    f = landau_function(b0, alpha, 3, 2)
    rng = np.random.default_rng(0)
    x1, x2 = rng.random(50), rng.random(50)
    for m1, m2 in [(1, 0), (0, 1), (1, 1), (-2, 1)]:
        # u(x + m) = exp(i (B/2)(m ^ x + m1 m2)) u(x)
        lhs = f(x1 + m1, x2 + m2)
        rhs = np.exp(0.5j * b0 * (m1 * x2 - m2 * x1 + m1 * m2)) * f(x1, x2)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(rhs))


def test_grid_function_invariant_under_translations():
    u = landau_eigenfunction(4 * PI, (0.1, 0.2), 2, 1, 32)
    for m in [(1, 0), (0, 1)]:
        np.testing.assert_allclose(magnetic_translate(u, m).values, u.values, atol=1e-12)


def test_sectors_orthogonal():
    b0 = 6 * PI
    us = [landau_eigenfunction(b0, (0.4, 0.0), 2, p, 64) for p in range(3)]
    for a in range(3):
        for b in range(a + 1, 3):
            assert abs(us[a].inner(us[b])) <= 1e-8


def test_invalid_indices():
    with pytest.raises(ValueError):
        landau_function(TWO_PI, (0, 0), 0, 0)
    with pytest.raises(ValueError):
        landau_function(TWO_PI, (0, 0), 1, 1)
