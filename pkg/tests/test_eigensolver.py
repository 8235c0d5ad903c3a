import numpy as np
import pytest

from magtorus.eigensolver import (
    EigenResult,
    cluster_ids,
    dense_eigh,
    lowest_eigenpairs,
    residual_report,
    window_eigenpairs,
)
from magtorus.errors import NoConvergence
from magtorus.field_gauge import build_field, build_gauge, build_potential
from magtorus.operator_grid import GridWavefunction, assemble

from conftest import PI, TWO_PI, random_field


def constant_operator(b0, n, alpha=(0.0, 0.0), potential=None):
    return assemble(build_gauge(build_field([((0, 0), b0)]), alpha), potential, n)


def gram(vectors):
    V = np.array([u.flat for u in vectors])
    return V.conj() @ V.T / V.shape[1]


def test_free_ground_state_is_constant():
    res = lowest_eigenpairs(constant_operator(0.0, 32), 1, seed=0)
    assert abs(res.eigenvalues[0]) < 1e-8
    u = res.eigenvectors[0].values
    assert np.max(np.abs(u - u.mean())) < 1e-8
    assert abs(res.eigenvectors[0].norm() - 1.0) < 1e-12


def test_first_landau_levels_flux_one():
    res = lowest_eigenpairs(constant_operator(TWO_PI, 64), 3, seed=0)
    np.testing.assert_allclose(res.eigenvalues, [2 * PI, 6 * PI, 10 * PI], rtol=5e-3)
    assert res.multiplicities() == [1, 1, 1]


def test_landau_levels_flux_two_degenerate():
    res = lowest_eigenpairs(constant_operator(4 * PI, 64), 5, seed=0)
    np.testing.assert_allclose(res.eigenvalues, [4 * PI, 4 * PI, 12 * PI, 12 * PI, 20 * PI], rtol=5e-3)
    assert res.multiplicities() == [2, 2, 1]


def test_contracts_orthonormal_and_residuals(rng):
    H = assemble(build_gauge(random_field(rng, 2, 2), (0.1, 0.5)), None, 24)
    res = lowest_eigenpairs(H, 6, tol=1e-9, seed=3)
    assert np.all(np.diff(res.eigenvalues) >= 0)
    assert np.max(np.abs(gram(res.eigenvectors) - np.eye(6))) < 1e-10
    assert np.all(res.residuals <= 1e-9 * np.maximum(1, np.abs(res.eigenvalues)))
    report = residual_report(H, res)
    np.testing.assert_allclose(report, res.residuals, atol=1e-12 * max(1.0, res.eigenvalues.max()))


@pytest.mark.parametrize("seed", range(5))
def test_matches_dense_oracle_on_random_fields(seed):
    rng = np.random.default_rng(seed)
    phi = int(rng.integers(1, 4))
    pot = build_potential([((0, 0), 3.0), ((1, 1), 2.0 + 1.0j)])
    H = assemble(build_gauge(random_field(rng, phi, 2, scale=4.0), rng.random(2)), pot, 16)
    res = lowest_eigenpairs(H, 6, tol=1e-10, seed=seed)
    w, _ = dense_eigh(H)
    np.testing.assert_allclose(res.eigenvalues, w[:6], atol=1e-8 * max(1.0, w[5]))


def test_potential_shift_moves_spectrum(rng):
    fld = random_field(rng, 1, 1)
    base = lowest_eigenpairs(assemble(build_gauge(fld), None, 16), 4, seed=0)
    shifted = lowest_eigenpairs(assemble(build_gauge(fld), build_potential([((0, 0), 7.5)]), 16), 4, seed=0)
    np.testing.assert_allclose(shifted.eigenvalues, base.eigenvalues + 7.5, atol=1e-7)


def test_seeded_runs_are_reproducible():
    H = constant_operator(TWO_PI, 24)
    runs = [lowest_eigenpairs(H, 4, seed=11) for _ in range(3)]
    for r in runs[1:]:
        np.testing.assert_array_equal(r.eigenvalues, runs[0].eigenvalues)
        np.testing.assert_array_equal(r.residuals, runs[0].residuals)
        assert residual_report(H, r) == residual_report(H, runs[0])


def test_corrupted_eigenvector_has_large_residual(rng):
    H = constant_operator(TWO_PI, 24)
    res = lowest_eigenpairs(H, 2, seed=0)
    u = res.eigenvectors[0]
    bad = GridWavefunction(u.n, u.values + 0.3 * GridWavefunction.random(u.n, 1, rng).values, 1)
    corrupted = EigenResult(res.eigenvalues[:1], [bad], res.residuals[:1], res.target)
    assert residual_report(H, corrupted)[0] >= 1e-2


def test_zero_vector_rejected():
    H = constant_operator(TWO_PI, 16)
    zero = EigenResult(np.array([1.0]), [GridWavefunction(16, np.zeros((16, 16)), 1)], np.zeros(1), "x")
    with pytest.raises(ValueError):
        residual_report(H, zero)


def test_no_convergence_reports_worst_residual():
    with pytest.raises(NoConvergence):
        lowest_eigenpairs(constant_operator(TWO_PI, 32), 6, tol=1e-15, seed=0, max_iter=1)


def test_k_bounds():
    with pytest.raises(ValueError):
        lowest_eigenpairs(constant_operator(TWO_PI, 8), 17)


def test_window_free_case_matches_dense():
    H = constant_operator(0.0, 32)
    sigma = 4 * PI**2 * 25
    res = window_eigenpairs(H, sigma, 4, seed=0)
    w, _ = dense_eigh(H)
    nearest = np.sort(w[np.argsort(np.abs(w - sigma))[:4]])
    np.testing.assert_allclose(res.eigenvalues, nearest, atol=1e-7 * sigma)
    # the continuum value 4 pi^2 |k|^2 is matched up to the stencil error
    assert abs(res.eigenvalues[0] - sigma) / sigma < 0.05


def test_window_landau_level():
    res = window_eigenpairs(constant_operator(TWO_PI, 64), 50 * PI, 1, seed=0)
    assert abs(res.eigenvalues[0] - 50 * PI) / (50 * PI) < 5e-3


def test_window_below_spectrum_equals_lowest():
    H = constant_operator(TWO_PI, 24)
    low = lowest_eigenpairs(H, 3, seed=0)
    win = window_eigenpairs(H, 0.0, 3, seed=0)
    np.testing.assert_allclose(win.eigenvalues, low.eigenvalues, atol=1e-7)


def test_window_sigma_outside_range():
    H = constant_operator(TWO_PI, 16)
    with pytest.raises(ValueError):
        window_eigenpairs(H, -1.0, 2)


def test_cluster_ids():
    np.testing.assert_array_equal(cluster_ids([1.0, 1.0 + 1e-9, 2.0, 3.0, 3.0]), [0, 0, 1, 2, 2])
