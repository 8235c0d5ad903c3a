import numpy as np
import pytest

from magtorus.errors import DimMismatch, GridTooCoarse
from magtorus.field_gauge import build_field, build_gauge, build_potential
from magtorus.operator_grid import (
    GridWavefunction,
    _assemble_matrix,
    SparseHermitianOperator,
    apply,
    assemble,
    commutation_residual,
    hermiticity_residual,
    magnetic_translate,
    read_wavefunction,
    wavefunction_csv,
    wavefunction_from_bytes,
    wavefunction_to_bytes,
    write_wavefunction,
    WF_HEADER,
)
from magtorus.eigensolver import dense_eigh, lowest_eigenpairs

from conftest import TWO_PI, random_field


def free_operator(n=16):
    return assemble(build_gauge(build_field([((0, 0), 0.0)])), None, n)


def test_free_operator_annihilates_constants():
    H = free_operator()
    u = GridWavefunction(16, np.ones((16, 16)), 0)
    assert np.max(np.abs(apply(H, u).values)) < 1e-9
    assert np.max(np.abs(apply(H, GridWavefunction(16, np.zeros((16, 16)), 0)).values)) == 0.0


def test_free_operator_spectrum_matches_five_point_laplacian():
    n = 16
    w, _ = dense_eigh(free_operator(n))
    k = np.arange(n)
    lap = 4 * n * n * np.sin(np.pi * k / n) ** 2
    expected = np.sort((lap[:, None] + lap[None, :]).ravel())
    np.testing.assert_allclose(w, expected, atol=1e-8)


def test_constant_field_lowest_eigenvalue_within_one_percent():
    H = assemble(build_gauge(build_field([((0, 0), TWO_PI)])), None, 64)
    lam = lowest_eigenpairs(H, 1, seed=0).eigenvalues[0]
    assert abs(lam - TWO_PI) / TWO_PI < 1e-2


def test_linearity(rng):
    fld = random_field(rng, 1, 2)
    H = assemble(build_gauge(fld, (0.2, 0.1)), None, 16)
    u, v = (GridWavefunction.random(16, 1, rng) for _ in range(2))
    a, b = 0.3 - 1.2j, 2.1 + 0.4j
    lhs = apply(H, GridWavefunction(16, a * u.values + b * v.values, 1)).values
    rhs = a * apply(H, u).values + b * apply(H, v).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-13 * np.max(np.abs(rhs))


def test_dimension_mismatch():
    with pytest.raises(DimMismatch):
        apply(free_operator(16), GridWavefunction.random(8, 0, np.random.default_rng(0)))


@pytest.mark.parametrize("n", [6, 7, 12])
def test_coarse_grids_rejected(n, cos_field):
    with pytest.raises(GridTooCoarse):
        assemble(build_gauge(build_field([((0, 0), TWO_PI), ((4, 0), 1.0)])), None, n)


@pytest.mark.parametrize("phi", [0, 1, 2, 3])
def test_hermitian_with_real_diagonal(rng, phi):
    fld = random_field(rng, phi, 2) if phi else build_field([((0, 0), 0.0), ((1, 1), 2.0)])
    H = assemble(build_gauge(fld, (0.4, -0.7)), build_potential([((0, 0), 1.0), ((1, 0), 0.5j)]), 16)
    assert hermiticity_residual(H) <= 1e-12
    assert np.max(np.abs(H.diagonal.imag)) == 0.0


def test_translation_identity_and_wrap_rule(rng):
    fld = random_field(rng, 1, 1)
    u = GridWavefunction.random(16, 1, rng)
    np.testing.assert_allclose(magnetic_translate(u, (0, 0)).values, u.values)
    np.testing.assert_allclose(magnetic_translate(u, (1, 0)).values, u.values, atol=1e-14)


@pytest.mark.parametrize("phi", [1, 2, 3])
def test_translations_commute(rng, phi):
    u = GridWavefunction.random(16, phi, rng)
    ab = magnetic_translate(magnetic_translate(u, (1, 0)), (0, 1)).values
    ba = magnetic_translate(magnetic_translate(u, (0, 1)), (1, 0)).values
    assert np.max(np.abs(ab - ba)) < 1e-13


@pytest.mark.parametrize("m", [(1, 0), (0, 1), (1, -2), (2, 2)])
@pytest.mark.parametrize("phi", [1, 2, 3])
def test_commutation_residual(rng, m, phi):
    fld = random_field(rng, phi, 2)
    H = assemble(build_gauge(fld, (0.3, 0.9)), build_potential([((0, 0), 2.0), ((0, 1), 1.0)]), 16)
    assert commutation_residual(H, m) <= 1e-12


def test_free_commutation_at_roundoff():
    # the two sides are summed in different orders, so only roundoff remains
    H = free_operator()
    assert commutation_residual(H, (1, 0)) <= 16 * np.finfo(float).eps * H.gershgorin()[1]


def test_corrupted_wrap_phase_detected():
    """Negative control: assemble with a wrap phase for the wrong flux."""
    fld = build_field([((0, 0), TWO_PI)])
    gauge = build_gauge(fld)
    bad = SparseHermitianOperator(16, _assemble_matrix(gauge, None, 16, 0.0), gauge, None)
    assert commutation_residual(bad, (1, 0)) >= 1e-3


def test_wavefunction_binary_round_trip(tmp_path, rng):
    u = GridWavefunction.random(8, 3, rng)
    data = wavefunction_to_bytes(u)
    assert len(data) == WF_HEADER.size + 16 * 64
    assert WF_HEADER.size == 24 and data[:4] == b"MTWF"
    v = wavefunction_from_bytes(data)
    assert v.n == 8 and v.flux_phi == 3
    np.testing.assert_array_equal(v.values, u.values)
    write_wavefunction(tmp_path / "u.mtwf", u)
    np.testing.assert_array_equal(read_wavefunction(tmp_path / "u.mtwf").values, u.values)


def test_bad_magic_rejected(rng):
    data = bytearray(wavefunction_to_bytes(GridWavefunction.random(8, 0, rng)))
    data[:4] = b"XXXX"
    with pytest.raises(ValueError):
        wavefunction_from_bytes(bytes(data))


def test_csv_export(rng):
    u = GridWavefunction.random(8, 0, rng)
    lines = wavefunction_csv(u).splitlines()
    assert lines[0] == "j1,j2,re,im" and len(lines) == 65
    j1, j2, re, im = lines[10].split(",")
    assert complex(float(re), float(im)) == u.values[int(j1), int(j2)]
