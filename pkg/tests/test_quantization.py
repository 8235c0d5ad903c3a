import numpy as np
import pytest

from magtorus.errors import GridTooCoarseForH, IncommensurableShift, SymbolRangeExceeded
from magtorus.operator_grid import GridWavefunction, grid_points
from magtorus.oracle_landau import landau_eigenfunction
from magtorus.quantization import (
    BandLimitedSymbol,
    ConstantProfile,
    GaussianProfile,
    RingProfile,
    ShellProfile,
    ambiguity_table,
    annulus_sup,
    averaged_symbol,
    composition_phase,
    composition_residual,
    cosine_symbol,
    multiplication_symbol,
    norm_bound,
    op_apply,
    quadratic_commutator_residual,
    required_j,
    symbol_product,
    weyl_apply,
    wigner_pair,
)

from conftest import PI, TWO_PI


def _bandlimited(n, band, rng):
    c = np.zeros((n, n), complex)
    idx = np.r_[0 : band + 1, n - band : n]
    c[np.ix_(idx, idx)] = rng.standard_normal((idx.size, idx.size)) + 1j * rng.standard_normal((idx.size, idx.size))
    return GridWavefunction(n, np.fft.ifft2(c), 0).normalized()


# -- Weyl operators ---------------------------------------------------------------


def test_weyl_identity_and_isometry(rng):
    u = GridWavefunction.random(32, 2, rng)
    np.testing.assert_array_equal(weyl_apply(u, (0, 0), (0, 0), 0.125).values, u.values)
    for _ in range(10):
        eta = TWO_PI * rng.integers(-3, 4, 2)
        zeta = rng.integers(-40, 41, 2) / (32 * 0.125)
        assert weyl_apply(u, eta, zeta, 0.125).norm() == pytest.approx(u.norm(), abs=1e-12)


@pytest.mark.parametrize("phi", [0, 1, 3])
def test_weyl_composition_and_adjoint(rng, phi):
    n = 32
    for _ in range(20):
        h = float(rng.choice([1 / 8, 1 / 16, 0.05]))
        u, v = (GridWavefunction.random(n, phi, rng) for _ in range(2))
        eta, eta2 = (TWO_PI * rng.integers(-3, 4, 2) for _ in range(2))
        zeta, zeta2 = (rng.integers(-50, 51, 2) / (n * h) for _ in range(2))
        lhs = weyl_apply(weyl_apply(u, eta2, zeta2, h), eta, zeta, h)
        rhs = weyl_apply(u, eta + eta2, zeta + zeta2, h)
        phase = composition_phase(eta, zeta, eta2, zeta2, h, TWO_PI * phi)
        assert np.max(np.abs(lhs.values - phase * rhs.values)) <= 1e-11
        assert abs(weyl_apply(u, eta, zeta, h).inner(v) - u.inner(weyl_apply(v, -eta, -zeta, h))) <= 1e-11


def test_incommensurable(rng):
    u = GridWavefunction.random(16, 0, rng)
    with pytest.raises(IncommensurableShift):
        weyl_apply(u, (0, 0), (0.3, 0.0), 0.125)
    with pytest.raises(IncommensurableShift):
        weyl_apply(u, (1.0, 0.0), (0.0, 0.0), 0.125)


# -- ambiguity tables ---------------------------------------------------------------


def test_table_invariants(rng):
    u = GridWavefunction.random(32, 1, rng)
    tab = ambiguity_table(u, 0.25, 2, 8)
    assert tab.at((0, 0), (0, 0)) == pytest.approx(1.0, abs=1e-12)
    v = tab.values
    np.testing.assert_allclose(v, np.conj(v[::-1, ::-1, ::-1, ::-1]), atol=1e-12)
    assert np.max(np.abs(v)) <= 1 + 1e-12
    direct = weyl_apply(u, TWO_PI * np.array([1, -2]), np.array([3, 5]) / (32 * 0.25), 0.25).inner(u)
    assert abs(tab.at((1, -2), (3, 5)) - direct) <= 1e-12


def test_table_plane_wave():
    n, h, p = 32, 1 / 8, np.array([2, -1])
    x1, x2 = grid_points(n)
    u = GridWavefunction(n, np.exp(2j * PI * (p[0] * x1 + p[1] * x2)), 0)
    tab = ambiguity_table(u, h, 2, 6)
    K, J = 2, 6
    s = np.arange(-J, J + 1)
    expected = np.exp(2j * PI * (p[0] * s[:, None] + p[1] * s[None, :]) / n)
    np.testing.assert_allclose(tab.values[K, K], expected, atol=1e-12)
    rest = np.delete(tab.values.reshape(25, 13, 13), 12, axis=0)
    assert np.max(np.abs(rest)) <= 1e-12


def test_table_csv_round_trip(rng):
    u = GridWavefunction.random(16, 1, rng)
    tab = ambiguity_table(u, 0.25, 1, 3)
    back = type(tab).from_csv(tab.csv(), 0.25, 16, 1)
    np.testing.assert_array_equal(back.values, tab.values)


def test_table_grid_too_coarse(rng):
    with pytest.raises(GridTooCoarseForH):
        ambiguity_table(GridWavefunction.random(8, 0, rng), 0.1, 1, 2)


# -- pairings --------------------------------------------------------------------------


def test_pair_constant_one(rng):
    tab = ambiguity_table(GridWavefunction.random(16, 1, rng), 0.25, 0, 0)
    assert wigner_pair(multiplication_symbol({(0, 0): 1.0}), tab) == pytest.approx(1.0, abs=1e-12)


def test_pair_plane_wave_gaussian():
    n, h, p = 32, 1 / 8, np.array([2, -1])
    x1, x2 = grid_points(n)
    u = GridWavefunction(n, np.exp(2j * PI * (p[0] * x1 + p[1] * x2)), 0)
    sym = BandLimitedSymbol({(0, 0): GaussianProfile(1.0, 0.7)})
    tab = ambiguity_table(u, h, 1, required_j(sym, h, n))
    # plane waves are eigenfunctions of Op(g(xi)) with eigenvalue g(2 pi h p)
    assert abs(wigner_pair(sym, tab) - np.exp(-np.sum((TWO_PI * h * p) ** 2) / (2 * 0.49))) <= 1e-8


@pytest.mark.parametrize("j,p", [(1, 0), (3, 1), (6, 2)])
def test_multiplication_symbol_matches_density(j, p):
    b0, n = 6 * PI, 64
    u = landau_eigenfunction(b0, (0.2, -0.3), j, p, n)
    modes = {(1, 0): 0.3, (-1, 0): 0.3, (1, 1): 0.2j, (-1, -1): -0.2j, (0, 2): 0.1 + 0.05j}
    sym = multiplication_symbol(modes)
    tab = ambiguity_table(u, 1 / np.sqrt((2 * j - 1) * b0), 2, 0)
    x1, x2 = grid_points(n)
    a = sum(c * np.exp(2j * PI * (k[0] * x1 + k[1] * x2)) for k, c in modes.items())
    direct = np.mean(a * np.abs(u.values) ** 2)
    assert abs(wigner_pair(sym, tab) - direct) <= 1e-6


def test_real_symbol_pairs_real():
    b0, n, j = TWO_PI, 64, 4
    lam = (2 * j - 1) * b0
    h = 1 / np.sqrt(lam)
    u = landau_eigenfunction(b0, (0.0, 0.0), j, 0, n)
    sym = cosine_symbol((1, 0), GaussianProfile(1.0, 1.0, (0.2, -0.1)))
    tab = ambiguity_table(u, h, 1, required_j(sym, h, n), lam)
    w = wigner_pair(sym, tab)
    assert abs(w.imag) <= 1e-8
    assert abs(w) <= norm_bound(sym, h, n, tab.j_range)


def test_symbol_range_errors(rng):
    u = GridWavefunction.random(16, 0, rng)
    tab = ambiguity_table(u, 0.25, 1, 2)
    with pytest.raises(SymbolRangeExceeded):
        wigner_pair(multiplication_symbol({(2, 0): 1.0, (-2, 0): 1.0}), tab)
    with pytest.raises(SymbolRangeExceeded):
        wigner_pair(BandLimitedSymbol({(0, 0): GaussianProfile(1.0, 1.0)}), tab)
    with pytest.raises(SymbolRangeExceeded):
        wigner_pair(BandLimitedSymbol({(0, 0): ShellProfile(1.0, 20.0, 1.0)}), tab)
    with pytest.raises(SymbolRangeExceeded):
        ConstantProfile(1.0).transform(np.zeros(1), np.zeros(1))


def test_real_symbol_needs_partner():
    with pytest.raises(ValueError):
        BandLimitedSymbol({(1, 0): ConstantProfile(1.0)}, real=True)


def test_ring_profile_shape():
    p = RingProfile(1.0, 1.0, 0.2)
    assert p(1.0, 0.0) == pytest.approx(1.0)
    assert p(0.0, 0.0) == pytest.approx(np.exp(-1.0 / (8 * 0.04)))
    assert p(p.support, 0.0) < 1e-15


# -- operator calculus -----------------------------------------------------------------


def test_composition_with_identity(rng):
    n, h = 32, 1 / 4
    vs = [GridWavefunction.random(n, 1, rng) for _ in range(2)]
    a = cosine_symbol((0, 1), GaussianProfile(1.0, 1.0, (0.5, 0.0)))
    one = multiplication_symbol({(0, 0): 1.0})
    assert composition_residual(a, one, h, vs) <= 1e-12
    assert composition_residual(one, a, h, vs) <= 1e-12


def test_op_apply_matches_pairing(rng):
    n, h = 32, 1 / 4
    u = GridWavefunction.random(n, 1, rng)
    sym = cosine_symbol((1, 0), GaussianProfile(1.0, 1.0))
    J = required_j(sym, h, n)
    direct = op_apply(sym, u, h, J).inner(u)
    assert abs(direct - wigner_pair(sym, ambiguity_table(u, h, 1, J))) <= 1e-12


def test_composition_first_order_at_fixed_nh():
    # Op(a) Op(b) - Op(ab) = O(h); N h is held at 8 so the quadrature grid scales with h
    a = cosine_symbol((0, 1), GaussianProfile(1.0, 1.5, (0.5, 0.0)))
    b = BandLimitedSymbol({(1, 0): GaussianProfile(1.0, 1.5)})
    hs = np.array([1 / 4, 1 / 8, 1 / 16])
    res = []
    for h in hs:
        rng = np.random.default_rng(1)
        vs = [GridWavefunction.random(int(8 / h), 0, rng) for _ in range(2)]
        res.append(composition_residual(a, b, h, vs))
    res = np.array(res)
    slope = np.polyfit(np.log(hs), np.log(res), 1)[0]
    assert np.all(res[1:] < res[:-1])
    assert 0.6 <= slope <= 1.4


def test_quadratic_commutator_exact(rng):
    n = 32
    vs = [_bandlimited(n, 4, rng) for _ in range(2)]
    b = cosine_symbol((1, 0), GaussianProfile(1.0, 0.8))
    for h in (1 / 4, 1 / 8):
        assert quadratic_commutator_residual(b, h, vs) <= 1e-10


def test_symbol_product_modes():
    a = cosine_symbol((1, 0))
    p = symbol_product(a, a)
    assert set(p.x_modes) == {(2, 0), (0, 0), (-2, 0)}
    assert p.x_modes[(0, 0)].constant == pytest.approx(0.5)


# -- averaging -----------------------------------------------------------------------


def test_average_of_x_independent_symbol():
    h, b0, alpha = 0.1, TWO_PI, (0.5, -1.0)
    g = GaussianProfile(1.0, 1.0, (0.3, 0.0))
    avg = averaged_symbol(BandLimitedSymbol({(0, 0): g}), h, b0, alpha)
    assert set(avg.x_modes) == {(0, 0)}
    ha = h * np.array(alpha)
    for xi in [(0.7, 0.2), (-1.0, 0.4)]:
        v = np.array(xi) - ha
        r = np.linalg.norm(v)
        t = TWO_PI * np.arange(400) / 400
        circle = np.mean(g(ha[0] + r * np.cos(t), ha[1] + r * np.sin(t)))
        assert abs(avg.x_modes[(0, 0)](*xi) - circle) <= 1e-12


def test_average_converges_in_nodes():
    a = BandLimitedSymbol({(1, 0): GaussianProfile(1.0, 1.0)})
    xi = (np.array([0.8, 1.2]), np.array([0.1, -0.5]))
    ref = averaged_symbol(a, 1 / 16, TWO_PI).x_modes[(1, 0)](*xi)
    fine = averaged_symbol(a, 1 / 16, TWO_PI, nodes=2048).x_modes[(1, 0)](*xi)
    np.testing.assert_allclose(ref, fine, atol=1e-12)


def test_average_decay_rate():
    a = {(1, 0): GaussianProfile(1.0, 1.0)}
    hs = 2.0 ** -np.arange(4, 8)
    sups = [annulus_sup(averaged_symbol(BandLimitedSymbol(a), h, TWO_PI).x_modes[(1, 0)], h, TWO_PI) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(sups), 1)[0]
    assert 0.35 <= slope <= 0.65


def test_average_needs_field():
    with pytest.raises(ValueError):
        averaged_symbol(cosine_symbol((1, 0)), 0.1, 0.0)
