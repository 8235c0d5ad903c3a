"""Magnetic Weyl operators, ambiguity tables and symbol pairings.

W(eta, zeta) u(x) = exp(i h B0/2 zeta ^ x) exp(i eta.(x + h zeta/2)) u(x + h zeta)

with eta in 2 pi Z^2 and h zeta a whole number s/N of grid steps, so every
operator acts exactly on grid functions.  A symbol a(x, xi) = sum_k a_k(xi)
e^{2 pi i k.x} is quantized as

    Op(a) = (2 pi)^-2 sum_k int F(a_k)(zeta) W(2 pi k, zeta) dzeta,
    F(a_k)(zeta) = int a_k(xi) exp(-i zeta.xi) dxi,

and the zeta integral is the trapezoid sum over the commensurate grid
zeta = s / (N h).  On grid functions this sum is the natural discrete Weyl
calculus: for B0 = 0 it reproduces Op(a) e_p = sum_k a_k(2 pi h (p + k/2)) e_{p+k}
exactly as long as the profiles live inside |xi|_inf < pi N h.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GridTooCoarseForH, IncommensurableShift, SymbolRangeExceeded
from .field_gauge import TWO_PI
from .operator_grid import GridWavefunction, SparseHermitianOperator

Mode = tuple[int, int]
COMMENSURABILITY_TOL = 1e-9


# -- momentum profiles ---------------------------------------------------------


class Profile:
    """A function a_k(xi) of the momentum variable.

    ``support`` bounds |xi|_inf outside which the profile is negligible
    (below 1e-16); ``scale`` is the smallest feature size, used to pick
    quadrature resolution.
    """

    support: float = np.inf
    scale: float = 1.0
    constant: complex | None = None

    def __call__(self, xi1, xi2) -> np.ndarray:
        raise NotImplementedError

    def transform(self, z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
        """F(a_k)(z1[i], z2[j]) on the outer product grid."""
        return _quadrature_transform(self, z1, z2)


@dataclass(frozen=True)
class ConstantProfile(Profile):
    value: complex

    @property
    def constant(self) -> complex:
        return complex(self.value)

    def __call__(self, xi1, xi2):
        return np.full(np.broadcast(np.asarray(xi1), np.asarray(xi2)).shape, complex(self.value))

    def transform(self, z1, z2):
        raise SymbolRangeExceeded("a momentum-independent profile has a delta transform")


@dataclass(frozen=True)
class GaussianProfile(Profile):
    """c exp(-|xi - centre|^2 / (2 sigma^2)); transform in closed form."""

    value: complex = 1.0
    sigma: float = 1.0
    centre: tuple[float, float] = (0.0, 0.0)

    @property
    def support(self) -> float:
        return float(np.max(np.abs(self.centre))) + self.sigma * np.sqrt(2 * np.log(1e16))

    @property
    def scale(self) -> float:
        return self.sigma

    def __call__(self, xi1, xi2):
        d1 = np.asarray(xi1) - self.centre[0]
        d2 = np.asarray(xi2) - self.centre[1]
        return self.value * np.exp(-(d1 * d1 + d2 * d2) / (2 * self.sigma**2))

    def transform(self, z1, z2):
        s2 = self.sigma**2
        g1 = np.exp(-0.5 * s2 * z1**2 - 1j * z1 * self.centre[0])
        g2 = np.exp(-0.5 * s2 * z2**2 - 1j * z2 * self.centre[1])
        return self.value * TWO_PI * s2 * np.outer(g1, g2)


def smooth_plateau(t) -> np.ndarray:
    """C-infinity cutoff equal to 1 on |t| <= 1/4 and 0 on |t| >= 1/2."""
    t = np.abs(np.asarray(t, dtype=float))
    u = np.clip((0.5 - t) * 4.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        g = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return f / (f + g)


@dataclass(frozen=True)
class ShellProfile(Profile):
    """c * chi((|xi - centre| - radius) / width), chi the smooth plateau cutoff."""

    value: complex = 1.0
    radius: float = 1.0
    width: float = 1.0
    centre: tuple[float, float] = (0.0, 0.0)

    @property
    def support(self) -> float:
        return float(np.max(np.abs(self.centre))) + self.radius + 0.5 * self.width

    @property
    def scale(self) -> float:
        return 0.25 * self.width

    def __call__(self, xi1, xi2):
        r = np.hypot(np.asarray(xi1) - self.centre[0], np.asarray(xi2) - self.centre[1])
        return self.value * smooth_plateau((r - self.radius) / self.width)


@dataclass(frozen=True)
class RingProfile(Profile):
    """c * exp(-(|xi - centre|^2 - radius^2)^2 / (8 radius^2 width^2)).

    A shell-localized profile, Gaussian of the given width across the ring.
    Being a smooth function of |xi|^2 (no cone point at the centre), its
    transform decays fast enough for short zeta tables; the plateau cutoff
    of ShellProfile has only super-algebraic decay.
    """

    value: complex = 1.0
    radius: float = 1.0
    width: float = 0.25
    centre: tuple[float, float] = (0.0, 0.0)

    @property
    def support(self) -> float:
        reach = 2 * self.radius * self.width * np.sqrt(2 * np.log(1e16))
        return float(np.max(np.abs(self.centre))) + np.sqrt(self.radius**2 + reach)

    @property
    def scale(self) -> float:
        return self.width

    def __call__(self, xi1, xi2):
        d1 = np.asarray(xi1) - self.centre[0]
        d2 = np.asarray(xi2) - self.centre[1]
        q = d1 * d1 + d2 * d2 - self.radius**2
        return self.value * np.exp(-q * q / (8 * self.radius**2 * self.width**2))


@dataclass(frozen=True)
class FunctionProfile(Profile):
    func: Callable = None
    support: float = 1.0
    scale: float = 1.0

    def __call__(self, xi1, xi2):
        return np.asarray(self.func(np.asarray(xi1), np.asarray(xi2)), dtype=complex)


@dataclass(frozen=True)
class ProductProfile(Profile):
    factors: tuple

    @property
    def support(self) -> float:
        return min(f.support for f in self.factors)

    @property
    def scale(self) -> float:
        return min(f.scale for f in self.factors)

    def __call__(self, xi1, xi2):
        out = 1.0
        for f in self.factors:
            out = out * f(xi1, xi2)
        return out


@dataclass(frozen=True)
class SumProfile(Profile):
    terms: tuple

    @property
    def constant(self):
        if all(t.constant is not None for t in self.terms):
            return complex(sum(t.constant for t in self.terms))
        return None

    @property
    def support(self) -> float:
        return max(t.support for t in self.terms)

    @property
    def scale(self) -> float:
        return min(t.scale for t in self.terms)

    def __call__(self, xi1, xi2):
        out = 0.0
        for t in self.terms:
            out = out + t(xi1, xi2)
        return out

    def transform(self, z1, z2):
        if self.constant is not None:
            raise SymbolRangeExceeded("a momentum-independent profile has a delta transform")
        return sum(t.transform(z1, z2) for t in self.terms)


def _quadrature_transform(p: Profile, z1, z2) -> np.ndarray:
    """Trapezoid rule for int p(xi) exp(-i z.xi) dxi over the support box.

    Spectrally accurate because the profile is smooth and negligible at the
    box edge; the node count resolves both the profile scale and the
    largest requested frequency.
    """
    xi_max = p.support
    if not np.isfinite(xi_max):
        raise SymbolRangeExceeded("profile has unbounded support")
    z_max = max(np.max(np.abs(z1), initial=0.0), np.max(np.abs(z2), initial=0.0))
    m = int(np.ceil(2 * xi_max * max(z_max / np.pi * 1.5, 8.0 / p.scale))) + 32
    m += m % 2
    xi = np.linspace(-xi_max, xi_max, m, endpoint=False)
    d = xi[1] - xi[0]
    g1, g2 = np.meshgrid(xi, xi, indexing="ij")
    vals = p(g1, g2)
    e1 = np.exp(-1j * np.outer(z1, xi))
    e2 = np.exp(-1j * np.outer(z2, xi))
    return d * d * (e1 @ vals @ e2.T)


# -- symbols -------------------------------------------------------------------


@dataclass(frozen=True)
class BandLimitedSymbol:
    """a(x, xi) = sum_k profile_k(xi) exp(2 pi i k.x) with finitely many k."""

    x_modes: dict[Mode, Profile]
    real: bool = False

    def __post_init__(self):
        if self.real:
            for k, p in self.x_modes.items():
                mk = (-k[0], -k[1])
                if mk not in self.x_modes:
                    raise ValueError(f"real symbol is missing the partner of mode {k}")

    @property
    def k_sym(self) -> int:
        return max((max(abs(k[0]), abs(k[1])) for k in self.x_modes), default=0)

    @property
    def xi_max(self) -> float:
        finite = [p.support for p in self.x_modes.values() if p.constant is None]
        return max(finite, default=0.0)

    @property
    def xi_independent(self) -> bool:
        return all(p.constant is not None for p in self.x_modes.values())

    def __call__(self, x1, x2, xi1, xi2) -> np.ndarray:
        out = 0.0
        for (k1, k2), p in self.x_modes.items():
            out = out + p(xi1, xi2) * np.exp(1j * TWO_PI * (k1 * np.asarray(x1) + k2 * np.asarray(x2)))
        return out

    def check_reality(self, samples: int = 16, seed: int = 0) -> float:
        """max |a_{-k}(xi) - conj(a_k(xi))| on random momenta."""
        rng = np.random.default_rng(seed)
        r = max(self.xi_max, 1.0)
        xi = rng.uniform(-r, r, (2, samples))
        worst = 0.0
        for k, p in self.x_modes.items():
            q = self.x_modes.get((-k[0], -k[1]))
            if q is None:
                return np.inf
            worst = max(worst, float(np.max(np.abs(q(*xi) - np.conj(p(*xi))))))
        return worst


def multiplication_symbol(modes: Mapping[Mode, complex]) -> BandLimitedSymbol:
    """The momentum-independent symbol sum_k c_k e^{2 pi i k.x}."""
    return BandLimitedSymbol({tuple(k): ConstantProfile(complex(c)) for k, c in modes.items()})


def cosine_symbol(k, profile: Profile | None = None) -> BandLimitedSymbol:
    """cos(2 pi k.x) * profile(xi) (profile defaults to 1); real."""
    k = (int(k[0]), int(k[1]))
    half = _scale(profile, 0.5) if profile is not None else ConstantProfile(0.5)
    return BandLimitedSymbol({k: half, (-k[0], -k[1]): half}, real=True)


def _scale(p: Profile, c: complex) -> Profile:
    if p.constant is not None:
        return ConstantProfile(c * p.constant)
    if isinstance(p, GaussianProfile):
        return GaussianProfile(c * p.value, p.sigma, p.centre)
    if isinstance(p, ShellProfile):
        return ShellProfile(c * p.value, p.radius, p.width, p.centre)
    if isinstance(p, RingProfile):
        return RingProfile(c * p.value, p.radius, p.width, p.centre)
    return ProductProfile((ConstantProfile(c), p))


def _multiply(p: Profile, q: Profile) -> Profile:
    if p.constant is not None and q.constant is not None:
        return ConstantProfile(p.constant * q.constant)
    if p.constant is not None:
        return _scale(q, p.constant)
    if q.constant is not None:
        return _scale(p, q.constant)
    return ProductProfile((p, q))


def symbol_product(a: BandLimitedSymbol, b: BandLimitedSymbol) -> BandLimitedSymbol:
    """Pointwise product ab, mode by mode."""
    terms: dict[Mode, list[Profile]] = {}
    for ka, pa in a.x_modes.items():
        for kb, pb in b.x_modes.items():
            k = (ka[0] + kb[0], ka[1] + kb[1])
            terms.setdefault(k, []).append(_multiply(pa, pb))
    modes = {k: v[0] if len(v) == 1 else SumProfile(tuple(v)) for k, v in terms.items()}
    return BandLimitedSymbol(modes, real=a.real and b.real)


def shell_cutoff(delta: float, h: float, alpha=(0.0, 0.0)) -> Profile:
    """chi_delta(xi) = chi((|xi - h alpha| - 1) / delta)."""
    c = tuple(float(v) for v in h * np.asarray(alpha, dtype=float))
    return ShellProfile(1.0, 1.0, delta, c)


# -- Weyl operators -------------------------------------------------------------


def _grid_shift(zeta, h: float, n: int) -> tuple[int, int]:
    s = n * h * np.asarray(zeta, dtype=float)
    r = np.round(s)
    if np.max(np.abs(s - r)) > COMMENSURABILITY_TOL * max(1.0, np.max(np.abs(s))):
        raise IncommensurableShift(f"h*zeta = {tuple(h * np.asarray(zeta))} is not a multiple of 1/{n}")
    return int(r[0]), int(r[1])


def _frequency(eta) -> tuple[int, int]:
    k = np.asarray(eta, dtype=float) / TWO_PI
    r = np.round(k)
    if np.max(np.abs(k - r)) > COMMENSURABILITY_TOL * max(1.0, np.max(np.abs(k))):
        raise IncommensurableShift(f"eta = {tuple(eta)} is not in 2 pi Z^2")
    return int(r[0]), int(r[1])


def _shift_phase(b0: float, n: int, s1: int, s2: int) -> np.ndarray:
    """exp(i (B0/2) (s/N) ^ x) on the grid nodes."""
    j = np.arange(n) / n
    return np.exp(0.5j * b0 * (s1 * j[None, :] - s2 * j[:, None]) / n)


def _mode_phase(n: int, k1: int, k2: int, s1: int, s2: int) -> np.ndarray:
    """exp(2 pi i k.x) exp(i pi k.s / N)."""
    j = np.arange(n) / n
    return np.exp(1j * TWO_PI * (k1 * j[:, None] + k2 * j[None, :])) * np.exp(1j * np.pi * (k1 * s1 + k2 * s2) / n)


def weyl_apply(u: GridWavefunction, eta, zeta, h: float) -> GridWavefunction:
    """W(eta, zeta) u for eta in 2 pi Z^2 and h zeta on the grid."""
    k1, k2 = _frequency(eta)
    s1, s2 = _grid_shift(zeta, h, u.n)
    return _weyl_index(u, k1, k2, s1, s2)


def _weyl_index(u: GridWavefunction, k1: int, k2: int, s1: int, s2: int) -> GridWavefunction:
    vals = _mode_phase(u.n, k1, k2, s1, s2) * _shift_phase(u.b0, u.n, s1, s2) * u.shifted(s1, s2)
    return GridWavefunction(u.n, vals, u.flux_phi)


def composition_phase(eta, zeta, eta2, zeta2, h: float, b0: float) -> complex:
    """exp(i h/2 Omega) with Omega = eta2.zeta - eta.zeta2 + h B0 zeta2 ^ zeta."""
    eta, zeta, eta2, zeta2 = (np.asarray(v, dtype=float) for v in (eta, zeta, eta2, zeta2))
    wedge = zeta2[0] * zeta[1] - zeta2[1] * zeta[0]
    omega = eta2 @ zeta - eta @ zeta2 + h * b0 * wedge
    return complex(np.exp(0.5j * h * omega))


# -- ambiguity tables --------------------------------------------------------------


@dataclass
class AmbiguityTable:
    """A(k, s) = <W(2 pi k, s/(N h)) u, u> for |k|_inf <= K, |s|_inf <= J."""

    h: float
    n: int
    k_range: int
    j_range: int
    values: np.ndarray  # [k1 + K, k2 + K, s1 + J, s2 + J]
    flux_phi: int = 0
    energy: float | None = None

    @property
    def zeta_step(self) -> float:
        return 1.0 / (self.n * self.h)

    def at(self, k, s) -> complex:
        K, J = self.k_range, self.j_range
        return complex(self.values[k[0] + K, k[1] + K, s[0] + J, s[1] + J])

    def csv(self) -> str:
        K, J = self.k_range, self.j_range
        lines = ["eta1,eta2,zeta1,zeta2,re,im"]
        d = self.zeta_step
        for k1 in range(-K, K + 1):
            for k2 in range(-K, K + 1):
                for s1 in range(-J, J + 1):
                    for s2 in range(-J, J + 1):
                        z = self.values[k1 + K, k2 + K, s1 + J, s2 + J]
                        lines.append(
                            f"{TWO_PI * k1:.17g},{TWO_PI * k2:.17g},{s1 * d:.17g},{s2 * d:.17g},{z.real:.17g},{z.imag:.17g}"
                        )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, h: float, n: int, flux_phi: int = 0, energy: float | None = None) -> "AmbiguityTable":
        rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        data = np.array([[float(v) for v in ln.split(",")] for ln in rows[1:]])
        k = np.rint(data[:, :2] / TWO_PI).astype(int)
        s = np.rint(data[:, 2:4] * n * h).astype(int)
        K = int(np.max(np.abs(k)))
        J = int(np.max(np.abs(s)))
        vals = np.zeros((2 * K + 1, 2 * K + 1, 2 * J + 1, 2 * J + 1), dtype=complex)
        vals[k[:, 0] + K, k[:, 1] + K, s[:, 0] + J, s[:, 1] + J] = data[:, 4] + 1j * data[:, 5]
        return cls(h, n, K, J, vals, flux_phi, energy)


def _extended(u: GridWavefunction, J: int) -> np.ndarray:
    """u on nodes -J .. N+J-1 in both axes, through the wrap rule."""
    j = np.arange(-J, u.n + J)
    return u.read(j[:, None], j[None, :])


def _shift_windows(ext: np.ndarray, s1: int, J: int, n: int) -> np.ndarray:
    """Stack over s2 = -J..J of u shifted by (s1, s2), shape (2J+1, n, n)."""
    rows = ext[J + s1 : J + s1 + n]
    return np.moveaxis(sliding_window_view(rows, n, axis=1), 1, 0)


def _phase_factors(b0: float, n: int, s1: int, J: int) -> tuple[np.ndarray, np.ndarray]:
    """Split exp(i (B0/2)(s/N) ^ x) into a row part (s1, x2) and a column part (s2, x1)."""
    j = np.arange(n) / n
    s2 = np.arange(-J, J + 1)
    row = np.exp(0.5j * b0 * s1 * j / n)[None, :]
    cols = np.exp(-0.5j * b0 * np.outer(s2, j) / n)
    return row, cols


def ambiguity_table(u: GridWavefunction, h: float, k_sym: int, j_range: int, energy: float | None = None) -> AmbiguityTable:
    """All pairings <W u, u> on the commensurate grid, one FFT per shift."""
    n = u.n
    if n * h < 1.0:
        raise GridTooCoarseForH(f"N h = {n * h:g} < 1")
    K, J = int(k_sym), int(j_range)
    vals = np.zeros((2 * K + 1, 2 * K + 1, 2 * J + 1, 2 * J + 1), dtype=complex)
    ks = np.arange(-K, K + 1)
    conj_u = np.conj(u.values)
    ext = _extended(u, J)
    s2v = np.arange(-J, J + 1)
    for s1 in range(-J, J + 1):
        row, cols = _phase_factors(u.b0, n, s1, J)
        block = _shift_windows(ext, s1, J, n) * cols[:, :, None] * (row * conj_u)[None]
        # ifft2 gives (1/N^2) sum_j e^{+2 pi i k.j/N} v_j
        coef = np.fft.ifft2(block, axes=(1, 2))
        sub = coef[:, ks[:, None] % n, ks[None, :] % n]  # (2J+1, 2K+1, 2K+1)
        corr = np.exp(1j * np.pi * (ks[None, :, None] * s1 + ks[None, None, :] * s2v[:, None, None]) / n)
        vals[:, :, s1 + J, :] = np.transpose(sub * corr, (1, 2, 0))
    return AmbiguityTable(h, n, K, J, vals, u.flux_phi, energy)


# -- pairings and operators --------------------------------------------------------


def _check_range(sym: BandLimitedSymbol, h: float, n: int):
    if not sym.xi_independent and sym.xi_max >= np.pi * n * h:
        raise SymbolRangeExceeded(
            f"profile support {sym.xi_max:g} exceeds the grid momentum window pi N h = {np.pi * n * h:g}"
        )


def _profile_table(p: Profile, step: float, J: int) -> np.ndarray:
    z = np.arange(-J, J + 1) * step
    return p.transform(z, z)


def tail_fraction(sym: BandLimitedSymbol, h: float, n: int, J: int) -> float:
    """Largest |F(a_k)| on the outer ring |s|_inf = J relative to the overall maximum."""
    step = 1.0 / (n * h)
    peak = 0.0
    ring = 0.0
    for p in sym.x_modes.values():
        if p.constant is not None:
            continue
        t = np.abs(_profile_table(p, step, J))
        peak = max(peak, float(t.max()))
        edge = np.concatenate([t[0], t[-1], t[:, 0], t[:, -1]])
        ring = max(ring, float(edge.max()))
    return ring / peak if peak > 0 else 0.0


def required_j(sym: BandLimitedSymbol, h: float, n: int, tail_tol: float = 1e-8, j_cap: int = 512) -> int:
    """Smallest J (on a 5/4 geometric ladder) whose discarded tail is below tail_tol."""
    if sym.xi_independent:
        return 0
    J = max(4, int(np.ceil(n * h)))
    while J <= j_cap:
        if tail_fraction(sym, h, n, J) < tail_tol:
            return J
        J += max(1, J // 4)
    raise SymbolRangeExceeded(f"zeta truncation above {j_cap} needed for tail {tail_tol:g}")


def wigner_pair(sym: BandLimitedSymbol, tab: AmbiguityTable, tail_tol: float = 1e-8) -> complex:
    """w_h(a) = <Op(a) u, u> from the ambiguity table of u.

    Momentum-independent modes pair with A(k, 0) exactly; the others use the
    trapezoid sum over the stored zeta grid, which must capture the
    transform up to tail_tol.
    """
    if sym.k_sym > tab.k_range:
        raise SymbolRangeExceeded(f"symbol modes up to {sym.k_sym} but table has K = {tab.k_range}")
    _check_range(sym, tab.h, tab.n)
    K, J = tab.k_range, tab.j_range
    step = tab.zeta_step
    total = 0.0j
    for (k1, k2), p in sym.x_modes.items():
        a_ks = tab.values[k1 + K, k2 + K]
        if p.constant is not None:
            total += p.constant * a_ks[J, J]
            continue
        ft = _profile_table(p, step, J)
        peak = np.max(np.abs(ft))
        edge = max(np.abs(ft[[0, -1], :]).max(), np.abs(ft[:, [0, -1]]).max())
        if peak > 0 and edge > tail_tol * peak:
            raise SymbolRangeExceeded(f"zeta range J = {J} leaves a tail {edge / peak:.2e} > {tail_tol:g}")
        total += step * step * np.sum(ft * a_ks) / (4 * np.pi**2)
    return complex(total)


def norm_bound(sym: BandLimitedSymbol, h: float, n: int, J: int) -> float:
    """(2 pi)^-2 sum_k sum_s step^2 |F(a_k)| : bounds |w_h(a)| for unit u."""
    step = 1.0 / (n * h)
    total = 0.0
    for p in sym.x_modes.values():
        if p.constant is not None:
            total += abs(p.constant)
        else:
            total += step * step * float(np.sum(np.abs(_profile_table(p, step, J)))) / (4 * np.pi**2)
    return total


def op_apply(sym: BandLimitedSymbol, v: GridWavefunction, h: float, J: int | None = None, tail_tol: float = 1e-8) -> GridWavefunction:
    """Op(a) v as the same trapezoid sum of Weyl operators used by the pairing."""
    n = v.n
    if n * h < 1.0:
        raise GridTooCoarseForH(f"N h = {n * h:g} < 1")
    _check_range(sym, h, n)
    x1 = np.arange(n)[:, None] / n
    x2 = np.arange(n)[None, :] / n
    out = np.zeros((n, n), dtype=complex)
    moving = {}
    for (k1, k2), p in sym.x_modes.items():
        wave = np.exp(1j * TWO_PI * (k1 * x1 + k2 * x2))
        if p.constant is not None:
            out += p.constant * wave * v.values
        else:
            moving[(k1, k2)] = (p, wave)
    if moving:
        if J is None:
            J = required_j(sym, h, n, tail_tol)
        step = 1.0 / (n * h)
        fts = {k: _profile_table(p, step, J) for k, (p, _) in moving.items()}
        weight = step * step / (4 * np.pi**2)
        keys = list(moving)
        ft = np.stack([fts[k] for k in keys])  # (modes, 2J+1, 2J+1)
        kv = np.array(keys)
        s = np.arange(-J, J + 1)
        half1 = np.exp(1j * np.pi * np.outer(kv[:, 0], s) / n)  # (modes, 2J+1)
        half2 = np.exp(1j * np.pi * np.outer(kv[:, 1], s) / n)
        waves = np.stack([moving[k][1] for k in keys])
        ext = _extended(v, J)
        acc = np.zeros((len(keys), n, n), dtype=complex)
        for s1 in range(-J, J + 1):
            row, cols = _phase_factors(v.b0, n, s1, J)
            shifted = _shift_windows(ext, s1, J, n) * cols[:, :, None]
            coef = ft[:, s1 + J, :] * half2 * half1[:, s1 + J, None]
            acc += np.tensordot(coef, shifted, axes=(1, 0)) * row
        out += weight * np.sum(waves * acc, axis=0)
    return GridWavefunction(n, out, v.flux_phi)


def composition_residual(a: BandLimitedSymbol, b: BandLimitedSymbol, h: float, vectors: list[GridWavefunction], J: int | None = None) -> float:
    """max_v ||(Op(a) Op(b) - Op(ab)) v|| / ||v||."""
    ab = symbol_product(a, b)
    if J is None:
        J = max(required_j(s, h, vectors[0].n) for s in (a, b, ab))
    worst = 0.0
    for v in vectors:
        lhs = op_apply(a, op_apply(b, v, h, J), h, J)
        rhs = op_apply(ab, v, h, J)
        worst = max(worst, GridWavefunction(v.n, lhs.values - rhs.values, v.flux_phi).norm() / v.norm())
    return worst


@dataclass(frozen=True)
class _FlowDerivativeProfile(Profile):
    """Mode k of (2h/i)(xi - h alpha).d_x b, i.e. 2 h (xi - h alpha).(2 pi k) b_k(xi)."""

    base: Profile = None
    k: tuple[int, int] = (0, 0)
    h: float = 1.0
    alpha: tuple[float, float] = (0.0, 0.0)

    @property
    def support(self) -> float:
        return self.base.support

    @property
    def scale(self) -> float:
        return self.base.scale

    def __call__(self, xi1, xi2):
        v1 = np.asarray(xi1) - self.h * self.alpha[0]
        v2 = np.asarray(xi2) - self.h * self.alpha[1]
        return 2 * self.h * TWO_PI * (self.k[0] * v1 + self.k[1] * v2) * self.base(xi1, xi2)


def spectral_kinetic(v: GridWavefunction, h: float, alpha=(0.0, 0.0)) -> GridWavefunction:
    """h^2 (-i grad - alpha)^2 v by FFT, for periodic (zero-flux) grid functions."""
    if v.flux_phi != 0:
        raise ValueError("spectral kinetic operator needs zero flux")
    n = v.n
    p = np.fft.fftfreq(n, 1.0 / n)
    q1 = TWO_PI * p[:, None] - alpha[0]
    q2 = TWO_PI * p[None, :] - alpha[1]
    return GridWavefunction(n, np.fft.ifft2(h * h * (q1 * q1 + q2 * q2) * np.fft.fft2(v.values)), 0)


def quadratic_commutator_residual(
    b: BandLimitedSymbol,
    h: float,
    vectors: list[GridWavefunction],
    alpha=(0.0, 0.0),
    H: SparseHermitianOperator | None = None,
    J: int | None = None,
) -> float:
    """max_v ||[Op(|xi - h alpha|^2), Op(b)] v - Op((h/i) X_h b) v|| / ||v||.

    With H omitted the flux must vanish and Op(|xi - h alpha|^2) is the exact
    spectral operator, so only quadrature error remains.  With H given,
    h^2 H stands in for the quadratic symbol and the residual also contains
    the finite-difference error; the momentum-derivative term of X_h is then
    omitted, so this mode is only meaningful for zero flux as well.
    """
    alpha = tuple(float(v) for v in alpha)
    modes = {}
    for k, p in b.x_modes.items():
        if k == (0, 0):
            continue
        if p.constant is not None:
            raise ValueError("profiles must be compactly supported in xi for the commutator check")
        modes[k] = _FlowDerivativeProfile(base=p, k=k, h=h, alpha=alpha)
    flow = BandLimitedSymbol(modes)
    if J is None:
        J = max(required_j(s, h, vectors[0].n) for s in (b, flow))

    def quad(v):
        if H is None:
            return spectral_kinetic(v, h, alpha)
        return GridWavefunction(v.n, h * h * H.matvec(v.flat).reshape(v.n, v.n), v.flux_phi)

    worst = 0.0
    for v in vectors:
        lhs = quad(op_apply(b, v, h, J)).values - op_apply(b, quad(v), h, J).values
        rhs = op_apply(flow, v, h, J).values
        worst = max(worst, GridWavefunction(v.n, lhs - rhs, v.flux_phi).norm() / v.norm())
    return worst


# -- averaging along the cyclotron flow --------------------------------------------


@dataclass(frozen=True)
class AveragedProfile(Profile):
    """Mode-k profile of the average of a along the period of the cyclotron flow.

    (1/M) sum_m exp(2 pi i k.(e^{t_m J} - Id) v^perp / (h B0)) a_k(e^{t_m J} v + h alpha),
    v = xi - h alpha, t_m = 2 pi m / M.  M adapts to the oscillation so the
    periodic trapezoid rule stays spectrally accurate.
    """

    base: Profile = None
    k: tuple[int, int] = (0, 0)
    h: float = 1.0
    b0: float = 1.0
    alpha: tuple[float, float] = (0.0, 0.0)
    nodes: int | None = None

    @property
    def support(self) -> float:
        return self.base.support + 2 * self.h * float(np.max(np.abs(self.alpha)))

    @property
    def scale(self) -> float:
        return self.base.scale

    def _count(self, vmax: float) -> int:
        if self.nodes is not None:
            return self.nodes
        # Bessel-type argument 2 pi |k| |v| / (h B0); the trapezoid error decays like J_M(z)
        z = TWO_PI * np.hypot(*self.k) * vmax / abs(self.h * self.b0)
        m = int(1.3 * z) + 64
        return m + m % 2

    def __call__(self, xi1, xi2):
        xi1 = np.asarray(xi1, dtype=float)
        xi2 = np.asarray(xi2, dtype=float)
        shape = np.broadcast(xi1, xi2).shape
        ha1, ha2 = self.h * self.alpha[0], self.h * self.alpha[1]
        v1 = np.broadcast_to(xi1 - ha1, shape).ravel()
        v2 = np.broadcast_to(xi2 - ha2, shape).ravel()
        m = self._count(float(np.max(np.hypot(v1, v2), initial=0.0)))
        t = TWO_PI * np.arange(m) / m
        c = np.cos(t)[:, None]
        s = np.sin(t)[:, None]
        hb = self.h * self.b0
        out = np.empty(v1.size, dtype=complex)
        chunk = max(1, (1 << 21) // m)
        for lo in range(0, v1.size, chunk):
            a1 = v1[None, lo:lo + chunk]
            a2 = v2[None, lo:lo + chunk]
            # e^{tJ} v with J = [[0, 1], [-1, 0]]
            w1 = c * a1 + s * a2
            w2 = -s * a1 + c * a2
            # (e^{tJ} - Id) v^perp, v^perp = (-v2, v1)
            d1 = a2 - w2
            d2 = w1 - a1
            phase = np.exp(1j * TWO_PI * (self.k[0] * d1 + self.k[1] * d2) / hb)
            out[lo:lo + chunk] = (phase * self.base(w1 + ha1, w2 + ha2)).mean(axis=0)
        return out.reshape(shape)


def averaged_symbol(sym: BandLimitedSymbol, h: float, b0: float, alpha=(0.0, 0.0), nodes: int | None = None) -> BandLimitedSymbol:
    """Average of sym along one period pi/(h B0) of the cyclotron flow Phi_h^t."""
    if h * b0 == 0:
        raise ValueError("averaging needs h * B0 != 0")
    alpha = tuple(float(v) for v in alpha)
    modes = {}
    for k, p in sym.x_modes.items():
        if p.constant is not None and k == (0, 0):
            modes[k] = p
            continue
        base = p if p.constant is None else FunctionProfile(lambda a1, a2, c=p.constant: np.full(np.broadcast(a1, a2).shape, c), np.inf, 1.0)
        modes[k] = AveragedProfile(base=base, k=k, h=h, b0=b0, alpha=alpha, nodes=nodes)
    return BandLimitedSymbol(modes, real=sym.real)


def annulus_sup(profile: Profile, h: float, b0: float, alpha=(0.0, 0.0), r_min: float = 0.5, r_max: float = 1.5, angles: int = 8, per_period: int = 48) -> float:
    """sup |profile(xi)| over r_min <= |xi - h alpha| <= r_max.

    The radial grid resolves the Bessel-type oscillation of averaged modes,
    whose period in |xi| is about h B0 / |k|.
    """
    k = getattr(profile, "k", (1, 0))
    period = abs(h * b0) / max(np.hypot(*k), 1e-300)
    count = max(64, int(np.ceil((r_max - r_min) / period * per_period)))
    r = np.linspace(r_min, r_max, count)
    th = TWO_PI * np.arange(angles) / angles
    ha = h * np.asarray(alpha, dtype=float)
    xi1 = ha[0] + np.outer(r, np.cos(th))
    xi2 = ha[1] + np.outer(r, np.sin(th))
    return float(np.max(np.abs(profile(xi1, xi2))))
