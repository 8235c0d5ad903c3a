"""Band-limited magnetic fields, scalar potentials and gauge potentials on T^2.

All periodic data is stored as a finite map ``(k1, k2) -> complex`` of Fourier
coefficients for the series ``sum_k c_k exp(2 pi i k.x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import FluxNotQuantized, NonRealField

TWO_PI = 2.0 * np.pi
FLUX_TOL = 1e-9
REALITY_TOL = 1e-12
CURL_TOL = 1e-10

Mode = tuple[int, int]


def _as_mode(k) -> Mode:
    k1, k2 = k
    if int(k1) != k1 or int(k2) != k2:
        raise ValueError(f"wavevector {k!r} is not integral")
    return int(k1), int(k2)


def _symmetrize(entries: Iterable[tuple[Mode, complex]], what: str) -> dict[Mode, complex]:
    """Merge a mode list into a conjugate-symmetric dict.

    A mode given without its partner gets the partner ``conj(c)``; a pair
    given twice must agree.
    """
    given: dict[Mode, complex] = {}
    for k, c in entries:
        k = _as_mode(k)
        c = complex(c)
        if k in given and abs(given[k] - c) > REALITY_TOL * max(1.0, abs(c)):
            raise NonRealField(f"{what}: mode {k} given twice with different values")
        given[k] = c
    out: dict[Mode, complex] = {}
    for k, c in given.items():
        mk = (-k[0], -k[1])
        if k == (0, 0):
            if abs(c.imag) > REALITY_TOL:
                raise NonRealField(f"{what}: mean value has imaginary part {c.imag:g}")
            out[k] = complex(c.real, 0.0)
            continue
        if mk in given:
            partner = given[mk]
            if abs(partner - c.conjugate()) > REALITY_TOL * max(1.0, abs(c)):
                raise NonRealField(
                    f"{what}: modes {k} and {mk} are not complex conjugates"
                )
        out[k] = c
        out[mk] = c.conjugate()
    return {k: v for k, v in out.items() if v != 0 or k == (0, 0)}


def eval_modes(modes: Mapping[Mode, complex], x1, x2) -> np.ndarray:
    """Evaluate ``sum_k c_k e^{2 pi i k.x}`` at broadcastable points (complex)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    out = np.zeros(np.broadcast(x1, x2).shape, dtype=complex)
    for (k1, k2), c in modes.items():
        out += c * np.exp(1j * TWO_PI * (k1 * x1 + k2 * x2))
    return out


@dataclass(frozen=True)
class FourierSeries:
    """Real-valued band-limited periodic function."""

    modes: dict[Mode, complex] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(self.modes.get((0, 0), 0.0).real)

    @property
    def bandlimit(self) -> int:
        return max((max(abs(k1), abs(k2)) for k1, k2 in self.modes), default=0)

    def nonzero_modes(self) -> dict[Mode, complex]:
        return {k: c for k, c in self.modes.items() if k != (0, 0) and c != 0}

    def __call__(self, x1, x2) -> np.ndarray:
        vals = eval_modes(self.modes, x1, x2)
        if vals.size and np.max(np.abs(vals.imag)) > REALITY_TOL * max(1.0, np.max(np.abs(vals.real))):
            raise NonRealField("evaluated sum has a non-negligible imaginary part")
        return vals.real

    def gradient_modes(self) -> dict[Mode, np.ndarray]:
        return {
            k: TWO_PI * 1j * np.array([k[0], k[1]], dtype=float) * c
            for k, c in self.modes.items()
            if k != (0, 0)
        }

    def extract_modes(self) -> list[tuple[Mode, complex]]:
        return sorted(self.modes.items())


class MagneticField(FourierSeries):
    """Band-limited field B(x) with quantized flux ``B0 = modes[(0, 0)]``."""

    @property
    def flux(self) -> float:
        return self.mean

    @property
    def phi(self) -> int:
        return int(round(self.flux / TWO_PI))


class ScalarPotential(FourierSeries):
    pass


def build_field(mode_list: Iterable[tuple[Mode, complex]]) -> MagneticField:
    """Build a reality-symmetrized field and check flux quantization.

    >>> build_field([((0, 0), 4 * np.pi)]).phi
    2
    """
    modes = _symmetrize(mode_list, "field")
    if (0, 0) not in modes:
        raise FluxNotQuantized("field has no k=0 entry (flux undefined)")
    b0 = modes[(0, 0)].real
    ratio = b0 / TWO_PI
    if abs(ratio - round(ratio)) > FLUX_TOL:
        raise FluxNotQuantized(
            f"flux B0/2pi = {ratio:.12g} is not an integer (tolerance {FLUX_TOL:g})"
        )
    return MagneticField(modes)


def build_potential(mode_list: Iterable[tuple[Mode, complex]]) -> ScalarPotential:
    return ScalarPotential(_symmetrize(mode_list, "potential"))


def eval_field(fld: MagneticField, x) -> float:
    x1, x2 = x
    return float(fld(x1, x2))


@dataclass(frozen=True)
class GaugePotential:
    """A = A0 + A_per with A0(x) = (B0/2)(-x2, x1), plus the constant alpha.

    ``aper_modes`` maps k to the complex 2-vector of Fourier coefficients of
    the periodic part.
    """

    a0_strength: float
    aper_modes: dict[Mode, np.ndarray]
    alpha: np.ndarray
    field: MagneticField | None = None

    @property
    def phi(self) -> int:
        return int(round(self.a0_strength / TWO_PI))

    def aper(self, x1, x2) -> tuple[np.ndarray, np.ndarray]:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        shape = np.broadcast(x1, x2).shape
        a1 = np.zeros(shape, dtype=complex)
        a2 = np.zeros(shape, dtype=complex)
        for (k1, k2), c in self.aper_modes.items():
            e = np.exp(1j * TWO_PI * (k1 * x1 + k2 * x2))
            a1 += c[0] * e
            a2 += c[1] * e
        return a1.real, a2.real

    def __call__(self, x1, x2) -> tuple[np.ndarray, np.ndarray]:
        """Full vector potential A0 + A_per (alpha excluded)."""
        p1, p2 = self.aper(x1, x2)
        half = 0.5 * self.a0_strength
        return -half * np.asarray(x2) + p1, half * np.asarray(x1) + p2

    def curl(self, x1, x2) -> np.ndarray:
        """Spectral d1 A2 - d2 A1."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = np.full(np.broadcast(x1, x2).shape, self.a0_strength, dtype=complex)
        for (k1, k2), c in self.aper_modes.items():
            out += TWO_PI * 1j * (k1 * c[1] - k2 * c[0]) * np.exp(
                1j * TWO_PI * (k1 * x1 + k2 * x2)
            )
        return out.real

    def bandlimit(self) -> int:
        return max((max(abs(k1), abs(k2)) for k1, k2 in self.aper_modes), default=0)


def build_gauge(fld: MagneticField, alpha=(0.0, 0.0)) -> GaugePotential:
    """Coulomb-gauge vector potential for ``fld``.

    A_per = (-d2 psi, d1 psi) with psi_k = -B_k / (4 pi^2 |k|^2), so that
    curl A_per = laplacian psi = B - B0.
    """
    aper: dict[Mode, np.ndarray] = {}
    for (k1, k2), b in fld.nonzero_modes().items():
        psi = -b / (4.0 * np.pi**2 * (k1 * k1 + k2 * k2))
        aper[(k1, k2)] = np.array([-TWO_PI * 1j * k2 * psi, TWO_PI * 1j * k1 * psi])
    return GaugePotential(
        a0_strength=fld.flux,
        aper_modes=aper,
        alpha=np.asarray(alpha, dtype=float).reshape(2),
        field=fld,
    )


def verify_gauge(gauge: GaugePotential, fld: MagneticField | None = None, grid: int | None = None) -> float:
    """Max |curl A - B| over a uniform grid (default 4K x 4K, at least 8 x 8)."""
    fld = fld if fld is not None else gauge.field
    if fld is None:
        raise ValueError("no field to verify against")
    k = max(fld.bandlimit, gauge.bandlimit(), 1)
    n = grid or max(8, 4 * k)
    x = np.arange(n) / n
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    return float(np.max(np.abs(gauge.curl(x1, x2) - fld(x1, x2))))


def gauge_shift(gauge: GaugePotential, phi: FourierSeries | Mapping[Mode, complex]) -> GaugePotential:
    """Add grad(phi) to the periodic part of the potential.

    Eigenfunctions of the shifted operator are those of the original one
    multiplied by exp(i phi).
    """
    if not isinstance(phi, FourierSeries):
        phi = ScalarPotential(_symmetrize(phi.items(), "gauge function"))
    aper = {k: v.copy() for k, v in gauge.aper_modes.items()}
    for k, g in phi.gradient_modes().items():
        aper[k] = aper.get(k, np.zeros(2, dtype=complex)) + g
    return GaugePotential(gauge.a0_strength, aper, gauge.alpha.copy(), gauge.field)


def random_gauge_function(bandlimit: int, rng: np.random.Generator, scale: float = 1.0) -> ScalarPotential:
    """Random real band-limited function, used for gauge-invariance checks."""
    entries = []
    for k1 in range(0, bandlimit + 1):
        for k2 in range(-bandlimit, bandlimit + 1):
            if (k1, k2) <= (0, 0):
                continue
            c = scale * (rng.standard_normal() + 1j * rng.standard_normal()) / (1 + k1 * k1 + k2 * k2)
            entries.append(((k1, k2), c))
    return build_potential(entries)


def link_integral(gauge: GaugePotential, x1, x2, direction: int, length: float) -> np.ndarray:
    """Exact line integral of A + alpha along x -> x + length * e_direction.

    A0 is linear, so its midpoint value is exact; each periodic Fourier mode
    is integrated in closed form.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    half = 0.5 * gauge.a0_strength
    if direction == 0:
        val = (-half * x2 + gauge.alpha[0]) * length
    else:
        val = (half * x1 + gauge.alpha[1]) * length
    val = np.asarray(val, dtype=float) + np.zeros(np.broadcast(x1, x2).shape)
    acc = np.zeros(val.shape, dtype=complex)
    for (k1, k2), c in gauge.aper_modes.items():
        kd = (k1, k2)[direction]
        if kd == 0:
            weight = length
        else:
            weight = (np.exp(1j * TWO_PI * kd * length) - 1.0) / (1j * TWO_PI * kd)
        acc += c[direction] * weight * np.exp(1j * TWO_PI * (k1 * x1 + k2 * x2))
    return val + acc.real
