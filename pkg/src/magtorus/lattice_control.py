"""Rank-one sublattices, directional averages of B and the control certifier.

For a band-limited field only the finitely many lattices Z e containing a
nonzero mode of B carry a non-constant average; every other direction
averages B to its mean.  The certifier therefore checks a finite list of
one-dimensional trigonometric polynomials.  (For general smooth B one would
bound the tail through the decay of the Fourier coefficients instead; that
path is not needed here.)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DirectionMismatch, NonPositiveMeanFlux
from .field_gauge import TWO_PI, MagneticField, build_field

DIRECTION_TOL = 1e-12


@dataclass(frozen=True, order=True)
class Sublattice:
    """Z e for a primitive, lexicographically positive integer vector e."""

    e: tuple[int, int]

    def __post_init__(self):
        e1, e2 = (int(v) for v in self.e)
        if (e1, e2) == (0, 0):
            raise ValueError("generator must be nonzero")
        if gcd(abs(e1), abs(e2)) != 1:
            raise ValueError(f"generator {self.e} is not primitive")
        if (e1, e2) < (0, 0):
            raise ValueError(f"generator {self.e} is not canonically signed")
        object.__setattr__(self, "e", (e1, e2))

    @classmethod
    def through(cls, k) -> "Sublattice":
        """The rank-one lattice containing the nonzero integer vector k."""
        k1, k2 = (int(v) for v in k)
        g = gcd(abs(k1), abs(k2))
        if g == 0:
            raise ValueError("k = 0 spans no lattice")
        e = (k1 // g, k2 // g)
        if e < (0, 0):
            e = (-e[0], -e[1])
        return cls(e)

    @property
    def length(self) -> float:
        return float(np.hypot(*self.e))

    @property
    def perp(self) -> tuple[int, int]:
        return (-self.e[1], self.e[0])

    def anchor(self, y) -> np.ndarray:
        """A point x with e.x = y (on the line through 0 along e)."""
        return np.multiply.outer(np.asarray(y, dtype=float), np.asarray(self.e, dtype=float)) / self.length**2


@dataclass(frozen=True)
class DirectionalAverage:
    """I_Lambda(B)(x) = sum_j coeffs[j] exp(2 pi i j e.x)."""

    lattice: Sublattice
    coeffs: dict[int, complex]

    def profile(self, y) -> np.ndarray:
        """The average as a 1-periodic function of y = e.x."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape, dtype=complex)
        for j, c in self.coeffs.items():
            out += c * np.exp(1j * TWO_PI * j * y)
        return out.real

    def __call__(self, x1, x2) -> np.ndarray:
        e1, e2 = self.lattice.e
        return self.profile(e1 * np.asarray(x1, dtype=float) + e2 * np.asarray(x2, dtype=float))

    def primitive(self, y) -> np.ndarray:
        """F with F' = profile, F(0) = 0; the mean contributes a linear term."""
        y = np.asarray(y, dtype=float)
        out = self.coeffs.get(0, 0.0).real * y
        acc = np.zeros(y.shape, dtype=complex)
        for j, c in self.coeffs.items():
            if j:
                acc += c * (np.exp(1j * TWO_PI * j * y) - 1.0) / (1j * TWO_PI * j)
        return out + acc.real

    def lipschitz(self) -> float:
        """Lipschitz constant in x: 2 pi sum |j| |e| |c_j|."""
        return TWO_PI * self.lattice.length * sum(abs(j) * abs(c) for j, c in self.coeffs.items())

    def as_field(self) -> MagneticField:
        e1, e2 = self.lattice.e
        return build_field([((j * e1, j * e2), c) for j, c in self.coeffs.items()])


@dataclass
class Witness:
    lattice: Sublattice
    min_value: float
    argmin: np.ndarray
    lower_bound: float

    def to_dict(self) -> dict:
        return {
            "e": list(self.lattice.e),
            "L": self.lattice.length,
            "min": self.min_value,
            "lower_bound": self.lower_bound,
            "argmin": [float(v) for v in self.argmin],
        }


@dataclass
class ControlCertificate:
    verdict: bool
    witnesses: list[Witness] = field(default_factory=list)
    lattices_checked: int = 0
    exact: bool = True
    mean_flux: float = 0.0

    def to_dict(self) -> dict:
        return {
            "verdict": "pass" if self.verdict else "fail",
            "witnesses": [w.to_dict() for w in self.witnesses],
            "lattices_checked": self.lattices_checked,
            "exact": self.exact,
            "tail_value": self.mean_flux,
        }


def relevant_sublattices(fld: MagneticField) -> list[Sublattice]:
    """Canonical lattices containing at least one nonzero mode of fld, sorted."""
    return sorted({Sublattice.through(k) for k in fld.nonzero_modes()})


def directional_average(fld: MagneticField, lat: Sublattice) -> DirectionalAverage:
    """Keep the modes k = j e of fld; coefficient j is B_{j e}."""
    e1, e2 = lat.e
    coeffs = {0: complex(fld.mean)}
    for (k1, k2), c in fld.nonzero_modes().items():
        # k is in Z e iff k ^ e = 0; then j = k.e / |e|^2 is an integer
        if k1 * e2 - k2 * e1 == 0:
            coeffs[(k1 * e1 + k2 * e2) // (e1 * e1 + e2 * e2)] = c
    return DirectionalAverage(lat, coeffs)


def b_infinity(fld: MagneticField, theta, lattice: Sublattice | None = None):
    """Long-time average of B along rays in direction theta.

    ``lattice=None`` tags theta as irrational and returns the mean B0.  For a
    rational direction pass the lattice whose perpendicular contains theta;
    the result is the corresponding DirectionalAverage (callable in x).
    """
    if lattice is None:
        return fld.mean
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(lattice.perp, dtype=float) / lattice.length
    t = theta / np.linalg.norm(theta)
    if abs(t[0] * p[1] - t[1] * p[0]) > DIRECTION_TOL:
        raise DirectionMismatch(f"direction {tuple(theta)} is not along {lattice.perp}")
    return directional_average(fld, lattice)


def _sample(avg: DirectionalAverage, density: int):
    y = np.arange(density) / density
    return y, avg.profile(y)


def _refine_min(f, y0: float, step: float) -> tuple[float, float]:
    res = minimize_scalar(f, bounds=(y0 - step, y0 + step), method="bounded", options={"xatol": 1e-13})
    y = float(res.x) % 1.0
    fy = float(f(y))
    if f(y0) < fy:
        return y0 % 1.0, float(f(y0))
    return y, fy


def certify_control(fld: MagneticField, sample_density: int = 4096) -> ControlCertificate:
    """Certify B_inf > 0 for every direction.

    Each relevant average is sampled at ``sample_density`` points along its
    period; the smallest sample minus the Lipschitz slack
    2 pi sum |j||c_j| / (2 density) is a rigorous lower bound.  The witness
    records the locally refined minimum.  All other directions average to
    B0, which is positive by precondition.
    """
    b0 = fld.mean
    if b0 <= 0:
        raise NonPositiveMeanFlux(f"mean flux {b0:g} must be positive")
    witnesses = []
    verdict = True
    lattices = relevant_sublattices(fld)
    for lat in lattices:
        avg = directional_average(fld, lat)
        y, vals = _sample(avg, sample_density)
        i = int(np.argmin(vals))
        slack = TWO_PI * sum(abs(j) * abs(c) for j, c in avg.coeffs.items()) / (2.0 * sample_density)
        lower = float(vals[i]) - slack
        ymin, fmin = _refine_min(lambda s: float(avg.profile(s)), float(y[i]), 1.0 / sample_density)
        witnesses.append(Witness(lat, fmin, lat.anchor(ymin), lower))
        verdict = verdict and lower > 0.0
    return ControlCertificate(verdict, witnesses, len(lattices), True, b0)


def critical_geodesics(fld: MagneticField, lat: Sublattice, tol: float = 1e-9, density: int = 4096) -> list[np.ndarray]:
    """Anchors of the closed geodesics along lat^perp on which I_Lambda(B) vanishes.

    Simple roots are bracketed by sign changes and bisected; even-order roots
    show up as local minima of |I_Lambda(B)| and are accepted when the refined
    value is below tol.
    """
    avg = directional_average(fld, lat)
    if len(avg.coeffs) == 1:
        return [] if abs(avg.coeffs[0]) > tol else [lat.anchor(0.0)]
    f = lambda s: float(avg.profile(s))
    y, vals = _sample(avg, density)
    step = 1.0 / density
    roots: list[float] = []
    nxt = np.roll(vals, -1)
    for i in np.nonzero(np.sign(vals) * np.sign(nxt) < 0)[0]:
        roots.append(brentq(f, y[i], y[i] + step, xtol=1e-15) % 1.0)
    mag = np.abs(vals)
    local = (mag <= np.roll(mag, 1)) & (mag <= np.roll(mag, -1))
    for i in np.nonzero(local)[0]:
        if vals[i] == 0.0:
            roots.append(float(y[i]))
            continue
        sgn = np.sign(vals[i])
        ym, fm = _refine_min(lambda s: sgn * f(s), float(y[i]), step)
        if abs(fm) <= tol:
            roots.append(ym)
    roots.sort()
    merged: list[float] = []
    for r in roots:
        if not merged or min(abs(r - merged[-1]), 1 - abs(r - merged[-1])) > 10 * step:
            merged.append(r)
    if len(merged) > 1 and 1 - abs(merged[-1] - merged[0]) <= 10 * step:
        merged.pop()
    return [lat.anchor(r) for r in merged if abs(f(r)) <= max(tol, 1e-12)]
