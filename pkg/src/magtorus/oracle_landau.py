"""Closed-form spectrum and eigenfunctions for a constant field B = 2 pi phi.

With theta(x) = (B x2 / 2 - alpha1) x1 the operator conjugates to
(-i d1)^2 + (-i d2 - alpha2 - B x1)^2, whose eigenfunctions are

    v(x) = sum_n exp(2 pi i (n phi + p) x2) exp(-i n alpha1) v_p(x1 - n),

with v_p a shifted Hermite function centred at c_p = (2 pi p - alpha2) / B.
The magnetic-periodic eigenfunction is u = exp(-i theta) v.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadFlux
from .field_gauge import TWO_PI
from .operator_grid import GridWavefunction, grid_points

TAIL = 1e-14


@dataclass(frozen=True)
class LandauLevel:
    j: int
    eigenvalue: float
    multiplicity: int


@dataclass(frozen=True)
class LandauSpec:
    B: float
    phi: int
    alpha: np.ndarray
    levels: list[LandauLevel]

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity."""
        return np.repeat([lv.eigenvalue for lv in self.levels], self.phi)


def _flux_integer(b0: float) -> int:
    phi = b0 / TWO_PI
    if b0 <= 0 or abs(phi - round(phi)) > 1e-9:
        raise BadFlux(f"constant field {b0:g} is not a positive multiple of 2 pi")
    return int(round(phi))


def landau_spectrum(b0: float, alpha=(0.0, 0.0), j_max: int = 1) -> LandauSpec:
    """Levels (2j - 1) B for j = 1..j_max, each of multiplicity phi.

    The levels do not depend on alpha.
    """
    phi = _flux_integer(b0)
    levels = [LandauLevel(j, (2 * j - 1) * b0, phi) for j in range(1, j_max + 1)]
    return LandauSpec(b0, phi, np.asarray(alpha, dtype=float).reshape(2), levels)


def hermite_function(degree: int, t) -> np.ndarray:
    """L2-normalized Hermite function psi_degree(t).

    Three-term recurrence on the polynomial part, rescaled whenever it grows
    large; the Gaussian factor is applied at the end in log form so large |t|
    underflow to zero instead of producing inf * 0.
    """
    t = np.asarray(t, dtype=float)
    prev = np.zeros_like(t)
    cur = np.full_like(t, np.pi**-0.25)
    log_scale = np.zeros_like(t)
    for n in range(degree):
        nxt = np.sqrt(2.0 / (n + 1)) * t * cur - np.sqrt(n / (n + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e100
        if np.any(big):
            s = np.where(big, np.abs(cur), 1.0)
            cur = cur / s
            prev = prev / s
            log_scale += np.log(s)
    with np.errstate(under="ignore"):
        return cur * np.exp(log_scale - 0.5 * t * t)


def _reach(b0: float, j: int) -> float:
    # psi_{j-1}(s) is below TAIL once s exceeds the turning point sqrt(2j - 1)
    # by a margin of order sqrt(2 log(1/TAIL))
    return (np.sqrt(2 * j - 1) + np.sqrt(2 * np.log(1 / TAIL)) + 1.0) / np.sqrt(b0)


def landau_function(b0: float, alpha, j: int, p: int):
    """The continuum eigenfunction u_{j,p} as a callable on R^2 (unnormalized)."""
    phi = _flux_integer(b0)
    if j < 1:
        raise ValueError("level index j starts at 1")
    if not 0 <= p < phi:
        raise ValueError(f"sector p must satisfy 0 <= p < {phi}")
    a1, a2 = np.asarray(alpha, dtype=float).reshape(2)
    centre = (TWO_PI * p - a2) / b0
    root = np.sqrt(b0)

    def u(x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        v = np.zeros(np.broadcast(x1, x2).shape, dtype=complex)
        if v.size == 0:
            return v
        reach = _reach(b0, j)
        lo = int(np.floor(np.min(x1) - centre - reach))
        hi = int(np.ceil(np.max(x1) - centre + reach))
        for n in range(lo, hi + 1):
            prof = hermite_function(j - 1, root * (x1 - n - centre))
            v += np.exp(1j * (TWO_PI * (n * phi + p) * x2 - n * a1)) * prof
        theta = (0.5 * b0 * x2 - a1) * x1
        return np.exp(-1j * theta) * v

    return u


def landau_eigenfunction(b0: float, alpha, j: int, p: int, n: int) -> GridWavefunction:
    """Sample u_{j,p} on the n x n grid and normalize for the (1/N^2) inner product."""
    u = landau_function(b0, alpha, j, p)
    x1, x2 = grid_points(n)
    wf = GridWavefunction(n, u(x1, x2), _flux_integer(b0))
    return wf.normalized()
