"""Equidistribution diagnostics: position-density Fourier modes, phase-space
deviations from the Liouville measure, power-law rate fits and reports.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import InsufficientSpan, ShellMismatch
from .operator_grid import GridWavefunction
from .quantization import AmbiguityTable, BandLimitedSymbol, wigner_pair

NORMALIZATION_TOL = 1e-10
SHELL_TOL = 1e-6
MIN_PAIRS = 5
MIN_SPAN = 8.0


@dataclass(frozen=True)
class DensityFourier:
    """nu_hat[k] = (1/N^2) sum_j exp(-2 pi i k.x_j) |u_j|^2 for |k|_inf <= K."""

    lam: float | None
    nu_hat: dict[tuple[int, int], complex]
    K: int

    def deviation(self) -> float:
        """max over 0 < |k|_inf <= K of |nu_hat[k]|."""
        return max((abs(c) for k, c in self.nu_hat.items() if k != (0, 0)), default=0.0)

    def argmax(self) -> tuple[int, int] | None:
        keys = [k for k in self.nu_hat if k != (0, 0)]
        return max(keys, key=lambda k: abs(self.nu_hat[k])) if keys else None

    def to_dict(self) -> dict:
        rows = [[k1, k2, float(c.real), float(c.imag)] for (k1, k2), c in sorted(self.nu_hat.items())]
        return {"lambda": self.lam, "nu_hat": rows}

    @classmethod
    def from_dict(cls, d: dict) -> "DensityFourier":
        nu = {(int(r[0]), int(r[1])): complex(r[2], r[3]) for r in d["nu_hat"]}
        K = max((max(abs(k1), abs(k2)) for k1, k2 in nu), default=0)
        return cls(d["lambda"], nu, K)


def density_fourier(u: GridWavefunction, K: int = 4, lam: float | None = None) -> DensityFourier:
    """Fourier modes of |u|^2; |u|^2 is periodic because the wrap phases are unimodular."""
    n = u.n
    if K < 0 or 2 * K + 1 > n:
        raise ValueError(f"K={K} needs 2K + 1 <= N = {n}")
    coef = np.fft.fft2(np.abs(u.values) ** 2) / (n * n)
    if abs(coef[0, 0] - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"u is not normalized: nu_hat[0] = {coef[0, 0].real:.12g}")
    ks = range(-K, K + 1)
    nu = {(k1, k2): complex(coef[k1 % n, k2 % n]) for k1 in ks for k2 in ks}
    return DensityFourier(lam, nu, K)


def liouville_average(sym: BandLimitedSymbol, angles: int = 256) -> float:
    """(1/2 pi) int_{T^2 x S^1} a(x, theta) dx dtheta: only the k = 0 mode survives."""
    p = sym.x_modes.get((0, 0))
    if p is None:
        return 0.0
    if p.constant is not None:
        return float(np.real(p.constant))
    t = 2 * np.pi * np.arange(angles) / angles
    return float(np.real(np.mean(p(np.cos(t), np.sin(t)))))


def phase_space_deviation(sym: BandLimitedSymbol, tab: AmbiguityTable, shell_tol: float = SHELL_TOL) -> float:
    """|w_h(a) - Liouville average of a| for a symbol written in the rescaled variable.

    The table must have been built with h = 1 / lambda, lambda^2 its stored
    energy, so that the energy shell sits at |xi| = 1.
    """
    if tab.energy is None or tab.energy <= 0:
        raise ShellMismatch("the ambiguity table carries no positive energy")
    scaled = tab.h * np.sqrt(tab.energy)
    if abs(scaled - 1.0) > shell_tol:
        raise ShellMismatch(f"h * lambda = {scaled:.8g}, expected 1")
    return abs(wigner_pair(sym, tab) - liouville_average(sym))


@dataclass(frozen=True)
class RateFit:
    """Least-squares line log m = log(constant) + slope log lambda."""

    pairs: tuple[tuple[float, float], ...]
    slope: float
    constant: float
    residual: float
    window: tuple[float, float]

    def predict(self, lam) -> np.ndarray:
        return self.constant * np.asarray(lam, dtype=float) ** self.slope

    def envelope_violations(self, exponent: float) -> list[tuple[float, float]]:
        """Points above constant * lambda^exponent."""
        return [(lam, m) for lam, m in self.pairs if m > self.constant * lam**exponent]

    def to_dict(self) -> dict:
        return {"slope": self.slope, "constant": self.constant, "residual": self.residual, "window": list(self.window)}


def rate_fit(pairs: Sequence[tuple[float, float]]) -> RateFit:
    """Fit m(lambda) ~ C lambda^slope; residual is the RMS misfit in log m."""
    pts = [(float(a), float(b)) for a, b in pairs]
    if len(pts) < MIN_PAIRS:
        raise InsufficientSpan(f"need at least {MIN_PAIRS} pairs, got {len(pts)}")
    lam = np.array([p[0] for p in pts])
    m = np.array([p[1] for p in pts])
    if np.any(lam <= 0) or np.any(m <= 0) or not np.all(np.isfinite(lam * m)):
        raise ValueError("rate fit needs finite positive lambda and m")
    if lam.max() / lam.min() < MIN_SPAN:
        raise InsufficientSpan(f"lambda spans a factor {lam.max() / lam.min():.3g} < {MIN_SPAN:g}")
    x, y = np.log(lam), np.log(m)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, intercept]) - y) ** 2)))
    return RateFit(tuple(pts), float(slope), float(np.exp(intercept)), resid, (float(lam.min()), float(lam.max())))


@dataclass
class QueReport:
    meta: dict = field(default_factory=dict)
    spectrum: list = field(default_factory=list)
    density: list = field(default_factory=list)
    deviations: list = field(default_factory=list)
    rate: dict = field(default_factory=dict)
    control: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "spectrum": self.spectrum,
            "density": self.density,
            "deviations": self.deviations,
            "rate": self.rate,
            "control": self.control,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "QueReport":
        d = json.loads(text)
        return cls(**{k: d.get(k, v) for k, v in cls().to_dict().items()})

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def spectrum_csv(self) -> str:
        lines = ["index,eigenvalue,residual,cluster"]
        for i, row in enumerate(self.spectrum):
            cells = [row["eigenvalue"], row.get("residual"), row.get("cluster")]
            lines.append(",".join([str(i)] + ["" if c is None else repr(c) for c in cells]))
        return "\n".join(lines) + "\n"

    def density_csv(self) -> str:
        lines = ["lambda,k1,k2,re,im"]
        for entry in self.density:
            for k1, k2, re, im in entry["nu_hat"]:
                lines.append(f"{entry['lambda']!r},{k1},{k2},{re!r},{im!r}")
        return "\n".join(lines) + "\n"

    def deviations_csv(self) -> str:
        lines = ["lambda,symbol,value"]
        for row in self.deviations:
            lines.append(f"{row['lambda']!r},{row['symbol']},{row['value']!r}")
        return "\n".join(lines) + "\n"


def _spectrum_rows(spectra) -> list[dict]:
    rows = []
    for item in spectra:
        if hasattr(item, "eigenvalues"):
            for lam, res, cl in zip(item.eigenvalues, item.residuals, item.clusters):
                rows.append({"eigenvalue": float(lam), "residual": float(res), "cluster": int(cl)})
        else:
            rows.append({"eigenvalue": float(item), "residual": None, "cluster": None})
    return rows


def que_report(
    spectra: Sequence[Any] = (),
    densities: Sequence[DensityFourier] = (),
    deviations: Sequence[tuple[float, str, float]] = (),
    certificate=None,
    meta: dict | None = None,
    rate: RateFit | None = None,
) -> QueReport:
    """Bundle results into the report layout; no computation happens here.

    ``spectra`` holds EigenResult objects or bare eigenvalues; ``deviations``
    holds (lambda, symbol name, value) triples.
    """
    return QueReport(
        meta=dict(meta or {}),
        spectrum=_spectrum_rows(spectra),
        density=[d.to_dict() for d in densities],
        deviations=[{"lambda": float(l), "symbol": str(s), "value": float(v)} for l, s, v in deviations],
        rate={} if rate is None else {k: v for k, v in rate.to_dict().items() if k != "window"},
        control={} if certificate is None else certificate.to_dict(),
    )
