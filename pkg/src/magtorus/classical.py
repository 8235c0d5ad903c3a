"""Classical flows: magnetic flow, geodesic flow, the exact cyclotron flow of
h^2 L_alpha, and the one-dimensional limit flow along a rational direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StepTooLarge, ZeroField
from .field_gauge import TWO_PI, MagneticField
from .lattice_control import DirectionalAverage

J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def perp(v: np.ndarray) -> np.ndarray:
    """v^perp = (-v2, v1), acting on the last axis."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def rotation(angle: float) -> np.ndarray:
    """exp(angle J)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, s], [-s, c]])


def torus_distance(a, b) -> np.ndarray:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = d - np.round(d)
    return np.linalg.norm(d, axis=-1)


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.mod(np.asarray(self.x, dtype=float).reshape(2), 1.0))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float).reshape(2))


@dataclass
class OrbitSample:
    times: np.ndarray
    x: np.ndarray  # unwrapped positions, shape (T, 2)
    xi: np.ndarray
    speed_drift: float = 0.0
    convention: str = ""

    @property
    def points(self) -> list[PhasePoint]:
        return [PhasePoint(x, xi) for x, xi in zip(self.x, self.xi)]

    def csv(self) -> str:
        lines = [f"# {self.convention}"] if self.convention else []
        lines.append("t,x1,x2,xi1,xi2")
        xw = np.mod(self.x, 1.0)
        for t, x, xi in zip(self.times, xw, self.xi):
            lines.append(f"{t:.17g},{x[0]:.17g},{x[1]:.17g},{xi[0]:.17g},{xi[1]:.17g}")
        return "\n".join(lines) + "\n"


def field_sup(fld: MagneticField) -> float:
    """Upper bound on |B| from the Fourier coefficients."""
    return float(sum(abs(c) for c in fld.modes.values()))


def _rk4(rhs, y, dt, steps, record_every=1):
    out = [y.copy()]
    for s in range(1, steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if s % record_every == 0 or s == steps:
            out.append(y.copy())
    return np.array(out)


def _magnetic_rhs(fld: MagneticField):
    def rhs(y):
        # y[..., :2] = x, y[..., 2:] = xi
        b = fld(y[..., 0], y[..., 1])
        xi = y[..., 2:]
        return np.concatenate([xi, b[..., None] * perp(xi)], axis=-1)

    return rhs


def _step_count(T: float, dt: float) -> int:
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    return steps


def integrate_magnetic(fld: MagneticField, p0: PhasePoint, T: float, dt: float, record_every: int = 1) -> OrbitSample:
    """RK4 for x' = xi, xi' = B(x) xi^perp.

    Requires dt <= 0.01 / max(1, |xi0| sup|B|).
    """
    limit = 0.01 / max(1.0, np.linalg.norm(p0.xi) * field_sup(fld))
    if dt > limit * (1 + 1e-12):
        raise StepTooLarge(f"dt={dt:g} exceeds {limit:g}")
    steps = _step_count(T, dt)
    y0 = np.concatenate([p0.x, p0.xi])
    ys = _rk4(_magnetic_rhs(fld), y0, dt, steps, record_every)
    times = np.concatenate([np.arange(0, steps + 1, record_every) * dt, [] if steps % record_every == 0 else [T]])
    speed = np.linalg.norm(ys[:, 2:], axis=1)
    return OrbitSample(times, ys[:, :2], ys[:, 2:], float(np.max(np.abs(speed - speed[0]))))


def cyclotron_exact(b0: float, p0: PhasePoint, t) -> tuple[np.ndarray, np.ndarray]:
    """Exact solution of x' = xi, xi' = B0 xi^perp (unwrapped x)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if b0 == 0:
        return p0.x + t[:, None] * p0.xi, np.tile(p0.xi, (t.size, 1))
    # xi rotates at angular speed B0; x(t) = x0 - (xi(t) - xi0)^perp / B0
    c, s = np.cos(b0 * t), np.sin(b0 * t)
    xi1 = c * p0.xi[0] - s * p0.xi[1]
    xi2 = s * p0.xi[0] + c * p0.xi[1]
    x1 = p0.x[0] + (xi2 - p0.xi[1]) / b0
    x2 = p0.x[1] - (xi1 - p0.xi[0]) / b0
    return np.stack([x1, x2], axis=1), np.stack([xi1, xi2], axis=1)


def integrate_geodesic(p0: PhasePoint, T: float, samples: int = 2) -> OrbitSample:
    """Straight line x0 + t xi0 on a uniform time grid of ``samples`` points."""
    times = np.linspace(0.0, T, max(samples, 1))
    x = p0.x + times[:, None] * p0.xi
    return OrbitSample(times, x, np.tile(p0.xi, (times.size, 1)))


def phi_h_exact(p0: PhasePoint, h: float, b0: float, alpha, t: float) -> PhasePoint:
    """Flow of X_h = 2 (xi - h alpha).d_x - 2 h B0 (xi - h alpha)^perp.d_xi.

    Phi_h^t(x, xi) = (x + (e^{2 t h B0 J} - Id)(xi - h alpha)^perp / (h B0),
                      h alpha + e^{2 t h B0 J}(xi - h alpha)),
    periodic with period pi / (h B0).
    """
    hb = h * b0
    if hb == 0:
        raise ZeroField("cyclotron flow needs h * B0 != 0")
    x, xi = phi_h_unwrapped(p0.x, p0.xi, h, b0, alpha, t)
    return PhasePoint(x, xi)


def phi_h_unwrapped(x, xi, h: float, b0: float, alpha, t: float):
    hb = h * b0
    if hb == 0:
        raise ZeroField("cyclotron flow needs h * B0 != 0")
    alpha = np.asarray(alpha, dtype=float)
    v = np.asarray(xi, dtype=float) - h * alpha
    R = rotation(2.0 * t * hb)
    vp = perp(v)
    return np.asarray(x, dtype=float) + (vp @ R.T - vp) / hb, h * alpha + v @ R.T


@dataclass
class ControlReport:
    fraction: float | None
    hit_times: np.ndarray
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    bin_edges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    samples: int = 0

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "samples": self.samples,
            "hit_times": [None if not np.isfinite(t) else float(t) for t in self.hit_times],
            "histogram": [int(c) for c in self.histogram],
            "bin_edges": [float(b) for b in self.bin_edges],
        }


def control_time_check(
    fld: MagneticField,
    centre,
    radius: float,
    T0: float,
    R0: float,
    samples: int = 64,
    seed: int = 0,
    starts: list[PhasePoint] | None = None,
    bins: int = 10,
) -> ControlReport:
    """Fraction of orbits with |xi0| >= R0 whose position enters the ball before T0.

    Starting points are seeded-random (uniform x, speed R0, uniform angle)
    unless ``starts`` is given.  All orbits are integrated as one batch.
    """
    if starts is None:
        rng = np.random.default_rng(seed)
        x0 = rng.random((samples, 2))
        ang = rng.random(samples) * TWO_PI
        xi0 = R0 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        x0 = np.array([p.x for p in starts], dtype=float).reshape(-1, 2)
        xi0 = np.array([p.xi for p in starts], dtype=float).reshape(-1, 2)
        if np.any(np.linalg.norm(xi0, axis=1) < R0 * (1 - 1e-12)):
            raise ValueError("starting momenta must satisfy |xi0| >= R0")
    count = x0.shape[0]
    if count == 0:
        return ControlReport(None, np.zeros(0))
    speed = float(np.max(np.linalg.norm(xi0, axis=1)))
    # the ball must not be stepped over: a step moves x by speed * dt
    dt = min(0.01 / max(1.0, speed * field_sup(fld)), 0.25 * radius / max(speed, 1e-300))
    steps = int(np.ceil(T0 / dt))
    dt = T0 / steps
    rhs = _magnetic_rhs(fld)
    centre = np.asarray(centre, dtype=float)
    y = np.concatenate([x0, xi0], axis=1)
    hit = np.full(count, np.inf)
    inside = torus_distance(y[:, :2], centre) <= radius
    hit[inside] = 0.0
    for s in range(1, steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        new = (torus_distance(y[:, :2], centre) <= radius) & ~np.isfinite(hit)
        hit[new] = s * dt
        if np.all(np.isfinite(hit)):
            break
    finite = hit[np.isfinite(hit)]
    hist, edges = np.histogram(finite, bins=bins, range=(0.0, T0))
    return ControlReport(float(finite.size / count), hit, hist, edges, count)


@dataclass
class LineOrbit:
    """Orbit of the reduced flow y' = L eta, eta' = sign * I(y)."""

    times: np.ndarray
    y: np.ndarray  # unwrapped
    eta: np.ndarray
    energy_drift: float
    sign_changes: int
    convention: str

    def csv(self) -> str:
        lines = [f"# {self.convention}", "t,y,eta"]
        for t, y, e in zip(self.times, self.y, self.eta):
            lines.append(f"{t:.17g},{y:.17g},{e:.17g}")
        return "\n".join(lines) + "\n"


LINE_CONVENTION = (
    "y = e.x in [0,1) (the average is 1-periodic in y); "
    "x' = eta e/L gives y' = L eta; eta' = sign * I(y); "
    "conserved E = L eta^2 / 2 - sign * F(y), F' = I"
)


def line_energy(avg: DirectionalAverage, sign: int, y, eta) -> np.ndarray:
    return 0.5 * avg.lattice.length * np.asarray(eta) ** 2 - sign * avg.primitive(y)


def integrate_x_lambda(avg: DirectionalAverage, sign: int, y0: float, eta0: float, T: float, dt: float = 1e-3) -> LineOrbit:
    """RK4 for the limit flow along the closed geodesics of direction e^perp."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    L = avg.lattice.length

    def rhs(s):
        return np.array([L * s[1], sign * float(avg.profile(s[0]))])

    steps = _step_count(T, dt)
    ys = _rk4(rhs, np.array([y0, eta0], dtype=float), dt, steps)
    times = np.arange(steps + 1) * dt
    energy = line_energy(avg, sign, ys[:, 0], ys[:, 1])
    eta = ys[:, 1]
    changes = int(np.count_nonzero(np.sign(eta[1:]) * np.sign(eta[:-1]) < 0))
    return LineOrbit(times, ys[:, 0], eta, float(np.max(np.abs(energy - energy[0]))), changes, LINE_CONVENTION)
