"""Command-line driver: one TOML config per run, one subcommand per experiment.

Exit status is 0 on success, 2 when a scientific check fails (an oracle
mismatch, or a failed control verdict under --expect-pass) and 1 on any
error.  Outputs are written atomically and are byte-identical across runs
with the same config.

Config grammar (TOML)::

    [field]
    modes = [[0, 0, 6.283185307179586]]   # k1, k2, re [, im]
    [gauge]
    alpha = [0.0, 0.0]
    [potential]
    modes = []
    [grid]
    n = 64
    [solver]
    k = 8
    tol = 1e-8
    seed = 0            # mandatory
    # sigma = 40.0      # interior window instead of the lowest pairs
    [quantization]
    K_sym = 2
    J = 0               # 0 picks the zeta range from the symbols
    Xi_max = 3.0
    [diagnostics]
    K = 4
    source = "solver"   # or "oracle" (constant fields)
    levels = [2, 3, 4]  # oracle levels
    [[diagnostics.symbols]]
    name = "shell"
    k = [0, 0]
    profile = "ring"    # constant | gaussian | ring
    radius = 1.0
    width = 0.4
    [classical]
    x0 = [0.1, 0.2]
    xi0 = [1.0, 0.0]
    T = 10.0
    dt = 1e-3
    [output]
    dir = "out"
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
import tomli
import tomli_w

from .classical import PhasePoint, integrate_magnetic, integrate_x_lambda
from .eigensolver import EigenResult, lowest_eigenpairs, residual_report, window_eigenpairs
from .errors import ConfigError, FluxNotQuantized, MagTorusError, NonRealField, ParseError, ValidationError
from .field_gauge import MagneticField, ScalarPotential, build_field, build_gauge, build_potential
from .lattice_control import Sublattice, certify_control, directional_average
from .operator_grid import GridWavefunction, assemble, read_wavefunction, wavefunction_to_bytes
from .oracle_landau import landau_eigenfunction, landau_spectrum
from .quantization import (
    AmbiguityTable,
    BandLimitedSymbol,
    ConstantProfile,
    GaussianProfile,
    RingProfile,
    ambiguity_table,
    cosine_symbol,
    required_j,
    wigner_pair,
)
from .que_diagnostics import density_fourier, phase_space_deviation, que_report, rate_fit

log = logging.getLogger("magtorus")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2

PROFILES = ("constant", "gaussian", "ring")


# -- configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class SymbolConfig:
    name: str
    k: tuple[int, int] = (0, 0)
    profile: str = "constant"
    value: float = 1.0
    sigma: float = 1.0
    radius: float = 1.0
    width: float = 0.4
    centre: tuple[float, float] = (0.0, 0.0)
    cosine: bool = False

    def build(self) -> BandLimitedSymbol:
        if self.profile == "constant":
            p = ConstantProfile(self.value)
        elif self.profile == "gaussian":
            p = GaussianProfile(self.value, self.sigma, self.centre)
        else:
            p = RingProfile(self.value, self.radius, self.width, self.centre)
        if self.cosine:
            return cosine_symbol(self.k, p)
        return BandLimitedSymbol({self.k: p}, real=self.k == (0, 0))


@dataclass(frozen=True)
class SolverConfig:
    seed: int
    k: int = 8
    tol: float = 1e-8
    sigma: float | None = None


@dataclass(frozen=True)
class QuantizationConfig:
    K_sym: int = 2
    J: int = 0
    Xi_max: float = 3.0


@dataclass(frozen=True)
class DiagnosticsConfig:
    K: int = 4
    source: str = "solver"
    levels: tuple[int, ...] = ()
    symbols: tuple[SymbolConfig, ...] = ()


@dataclass(frozen=True)
class ClassicalConfig:
    x0: tuple[float, float] = (0.0, 0.0)
    xi0: tuple[float, float] = (1.0, 0.0)
    T: float = 1.0
    dt: float = 1e-3
    lattice: tuple[int, int] | None = None
    sign: int = 1


@dataclass(frozen=True)
class RunConfig:
    field_modes: tuple[tuple[tuple[int, int], complex], ...]
    n: int
    solver: SolverConfig
    alpha: tuple[float, float] = (0.0, 0.0)
    potential_modes: tuple[tuple[tuple[int, int], complex], ...] = ()
    quantization: QuantizationConfig = QuantizationConfig()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    classical: ClassicalConfig = ClassicalConfig()
    output_dir: str = "out"

    def field(self) -> MagneticField:
        return build_field(self.field_modes)

    def potential(self) -> ScalarPotential | None:
        return build_potential(self.potential_modes) if self.potential_modes else None

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def to_dict(self) -> dict:
        def modes(ms):
            return [[k[0], k[1], c.real, c.imag] for k, c in ms]

        diag = {"K": self.diagnostics.K, "source": self.diagnostics.source, "levels": list(self.diagnostics.levels)}
        if self.diagnostics.symbols:
            diag["symbols"] = [
                {**asdict(s), "k": list(s.k), "centre": list(s.centre)} for s in self.diagnostics.symbols
            ]
        solver = {k: v for k, v in asdict(self.solver).items() if v is not None}
        classical = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.classical).items() if v is not None}
        return {
            "field": {"modes": modes(self.field_modes)},
            "gauge": {"alpha": list(self.alpha)},
            "potential": {"modes": modes(self.potential_modes)},
            "grid": {"n": self.n},
            "solver": solver,
            "quantization": asdict(self.quantization),
            "diagnostics": diag,
            "classical": classical,
            "output": {"dir": self.output_dir},
        }


_HEADER = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\-]+)\s*\]\]?")
_ASSIGN = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def _key_lines(text: str) -> dict[str, int]:
    """Line number of the first occurrence of every table and dotted key."""
    out: dict[str, int] = {}
    table = ""
    for i, line in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(line)
        if m:
            table = m.group(1)
            out.setdefault(table, i)
            continue
        m = _ASSIGN.match(line)
        if m:
            key = f"{table}.{m.group(1)}" if table else m.group(1)
            out.setdefault(key, i)
    return out


class _Reader:
    """Typed access to the parsed document; every failure names its key."""

    def __init__(self, doc: dict, lines: dict[str, int]):
        self.doc = doc
        self.lines = lines

    def fail(self, key: str, message: str) -> ValidationError:
        line = self.lines.get(key)
        if line is None and "." in key:
            line = self.lines.get(key.rsplit(".", 1)[0])
        return ValidationError(message, key=key, line=line)

    def table(self, name: str, required: bool = False) -> dict:
        t = self.doc.get(name)
        if t is None:
            if required:
                raise self.fail(name, "missing section")
            return {}
        if not isinstance(t, dict):
            raise self.fail(name, "expected a table")
        return t

    def get(self, table: dict, path: str, kind: str, default: Any = None, required: bool = False):
        name = path.rsplit(".", 1)[-1]
        if name not in table:
            if required:
                raise self.fail(path, "missing required key")
            return default
        return self.check(path, table[name], kind)

    def check(self, path: str, v: Any, kind: str):
        if kind == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                raise self.fail(path, f"expected an integer, got {v!r}")
            return v
        if kind == "float":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise self.fail(path, f"expected a number, got {v!r}")
            if not math.isfinite(v):
                raise self.fail(path, f"value {v!r} is not finite")
            return float(v)
        if kind == "str":
            if not isinstance(v, str):
                raise self.fail(path, f"expected a string, got {v!r}")
            return v
        if kind == "bool":
            if not isinstance(v, bool):
                raise self.fail(path, f"expected true or false, got {v!r}")
            return v
        if kind.startswith("vec"):
            inner = "int" if kind.endswith("i") else "float"
            size = int(kind[3:].rstrip("i"))
            if not isinstance(v, list) or len(v) != size:
                raise self.fail(path, f"expected an array of {size} numbers, got {v!r}")
            return tuple(self.check(path, x, inner) for x in v)
        raise AssertionError(kind)

    def modes(self, table: dict, path: str, required: bool) -> tuple:
        raw = table.get(path.rsplit(".", 1)[-1])
        if raw is None:
            if required:
                raise self.fail(path, "missing required key")
            return ()
        if not isinstance(raw, list):
            raise self.fail(path, "expected an array of [k1, k2, re(, im)] rows")
        out = []
        for row in raw:
            if not isinstance(row, list) or len(row) not in (3, 4):
                raise self.fail(path, f"mode row {row!r} must be [k1, k2, re] or [k1, k2, re, im]")
            k1, k2 = (self.check(path, x, "int") for x in row[:2])
            vals = [self.check(path, x, "float") for x in row[2:]]
            out.append(((k1, k2), complex(vals[0], vals[1] if len(vals) > 1 else 0.0)))
        return tuple(out)


def _symbol(reader: _Reader, entry: Any, i: int) -> SymbolConfig:
    path = f"diagnostics.symbols[{i}]"
    if not isinstance(entry, dict):
        raise reader.fail("diagnostics.symbols", f"entry {i} must be a table")
    known = {f.name for f in SymbolConfig.__dataclass_fields__.values()}
    extra = set(entry) - known
    if extra:
        raise reader.fail(f"diagnostics.symbols.{sorted(extra)[0]}", f"unknown key in {path}")
    name = reader.get(entry, "diagnostics.symbols.name", "str", required=True)
    profile = reader.get(entry, "diagnostics.symbols.profile", "str", "constant")
    if profile not in PROFILES:
        raise reader.fail("diagnostics.symbols.profile", f"profile must be one of {PROFILES}")
    kw = {}
    for key in ("value", "sigma", "radius", "width"):
        if key in entry:
            kw[key] = reader.get(entry, f"diagnostics.symbols.{key}", "float")
            if key != "value" and kw[key] <= 0:
                raise reader.fail(f"diagnostics.symbols.{key}", "must be positive")
    if "centre" in entry:
        kw["centre"] = reader.get(entry, "diagnostics.symbols.centre", "vec2")
    k = reader.get(entry, "diagnostics.symbols.k", "vec2i", (0, 0))
    cosine = reader.get(entry, "diagnostics.symbols.cosine", "bool", False)
    return SymbolConfig(name=name, k=k, profile=profile, cosine=cosine, **kw)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config document; errors carry key and line."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc), line=int(m.group(1)) if m else None) from exc
    r = _Reader(doc, _key_lines(text))
    known = {"field", "gauge", "potential", "grid", "solver", "quantization", "diagnostics", "classical", "output"}
    for name in doc:
        if name not in known:
            raise r.fail(name, "unknown section")

    fld = r.table("field", required=True)
    field_modes = r.modes(fld, "field.modes", required=True)
    alpha = r.get(r.table("gauge"), "gauge.alpha", "vec2", (0.0, 0.0))
    try:
        build_field(field_modes)
    except (FluxNotQuantized, NonRealField, ValueError) as exc:
        raise r.fail("field.modes", f"{type(exc).__name__}: {exc}") from exc
    potential_modes = r.modes(r.table("potential"), "potential.modes", required=False)
    try:
        if potential_modes:
            build_potential(potential_modes)
    except (NonRealField, ValueError) as exc:
        raise r.fail("potential.modes", f"{type(exc).__name__}: {exc}") from exc

    n = r.get(r.table("grid", required=True), "grid.n", "int", required=True)
    if n < 4:
        raise r.fail("grid.n", "grid needs n >= 4")

    st = r.table("solver", required=True)
    solver = SolverConfig(
        seed=r.get(st, "solver.seed", "int", required=True),
        k=r.get(st, "solver.k", "int", 8),
        tol=r.get(st, "solver.tol", "float", 1e-8),
        sigma=r.get(st, "solver.sigma", "float", None),
    )
    if solver.k < 1:
        raise r.fail("solver.k", "must be at least 1")
    if solver.tol <= 0:
        raise r.fail("solver.tol", "must be positive")
    if solver.sigma is not None and solver.sigma < 0:
        raise r.fail("solver.sigma", "must be non-negative")

    qt = r.table("quantization")
    quant = QuantizationConfig(
        K_sym=r.get(qt, "quantization.K_sym", "int", 2),
        J=r.get(qt, "quantization.J", "int", 0),
        Xi_max=r.get(qt, "quantization.Xi_max", "float", 3.0),
    )
    if quant.K_sym < 0 or quant.J < 0 or quant.Xi_max <= 0:
        raise r.fail("quantization", "K_sym and J must be non-negative, Xi_max positive")

    dt_ = r.table("diagnostics")
    raw_symbols = dt_.get("symbols", [])
    if not isinstance(raw_symbols, list):
        raise r.fail("diagnostics.symbols", "expected an array of tables")
    levels = dt_.get("levels", [])
    if not isinstance(levels, list):
        raise r.fail("diagnostics.levels", "expected an array of integers")
    diag = DiagnosticsConfig(
        K=r.get(dt_, "diagnostics.K", "int", 4),
        source=r.get(dt_, "diagnostics.source", "str", "solver"),
        levels=tuple(r.check("diagnostics.levels", v, "int") for v in levels),
        symbols=tuple(_symbol(r, e, i) for i, e in enumerate(raw_symbols)),
    )
    if diag.source not in ("solver", "oracle"):
        raise r.fail("diagnostics.source", "must be 'solver' or 'oracle'")
    if diag.K < 1 or any(j < 1 for j in diag.levels):
        raise r.fail("diagnostics", "K and levels must be positive")

    ct = r.table("classical")
    lattice = r.get(ct, "classical.lattice", "vec2i", None)
    classical = ClassicalConfig(
        x0=r.get(ct, "classical.x0", "vec2", (0.0, 0.0)),
        xi0=r.get(ct, "classical.xi0", "vec2", (1.0, 0.0)),
        T=r.get(ct, "classical.T", "float", 1.0),
        dt=r.get(ct, "classical.dt", "float", 1e-3),
        lattice=lattice,
        sign=r.get(ct, "classical.sign", "int", 1),
    )
    if classical.T <= 0 or classical.dt <= 0:
        raise r.fail("classical", "T and dt must be positive")
    if classical.sign not in (1, -1):
        raise r.fail("classical.sign", "must be +1 or -1")
    if lattice is not None:
        try:
            Sublattice(lattice)
        except ValueError as exc:
            raise r.fail("classical.lattice", str(exc)) from exc

    out_dir = r.get(r.table("output"), "output.dir", "str", "out")
    return RunConfig(
        field_modes=field_modes,
        n=n,
        solver=solver,
        alpha=alpha,
        potential_modes=potential_modes,
        quantization=quant,
        diagnostics=diag,
        classical=classical,
        output_dir=out_dir,
    )


# -- output ----------------------------------------------------------------------------


def write_atomic(path: Path, data: str | bytes) -> None:
    """Write to a temporary file in the target directory, then rename over path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _meta(cfg: RunConfig) -> dict:
    return {
        "field": [[k[0], k[1], c.real, c.imag] for k, c in cfg.field_modes],
        "alpha": list(cfg.alpha),
        "N": cfg.n,
        "tol": cfg.solver.tol,
    }


# -- subcommands -----------------------------------------------------------------------


@dataclass
class Context:
    cfg: RunConfig
    out: Path
    expect_pass: bool = False
    parallel: bool = False
    table: Path | None = None
    wavefunction: Path | None = None
    h: float | None = None
    written: list[Path] = field(default_factory=list)

    def emit(self, name: str, data: str | bytes) -> None:
        path = self.out / name
        write_atomic(path, data)
        self.written.append(path)
        log.info("wrote %s", path)

    def map(self, fn: Callable, items: list) -> list:
        if self.parallel and len(items) > 1:
            # results come back in input order, so outputs stay deterministic
            with ThreadPoolExecutor() as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]


def _operator(cfg: RunConfig):
    gauge = build_gauge(cfg.field(), cfg.alpha)
    return assemble(gauge, cfg.potential(), cfg.n)


def _solve(cfg: RunConfig) -> tuple[Any, EigenResult]:
    H = _operator(cfg)
    s = cfg.solver
    if s.sigma is None:
        res = lowest_eigenpairs(H, s.k, tol=s.tol, seed=s.seed)
    else:
        res = window_eigenpairs(H, s.sigma, s.k, tol=s.tol, seed=s.seed)
    return H, res


def _spectrum_csv(res: EigenResult, check: list[float]) -> str:
    lines = ["index,eigenvalue,residual,cluster"]
    for i, (lam, r, c) in enumerate(zip(res.eigenvalues, check, res.clusters)):
        lines.append(f"{i},{float(lam)!r},{float(r)!r},{int(c)}")
    return "\n".join(lines) + "\n"


def cmd_spectrum(ctx: Context) -> int:
    H, res = _solve(ctx.cfg)
    check = residual_report(H, res)
    ctx.emit("spectrum.csv", _spectrum_csv(res, check))
    ctx.emit(
        "spectrum.json",
        _json({
            "meta": _meta(ctx.cfg),
            "target": res.target,
            "iterations": res.iterations,
            "eigenvalues": [float(v) for v in res.eigenvalues],
            "residuals": check,
            "multiplicities": res.multiplicities(),
        }),
    )
    for i, u in enumerate(res.eigenvectors):
        ctx.emit(f"eigvec_{i:03d}.mtwf", wavefunction_to_bytes(u))
    return EXIT_OK


def _oracle_states(cfg: RunConfig) -> list[tuple[float, GridWavefunction]]:
    b0 = cfg.field().mean
    if cfg.field().nonzero_modes():
        raise ValidationError("oracle states need a constant field", key="diagnostics.source")
    levels = cfg.diagnostics.levels or tuple(range(1, cfg.solver.k + 1))
    return [((2 * j - 1) * b0, landau_eigenfunction(b0, cfg.alpha, j, 0, cfg.n)) for j in levels]


def cmd_que_scan(ctx: Context) -> int:
    cfg = ctx.cfg
    spectra: list = []
    if cfg.diagnostics.source == "oracle":
        states = _oracle_states(cfg)
        spectra = [e for e, _ in states]
    else:
        _, res = _solve(cfg)
        states = list(zip(res.eigenvalues, res.eigenvectors))
        spectra = [res]
    states = [(float(e), u) for e, u in states if e > 0]
    K = cfg.diagnostics.K
    densities = ctx.map(lambda s: density_fourier(s[1], K, float(np.sqrt(s[0]))), states)

    symbols = [(s.name, s.build()) for s in cfg.diagnostics.symbols]

    def deviations_for(state):
        energy, u = state
        h = 1.0 / np.sqrt(energy)
        if not symbols:
            return []
        k_sym = max(sym.k_sym for _, sym in symbols)
        J = cfg.quantization.J or max(required_j(sym, h, u.n) for _, sym in symbols)
        tab = ambiguity_table(u, h, k_sym, J, energy)
        return [(float(np.sqrt(energy)), name, phase_space_deviation(sym, tab)) for name, sym in symbols]

    deviations = [d for ds in ctx.map(deviations_for, states) for d in ds]
    pairs = [(d.lam, d.deviation()) for d in densities if d.deviation() > 0]
    rate = None
    try:
        rate = rate_fit(pairs)
    except MagTorusError as exc:
        log.warning("no rate fit: %s", exc)
    cert = certify_control(cfg.field()) if cfg.field().mean > 0 else None
    report = que_report(spectra, densities, deviations, cert, _meta(cfg), rate)
    ctx.emit("report.json", report.to_json())
    ctx.emit("spectrum.csv", report.spectrum_csv())
    ctx.emit("density.csv", report.density_csv())
    ctx.emit("deviations.csv", report.deviations_csv())
    return EXIT_OK


def cmd_control_check(ctx: Context) -> int:
    cert = certify_control(ctx.cfg.field())
    ctx.emit("control.json", _json(cert.to_dict()))
    print(f"control verdict: {'pass' if cert.verdict else 'fail'}")
    if ctx.expect_pass and not cert.verdict:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_classical(ctx: Context) -> int:
    c = ctx.cfg.classical
    orbit = integrate_magnetic(ctx.cfg.field(), PhasePoint(c.x0, c.xi0), c.T, c.dt)
    ctx.emit("orbit.csv", orbit.csv())
    summary = {"speed_drift": orbit.speed_drift, "T": c.T, "dt": c.dt}
    if c.lattice is not None:
        avg = directional_average(ctx.cfg.field(), Sublattice(c.lattice))
        lat = Sublattice(c.lattice)
        y0 = float(np.dot(lat.e, c.x0))
        eta0 = float(np.dot(lat.e, c.xi0)) / lat.length
        line = integrate_x_lambda(avg, c.sign, y0, eta0, c.T, c.dt)
        ctx.emit("line_orbit.csv", line.csv())
        summary.update({"line_energy_drift": line.energy_drift, "line_sign_changes": line.sign_changes})
    ctx.emit("classical.json", _json(summary))
    return EXIT_OK


def _load_state(ctx: Context) -> tuple[GridWavefunction, float]:
    """The wavefunction to tabulate and its energy."""
    if ctx.wavefunction is not None:
        u = read_wavefunction(ctx.wavefunction)
        H = _operator(ctx.cfg)
        energy = float(np.real(u.inner(GridWavefunction(u.n, H.matvec(u.flat), u.flux_phi)) / u.inner(u)))
        return u.normalized(), energy
    _, res = _solve(ctx.cfg)
    return res.eigenvectors[-1], float(res.eigenvalues[-1])


def cmd_ambiguity(ctx: Context) -> int:
    u, energy = _load_state(ctx)
    h = ctx.h if ctx.h is not None else 1.0 / np.sqrt(energy)
    q = ctx.cfg.quantization
    J = q.J
    if not J:
        # wide enough for the configured symbols, else for profiles supported in |xi| <= Xi_max
        syms = [s.build() for s in ctx.cfg.diagnostics.symbols]
        J = max([4, int(np.ceil(q.Xi_max * u.n * h / np.pi))] + [required_j(s, h, u.n) for s in syms])
    tab = ambiguity_table(u, h, q.K_sym, J, energy)
    header = f"# h={float(h)!r} n={u.n} flux_phi={u.flux_phi} energy={float(energy)!r}\n"
    ctx.emit("ambiguity.csv", header + tab.csv())
    return EXIT_OK


def _read_table(path: Path) -> AmbiguityTable:
    text = Path(path).read_text()
    first = text.splitlines()[0]
    if not first.startswith("#"):
        raise ValueError(f"{path}: missing '# h=... n=...' header")
    meta = dict(item.split("=", 1) for item in first[1:].split())
    energy = None if meta.get("energy") in (None, "None") else float(meta["energy"])
    return AmbiguityTable.from_csv(text, float(meta["h"]), int(meta["n"]), int(meta.get("flux_phi", 0)), energy)


def cmd_pair(ctx: Context) -> int:
    if ctx.table is None:
        raise ValidationError("the pair subcommand needs --table")
    tab = _read_table(ctx.table)
    rows = []
    for s in ctx.cfg.diagnostics.symbols:
        w = wigner_pair(s.build(), tab)
        rows.append({"symbol": s.name, "re": w.real, "im": w.imag})
    ctx.emit("pair.json", _json({"h": tab.h, "n": tab.n, "pairs": rows}))
    return EXIT_OK


def cmd_oracle_check(ctx: Context, rtol: float = 1e-3) -> int:
    cfg = ctx.cfg
    fld = cfg.field()
    if fld.nonzero_modes() or cfg.potential_modes:
        raise ValidationError("oracle-check needs a constant field and no potential", key="field.modes")
    H, res = _solve(cfg)
    levels = int(np.ceil(cfg.solver.k / max(fld.phi, 1))) + 1
    expected = landau_spectrum(fld.mean, cfg.alpha, levels).eigenvalues[: len(res.eigenvalues)]
    rel = np.abs(res.eigenvalues - expected) / expected
    ok = bool(np.all(rel < rtol))
    ctx.emit(
        "oracle.json",
        _json({
            "computed": [float(v) for v in res.eigenvalues],
            "expected": [float(v) for v in expected],
            "relative_error": [float(v) for v in rel],
            "rtol": rtol,
            "pass": ok,
        }),
    )
    print(f"oracle check: {'pass' if ok else 'fail'} (max relative error {rel.max():.3e})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


COMMANDS: dict[str, Callable[[Context], int]] = {
    "spectrum": cmd_spectrum,
    "que-scan": cmd_que_scan,
    "control-check": cmd_control_check,
    "classical": cmd_classical,
    "ambiguity": cmd_ambiguity,
    "oracle-check": cmd_oracle_check,
    "pair": cmd_pair,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="magtorus", description="Magnetic Schroedinger operators on the flat torus.")
    p.add_argument("command", choices=sorted(COMMANDS), help="experiment to run")
    p.add_argument("config", type=Path, help="TOML run configuration")
    p.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
    p.add_argument("--expect-pass", action="store_true", help="exit 2 if the control verdict fails")
    p.add_argument("--parallel", action="store_true", help="process eigenfunctions concurrently")
    p.add_argument("--table", type=Path, default=None, help="ambiguity CSV for the pair subcommand")
    p.add_argument("--wavefunction", type=Path, default=None, help="stored wavefunction for ambiguity")
    p.add_argument("--h", type=float, default=None, help="semiclassical parameter (default 1/sqrt(E))")
    p.add_argument("--n", type=int, default=None, help="override grid.n")
    p.add_argument("--k", type=int, default=None, help="override solver.k")
    p.add_argument("--sigma", type=float, default=None, help="override solver.sigma")
    p.add_argument("--tol", type=float, default=None, help="override solver.tol")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Command-line --n/--k/--sigma/--tol replace the config values."""
    solver = {k: getattr(args, k) for k in ("k", "sigma", "tol") if getattr(args, k) is not None}
    if solver:
        cfg = replace(cfg, solver=replace(cfg.solver, **solver))
    if args.n is not None:
        cfg = replace(cfg, n=args.n)
    # re-validate through the config grammar
    return parse_config(cfg.to_toml())


def run(command: str, cfg: RunConfig, out: Path | None = None, **options) -> int:
    """Run one subcommand on a parsed config; returns the exit status."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown subcommand {command!r}")
    ctx = Context(cfg, Path(out if out is not None else cfg.output_dir), **options)
    return COMMANDS[command](ctx)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
        cfg = apply_overrides(parse_config(args.config.read_text(encoding="utf-8")), args)
        return run(
            args.command,
            cfg,
            args.out,
            expect_pass=args.expect_pass,
            parallel=args.parallel,
            table=args.table,
            wavefunction=args.wavefunction,
            h=args.h,
        )
    except (MagTorusError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
