"""Synthetic data generation and the forward, inverse, table and verify runs.

All CSV output is UTF-8 with ``\\n`` line endings and floats written with
``repr``, so identical configs give byte-identical files.
"""

from __future__ import annotations

import csv
import math
import statistics
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.special

from .bessel import bessel_zeros, enumerate_modes, eval_eigenfunction
from .config import ExperimentConfig, NoiseSpec
from .fem import (
    assemble,
    boundary_flux,
    flux_integral,
    solve_forward,
    solve_stationary,
)
from .geometry import TWO_PI, PolarPoint, SourcePoint
from .inversion import (
    FemModel,
    InversionResult,
    ObjectiveSpec,
    descend,
    fd_gradient,
    gradient,
    grid_initial_guess,
    location_errors,
)
from .mesh import build_mesh
from .spectral import (
    FluxTrace,
    check_observation_angles,
    flux_trace,
    steady_flux,
    trace_distance,
)

NOISE_HEADER = (
    "# noise f*(1+delta*xi); xi ~ U[-1,1] (symmetric) or U[0,1] (positive); "
    "a [0,1] generator biases every sample upward"
)


def to_cartesian(p: SourcePoint) -> tuple[float, float]:
    return p.r_star * math.cos(p.theta_star), p.r_star * math.sin(p.theta_star)


def _noise_stream(noise: NoiseSpec, stream: int) -> np.random.Generator:
    # counter-based generator keyed by (seed, stream): draws do not depend on run order
    return np.random.Generator(np.random.Philox(key=noise.seed + (stream << 64)))


def noise_factors(noise: NoiseSpec, stream: int, n: int) -> np.ndarray:
    """The ``xi`` draws for ``n`` samples of one stream."""
    xi = _noise_stream(noise, stream).random(n)
    return 2.0 * xi - 1.0 if noise.distribution == "symmetric" else xi


def add_noise(trace: FluxTrace, noise: NoiseSpec, stream: int = 0) -> FluxTrace:
    """Perturb every sample by ``(1 + delta xi)``; ``stream`` separates angles."""
    if noise.delta == 0.0:
        return FluxTrace(trace.theta_obs, trace.times.copy(), trace.values.copy())
    xi = noise_factors(noise, stream, trace.values.size)
    return FluxTrace(trace.theta_obs, trace.times.copy(), trace.values * (1.0 + noise.delta * xi))


@dataclass(frozen=True)
class TableRow:
    label: str
    r: float
    theta: float
    errors: dict | None = None

    @property
    def x(self) -> float:
        return self.r * math.cos(self.theta)

    @property
    def y(self) -> float:
        return self.r * math.sin(self.theta)

    def cells(self) -> list[str]:
        errs = ["", "", "", ""] if self.errors is None else [repr(float(self.errors[k])) for k in ("r", "theta", "x", "y")]
        return [self.label, repr(self.r), repr(self.theta), repr(self.x), repr(self.y), *errs]


TABLE_HEADER = ["label", "r", "theta", "x", "y", "err_r", "err_theta", "err_x", "err_y"]


def _open_csv(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_table(path: Path, rows: list[TableRow], header_note: str | None = None) -> None:
    with _open_csv(path) as fh:
        if header_note:
            fh.write(header_note + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for row in rows:
            w.writerow(row.cells())


def _label(delta: float, converged: bool = True) -> str:
    label = f"Estimated (delta={100 * delta:g}%)"
    return label if converged else label + " [not converged]"


def _sample_times(cfg: ExperimentConfig) -> np.ndarray:
    return cfg.horizon * np.arange(1, cfg.steps + 1) / cfg.steps


@lru_cache(maxsize=8)
def _fem_model(mesh: tuple[int, int], angles: tuple[float, ...], steps: int, horizon: float) -> FemModel:
    return FemModel.build(mesh[0], mesh[1], angles, steps, horizon)


def clean_traces(cfg: ExperimentConfig, engine: str | None = None) -> np.ndarray:
    """Noise-free flux at the objective's angles, shape ``(n_angles, d)``."""
    engine = engine or cfg.engine
    angles = cfg.objective.obs_angles
    if engine == "spectral":
        times = _sample_times(cfg)
        return np.array([flux_trace(cfg.truth, a, times).values for a in angles])
    return _fem_model(cfg.data_mesh, angles, cfg.steps, cfg.horizon).traces(cfg.truth)


def noisy_traces(clean: np.ndarray, noise: NoiseSpec) -> np.ndarray:
    times = np.arange(1, clean.shape[1] + 1, dtype=float)
    return np.array([add_noise(FluxTrace(0.0, times, row), noise, k).values for k, row in enumerate(clean)])


def forward_traces(cfg: ExperimentConfig) -> tuple[list[FluxTrace], np.ndarray | None]:
    """Traces for the configured angles plus, with the FEM engine, the field at ``T``."""
    times = _sample_times(cfg)
    angles = cfg.objective.obs_angles
    if cfg.engine == "spectral":
        return [flux_trace(cfg.truth, a, times) for a in angles], None
    system = assemble(build_mesh(*cfg.data_mesh))
    hist = solve_forward(system, cfg.truth, cfg.steps, cfg.horizon)
    traces = [FluxTrace(a, times, boundary_flux(system.mesh, hist.values[1:], a)) for a in angles]
    return traces, system.mesh.expand(hist.values[-1])


def run_forward(cfg: ExperimentConfig, out: Path | None = None) -> list[FluxTrace]:
    """Write ``flux.csv`` (t, theta_obs, value) and optionally ``field.csv`` (r, theta, u)."""
    out = Path(out or cfg.out_dir)
    traces, field_t = forward_traces(cfg)
    with _open_csv(out / "flux.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "theta_obs", "value"])
        for tr in traces:
            for t, v in zip(tr.times, tr.values):
                w.writerow([repr(float(t)), repr(tr.theta_obs), repr(float(v))])
    if cfg.snapshot and field_t is not None:
        mesh = build_mesh(*cfg.data_mesh)
        with _open_csv(out / "field.csv") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "theta", "u"])
            for r, th, u in zip(mesh.node_r, mesh.node_theta, field_t):
                w.writerow([repr(float(r)), repr(float(th)), repr(float(u))])
    return traces


@dataclass
class InversionOutcome:
    result: InversionResult
    errors: dict
    delta: float
    seed: int

    @property
    def row(self) -> TableRow:
        return TableRow(_label(self.delta, self.result.converged), self.result.estimate.r_star,
                        self.result.estimate.theta_star, self.errors)


def invert_once(cfg: ExperimentConfig, clean: np.ndarray | None = None) -> InversionOutcome:
    """Noisy data on the generation mesh, descent on the inversion mesh."""
    if clean is None:
        clean = clean_traces(cfg)
    data = noisy_traces(clean, cfg.noise)
    spec = cfg.objective
    model = _fem_model(cfg.inversion_mesh, spec.obs_angles, spec.steps, spec.horizon)
    descent = cfg.descent
    if cfg.multistart:
        descent = replace(descent, init=grid_initial_guess(data, spec, model, bounds=descent.bounds))
    result = descend(data, spec, descent, model)
    return InversionOutcome(result, location_errors(cfg.truth, result.estimate), cfg.noise.delta, cfg.noise.seed)


def run_inversion(cfg: ExperimentConfig, out: Path | None = None) -> InversionOutcome:
    """Writes ``table.csv`` (actual and estimated rows) and ``iterates.csv``."""
    out = Path(out or cfg.out_dir)
    outcome = invert_once(cfg)
    rows = [TableRow("Actual", cfg.truth.r_star, cfg.truth.theta_star), outcome.row]
    write_table(out / "table.csv", rows, NOISE_HEADER + f" [{cfg.noise.distribution}]")
    outcome.result.write_iterates(out / "iterates.csv")
    return outcome


def _table_cell(args) -> InversionOutcome:
    cfg, delta, seed = args
    return invert_once(replace(cfg, noise=replace(cfg.noise, delta=delta, seed=seed)))


@dataclass
class TableSummary:
    rows: list[TableRow]
    outcomes: list[InversionOutcome] = field(repr=False)

    def median_errors(self, delta: float) -> dict:
        sel = [o.errors for o in self.outcomes if o.delta == delta]
        return {k: statistics.median(e[k] for e in sel) for k in ("r", "theta", "x", "y")}


def run_table(cfg: ExperimentConfig, out: Path | None = None, jobs: int = 1) -> TableSummary:
    """Every (delta, seed) cell, aggregated to median errors per delta.

    Writes ``table.csv`` (one Actual row, then one row per delta in
    increasing order, with median estimate and median errors) and
    ``runs.csv`` with every cell.
    """
    out = Path(out or cfg.out_dir)
    deltas = sorted(cfg.deltas)
    cells = [(cfg, d, s) for d in deltas for s in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_table_cell, cells))
    else:
        clean = clean_traces(cfg)
        outcomes = [invert_once(replace(c, noise=replace(c.noise, delta=d, seed=s)), clean) for c, d, s in cells]
    rows = [TableRow("Actual", cfg.truth.r_star, cfg.truth.theta_star)]
    summary = TableSummary(rows, outcomes)
    for d in deltas:
        sel = [o for o in outcomes if o.delta == d]
        r_med = statistics.median(o.result.estimate.r_star for o in sel)
        # the median angle is taken on offsets from the truth so the seam does not split the sample
        offs = [math.remainder(o.result.estimate.theta_star - cfg.truth.theta_star, TWO_PI) for o in sel]
        t_med = (cfg.truth.theta_star + statistics.median(offs)) % TWO_PI
        converged = all(o.result.converged for o in sel)
        rows.append(TableRow(_label(d, converged), r_med, t_med, summary.median_errors(d)))
    write_table(out / "table.csv", rows, NOISE_HEADER + f" [{cfg.noise.distribution}]; medians over seeds {list(cfg.seeds)}")
    with _open_csv(out / "runs.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "seed", "r", "theta", "err_r", "err_theta", "err_x", "err_y", "converged", "iterations"])
        for o in outcomes:
            e = o.errors
            w.writerow([repr(o.delta), o.seed, repr(o.result.estimate.r_star), repr(o.result.estimate.theta_star),
                        repr(e["r"]), repr(e["theta"]), repr(e["x"]), repr(e["y"]),
                        int(o.result.converged), len(o.result.iterates) - 1])
    return summary


# ---------------------------------------------------------------- verification


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status}  {self.name}: measured={self.measured:.3e} tolerance={self.tolerance:.1e}{extra}"


@dataclass
class VerifyReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def _check_zeros() -> Check:
    err = max(
        float(np.max(np.abs(bessel_zeros(m, 30) - scipy.special.jn_zeros(m, 30)))) for m in range(11)
    )
    return Check("bessel zeros J_0..J_10 vs scipy", err <= 1e-10, err, 1e-10)


def _check_normalisation() -> Check:
    nodes, weights = np.polynomial.legendre.leggauss(200)
    r = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    worst = 0.0
    for mode in enumerate_modes(10, 10)[:20]:
        vals = np.array([eval_eigenfunction(mode, PolarPoint(float(rr), 0.0)) for rr in r])
        # |phi|^2 does not depend on theta, so the angular integral is 2 pi
        norm = TWO_PI * float(np.sum(w * r * np.abs(vals) ** 2))
        worst = max(worst, abs(norm - 1.0))
    return Check("eigenfunction normalisation, 20 modes", worst <= 1e-6, worst, 1e-6)


def _random_sources(rng, n, r_max=0.9):
    return [SourcePoint(float(rng.uniform(0.05, r_max)), float(rng.uniform(0.0, TWO_PI))) for _ in range(n)]


def _check_steady_integral(rng) -> Check:
    nodes, weights = np.polynomial.legendre.leggauss(400)
    angles = np.pi * (nodes + 1.0)
    worst = 0.0
    for s in _random_sources(rng, 10):
        total = np.pi * float(np.sum(weights * np.array([steady_flux(s, a) for a in angles])))
        worst = max(worst, abs(total + 1.0))
    return Check("steady flux integral = -1", worst <= 1e-10, worst, 1e-10)


def _check_maximum_principle(rng, steps: int) -> Check:
    times = np.arange(1, steps + 1) / steps
    worst = -math.inf
    for s in _random_sources(rng, 5):
        for a in rng.uniform(0.0, TWO_PI, 3):
            worst = max(worst, float(flux_trace(s, float(a), times).values.max()))
    # flux is accurate to 1e-12 absolute, so early-time samples may round just above zero
    return Check("maximum principle (flux <= 0)", worst <= 1e-12, worst, 1e-12)


def _check_rotation(rng) -> Check:
    worst = 0.0
    times = np.array([0.01, 0.1, 1.0])
    for s in _random_sources(rng, 5):
        shift, a = (float(x) for x in rng.uniform(0.0, TWO_PI, 2))
        rotated = SourcePoint(s.r_star, s.theta_star + shift)
        diff = flux_trace(rotated, a + shift, times).values - flux_trace(s, a, times).values
        worst = max(worst, float(np.max(np.abs(diff))))
    return Check("rotation equivariance (spectral)", worst <= 1e-12, worst, 1e-12)


def _check_distinguishability(rng, pairs: int, steps: int) -> Check:
    angles = (0.3, 1.4)
    smallest = min(
        trace_distance(a, b, angles, d=steps)
        for a, b in zip(_random_sources(rng, pairs), _random_sources(rng, pairs))
    )
    return Check(f"distinguishability of {pairs} random pairs", smallest > 1e-6, smallest, 1e-6)


def _check_admissibility() -> Check:
    adm = check_observation_angles(math.pi / 2, 0.0)
    flagged = adm.status == "inadmissible" and (adm.p, adm.q) == (1, 2)
    return Check("admissibility flags difference pi/2", flagged, adm.clearance, 1e-12, f"status={adm.status}, p/q={adm.p}/{adm.q}")


def _check_conservation(mesh_size, stiffness_sign: float) -> Check:
    mesh = build_mesh(*mesh_size)
    system = assemble(mesh, stiffness_sign=stiffness_sign)
    field_ = solve_stationary(system, SourcePoint(0.3, 1.0))
    total = flux_integral(mesh, mesh.expand(field_))
    err = abs(total + 1.0)
    return Check("conservation: stationary flux integral = -1", err <= 0.05, err, 0.05)


def _check_cross_solver(mesh_size, steps: int) -> Check:
    src = SourcePoint(0.4, 2.0)
    model = FemModel.build(mesh_size[0], mesh_size[1], (0.0, 2.0), steps, 1.0)
    fem = model.traces(src)
    times = np.arange(1, steps + 1) / steps
    worst = 0.0
    for k, a in enumerate((0.0, 2.0)):
        ref = flux_trace(src, a, times).values
        worst = max(worst, float(np.linalg.norm(fem[k] - ref) / np.linalg.norm(ref)))
    return Check("FEM vs spectral relative L2", worst <= 0.05, worst, 0.05)


def _check_gradient(rng, mesh_size, steps: int) -> Check:
    angles = (0.3, 1.4)
    model = FemModel.build(mesh_size[0], mesh_size[1], angles, steps, 1.0)
    spec = ObjectiveSpec("J", angles, (), 1.0, steps)
    data = model.traces(SourcePoint(0.4, 2.0))
    m = model.mesh
    worst = 0.0
    for _ in range(3):
        i = int(rng.integers(3, m.m_r - 3))
        j = int(rng.integers(0, m.n_theta))
        cand = SourcePoint((i + 0.5) * m.h_r, (j + 0.5) * m.h_theta)
        g = np.array(gradient(cand, data, spec, model))
        fd = np.array(fd_gradient(cand, data, spec, model))
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    return Check("gradient vs central differences", worst <= 1e-3, worst, 1e-3)


def _reproducibility_config(cfg: ExperimentConfig) -> ExperimentConfig:
    spec = ObjectiveSpec("J", (0.3, 1.4), (), 1.0, 50)
    return replace(
        cfg,
        truth=SourcePoint(0.4, 2.0),
        objective=spec,
        data_mesh=(14, 16),
        inversion_mesh=(12, 16),
        noise=NoiseSpec(0.03, cfg.verify.seed),
        multistart=False,
    )


def _check_reproducibility_and_armijo(cfg: ExperimentConfig) -> list[Check]:
    small = _reproducibility_config(cfg)
    blobs = []
    outcome = None
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            out = Path(tmp) / f"run{k}"
            outcome = run_inversion(small, out)
            blobs.append(b"".join((out / n).read_bytes() for n in ("table.csv", "iterates.csv")))
    same = blobs[0] == blobs[1]
    vals = [it.J for it in outcome.result.iterates]
    rise = max([b - a for a, b in zip(vals, vals[1:])] + [0.0])
    return [
        Check("reproducibility (byte-identical reruns)", same, 0.0 if same else 1.0, 0.0),
        Check("Armijo monotonicity of J", rise <= 0.0, rise, 0.0),
    ]


def run_verify(cfg: ExperimentConfig, stiffness_sign: float = 1.0) -> VerifyReport:
    """Property checks across the modules; ``stiffness_sign`` is a fault-injection hook."""
    rng = np.random.default_rng(cfg.verify.seed)
    mesh_size = cfg.verify.mesh
    steps = cfg.verify.steps
    checks = [
        _check_zeros(),
        _check_normalisation(),
        _check_steady_integral(rng),
        _check_maximum_principle(rng, steps),
        _check_rotation(rng),
        _check_distinguishability(rng, cfg.verify.pairs, steps),
        _check_admissibility(),
        _check_conservation(mesh_size, stiffness_sign),
        _check_cross_solver(mesh_size, steps),
        _check_gradient(rng, mesh_size, steps),
    ]
    checks.extend(_check_reproducibility_and_armijo(cfg))
    return VerifyReport(checks)
