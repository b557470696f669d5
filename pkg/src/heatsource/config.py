"""Experiment configuration: dataclasses and TOML loading."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import tomli

from .geometry import SourcePoint
from .inversion import DescentConfig, ObjectiveSpec

DISTRIBUTIONS = ("symmetric", "positive")
ENGINES = ("fem", "spectral")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative noise ``f (1 + delta xi)``.

    ``xi`` is uniform on [-1, 1] ("symmetric") or on [0, 1] ("positive").
    """

    delta: float = 0.0
    seed: int = 0
    distribution: str = "symmetric"

    def __post_init__(self):
        if self.delta < 0.0:
            raise ConfigError("noise delta must be non-negative")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"noise distribution must be one of {DISTRIBUTIONS}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class VerifyConfig:
    mesh: tuple[int, int] = (40, 40)
    steps: int = 100
    pairs: int = 20
    seed: int = 7


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    truth: SourcePoint
    objective: ObjectiveSpec
    data_mesh: tuple[int, int] = (70, 70)
    inversion_mesh: tuple[int, int] = (60, 60)
    noise: NoiseSpec = NoiseSpec()
    descent: DescentConfig = DescentConfig()
    multistart: bool = False
    engine: str = "fem"
    deltas: tuple[float, ...] = (0.03, 0.05, 0.10)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    snapshot: bool = True
    out_dir: Path = Path("out")
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        for mesh in (self.data_mesh, self.inversion_mesh):
            if len(mesh) != 2 or mesh[0] < 2 or mesh[1] < 4:
                raise ConfigError(f"mesh must be (m_r >= 2, n_theta >= 4), got {mesh}")
        if any(d < 0 for d in self.deltas) or not self.seeds:
            raise ConfigError("table needs non-negative deltas and at least one seed")

    @property
    def steps(self) -> int:
        return self.objective.steps

    @property
    def horizon(self) -> float:
        return self.objective.horizon

    def with_overrides(self, *, seed=None, engine=None, out_dir=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, noise=replace(cfg.noise, seed=seed))
        if engine is not None:
            cfg = replace(cfg, engine=engine)
        if out_dir is not None:
            cfg = replace(cfg, out_dir=Path(out_dir))
        return cfg


def _section(raw: dict, key: str) -> dict:
    sec = raw.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{key}] must be a table")
    return dict(sec)


def _pair(value, key) -> tuple[int, int]:
    try:
        a, b = value
        return int(a), int(b)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a pair of integers") from exc


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a config from parsed TOML; unknown keys are rejected."""
    try:
        top_keys = {"name", "horizon", "steps", "engine", "multistart", "out_dir", "truth", "objective",
                    "mesh", "noise", "descent", "table", "forward", "verify"}
        unknown = set(raw) - top_keys
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        horizon = float(raw.get("horizon", 1.0))
        steps = int(raw.get("steps", 500))

        truth_sec = _section(raw, "truth")
        truth = SourcePoint(float(truth_sec["r"]), float(truth_sec["theta"]))

        obj = _section(raw, "objective")
        kind = obj.get("kind", "J")
        angles = tuple(float(a) for a in obj["angles"])
        times = obj.get("times")
        if times is None:
            objective = ObjectiveSpec.default(kind, angles, horizon, steps)
        else:
            objective = ObjectiveSpec(kind, angles, tuple(float(t) for t in times), horizon, steps)

        mesh = _section(raw, "mesh")
        noise = NoiseSpec(**_section(raw, "noise"))

        desc = _section(raw, "descent")
        r0 = float(desc.pop("r0", 0.5))
        theta0 = float(desc.pop("theta0", 1.5))
        descent = DescentConfig(init=SourcePoint(r0, theta0), **desc)

        table = _section(raw, "table")
        fwd = _section(raw, "forward")
        ver = _section(raw, "verify")
        verify = VerifyConfig(
            mesh=_pair(ver.pop("mesh", (40, 40)), "verify.mesh"),
            **{k: int(v) for k, v in ver.items()},
        )

        out_dir = Path(raw.get("out_dir", "out"))
        if base_dir is not None and not out_dir.is_absolute():
            out_dir = base_dir / out_dir
        return ExperimentConfig(
            name=str(raw.get("name", "experiment")),
            truth=truth,
            objective=objective,
            data_mesh=_pair(mesh.get("data", (70, 70)), "mesh.data"),
            inversion_mesh=_pair(mesh.get("inversion", (60, 60)), "mesh.inversion"),
            noise=noise,
            descent=descent,
            multistart=bool(raw.get("multistart", False)),
            engine=str(raw.get("engine", "fem")),
            deltas=tuple(float(d) for d in table.get("deltas", (0.03, 0.05, 0.10))),
            seeds=tuple(int(s) for s in table.get("seeds", (0, 1, 2, 3, 4))),
            snapshot=bool(fwd.get("snapshot", True)),
            out_dir=out_dir,
            verify=verify,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc!r}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)
