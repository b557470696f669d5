from pathlib import Path

import pytest

from heatsource.config import ConfigError, ExperimentConfig, NoiseSpec, config_from_dict, load_config
from heatsource.geometry import SourcePoint

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def minimal(**extra):
    raw = {"truth": {"r": 0.4, "theta": 2.0}, "objective": {"kind": "J", "angles": [0.3, 1.4]}}
    raw.update(extra)
    return raw


def test_minimal_config_defaults():
    cfg = config_from_dict(minimal())
    assert cfg.truth == SourcePoint(0.4, 2.0)
    assert (cfg.data_mesh, cfg.inversion_mesh) == ((70, 70), (60, 60))
    assert (cfg.steps, cfg.horizon) == (500, 1.0)
    assert cfg.noise == NoiseSpec()
    assert cfg.noise.distribution == "symmetric"
    assert cfg.deltas == (0.03, 0.05, 0.10)
    assert cfg.descent.init == SourcePoint(0.5, 1.5)


def test_objective_times_default_and_explicit():
    j1 = config_from_dict(minimal(objective={"kind": "J1", "angles": [0.3, 1.4]}))
    assert j1.objective.obs_times == (0.5,)
    j3 = config_from_dict(minimal(objective={"kind": "J3", "angles": [1.5], "times": [0.02, 0.2]}))
    assert j3.objective.obs_times == (0.02, 0.2)


def test_sections_are_read():
    cfg = config_from_dict(minimal(
        steps=100, horizon=2.0, engine="spectral", multistart=True,
        mesh={"data": [30, 32], "inversion": [20, 24]},
        noise={"delta": 0.05, "seed": 9, "distribution": "positive"},
        descent={"r0": 0.3, "theta0": 1.0, "max_iters": 10, "growth": 1.0},
        table={"deltas": [0.1, 0.03], "seeds": [4]},
        forward={"snapshot": False},
        verify={"mesh": [10, 12], "steps": 20, "pairs": 3, "seed": 1},
    ))
    assert (cfg.steps, cfg.horizon, cfg.engine, cfg.multistart) == (100, 2.0, "spectral", True)
    assert (cfg.data_mesh, cfg.inversion_mesh) == ((30, 32), (20, 24))
    assert cfg.noise == NoiseSpec(0.05, 9, "positive")
    assert cfg.descent.init == SourcePoint(0.3, 1.0) and cfg.descent.max_iters == 10
    assert cfg.deltas == (0.1, 0.03) and cfg.seeds == (4,)
    assert cfg.snapshot is False
    assert (cfg.verify.mesh, cfg.verify.steps, cfg.verify.pairs, cfg.verify.seed) == ((10, 12), 20, 3, 1)


@pytest.mark.parametrize(
    "raw",
    [
        minimal(bogus=1),
        {"objective": {"kind": "J", "angles": [0.3, 1.4]}},
        minimal(objective={"kind": "J", "angles": [0.3]}),
        minimal(noise={"delta": -0.1}),
        minimal(noise={"distribution": "gaussian"}),
        minimal(noise={"seed": 2**64}),
        minimal(noise={"sigma": 1}),
        minimal(engine="magic"),
        minimal(mesh={"data": [1, 4]}),
        minimal(mesh={"data": "big"}),
        minimal(descent={"r0": 0.999}),
        minimal(truth={"r": 1.2, "theta": 0.0}),
        minimal(table={"seeds": []}),
        minimal(noise=3),
    ],
)
def test_invalid_configs_raise_config_error(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_overrides():
    cfg = config_from_dict(minimal())
    new = cfg.with_overrides(seed=11, engine="spectral", out_dir="elsewhere")
    assert (new.noise.seed, new.engine, new.out_dir) == (11, "spectral", Path("elsewhere"))
    assert cfg.with_overrides() == cfg


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("name = [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_load_and_avoid_inverse_crime(path):
    cfg = load_config(path)
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.data_mesh != cfg.inversion_mesh
