"""Run configuration: JSON document with sections params, constants,
ensemble, chaos, sweep, output.

Every key has a default, so the minimal valid document is {}.  Unknown keys
are rejected with their dotted path; type and range errors carry the same
path so a failing run points at one line of the config.

The constants section either derives a consistent physical scale from the
dimensionless parameters (default, optionally overriding rabi_frequency and
wavelength) or names the preset "cesium".  Explicitly supplied numeric
constants are cross-checked against params (recoil frequency and linewidth
ratio); the cesium preset is a unit-conversion bridge to real atomic data
and is exempt from that check, since the dimensionless defaults do not
correspond to any single real atom.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .ensemble import ChaosSpec, EnsembleSpec, momentum_grid
from .params import PhysicalConstants, SimParams

_SENTINEL = object()


@dataclass(frozen=True)
class SweepSpec:
    """Momentum-sweep layout and per-bin budgets."""

    p_min: float = 500.0
    p_max: float = 8600.0
    n_bins: int = 12
    n_traj: int = 200
    duration: float = 3e4
    sample_interval: float = 10.0
    h: float = 1e-2
    seed: int = 0
    p_sigma_frac: float = 0.01
    transient: float | None = None
    growth_cap: float = 0.05
    drift_cap: float = 0.05

    def __post_init__(self):
        if not (0 < self.p_min < self.p_max):
            raise ValueError("sweep.p_min must satisfy 0 < p_min < p_max")
        if self.n_bins < 8:
            raise ValueError("sweep.n_bins must be ≥ 8")
        if self.n_traj < 3:
            raise ValueError("sweep.n_traj must be ≥ 3")
        if not (self.duration > 0):
            raise ValueError("sweep.duration must be > 0")
        if not (0 < self.growth_cap < 1 and 0 < self.drift_cap < 1):
            raise ValueError("sweep caps must lie in (0, 1)")

    def grid(self):
        return momentum_grid(self.p_min, self.p_max, self.n_bins)


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "."
    prefix: str = "run"
    plot_data: bool = True


@dataclass(frozen=True)
class RunConfig:
    params: SimParams = field(default_factory=SimParams)
    constants: PhysicalConstants | None = None
    ensemble: EnsembleSpec = field(default_factory=lambda: _DEFAULT_ENSEMBLE)
    chaos: ChaosSpec = field(default_factory=ChaosSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    constants_preset: str | None = None

    def __post_init__(self):
        # gamma=0 has no spontaneous linewidth, so no physical scale can be
        # derived; constants stay None and unit conversions are unavailable
        if self.constants is None and self.params.gamma > 0:
            object.__setattr__(self, "constants",
                               PhysicalConstants.from_params(self.params))


_DEFAULT_ENSEMBLE = EnsembleSpec(n_traj=200, p0_mean=1000.0, duration=3e4)

# section -> key -> (kind, default); kinds: number, int, string, bool,
# number_or_null.  Defaults of _SENTINEL mean "leave to the dataclass".
_SCHEMA = {
    "params": {
        "gamma": ("number", 3.3e-3),
        "omega_r": ("number", 1e-5),
        "delta": ("number", -0.01),
    },
    "constants": {
        "preset": ("string", None),
        "rabi_frequency": ("number", None),
        "wavelength": ("number", None),
        "natural_linewidth": ("number", None),
        "atomic_mass": ("number", None),
        "hbar": ("number", None),
        "boltzmann": ("number", None),
    },
    "ensemble": {
        "n_traj": ("int", 200),
        "p0_mean": ("number", 1000.0),
        "p0_sigma": ("number", 0.0),
        "x0_dist": ("string", "uniform"),
        "x0_mean": ("number", 0.0),
        "x0_sigma": ("number", 1.0),
        "duration": ("number", 3e4),
        "sample_interval": ("number", 10.0),
        "h": ("number", 1e-2),
        "seed": ("int", 0),
    },
    "chaos": {
        "n_traj": ("int", 16),
        "tau_max": ("number", 2e5),
        "renorm_interval": ("number", 10.0),
        "p_jitter": ("number", 0.02),
        "noise_floor_n": ("int", 4),
        "threshold": ("number_or_null", None),
    },
    "sweep": {
        "p_min": ("number", 500.0),
        "p_max": ("number", 8600.0),
        "n_bins": ("int", 12),
        "n_traj": ("int", 200),
        "duration": ("number", 3e4),
        "sample_interval": ("number", 10.0),
        "h": ("number", 1e-2),
        "seed": ("int", 0),
        "p_sigma_frac": ("number", 0.01),
        "transient": ("number_or_null", None),
        "growth_cap": ("number", 0.05),
        "drift_cap": ("number", 0.05),
    },
    "output": {
        "dir": ("string", "."),
        "prefix": ("string", "run"),
        "plot_data": ("bool", True),
    },
}

CONSISTENCY_TOL = 0.05


def _check_kind(value, kind: str, path: str):
    if kind == "number_or_null":
        if value is None:
            return None
        kind = "number"
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{path} must be a number")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{path} must be an integer")
        return value
    if kind == "string":
        if not isinstance(value, str):
            raise ValueError(f"{path} must be a string")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValueError(f"{path} must be true or false")
        return value
    raise AssertionError(kind)


def _read_section(doc: dict, name: str) -> dict:
    raw = doc.get(name, {})
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError(f"{name} must be an object")
    schema = _SCHEMA[name]
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ValueError(f"{name}.{key}: unknown key")
        out[key] = _check_kind(value, schema[key][0], f"{name}.{key}")
    for key, (_, default) in schema.items():
        out.setdefault(key, default)
    return out


def _build_constants(sec: dict, params: SimParams):
    preset = sec.pop("preset")
    explicit = {k: v for k, v in sec.items() if v is not None}
    if preset is not None:
        if preset != "cesium":
            raise ValueError("constants.preset must be 'cesium'")
        if explicit:
            raise ValueError(
                "constants.preset cannot be combined with explicit values")
        return PhysicalConstants.cesium(), "cesium"
    if not explicit:
        if params.gamma == 0:
            return None, None
        return PhysicalConstants.from_params(params), None
    derive_only = set(explicit) <= {"rabi_frequency", "wavelength"}
    if derive_only:
        kwargs = {}
        if "rabi_frequency" in explicit:
            kwargs["rabi_frequency"] = explicit["rabi_frequency"]
        if "wavelength" in explicit:
            kwargs["wavelength"] = explicit["wavelength"]
        return PhysicalConstants.from_params(params, **kwargs), None
    missing = [k for k in ("rabi_frequency", "natural_linewidth",
                           "wavelength", "atomic_mass") if k not in explicit]
    if missing:
        raise ValueError(f"constants.{missing[0]}: required when constants "
                         "are given explicitly")
    const = PhysicalConstants(
        rabi_frequency=explicit["rabi_frequency"],
        natural_linewidth=explicit["natural_linewidth"],
        wavelength=explicit["wavelength"],
        atomic_mass=explicit["atomic_mass"],
        **{k: explicit[k] for k in ("hbar", "boltzmann") if k in explicit})
    problems = const.check_consistency(params, tol=CONSISTENCY_TOL)
    if problems:
        raise ValueError("constants: " + "; ".join(problems))
    return const, None


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ValueError("config root must be an object")
    unknown = set(doc) - set(_SCHEMA)
    if unknown:
        raise ValueError(f"{sorted(unknown)[0]}: unknown key")
    params = SimParams(**_read_section(doc, "params"))
    constants, preset = _build_constants(_read_section(doc, "constants"),
                                         params)
    ens = _read_section(doc, "ensemble")
    ensemble = EnsembleSpec(
        n_traj=ens["n_traj"], p0_mean=ens["p0_mean"], p0_sigma=ens["p0_sigma"],
        x0_dist=ens["x0_dist"], x0_mean=ens["x0_mean"],
        x0_sigma=ens["x0_sigma"], duration=ens["duration"],
        sample_interval=ens["sample_interval"], h=ens["h"], seed=ens["seed"])
    cha = _read_section(doc, "chaos")
    chaos = ChaosSpec(n_traj=cha["n_traj"], tau_max=cha["tau_max"],
                      renorm_interval=cha["renorm_interval"],
                      p_jitter=cha["p_jitter"],
                      noise_floor_n=cha["noise_floor_n"],
                      threshold=cha["threshold"])
    sweep = SweepSpec(**_read_section(doc, "sweep"))
    output = OutputSpec(**_read_section(doc, "output"))
    return RunConfig(params=params, constants=constants, ensemble=ensemble,
                     chaos=chaos, sweep=sweep, output=output,
                     constants_preset=preset)


def parse_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(doc)


def _dataclass_section(obj, keys) -> dict:
    return {k: getattr(obj, k) for k in keys}


def emit_config(cfg: RunConfig) -> dict:
    """Full dictionary form; config_from_dict(emit_config(cfg)) == cfg."""
    if cfg.constants_preset is not None:
        constants = {"preset": cfg.constants_preset}
    elif cfg.constants is None:
        constants = {}
    else:
        constants = {
            "rabi_frequency": cfg.constants.rabi_frequency,
            "natural_linewidth": cfg.constants.natural_linewidth,
            "wavelength": cfg.constants.wavelength,
            "atomic_mass": cfg.constants.atomic_mass,
            "hbar": cfg.constants.hbar,
            "boltzmann": cfg.constants.boltzmann,
        }
    return {
        "params": _dataclass_section(cfg.params,
                                     ("gamma", "omega_r", "delta")),
        "constants": constants,
        "ensemble": _dataclass_section(cfg.ensemble, (
            "n_traj", "p0_mean", "p0_sigma", "x0_dist", "x0_mean",
            "x0_sigma", "duration", "sample_interval", "h", "seed")),
        "chaos": _dataclass_section(cfg.chaos, (
            "n_traj", "tau_max", "renorm_interval", "p_jitter",
            "noise_floor_n", "threshold")),
        "sweep": _dataclass_section(cfg.sweep, tuple(
            f.name for f in fields(SweepSpec))),
        "output": _dataclass_section(cfg.output,
                                     ("dir", "prefix", "plot_data")),
    }


def write_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(emit_config(cfg), fh, indent=2)
        fh.write("\n")
