"""Experiment configuration: presets, INI files and command-line overrides.

INI layout (every key optional; missing keys fall back to the preset)::

    [experiment]
    name = example1          ; example1 | example2 | potential1 | potential2 | custom
    seed = 0
    repeats = 50
    workers = 1
    methods = both           ; bsde | apf | both
    output_dir = results

    [grid]
    T = 2.0
    dt = 0.02

    [model]
    sigma = 4.0              ; scalar or comma list (diagonal)
    jump_rate = 1.0
    jump_scale = 10.0        ; scalar or comma list (jump coefficient)
    alpha = 1.0              ; example2 only
    kinematics = identity_blocks ; example2 only: identity_blocks | standard
    prior_var = 0.25         ; scalar or comma list (diagonal)
    R = 0.1                  ; scalar or comma list (diagonal)
    well_depth = 1.0         ; potential experiments
    lattice_constant = 1.0
    surface_csv = surface.csv ; custom: gridded surface with columns x,y,F

    [bsde]
    n_points = 200
    mc_samples = 20
    neighbors = 8
    mcmc_iters = 5
    proposal_scale =         ; empty: adaptive default
    shepard = inverse
    estimator = mean
    mh_support = unbounded   ; unbounded | cloud_box

    [apf]
    particles = 400, 800, 1600, 3200

    [output]
    full_state_rmse = false
    traces = true
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from ..filter import FilterConfig

EXPERIMENTS = ("example1", "example2", "potential1", "potential2", "custom")
METHODS = ("bsde", "apf", "both")

FloatTuple = Optional[tuple[float, ...]]


@dataclass(frozen=True)
class ModelOverrides:
    """Model parameters that replace the preset values when not ``None``."""

    sigma: FloatTuple = None
    jump_rate: Optional[float] = None
    jump_scale: FloatTuple = None
    alpha: Optional[float] = None
    kinematics: Optional[str] = None
    prior_var: FloatTuple = None
    R: FloatTuple = None
    well_depth: Optional[float] = None
    lattice_constant: Optional[float] = None
    surface_csv: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "example1"
    seed: int = 0
    repeats: int = 1
    workers: int = 1
    methods: str = "both"
    output_dir: str = "results"
    T: Optional[float] = None
    dt: Optional[float] = None
    model: ModelOverrides = field(default_factory=ModelOverrides)
    bsde: FilterConfig = field(default_factory=FilterConfig)
    apf_particles: tuple[int, ...] = (800,)
    full_state_rmse: bool = False
    traces: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.methods not in METHODS:
            raise ValueError(f"methods must be one of {METHODS}, got {self.methods!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.T is not None and not self.T > 0:
            raise ValueError("T must be > 0")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.uses_apf and (not self.apf_particles or min(self.apf_particles) < 1):
            raise ValueError("apf particles must be a nonempty list of positive counts")

    @property
    def uses_bsde(self) -> bool:
        return self.methods in ("bsde", "both")

    @property
    def uses_apf(self) -> bool:
        return self.methods in ("apf", "both")


PRESETS: dict[str, ExperimentConfig] = {
    "example1": ExperimentConfig(
        "example1",
        repeats=50,
        bsde=FilterConfig(n_points=200, mc_samples=20),
        apf_particles=(400, 800, 1600, 3200),
    ),
    "example2": ExperimentConfig(
        "example2",
        repeats=20,
        bsde=FilterConfig(n_points=1500, mc_samples=20),
        apf_particles=(6000,),
    ),
    "potential1": ExperimentConfig(
        "potential1",
        repeats=10,
        bsde=FilterConfig(n_points=200, mc_samples=20),
        apf_particles=(800,),
    ),
    "potential2": ExperimentConfig(
        "potential2",
        repeats=10,
        bsde=FilterConfig(n_points=200, mc_samples=20),
        apf_particles=(800,),
    ),
    "custom": ExperimentConfig(
        "custom",
        repeats=10,
        bsde=FilterConfig(n_points=200, mc_samples=20),
        apf_particles=(800,),
    ),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    return PRESETS[name]


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _opt(text: str) -> Optional[str]:
    text = text.strip()
    return text or None


_BOOL = {"true": True, "yes": True, "1": True, "on": True, "false": False, "no": False, "0": False, "off": False}


def _bool(text: str) -> bool:
    key = text.strip().lower()
    if key not in _BOOL:
        raise ValueError(f"not a boolean: {text!r}")
    return _BOOL[key]


_MODEL_PARSERS = {
    "sigma": _floats,
    "jump_rate": float,
    "jump_scale": _floats,
    "alpha": float,
    "kinematics": str.strip,
    "prior_var": _floats,
    "r": _floats,
    "well_depth": float,
    "lattice_constant": float,
    "surface_csv": str.strip,
}

_BSDE_PARSERS = {
    "n_points": int,
    "mc_samples": int,
    "neighbors": lambda s: None if _opt(s) is None else int(s),
    "mcmc_iters": int,
    "proposal_scale": lambda s: None if _opt(s) is None else _scalar_or_tuple(_floats(s)),
    "density_floor": float,
    "shepard": str.strip,
    "estimator": str.strip,
    "neighbor_search": str.strip,
    "mh_support": str.strip,
}


def _scalar_or_tuple(v: tuple[float, ...]):
    return v[0] if len(v) == 1 else v


def _unknown(section: str, keys) -> None:
    if keys:
        raise ValueError(f"unknown key(s) in [{section}]: {', '.join(sorted(keys))}")


def load_config(path=None, text: str | None = None, experiment: str | None = None) -> ExperimentConfig:
    """Build a config from an INI file (or string) layered over the experiment preset.

    ``experiment`` (e.g. from the command line) wins over ``[experiment] name``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        with open(path) as fh:
            parser.read_file(fh)
    elif text is not None:
        parser.read_string(text)
    known = {"experiment", "grid", "model", "bsde", "apf", "output"}
    _unknown("config", set(parser.sections()) - known)

    exp = parser["experiment"] if parser.has_section("experiment") else {}
    name = experiment or exp.get("name", "example1").strip()
    cfg = preset(name)
    changes: dict = {}

    if exp:
        _unknown("experiment", set(exp) - {"name", "seed", "repeats", "workers", "methods", "output_dir"})
        for key, conv in (("seed", int), ("repeats", int), ("workers", int), ("methods", str.strip), ("output_dir", str.strip)):
            if key in exp:
                changes[key] = conv(exp[key])
    if parser.has_section("grid"):
        grid = parser["grid"]
        _unknown("grid", set(grid) - {"t", "dt"})
        if "t" in grid:
            changes["T"] = float(grid["t"])
        if "dt" in grid:
            changes["dt"] = float(grid["dt"])
    if parser.has_section("model"):
        sec = parser["model"]
        _unknown("model", set(sec) - set(_MODEL_PARSERS))
        over = {("R" if k == "r" else k): _MODEL_PARSERS[k](v) for k, v in sec.items() if _opt(v) is not None}
        changes["model"] = replace(cfg.model, **over)
    if parser.has_section("bsde"):
        sec = parser["bsde"]
        _unknown("bsde", set(sec) - set(_BSDE_PARSERS))
        changes["bsde"] = replace(cfg.bsde, **{k: _BSDE_PARSERS[k](v) for k, v in sec.items()})
    if parser.has_section("apf"):
        sec = parser["apf"]
        _unknown("apf", set(sec) - {"particles"})
        if "particles" in sec:
            changes["apf_particles"] = tuple(int(v) for v in _floats(sec["particles"]))
    if parser.has_section("output"):
        sec = parser["output"]
        _unknown("output", set(sec) - {"full_state_rmse", "traces"})
        for key in ("full_state_rmse", "traces"):
            if key in sec:
                changes[key] = _bool(sec[key])
    return replace(cfg, **changes)


def _ini_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that :func:`load_config` maps back to ``cfg``."""
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "name": cfg.experiment,
        "seed": str(cfg.seed),
        "repeats": str(cfg.repeats),
        "workers": str(cfg.workers),
        "methods": cfg.methods,
        "output_dir": cfg.output_dir,
    }
    parser["grid"] = {k: _ini_value(v) for k, v in (("T", cfg.T), ("dt", cfg.dt)) if v is not None}
    parser["model"] = {k: _ini_value(v) for k, v in asdict(cfg.model).items() if v is not None}
    bsde = asdict(cfg.bsde)
    parser["bsde"] = {k: _ini_value(bsde[k]) for k in _BSDE_PARSERS}
    parser["apf"] = {"particles": _ini_value(cfg.apf_particles)}
    parser["output"] = {"full_state_rmse": _ini_value(cfg.full_state_rmse), "traces": _ini_value(cfg.traces)}
    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in parser[section].items())
        lines.append("")
    return "\n".join(lines)
