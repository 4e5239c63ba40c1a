"""Run configuration: flat key = value files with section headers.

An empty file parses to the paper-baseline scenario (spinodal decomposition
with the reaction exchange law on a level-4 sphere).  Every key is optional;
unknown keys and malformed values raise ConfigError naming the key.  Values
may use `pi`, e.g. ``total_mass = 20*pi/3``.

Sections and keys:

  [geometry]  generator (sphere|bumpy|file), level, bump_amplitude,
              wavenumber, path
  [model]     eps, delta, c1, c2, c, total_mass, vol_bulk,
              exchange (reaction|energy_decreasing), sigma_override
  [stepper]   tau_min, tau_max, adapt_const, stationary_tol,
              stationary_steps, rtol, maxit, direct_threshold,
              quadrature (lumped|consistent),
              variant (reduced|ohta_kawasaki|energy_decreasing), t_end
  [initial]   phi_hat, v0, amplitude, seed
  [output]    directory, snapshot_times (space-separated), write_final_vtk
  [run]       scenario
"""

import configparser
import io
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .raft_model import ExchangeLaw, ModelParams
from .time_stepper import StepperConfig


@dataclass(frozen=True)
class GeometrySpec:
    generator: str = "sphere"       # sphere | bumpy | file
    level: int = 4
    bump_amplitude: float = 0.2
    wavenumber: int = 4
    path: str = ""

    def __post_init__(self):
        if self.generator not in ("sphere", "bumpy", "file"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.generator == "file" and not self.path:
            raise ValueError("generator 'file' requires a path")
        if self.level < 0:
            raise ValueError("level must be nonnegative")


@dataclass(frozen=True)
class InitialSpec:
    phi_hat: float = -0.5
    v0: float = 0.25
    amplitude: float = 0.001
    seed: int = 1

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be nonnegative")


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "raftsim-out"
    snapshot_times: tuple = ()
    write_final_vtk: bool = True

    def __post_init__(self):
        if tuple(sorted(self.snapshot_times)) != tuple(self.snapshot_times):
            raise ValueError("snapshot_times must be sorted")


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    model: ModelParams = field(default_factory=ModelParams)
    stepper: StepperConfig = field(default_factory=StepperConfig)
    initial: InitialSpec = field(default_factory=InitialSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    t_end: float = None
    scenario: str = "basic"


_EVAL_NAMES = {"pi": math.pi, "e": math.e, "inf": math.inf}


def _parse_number(text, key, integer=False):
    text = text.strip()
    try:
        value = eval(text, {"__builtins__": {}}, _EVAL_NAMES)  # arithmetic only
        value = float(value)
    except Exception:
        raise ConfigError(f"{key}: cannot parse number from {text!r}") from None
    if integer:
        if value != int(value):
            raise ConfigError(f"{key}: expected integer, got {text!r}")
        return int(value)
    return value


def _parse_bool(text, key):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected boolean, got {text!r}")


_SCHEMA = {
    "geometry": {"generator": "str", "level": "int", "bump_amplitude": "float",
                 "wavenumber": "int", "path": "str"},
    "model": {"eps": "float", "delta": "float", "c1": "float", "c2": "float",
              "c": "float", "total_mass": "float", "vol_bulk": "float",
              "exchange": "str", "sigma_override": "float_or_none"},
    "stepper": {"tau_min": "float", "tau_max": "float", "adapt_const": "float",
                "stationary_tol": "float", "stationary_steps": "int",
                "rtol": "float", "maxit": "int", "direct_threshold": "int",
                "quadrature": "str", "variant": "str", "t_end": "float_or_none"},
    "initial": {"phi_hat": "float", "v0": "float", "amplitude": "float",
                "seed": "int"},
    "output": {"directory": "str", "snapshot_times": "floats",
               "write_final_vtk": "bool"},
    "run": {"scenario": "str"},
}


def _convert(kind, raw, key):
    if kind == "str":
        return raw.strip()
    if kind == "int":
        return _parse_number(raw, key, integer=True)
    if kind == "float":
        return _parse_number(raw, key)
    if kind == "float_or_none":
        return None if raw.strip() == "" else _parse_number(raw, key)
    if kind == "floats":
        return tuple(_parse_number(tok, key) for tok in raw.split())
    if kind == "bool":
        return _parse_bool(raw, key)
    raise AssertionError(kind)


def parse_config_text(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[(section, key)] = _convert(_SCHEMA[section][key], raw,
                                              f"[{section}] {key}")

    def pick(section, key, default):
        return values.get((section, key), default)

    try:
        geometry = GeometrySpec(
            generator=pick("geometry", "generator", "sphere"),
            level=pick("geometry", "level", 4),
            bump_amplitude=pick("geometry", "bump_amplitude", 0.2),
            wavenumber=pick("geometry", "wavenumber", 4),
            path=pick("geometry", "path", ""),
        )
        exchange_raw = pick("model", "exchange", "reaction")
        try:
            exchange = ExchangeLaw(exchange_raw)
        except ValueError:
            raise ConfigError(f"[model] exchange: unknown law {exchange_raw!r}") from None
        model = ModelParams(
            eps=pick("model", "eps", 0.02),
            delta=pick("model", "delta", 0.02),
            c1=pick("model", "c1", 500.0),
            c2=pick("model", "c2", 500.0),
            c=pick("model", "c", 500.0),
            total_mass=pick("model", "total_mass", 20.0 * math.pi / 3.0),
            vol_bulk=pick("model", "vol_bulk", 4.0 * math.pi / 3.0),
            exchange=exchange,
            sigma_override=pick("model", "sigma_override", None),
        )
        defaults = StepperConfig()
        stepper = StepperConfig(
            tau_min=pick("stepper", "tau_min", defaults.tau_min),
            tau_max=pick("stepper", "tau_max", defaults.tau_max),
            adapt_const=pick("stepper", "adapt_const", defaults.adapt_const),
            stationary_tol=pick("stepper", "stationary_tol", defaults.stationary_tol),
            stationary_steps=pick("stepper", "stationary_steps", defaults.stationary_steps),
            rtol=pick("stepper", "rtol", defaults.rtol),
            maxit=pick("stepper", "maxit", defaults.maxit),
            direct_threshold=pick("stepper", "direct_threshold", defaults.direct_threshold),
            quadrature=pick("stepper", "quadrature", defaults.quadrature),
            variant=pick("stepper", "variant", defaults.variant),
        )
        initial = InitialSpec(
            phi_hat=pick("initial", "phi_hat", -0.5),
            v0=pick("initial", "v0", 0.25),
            amplitude=pick("initial", "amplitude", 0.001),
            seed=pick("initial", "seed", 1),
        )
        output = OutputSpec(
            directory=pick("output", "directory", "raftsim-out"),
            snapshot_times=pick("output", "snapshot_times", ()),
            write_final_vtk=pick("output", "write_final_vtk", True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    config = RunConfig(
        geometry=geometry, model=model, stepper=stepper, initial=initial,
        output=output, t_end=pick("stepper", "t_end", None),
        scenario=pick("run", "scenario", "basic"),
    )
    _validate_cross(config)
    return config


def _validate_cross(config):
    variant = config.stepper.variant
    exchange = config.model.exchange
    if variant == "reduced" and exchange is not ExchangeLaw.REACTION:
        raise ConfigError("[stepper] variant 'reduced' requires [model] exchange = reaction")
    if variant == "energy_decreasing" and exchange is not ExchangeLaw.ENERGY_DECREASING:
        raise ConfigError(
            "[stepper] variant 'energy_decreasing' requires [model] exchange = energy_decreasing")


def parse_config(path):
    """Parse a config file; missing keys take the paper-baseline defaults."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def serialize_config(config):
    """Render a RunConfig as config text that reparses to an equal config."""
    cp = configparser.ConfigParser()
    g, m, s, i, o = (config.geometry, config.model, config.stepper,
                     config.initial, config.output)
    cp["geometry"] = {"generator": g.generator, "level": repr(g.level),
                      "bump_amplitude": repr(g.bump_amplitude),
                      "wavenumber": repr(g.wavenumber), "path": g.path}
    cp["model"] = {"eps": repr(m.eps), "delta": repr(m.delta),
                   "c1": repr(m.c1), "c2": repr(m.c2), "c": repr(m.c),
                   "total_mass": repr(m.total_mass),
                   "vol_bulk": repr(m.vol_bulk),
                   "exchange": m.exchange.value,
                   "sigma_override": "" if m.sigma_override is None
                                     else repr(m.sigma_override)}
    cp["stepper"] = {"tau_min": repr(s.tau_min), "tau_max": repr(s.tau_max),
                     "adapt_const": repr(s.adapt_const),
                     "stationary_tol": repr(s.stationary_tol),
                     "stationary_steps": repr(s.stationary_steps),
                     "rtol": repr(s.rtol), "maxit": repr(s.maxit),
                     "direct_threshold": repr(s.direct_threshold),
                     "quadrature": s.quadrature, "variant": s.variant,
                     "t_end": "" if config.t_end is None else repr(config.t_end)}
    cp["initial"] = {"phi_hat": repr(i.phi_hat), "v0": repr(i.v0),
                     "amplitude": repr(i.amplitude), "seed": repr(i.seed)}
    cp["output"] = {"directory": o.directory,
                    "snapshot_times": " ".join(repr(t) for t in o.snapshot_times),
                    "write_final_vtk": "true" if o.write_final_vtk else "false"}
    cp["run"] = {"scenario": config.scenario}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
