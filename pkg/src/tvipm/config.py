"""
Run configuration.

Settings come from three layers, later ones winning: the scenario preset,
an optional config file and explicit command-line flags. Each layer is a
flat mapping of dotted keys to strings; :func:`load_run_config` merges
them and parses the result into a validated :class:`RunConfig`.

The file format is ``key = value`` per line with ``#`` comments, read
through :mod:`configparser` without sections. Vectors are comma-separated,
matrices are rows of a vector separated by ``;``.
"""
import configparser
import math
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Mapping, Optional, Tuple

from .barrier import BarrierSchedules
from .dynamics import GainSettings
from .errors import ConfigError
from .integrator import IntegratorConfig, Mode
from .oracle import OracleConfig
from .scenarios.custom import CustomSettings
from .scenarios.l1ls import IpmComparisonConfig

SCENARIOS = ("tvqp", "l1ls", "robot", "custom")
L1LS_MODES = ("compare", "snipm", "anipm")
ROBOT_GOALS = ("static", "moving")
EMIT_FORMATS = ("csv", "json", "both")

DEFAULT_PRESETS = {"tvqp": "paper", "l1ls": "desk", "robot": "static"}

PRESETS: Dict[Tuple[str, str], Dict[str, str]] = {
    ("tvqp", "paper"): {
        "mode": "barrier",
        "start": "-2, 0",
        "gains.alpha": "5",
        "schedules.c0": "10",
        "schedules.gamma_c": "1",
        "schedules.s0": "2",
        "schedules.gamma_s": "5",
        "integrator.tau": "0.1",
        "integrator.t_end": repr(2 * math.pi),
    },
    ("l1ls", "desk"): {
        "mode": "compare",
        "l1ls.m": "64",
        "l1ls.n": "256",
        "l1ls.k_sparsity": "5",
        "l1ls.noise_sigma": "0.1",
        "l1ls.lam": "2",
    },
    ("l1ls", "paper"): {
        "mode": "compare",
        "l1ls.m": "256",
        "l1ls.n": "1024",
        "l1ls.k_sparsity": "10",
        "l1ls.noise_sigma": "0.1",
        "l1ls.lam": "2",
    },
    ("robot", "static"): {
        "start": "-15, -15",
        "gains.alpha": "5",
        "schedules.c0": "1",
        "schedules.gamma_c": "0.001",
        "schedules.s0": "0",
        "schedules.gamma_s": "0",
        "integrator.tau": "0.2",
        "integrator.t_end": "2500",
        "robot.goal": "static",
        "robot.gain": "0.01",
    },
    ("robot", "moving"): {
        "start": "0, 0",
        "gains.alpha": "30",
        "schedules.c0": "100",
        "schedules.gamma_c": "0.001",
        "schedules.s0": "0",
        "schedules.gamma_s": "0",
        "integrator.tau": "0.025",
        "integrator.t_end": "2000",
        "integrator.record_stride": "40",
        "robot.goal": "moving",
        "robot.gain": "0.05",
    },
}


@dataclass(frozen=True)
class L1lsSettings:
    m: int = 64
    n: int = 256
    k_sparsity: int = 5
    noise_sigma: float = 0.1
    lam: float = 2.0


@dataclass(frozen=True)
class RobotSettings:
    goal: str = "static"
    gain: float = 0.01


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "tvqp"
    mode: Optional[str] = None
    preset: Optional[str] = None
    seed: int = 0
    start: Optional[Tuple[float, ...]] = None
    out: str = "."
    emit: str = "both"
    stride: int = 1
    workers: int = 1
    store: Optional[str] = None
    gains: GainSettings = GainSettings()
    schedules: BarrierSchedules = BarrierSchedules()
    integrator: IntegratorConfig = IntegratorConfig()
    oracle: OracleConfig = OracleConfig()
    comparison: IpmComparisonConfig = IpmComparisonConfig()
    l1ls: L1lsSettings = L1lsSettings()
    robot: RobotSettings = RobotSettings()
    custom: Optional[CustomSettings] = None
    settings: Dict[str, str] = field(default_factory=dict, compare=False)

    def validate(self) -> "RunConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.emit not in EMIT_FORMATS:
            raise ConfigError(f"unknown format {self.emit!r}")
        if self.stride < 1 or self.workers < 1:
            raise ValueError("stride and workers must be positive")
        if self.scenario == "l1ls":
            if self.mode not in L1LS_MODES:
                raise ConfigError(f"l1ls mode must be one of {L1LS_MODES}")
            self.comparison.validate()
        elif self.scenario == "robot":
            if self.mode not in (None, Mode.BARRIER.value):
                raise ConfigError("the robot scenario only runs the barrier estimator")
            if self.robot.goal not in ROBOT_GOALS:
                raise ConfigError(f"robot.goal must be one of {ROBOT_GOALS}")
            if not self.robot.gain > 0:
                raise ValueError(f"robot.gain must be positive, got {self.robot.gain}")
        else:
            if self.mode is not None:
                try:
                    Mode(self.mode)
                except ValueError:
                    raise ConfigError(f"unknown mode {self.mode!r}") from None
            if self.scenario == "custom":
                if self.custom is None:
                    raise ConfigError("custom scenario needs custom.H and center")
                self.custom.validate()
            self.oracle.validate()
        self.integrator.validate()
        self.gains.validate(robust=self.mode == Mode.ROBUST.value)
        self.schedules.validate()
        return self


def read_config_file(path) -> Dict[str, str]:
    """
    Reads a flat ``key = value`` file into a dictionary of strings.

    :raises ConfigError: on syntax errors or repeated keys.
    """
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    try:
        parser.read_string(f"[{parser.default_section}]\n{text}", source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e.message}") from e
    return dict(parser.defaults())


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _parse_vector(key: str, value: str) -> Tuple[float, ...]:
    parts = [part.strip() for part in value.split(",")]
    if not parts or any(not part for part in parts):
        raise ConfigError(f"{key}: expected comma-separated numbers, got {value!r}")
    return tuple(_parse_float(key, part) for part in parts)


def _parse_matrix(key: str, value: str) -> Tuple[Tuple[float, ...], ...]:
    rows = tuple(_parse_vector(key, row) for row in value.split(";"))
    if len({len(row) for row in rows}) != 1:
        raise ConfigError(f"{key}: rows have different lengths")
    return rows


def _parse_optional_float(key: str, value: str) -> Optional[float]:
    if value.strip().lower() in ("auto", "none"):
        return None
    return _parse_float(key, value)


_PARSERS = {float: _parse_float, int: _parse_int, bool: _parse_bool}

SECTIONS = {
    "gains": GainSettings,
    "schedules": BarrierSchedules,
    "integrator": IntegratorConfig,
    "oracle": OracleConfig,
    "comparison": IpmComparisonConfig,
    "l1ls": L1lsSettings,
    "robot": RobotSettings,
}
CUSTOM_MATRICES = ("H", "G", "A")
CUSTOM_VECTORS = ("center", "amplitude", "h", "b")
TOP_LEVEL = {
    "scenario": str,
    "mode": str,
    "preset": str,
    "seed": int,
    "start": tuple,
    "out": str,
    "format": str,
    "stride": int,
    "workers": int,
    "store": str,
}


def _parse_section(cls, prefix: str, values: Mapping[str, str]):
    kwargs: Dict[str, Any] = {}
    for item in fields(cls):
        key = f"{prefix}.{item.name}"
        if key not in values:
            continue
        raw = values[key]
        if key == "schedules.s0":
            kwargs[item.name] = _parse_optional_float(key, raw)
        elif isinstance(item.default, bool):
            kwargs[item.name] = _parse_bool(key, raw)
        elif isinstance(item.default, str):
            kwargs[item.name] = raw.strip()
        else:
            kwargs[item.name] = _PARSERS[type(item.default)](key, raw)
    return cls(**kwargs)


def known_keys() -> Tuple[str, ...]:
    keys = list(TOP_LEVEL)
    for prefix, cls in SECTIONS.items():
        keys.extend(f"{prefix}.{item.name}" for item in fields(cls) if item.init)
    keys.extend(f"custom.{name}" for name in CUSTOM_MATRICES + CUSTOM_VECTORS)
    keys.append("custom.frequency")
    return tuple(keys)


def parse_settings(values: Mapping[str, str]) -> RunConfig:
    """
    Builds a :class:`RunConfig` from a flat mapping of dotted keys.

    :raises ConfigError: on unknown keys or unparsable values.
    """
    unknown = sorted(set(values) - set(known_keys()))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")

    kwargs: Dict[str, Any] = {}
    for key, kind in TOP_LEVEL.items():
        if key not in values:
            continue
        raw = values[key]
        if kind is int:
            kwargs[key] = _parse_int(key, raw)
        elif kind is tuple:
            kwargs[key] = _parse_vector(key, raw)
        else:
            kwargs[key] = raw.strip()
    if "format" in kwargs:
        kwargs["emit"] = kwargs.pop("format")
    for prefix, cls in SECTIONS.items():
        kwargs[prefix] = _parse_section(cls, prefix, values)

    custom_keys = [key for key in values if key.startswith("custom.")]
    if custom_keys:
        custom: Dict[str, Any] = {}
        for name in CUSTOM_MATRICES:
            if f"custom.{name}" in values:
                custom[name] = _parse_matrix(f"custom.{name}", values[f"custom.{name}"])
        for name in CUSTOM_VECTORS:
            if f"custom.{name}" in values:
                custom[name] = _parse_vector(f"custom.{name}", values[f"custom.{name}"])
        if "custom.frequency" in values:
            custom["frequency"] = _parse_float(
                "custom.frequency", values["custom.frequency"]
            )
        if "H" not in custom or "center" not in custom:
            raise ConfigError("custom.H and custom.center are required")
        kwargs["custom"] = CustomSettings(**custom)

    return RunConfig(settings=dict(values), **kwargs)


def load_run_config(
    config_path=None, overrides: Optional[Mapping[str, str]] = None
) -> RunConfig:
    """
    Merges preset, config file and ``overrides`` (the command-line flags)
    and returns the validated configuration.

    The scenario and preset are looked up in the file and the flags first,
    since they select the preset layer.
    """
    overrides = dict(overrides or {})
    from_file = read_config_file(config_path) if config_path else {}

    def pick(key: str) -> Optional[str]:
        return overrides.get(key, from_file.get(key))

    scenario = (pick("scenario") or "tvqp").strip()
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    preset = pick("preset") or DEFAULT_PRESETS.get(scenario)
    values: Dict[str, str] = {}
    if preset is not None:
        preset = preset.strip()
        if (scenario, preset) not in PRESETS:
            raise ConfigError(f"no preset {preset!r} for scenario {scenario!r}")
        values.update(PRESETS[(scenario, preset)])
        values["preset"] = preset
    values.update(from_file)
    values.update(overrides)
    values["scenario"] = scenario
    return parse_settings(values).validate()
