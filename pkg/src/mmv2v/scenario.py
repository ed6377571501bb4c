"""Scenario parameters, config loading/dumping and the MAC probability fallback.

The config document is YAML with one section per parameter group::

    road:
      lane_densities: [0.07, 0.10, 0.13]
    antenna:
      beamwidth_deg: 45

Omitted keys take the highway defaults; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping

import yaml

from mmv2v.channel import AntennaPattern, PathLossTable
from mmv2v.errors import ConfigError, ValidationError

DENSITY_ROWS: dict[str, tuple[float, float, float]] = {
    "low": (0.05, 0.07, 0.10),
    "intermediate": (0.07, 0.10, 0.13),
    "high": (0.09, 0.13, 0.17),
}

CONFIG_ENV_VAR = "MMV2V_CONFIG"


@dataclass(frozen=True)
class VehicleClass:
    length: float
    width: float
    height: float
    antenna_height: float

    def __post_init__(self):
        for name in ("length", "width", "height", "antenna_height"):
            if not getattr(self, name) > 0:
                raise ValidationError(name, f"must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class RoadModel:
    lane_width: float = 3.2
    lane_count: int = 3
    lane_densities: tuple[float, float, float] = DENSITY_ROWS["intermediate"]
    tall_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "lane_densities", tuple(float(x) for x in self.lane_densities))
        if not self.lane_width > 0:
            raise ValidationError("road.lane_width", f"must be > 0, got {self.lane_width}")
        if self.lane_count != 3:
            raise ValidationError("road.lane_count", "only three-lane roads are supported")
        if len(self.lane_densities) != 3:
            raise ValidationError("road.lane_densities", "need one density per lane (3)")
        if any(not (lam >= 0 and math.isfinite(lam)) for lam in self.lane_densities):
            raise ValidationError("road.lane_densities", "densities must be finite and >= 0")
        if not (0.0 <= self.tall_fraction <= 1.0):
            raise ValidationError("road.tall_fraction", f"must be in [0, 1], got {self.tall_fraction}")

    @property
    def total_density(self) -> float:
        return sum(self.lane_densities)

    def density(self, lane: int) -> float:
        """Density of 1-based ``lane``."""
        if lane not in (1, 2, 3):
            raise ValidationError("lane", f"lane index must be 1, 2 or 3, got {lane!r}")
        return self.lane_densities[lane - 1]


@dataclass(frozen=True)
class RadioParams:
    tx_power: float = 23.0  # dBm
    bandwidth: float = 20e6  # Hz
    noise_figure: float = 6.0  # dB
    sinr_threshold: float = 23.0  # dB
    carrier_sense_range: float = 50.0  # m
    frequency: float = 60e9  # Hz, documentation only

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValidationError("radio.bandwidth", f"must be > 0, got {self.bandwidth}")
        if not self.carrier_sense_range >= 0:
            raise ValidationError("radio.carrier_sense_range", f"must be >= 0, got {self.carrier_sense_range}")


@dataclass(frozen=True)
class MacParams:
    """Channel-access inputs.

    ``p_t`` / ``p_c`` left as ``None`` fall back to
    :func:`default_mac_probabilities`.
    """

    p_t: float | None = None
    p_c: float | None = None
    packet_interval: float = 0.1  # s
    tx_latency: float = 100e-6  # s
    packet_length: int = 200  # bytes, documentation only
    symbol_duration: float = 6.4e-6  # s, documentation only

    def __post_init__(self):
        if not self.packet_interval > 0:
            raise ValidationError("mac.packet_interval", f"must be > 0, got {self.packet_interval}")
        if not self.tx_latency > 0:
            raise ValidationError("mac.tx_latency", f"must be > 0, got {self.tx_latency}")
        if self.tx_latency > self.packet_interval:
            raise ValidationError("mac.tx_latency", "must not exceed packet_interval")
        for name in ("p_t", "p_c"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValidationError(f"mac.{name}", f"must be in [0, 1], got {v}")

    def probabilities(self) -> tuple[float, float]:
        """(p_t, p_c), explicit values taking precedence over the fallback.

        A missing p_c is the square of the resolved p_t.
        """
        pt = default_mac_probabilities(self)[0] if self.p_t is None else self.p_t
        return pt, pt * pt if self.p_c is None else self.p_c


def default_mac_probabilities(mac: MacParams) -> tuple[float, float]:
    """Naive channel-occupancy estimate.

    p_t is the airtime fraction ``tx_latency / packet_interval`` (no backoff);
    p_c is the chance two independent nodes pick the same instant, p_t**2.
    A stand-in for a proper MAC model; override both in the config when
    better numbers are available.
    """
    if not (mac.packet_interval > 0 and mac.tx_latency > 0):
        raise ValidationError("mac", "packet_interval and tx_latency must be > 0")
    pt = mac.tx_latency / mac.packet_interval
    return pt, pt * pt


@dataclass(frozen=True)
class AnalysisParams:
    # "transmitter": lane weights as in the closed-form E[N]; "receiver": weight by receiver lane
    coverage_weighting: str = "transmitter"
    min_distance: float = 1.0  # m, inversion lower probe
    max_distance: float = 2000.0  # m, inversion bracket
    reach_tolerance: float = 0.01  # m
    series_rtol: float = 1e-9
    series_max_terms: int = 10_000

    def __post_init__(self):
        if self.coverage_weighting not in ("transmitter", "receiver"):
            raise ValidationError("analysis.coverage_weighting", "must be 'transmitter' or 'receiver'")
        if not (0 < self.min_distance < self.max_distance):
            raise ValidationError("analysis.min_distance", "need 0 < min_distance < max_distance")
        if not self.reach_tolerance > 0:
            raise ValidationError("analysis.reach_tolerance", "must be > 0")
        if not (0 < self.series_rtol < 1):
            raise ValidationError("analysis.series_rtol", "must be in (0, 1)")
        if self.series_max_terms < 1:
            raise ValidationError("analysis.series_max_terms", "must be >= 1")


@dataclass(frozen=True)
class SimParams:
    road_length: float = 2000.0  # m
    trials: int = 1000
    wrap: bool = True  # toroidal road
    min_gap: float = 0.0  # m, per-lane thinning; 0 keeps the drop pure Poisson
    max_retries: int = 100
    # "model": blocker windows of the closed form; "rectangle": full body/segment intersection
    blocker_footprint: str = "model"
    half_duplex: bool = True  # transmitting vehicles are not counted as receivers

    def __post_init__(self):
        if not self.road_length > 0:
            raise ValidationError("sim.road_length", f"must be > 0, got {self.road_length}")
        if self.trials < 1:
            raise ValidationError("sim.trials", "must be >= 1")
        if self.min_gap < 0:
            raise ValidationError("sim.min_gap", "must be >= 0")
        if self.max_retries < 1:
            raise ValidationError("sim.max_retries", "must be >= 1")
        if self.blocker_footprint not in ("model", "rectangle"):
            raise ValidationError("sim.blocker_footprint", "must be 'model' or 'rectangle'")


PASSENGER = VehicleClass(length=5.0, width=2.0, height=1.6, antenna_height=1.6)
TALL = VehicleClass(length=13.0, width=2.6, height=3.0, antenna_height=3.0)


@dataclass(frozen=True)
class Scenario:
    road: RoadModel = field(default_factory=RoadModel)
    passenger: VehicleClass = PASSENGER
    tall: VehicleClass = TALL
    radio: RadioParams = field(default_factory=RadioParams)
    mac: MacParams = field(default_factory=MacParams)
    antenna: AntennaPattern = field(default_factory=AntennaPattern)
    path_loss: PathLossTable = field(default_factory=PathLossTable)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    sim: SimParams = field(default_factory=SimParams)

    def __post_init__(self):
        if not self.tall.height > self.passenger.antenna_height:
            raise ValidationError(
                "tall.height", "must exceed passenger.antenna_height or no vehicle can block a link"
            )

    @property
    def p_t(self) -> float:
        return self.mac.probabilities()[0]

    @property
    def p_c(self) -> float:
        return self.mac.probabilities()[1]

    def replace(self, **overrides: Any) -> Scenario:
        """Copy with dotted-key overrides, e.g. ``replace(**{"antenna.beamwidth_deg": 60})``."""
        data = scenario_to_dict(self)
        for key, value in overrides.items():
            _set_dotted(data, key, value)
        return scenario_from_dict(data)


_SECTIONS: dict[str, type] = {
    "road": RoadModel,
    "passenger": VehicleClass,
    "tall": VehicleClass,
    "radio": RadioParams,
    "mac": MacParams,
    "antenna": AntennaPattern,
    "path_loss": PathLossTable,
    "analysis": AnalysisParams,
    "sim": SimParams,
}


def _init_fields(cls) -> list[dataclasses.Field]:
    return [f for f in dataclasses.fields(cls) if f.init]


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def scenario_to_dict(scenario: Scenario) -> dict[str, dict[str, Any]]:
    out = {}
    for section in _SECTIONS:
        obj = getattr(scenario, section)
        out[section] = {f.name: _plain(getattr(obj, f.name)) for f in _init_fields(type(obj))}
    return out


def _coerce(cls, name: str, value):
    """Light type coercion so ``--set`` strings and YAML ints both work."""
    default = getattr(cls(), name) if cls is not VehicleClass else 0.0
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        if isinstance(value, bool):
            return value
        raise ValidationError(name, f"expected a boolean, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ValidationError(name, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ValidationError(name, f"expected a list, got {value!r}")
        return tuple(float(v) for v in value)
    if isinstance(default, str):
        return str(value)
    if value is None:
        return None
    if isinstance(value, bool):
        raise ValidationError(name, f"expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ValidationError(name, f"expected a number, got {value!r}") from None


def _build_section(section: str, raw: Mapping[str, Any] | None):
    cls = _SECTIONS[section]
    raw = {} if raw is None else raw
    if not isinstance(raw, Mapping):
        raise ConfigError(f"section '{section}' must be a mapping")
    known = {f.name for f in _init_fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(sorted(map(str, unknown)))}")
    kwargs = {}
    for name, value in raw.items():
        try:
            kwargs[name] = _coerce(cls, name, value)
        except ValidationError as exc:
            raise ValidationError(f"{section}.{name}", str(exc).split(": ", 1)[-1]) from None
    if cls is VehicleClass:
        base = PASSENGER if section == "passenger" else TALL
        kwargs = {**dataclasses.asdict(base), **kwargs}
    try:
        return cls(**kwargs)
    except ValidationError as exc:
        field_name = exc.field if "." in exc.field else f"{section}.{exc.field}"
        raise ValidationError(field_name, str(exc).split(": ", 1)[-1]) from None


def scenario_from_dict(data: Mapping[str, Any] | None) -> Scenario:
    data = {} if data is None else data
    if not isinstance(data, Mapping):
        raise ConfigError("config document must be a mapping of sections")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(map(str, unknown)))}")
    return Scenario(**{s: _build_section(s, data.get(s)) for s in _SECTIONS})


def load_scenario(config_text: str) -> Scenario:
    """Parse a YAML config document; empty text gives the default scenario."""
    try:
        data = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return scenario_from_dict(data)


def load_scenario_file(path: str | os.PathLike) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None)


def default_scenario() -> Scenario:
    return Scenario()


def default_config_text() -> str:
    """Contents of the shipped ``scenario.default`` file."""
    return resources.files("mmv2v").joinpath("data/scenario.default").read_text(encoding="utf-8")


def _set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key must look like section.key, got '{key}'")
    section, name = parts
    if section not in _SECTIONS:
        raise ConfigError(f"unknown section '{section}'")
    data.setdefault(section, {})[name] = value


def parse_override(text: str) -> tuple[str, Any]:
    """Split ``section.key=value``; the value is parsed as a YAML scalar/list."""
    if "=" not in text:
        raise ConfigError(f"override must be key=value, got '{text}'")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad override value '{raw}': {exc}") from None
    return key.strip(), value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    data = {s: dict(v or {}) for s, v in (data or {}).items()}
    for text in overrides:
        key, value = parse_override(text)
        _set_dotted(data, key, value)
    return data
