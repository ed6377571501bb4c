"""Analytical and Monte-Carlo model of 60 GHz V2V broadcast coverage on a
three-lane highway with cone-plus-sphere directional antennas."""

from mmv2v.errors import (
    ConfigError,
    ConvergenceError,
    MmV2VError,
    NoTransmitterError,
    NonMonotoneError,
    SchemaError,
    ValidationError,
)
from mmv2v.channel import (
    AntennaPattern,
    LinkGeometry,
    Lobe,
    PathLossTable,
    antenna_gains,
    lobe_membership,
    path_loss_db,
    received_power_k,
)
from mmv2v.scenario import (
    DENSITY_ROWS,
    MacParams,
    RadioParams,
    RoadModel,
    Scenario,
    VehicleClass,
    default_mac_probabilities,
    default_scenario,
    dump_scenario,
    load_scenario,
    load_scenario_file,
)

__version__ = "0.1.0"

__all__ = [
    "AntennaPattern",
    "ConfigError",
    "ConvergenceError",
    "DENSITY_ROWS",
    "LinkGeometry",
    "Lobe",
    "MacParams",
    "MmV2VError",
    "NoTransmitterError",
    "NonMonotoneError",
    "PathLossTable",
    "RadioParams",
    "RoadModel",
    "Scenario",
    "SchemaError",
    "ValidationError",
    "VehicleClass",
    "antenna_gains",
    "default_mac_probabilities",
    "default_scenario",
    "dump_scenario",
    "load_scenario",
    "load_scenario_file",
    "lobe_membership",
    "path_loss_db",
    "received_power_k",
]
