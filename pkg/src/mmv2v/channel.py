"""Deterministic link primitives: log-distance path loss with blocker count,
cone-plus-sphere antenna gains, lobe membership and per-blocker received power.

Power arithmetic is linear milliwatts internally; dB/dBm only at the edges.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from mmv2v.errors import ValidationError

if TYPE_CHECKING:
    from mmv2v.scenario import Scenario


def db_to_linear(db):
    return np.power(10.0, np.divide(db, 10.0))


def linear_to_db(lin):
    return 10.0 * np.log10(lin)


def dbm_to_mw(dbm):
    return db_to_linear(dbm)


def mw_to_dbm(mw):
    return linear_to_db(mw)


@dataclass(frozen=True)
class PathLossTable:
    """Per-blocker-count log-distance parameters.

    ``alpha[k]`` is the path loss exponent and ``beta[k]`` the loss in dB at
    1 m for a link crossing ``k`` blockers, k = 0, 1, 2.
    """

    alpha: tuple[float, float, float] = (1.77, 1.71, 0.635)
    beta: tuple[float, float, float] = (70.0, 78.6, 115.0)
    atmospheric_db_per_km: float = 15.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if len(self.alpha) != 3:
            raise ValidationError("path_loss.alpha", "need exactly 3 rows (k = 0, 1, 2)")
        if len(self.beta) != 3:
            raise ValidationError("path_loss.beta", "need exactly 3 rows (k = 0, 1, 2)")
        if any(a <= 0 for a in self.alpha):
            raise ValidationError("path_loss.alpha", "exponents must be > 0")
        if not (self.beta[0] < self.beta[1] < self.beta[2]):
            raise ValidationError("path_loss.beta", "must be strictly increasing in k")
        if self.atmospheric_db_per_km < 0:
            raise ValidationError("path_loss.atmospheric_db_per_km", "must be >= 0")

    def loss_db(self, k, distance):
        """Vectorised path loss; ``k`` and ``distance`` broadcast together."""
        k = np.asarray(k)
        d = np.asarray(distance, dtype=float)
        a = np.asarray(self.alpha)[k]
        b = np.asarray(self.beta)[k]
        return 10.0 * a * np.log10(d) + b + self.atmospheric_db_per_km * d / 1000.0


def antenna_gains(beamwidth_deg: float, side_main_ratio: float) -> tuple[float, float]:
    """Main- and side-lobe linear gains of the cone-plus-sphere pattern.

    The main gain is normalised so the pattern radiates the same total power
    for every beamwidth.
    """
    if not (0.0 < beamwidth_deg <= 360.0):
        raise ValidationError("antenna.beamwidth_deg", f"must be in (0, 360], got {beamwidth_deg}")
    if not (0.0 < side_main_ratio <= 1.0):
        raise ValidationError("antenna.side_main_ratio", f"must be in (0, 1], got {side_main_ratio}")
    c = math.cos(math.radians(beamwidth_deg) / 2.0)
    g1 = 2.0 / (1.0 - c + side_main_ratio * (1.0 + c))
    return g1, side_main_ratio * g1


@dataclass(frozen=True)
class AntennaPattern:
    beamwidth_deg: float = 30.0
    side_main_ratio: float = 0.1
    main_gain: float = field(init=False, repr=False, compare=False)
    side_gain: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g1, g2 = antenna_gains(self.beamwidth_deg, self.side_main_ratio)
        object.__setattr__(self, "main_gain", g1)
        object.__setattr__(self, "side_gain", g2)

    @property
    def half_angle_rad(self) -> float:
        return math.radians(self.beamwidth_deg) / 2.0

    def in_main_lobe(self, dx, dy):
        """Vectorised cone test for the transmitter-to-receiver vector.

        The transmitter's front boresight is +y; the receiver's rear boresight
        is -y, so both ends see the same off-boresight angle.
        """
        theta = np.arctan2(np.abs(dx), dy)
        # closed cone; tiny slack absorbs atan2 rounding at the boundary
        return theta <= self.half_angle_rad * (1.0 + 1e-12)

    def link_gain(self, dx, dy):
        """Product G_t * G_r (both ends share the lobe)."""
        main = self.in_main_lobe(dx, dy)
        return np.where(main, self.main_gain**2, self.side_gain**2)

    def lobe_boundary_dy(self, dx: float) -> float:
        """Smallest dy > 0 at which lateral offset ``dx`` enters the main lobe.

        Returns 0 when every dy > 0 is already inside the cone.
        """
        if dx == 0 or self.beamwidth_deg >= 180.0:
            return 0.0
        return dx / math.tan(self.half_angle_rad)


@dataclass(frozen=True)
class LinkGeometry:
    """Displacement from transmitter to receiver centre.

    ``dx`` is across the road (>= 0), ``dy`` along it (positive when the
    receiver is ahead of the transmitter).
    """

    dx: float
    dy: float

    def __post_init__(self):
        if self.dx < 0:
            raise ValidationError("dx", f"must be >= 0, got {self.dx}")
        if self.dx == 0 and self.dy == 0:
            raise ValidationError("dy", "transmitter and receiver coincide")

    @property
    def distance(self) -> float:
        return math.hypot(self.dx, self.dy)


class Lobe(enum.Enum):
    MAIN = "main"
    SIDE = "side"


class AntennaRole(enum.Enum):
    TRANSMITTER_FRONT = "transmitter-front"
    RECEIVER_REAR = "receiver-rear"


def _check_k(k) -> int:
    if k not in (0, 1, 2):
        raise ValidationError("k", f"blocker count must be 0, 1 or 2, got {k!r}")
    return int(k)


def path_loss_db(table: PathLossTable, k: int, geom: LinkGeometry) -> float:
    k = _check_k(k)
    d = geom.distance
    if d <= 0:
        raise ValidationError("distance", "must be > 0")
    return float(table.loss_db(k, d))


def lobe_membership(pattern: AntennaPattern, geom: LinkGeometry, role=AntennaRole.TRANSMITTER_FRONT) -> Lobe:
    """Which lobe of the given end carries the link.

    The rear antenna of the receiver looks back along -y, so for a transmitter
    behind it the off-boresight angle equals the transmitter's; both roles
    therefore reduce to the same planar cone test.
    """
    AntennaRole(role)  # rejects unknown roles
    return Lobe.MAIN if bool(pattern.in_main_lobe(geom.dx, geom.dy)) else Lobe.SIDE


def received_power_k(scenario: Scenario, k: int, geom: LinkGeometry) -> float:
    """Received power in mW over a link crossing ``k`` blockers."""
    pl = path_loss_db(scenario.path_loss, k, geom)
    gain = float(scenario.antenna.link_gain(geom.dx, geom.dy))
    return dbm_to_mw(scenario.radio.tx_power) * gain * db_to_linear(-pl)
