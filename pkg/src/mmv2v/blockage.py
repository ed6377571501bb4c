"""Closed-form tall-vehicle blockage on a link.

Trucks/buses on each lane form a thinned Poisson process of density
``tall_fraction * lambda_i``. A link is blocked by those whose body falls in a
window along the road; the window length depends on which lane the blocker is
on relative to the two endpoints. Counts on independent windows add up, so the
total blocker count is Poisson with the summed mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mmv2v.channel import LinkGeometry
from mmv2v.errors import ValidationError
from mmv2v.scenario import Scenario, VehicleClass


@dataclass(frozen=True)
class BlockerDistribution:
    mean: float
    p0: float
    p1: float
    p_b0: float
    p_b1: float

    def pmf(self, k: int) -> float:
        """P(k tall vehicles in the blocking windows)."""
        if k < 0:
            return 0.0
        return math.exp(-self.mean + k * math.log(self.mean) - math.lgamma(k + 1)) if self.mean > 0 else float(k == 0)


def _check_window_geom(geom: LinkGeometry) -> None:
    if geom.dx <= 0:
        raise ValidationError("dx", "cross-lane window needs dx > 0; same-lane links use the same-lane branch")
    if geom.dy <= 0:
        raise ValidationError("dy", f"must be > 0, got {geom.dy}")


def blocker_window_same_side(geom: LinkGeometry, tall: VehicleClass) -> float:
    """Window on the transmitter's or receiver's own lane: the link spends
    half a truck width of lateral travel there."""
    _check_window_geom(geom)
    return tall.width / 2.0 * geom.dy / geom.dx


def blocker_window_between(geom: LinkGeometry, tall: VehicleClass) -> float:
    """Window on a lane strictly between the endpoints: a full truck width of
    lateral travel, widened by the truck length."""
    _check_window_geom(geom)
    return tall.width * geom.dy / geom.dx + tall.length


def lanes_between(tx_lane: int, rx_lane: int) -> range:
    lo, hi = sorted((tx_lane, rx_lane))
    return range(lo + 1, hi)


def _check_lane(lane) -> int:
    if lane not in (1, 2, 3):
        raise ValidationError("lane", f"lane index must be 1, 2 or 3, got {lane!r}")
    return int(lane)


def blocker_mean(scenario: Scenario, tx_lane: int, rx_lane: int, dy):
    """Poisson mean of the tall-blocker count; vectorised over ``dy``."""
    tx_lane, rx_lane = _check_lane(tx_lane), _check_lane(rx_lane)
    road, tall = scenario.road, scenario.tall
    r = road.tall_fraction
    dy = np.asarray(dy, dtype=float)
    if tx_lane == rx_lane:
        return r * np.maximum(dy - tall.length, 0.0) * road.density(tx_lane)
    dx = abs(tx_lane - rx_lane) * road.lane_width
    same_side = tall.width / 2.0 * dy / dx
    between = tall.width * dy / dx + tall.length
    lam_ends = road.density(tx_lane) + road.density(rx_lane)
    lam_mid = sum(road.density(i) for i in lanes_between(tx_lane, rx_lane))
    return r * same_side * lam_ends + r * between * lam_mid


def link_probabilities(tall_fraction: float, mean):
    """(P_b0, P_b1) from the blocker-count mean. A link with both endpoints
    tall clears any blocker; otherwise one truck costs one blocker row."""
    mean = np.asarray(mean, dtype=float)
    p0 = np.exp(-mean)
    p1 = mean * p0
    r2 = tall_fraction**2
    return p0 + (1.0 - p0) * r2, p1 * (1.0 - r2)


def blocker_count_distribution(scenario: Scenario, tx_lane: int, rx_lane: int, dy: float) -> BlockerDistribution:
    if not dy > 0:
        raise ValidationError("dy", f"must be > 0, got {dy}")
    mean = float(blocker_mean(scenario, tx_lane, rx_lane, dy))
    p0 = math.exp(-mean)
    p_b0, p_b1 = link_probabilities(scenario.road.tall_fraction, mean)
    return BlockerDistribution(mean=mean, p0=p0, p1=mean * p0, p_b0=float(p_b0), p_b1=float(p_b1))
