"""Closed-form SINR and broadcast coverage.

Interference is modelled as a chain of transmitters spaced along the road:
carrier-sensed ("primary") ones at ``r_E + 1/(p_t * sum(lambda))`` apart and
concurrent ("secondary") ones at ``1/(p_c * sum(lambda))``. Each interferer's
power is averaged over the three lane offsets. Coverage inverts the
blockage-weighted received power against the SINR-derived power threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from mmv2v.blockage import blocker_mean, link_probabilities
from mmv2v.channel import LinkGeometry, db_to_linear, dbm_to_mw
from mmv2v.errors import ConvergenceError, NonMonotoneError, ValidationError
from mmv2v.scenario import RadioParams, Scenario

# probability that tx/rx are 0, 1 or 2 lanes apart, both uniform over 3 lanes
LANE_OFFSET_WEIGHTS = {0: 1.0 / 3.0, 1: 4.0 / 9.0, 2: 2.0 / 9.0}
LANE_PAIRS = {
    0: ((1, 1), (2, 2), (3, 3)),
    1: ((1, 2), (2, 3)),
    2: ((1, 3),),
}
LANES = (1, 2, 3)


def noise_power(radio: RadioParams) -> float:
    """Thermal noise plus receiver noise figure, in mW."""
    if not radio.bandwidth > 0:
        raise ValidationError("radio.bandwidth", "must be > 0")
    return float(dbm_to_mw(-174.0 + 10.0 * math.log10(radio.bandwidth) + radio.noise_figure))


def _lane_offset(scenario: Scenario, tx_lane: int, rx_lane: int) -> float:
    return abs(tx_lane - rx_lane) * scenario.road.lane_width


def blended_power(scenario: Scenario, tx_lane: int, rx_lane: int, dy, gain=None):
    """Blockage-weighted received power (mW) at lane separation implied by
    the lanes, vectorised over ``dy``.

    ``gain`` forces G_t*G_r instead of deriving it from lobe membership.
    """
    dy = np.asarray(dy, dtype=float)
    dx = _lane_offset(scenario, tx_lane, rx_lane)
    # blocker windows depend on separation only, not on who is ahead
    mean = blocker_mean(scenario, tx_lane, rx_lane, np.abs(dy))
    p_b0, p_b1 = link_probabilities(scenario.road.tall_fraction, mean)
    d = np.hypot(dx, dy)
    if gain is None:
        gain = scenario.antenna.link_gain(dx, dy)
    pl = scenario.path_loss
    with np.errstate(divide="ignore"):
        lin0 = db_to_linear(-pl.loss_db(0, d))
        lin1 = db_to_linear(-pl.loss_db(1, d))
    return dbm_to_mw(scenario.radio.tx_power) * gain * (p_b0 * lin0 + p_b1 * lin1)


def mean_received_power(scenario: Scenario, tx_lane: int, rx_lane: int, geom: LinkGeometry) -> float:
    expected = _lane_offset(scenario, tx_lane, rx_lane)
    if not math.isclose(geom.dx, expected, abs_tol=1e-9):
        raise ValidationError("dx", f"lanes {tx_lane}->{rx_lane} imply dx={expected}, got {geom.dx}")
    return float(blended_power(scenario, tx_lane, rx_lane, geom.dy))


def _interferer_power(scenario: Scenario, distance) -> np.ndarray:
    """Lane-averaged interferer power at Euclidean ``distance`` (vectorised).

    For each offset the lane pair giving the strongest interferer is used.
    Offsets that cannot fit (distance < offset) contribute nothing.
    """
    distance = np.atleast_1d(np.asarray(distance, dtype=float))
    w = scenario.road.lane_width
    total = np.zeros_like(distance)
    for m, weight in LANE_OFFSET_WEIGHTS.items():
        arg = distance**2 - (m * w) ** 2
        ok = arg >= 0 if m else distance > 0
        if not ok.any():
            continue
        dy = np.sqrt(np.where(ok, arg, 0.0))
        best = np.zeros_like(distance)
        for tx, rx in LANE_PAIRS[m]:
            best = np.maximum(best, blended_power(scenario, tx, rx, dy))
        total += weight * np.where(ok, best, 0.0)
    return total


def lane_averaged_interferer_power(scenario: Scenario, distance: float) -> float:
    if not distance > 0:
        raise ValidationError("distance", f"must be > 0, got {distance}")
    return float(_interferer_power(scenario, distance)[0])


class SeriesSum(NamedTuple):
    total: float
    terms: int


def _tail_bound(scenario: Scenario, next_distance: np.ndarray, spacing: float) -> np.ndarray:
    """Upper bound on sum of all terms from ``next_distance`` onward.

    Every term is at most P_t * G1^2 / min_k PL_k(l), which shrinks by at
    least the atmospheric factor per spacing step.
    """
    pl = scenario.path_loss
    g = max(scenario.antenna.main_gain, scenario.antenna.side_gain) ** 2
    min_loss = np.minimum(pl.loss_db(0, next_distance), pl.loss_db(1, next_distance))
    first = dbm_to_mw(scenario.radio.tx_power) * g * db_to_linear(-min_loss)
    q = 10.0 ** (-pl.atmospheric_db_per_km * spacing / 10_000.0)
    if q < 1.0:
        return first / (1.0 - q)
    # no atmospheric term: power ~ l^-a, bound the tail by its integral
    a = min(pl.alpha[0], pl.alpha[1])
    if a <= 1.0:
        return np.full_like(first, np.inf)
    return first * (1.0 + next_distance / ((a - 1.0) * spacing))


def interference_series(scenario: Scenario, first: float, spacing: float) -> SeriesSum:
    """Sum lane-averaged interferer power at ``first + j*spacing``, j >= 0.

    Stops at the first term that is below ``rtol`` of the running sum *and*
    whose certified tail bound is below ``rtol/10`` of it.
    """
    if not (math.isfinite(first) and math.isfinite(spacing)):
        return SeriesSum(0.0, 0)
    if spacing <= 0:
        raise ValidationError("spacing", f"must be > 0, got {spacing}")
    cfg = scenario.analysis
    rtol, k_max = cfg.series_rtol, cfg.series_max_terms
    total = 0.0
    start = 0
    block = 64
    while start < k_max:
        n = min(block, k_max - start)
        idx = np.arange(start, start + n, dtype=float)
        dist = first + idx * spacing
        terms = _interferer_power(scenario, dist)
        running = total + np.cumsum(terms)
        tail = _tail_bound(scenario, dist + spacing, spacing)
        done = (terms <= rtol * running) & (tail <= 0.1 * rtol * running)
        done |= (running == 0.0) & (tail == 0.0)
        hit = np.flatnonzero(done)
        if hit.size:
            j = hit[0]
            return SeriesSum(float(running[j]), int(start + j + 1))
        total = float(running[-1])
        start += n
        block *= 2
    raise ConvergenceError(
        f"interference series did not reach relative tolerance {rtol:g} within {k_max} terms"
    )


def primary_spacing(scenario: Scenario) -> float:
    """Mean along-road gap between carrier-sensed transmitters (inf if none)."""
    rate = scenario.p_t * scenario.road.total_density
    return scenario.radio.carrier_sense_range + (1.0 / rate if rate > 0 else math.inf)


def transmitter_density(scenario: Scenario) -> float:
    """Carrier-sensed transmitters per metre of road implied by the spacing."""
    return 1.0 / primary_spacing(scenario)


def primary_interference_series(scenario: Scenario, link_distance: float) -> SeriesSum:
    if link_distance < 0:
        raise ValidationError("link_distance", f"must be >= 0, got {link_distance}")
    s = primary_spacing(scenario)
    return interference_series(scenario, link_distance + s, s)


def primary_interference(scenario: Scenario, link_distance: float) -> float:
    return primary_interference_series(scenario, link_distance).total


def secondary_interference_series(scenario: Scenario) -> SeriesSum:
    rate = scenario.p_c * scenario.road.total_density
    if rate <= 0:
        return SeriesSum(0.0, 0)
    s = 1.0 / rate
    return interference_series(scenario, s, s)


def secondary_interference(scenario: Scenario) -> float:
    return secondary_interference_series(scenario).total


@dataclass(frozen=True)
class InterferenceBudget:
    noise: float
    primary_interference: float
    secondary_interference: float
    threshold_power: float
    primary_terms: int = 0
    secondary_terms: int = 0

    @property
    def terms_used(self) -> int:
        return max(self.primary_terms, self.secondary_terms)

    @property
    def denominator(self) -> float:
        return self.noise + self.primary_interference + self.secondary_interference


def threshold_power(scenario: Scenario, link_distance: float = 0.0) -> InterferenceBudget:
    """Minimum received power for SINR >= threshold, with its components."""
    noise = noise_power(scenario.radio)
    io = primary_interference_series(scenario, link_distance)
    ic = secondary_interference_series(scenario)
    gamma = float(db_to_linear(scenario.radio.sinr_threshold))
    return InterferenceBudget(
        noise=noise,
        primary_interference=io.total,
        secondary_interference=ic.total,
        threshold_power=(noise + io.total + ic.total) * gamma,
        primary_terms=io.terms,
        secondary_terms=ic.terms,
    )


def _segments(scenario: Scenario, dx: float):
    """Split [min_distance, max_distance] where the lobe (and so the gain)
    is constant. Yields (lo, hi, gain)."""
    cfg, ant = scenario.analysis, scenario.antenna
    lo, hi = cfg.min_distance, cfg.max_distance
    g_main, g_side = ant.main_gain**2, ant.side_gain**2
    b = ant.lobe_boundary_dy(dx)
    if b <= lo:
        return [(lo, hi, g_main)]
    if b >= hi:
        return [(lo, hi, g_side)]
    return [(lo, b, g_side), (b, hi, g_main)]


def qualifying_intervals(scenario: Scenario, threshold: float, tx_lane: int, rx_lane: int) -> list[tuple[float, float]]:
    """Along-road stretches ahead of the transmitter where the blended power
    meets ``threshold``.

    Within each constant-lobe segment the power is strictly decreasing, so the
    qualifying part is a prefix of the segment found by bisection. The first
    segment's prefix is taken from dy = 0.
    """
    if not threshold > 0:
        raise ValidationError("threshold", f"must be > 0, got {threshold}")
    dx = _lane_offset(scenario, tx_lane, rx_lane)
    tol = scenario.analysis.reach_tolerance
    log_th = math.log(threshold)
    out = []
    for i, (lo, hi, gain) in enumerate(_segments(scenario, dx)):
        grid = np.linspace(lo, hi, 65)
        p = blended_power(scenario, tx_lane, rx_lane, grid, gain=gain)
        if np.any(np.diff(p) > 1e-12 * p[:-1]):
            raise NonMonotoneError(f"received power rises with distance on [{lo:g}, {hi:g}] m")
        if p[0] < threshold:
            continue
        start = 0.0 if i == 0 else lo
        if p[-1] >= threshold:
            out.append((start, hi))
            continue
        # bracket tightly using the grid, then refine
        j = int(np.flatnonzero(p >= threshold)[-1])
        a, b = grid[j], grid[j + 1]

        def f(y):
            return math.log(float(blended_power(scenario, tx_lane, rx_lane, y, gain=gain))) - log_th

        root = brentq(f, a, b, xtol=tol / 100.0)
        out.append((start, root))
    return out


def coverage_reach(scenario: Scenario, threshold: float, lane_offset: float, tx_lane: int, rx_lane: int) -> float:
    """Farthest dy ahead of the transmitter whose received power meets ``threshold``."""
    expected = _lane_offset(scenario, tx_lane, rx_lane)
    if not math.isclose(lane_offset, expected, abs_tol=1e-9):
        raise ValidationError("lane_offset", f"lanes {tx_lane}->{rx_lane} imply {expected}, got {lane_offset}")
    iv = qualifying_intervals(scenario, threshold, tx_lane, rx_lane)
    return iv[-1][1] if iv else 0.0


def coverage_extent(scenario: Scenario, threshold: float, tx_lane: int, rx_lane: int) -> float:
    """Total along-road length ahead of the transmitter whose received power
    meets ``threshold``. Differs from the reach when close cross-lane
    receivers sit outside a narrow main lobe."""
    return sum(b - a for a, b in qualifying_intervals(scenario, threshold, tx_lane, rx_lane))


@dataclass(frozen=True)
class CoverageResult:
    reach: dict[float, float]
    expected_receivers: float
    budget: InterferenceBudget
    pair_extent: dict[tuple[int, int], float] = field(default_factory=dict)
    pair_reach: dict[tuple[int, int], float] = field(default_factory=dict)


def expected_coverage(scenario: Scenario) -> CoverageResult:
    """Expected number of receivers ahead of a broadcaster meeting the SINR
    threshold, the broadcaster's lane uniform over the three lanes.

    The threshold is evaluated with interferers at their closest (zero
    transmitter-receiver distance) so it does not depend on the receiver.
    """
    budget = threshold_power(scenario, link_distance=0.0)
    th = budget.threshold_power
    road = scenario.road
    extent, reach = {}, {}
    for tx in LANES:
        for rx in LANES:
            if (rx, tx) in extent:
                extent[tx, rx], reach[tx, rx] = extent[rx, tx], reach[rx, tx]
                continue
            iv = qualifying_intervals(scenario, th, tx, rx)
            extent[tx, rx] = sum(b - a for a, b in iv)
            reach[tx, rx] = iv[-1][1] if iv else 0.0
    if scenario.analysis.coverage_weighting == "transmitter":
        en = sum(road.density(tx) * extent[tx, rx] for tx in LANES for rx in LANES) / 3.0
    else:
        en = sum(road.density(rx) * extent[tx, rx] for tx in LANES for rx in LANES) / 3.0
    per_offset = {}
    for m, pairs in LANE_PAIRS.items():
        per_offset[m * road.lane_width] = float(np.mean([extent[p] for p in pairs]))
    return CoverageResult(
        reach=per_offset,
        expected_receivers=float(en),
        budget=budget,
        pair_extent=extent,
        pair_reach=reach,
    )


def sinr_at(scenario: Scenario, geom: LinkGeometry, tx_lane: int, rx_lane: int) -> float:
    """Mean-power SINR in dB, primary interferers spaced beyond the link."""
    p = mean_received_power(scenario, tx_lane, rx_lane, geom)
    budget = threshold_power(scenario, link_distance=geom.distance)
    return float(10.0 * math.log10(p / budget.denominator))
