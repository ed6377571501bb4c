"""Monte-Carlo road simulator used as an independent check of the closed forms.

One trial drops Poisson traffic on a ring road, picks carrier-sensed
transmitters by Matérn type-II thinning plus independent concurrent ones,
tags the carrier-sensed transmitter nearest the middle of the road and
computes every other vehicle's SINR with per-link geometric blockage.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from mmv2v.analysis import noise_power
from mmv2v.channel import AntennaPattern, db_to_linear, dbm_to_mw
from mmv2v.errors import NoTransmitterError, ValidationError
from mmv2v.scenario import Scenario

TOP_N = 100


@dataclass(frozen=True, eq=False)
class VehicleDrop:
    """One static road realisation. Arrays are indexed by vehicle."""

    lane: np.ndarray  # 1-based lane index
    y: np.ndarray  # position along the road, [0, road_length)
    tall: np.ndarray  # bool, truck/bus
    road_length: float
    rng_seed: int
    wants_tx: np.ndarray = None
    is_primary_tx: np.ndarray = None
    is_concurrent_tx: np.ndarray = None

    def __post_init__(self):
        n = len(self.y)
        for name in ("wants_tx", "is_primary_tx", "is_concurrent_tx"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros(n, dtype=bool))

    def __len__(self):
        return len(self.y)

    def equals(self, other: VehicleDrop) -> bool:
        return (
            self.road_length == other.road_length
            and self.rng_seed == other.rng_seed
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("lane", "y", "tall", "wants_tx", "is_primary_tx", "is_concurrent_tx")
            )
        )

    @property
    def active_tx(self) -> np.ndarray:
        return self.is_primary_tx | self.is_concurrent_tx


def _wrap(delta, road_length: float, wrap: bool):
    if not wrap:
        return delta
    return (delta + road_length / 2.0) % road_length - road_length / 2.0


def _min_gap_thin(y: np.ndarray, gap: float) -> np.ndarray:
    keep = np.zeros(len(y), dtype=bool)
    last = -np.inf
    for i in np.argsort(y, kind="stable"):
        if y[i] - last >= gap:
            keep[i] = True
            last = y[i]
    return keep


def drop_vehicles(scenario: Scenario, road_length: float | None = None, seed: int = 0) -> VehicleDrop:
    """Independent Poisson traffic per lane with uniform positions and
    independent tall marks. Overlapping vehicles are allowed unless
    ``sim.min_gap`` is set."""
    L = scenario.sim.road_length if road_length is None else float(road_length)
    if not L > 0:
        raise ValidationError("road_length", f"must be > 0, got {L}")
    rng = np.random.default_rng(seed)
    lanes, ys, talls = [], [], []
    for lane, lam in enumerate(scenario.road.lane_densities, start=1):
        n = rng.poisson(lam * L)
        y = np.sort(rng.uniform(0.0, L, n))
        tall = rng.random(n) < scenario.road.tall_fraction
        if scenario.sim.min_gap > 0:
            keep = _min_gap_thin(y, scenario.sim.min_gap)
            y, tall = y[keep], tall[keep]
        lanes.append(np.full(len(y), lane, dtype=np.int64))
        ys.append(y)
        talls.append(tall)
    return VehicleDrop(
        lane=np.concatenate(lanes),
        y=np.concatenate(ys),
        tall=np.concatenate(talls),
        road_length=L,
        rng_seed=int(seed),
    )


def _pair_distance(drop: VehicleDrop, scenario: Scenario, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    dy = _wrap(drop.y[j] - drop.y[i], drop.road_length, scenario.sim.wrap)
    dx = (drop.lane[j] - drop.lane[i]) * scenario.road.lane_width
    return np.hypot(dx, dy)


def select_transmitters(drop: VehicleDrop, scenario: Scenario, seed: int = 0) -> VehicleDrop:
    """Mark carrier-sensed and concurrent transmitters.

    A vehicle wanting to transmit keeps the channel unless another wanting
    vehicle with a smaller random mark lies within the carrier-sense range
    (Matérn type-II). Concurrent transmitters ignore carrier sensing.
    """
    rng = np.random.default_rng(seed)
    n = len(drop)
    wants = rng.random(n) < scenario.p_t
    marks = rng.random(n)
    concurrent = rng.random(n) < scenario.p_c
    primary = wants.copy()
    r_e = scenario.radio.carrier_sense_range
    cand = np.flatnonzero(wants)
    if r_e > 0 and cand.size > 1:
        ii, jj = np.meshgrid(cand, cand, indexing="ij")
        close = _pair_distance(drop, scenario, ii, jj) <= r_e
        np.fill_diagonal(close, False)
        beaten = close & (marks[cand][None, :] < marks[cand][:, None])
        primary[cand[beaten.any(axis=1)]] = False
    return replace(drop, wants_tx=wants, is_primary_tx=primary, is_concurrent_tx=concurrent)


def _blocker_hits(scenario: Scenario, tx_lane, rx_lane, dy, blk_lane, blk_y, footprint: str):
    """Boolean blocker/link incidence, broadcasting link arrays against
    blocker arrays.

    Coordinates are relative to the transmitter and oriented so the receiver
    sits at ``dy >= 0``; ``blk_y`` must be in the same frame.
    """
    tx_lane, rx_lane, blk_lane = np.asarray(tx_lane), np.asarray(rx_lane), np.asarray(blk_lane)
    w = scenario.road.lane_width
    half_w = scenario.tall.width / 2.0
    l2 = scenario.tall.length
    x_t = (tx_lane - 1) * w
    x_r = (rx_lane - 1) * w
    x_b = (blk_lane - 1) * w
    if footprint == "rectangle":
        return _segment_hits_rectangle(x_t, x_r, dy, x_b, blk_y, half_w, l2 / 2.0)
    same = tx_lane == rx_lane
    dx = np.abs(x_r - x_t)
    slope = np.divide(dy, dx, out=np.zeros(np.broadcast(dy, dx).shape), where=dx > 0)
    # same lane: whole body strictly between the two antennas
    hit_same = same & (blk_lane == tx_lane) & (blk_y - l2 / 2.0 >= 0) & (blk_y + l2 / 2.0 <= dy)
    # endpoint lanes: half-width lateral pass, centre of the blocker in it
    edge = half_w * slope
    hit_tx_lane = ~same & (blk_lane == tx_lane) & (blk_y >= 0) & (blk_y <= edge)
    hit_rx_lane = ~same & (blk_lane == rx_lane) & (blk_y >= dy - edge) & (blk_y <= dy)
    # intermediate lanes: full-width lateral pass, any part of the body in it
    lo_lane = np.minimum(tx_lane, rx_lane)
    hi_lane = np.maximum(tx_lane, rx_lane)
    between = ~same & (blk_lane > lo_lane) & (blk_lane < hi_lane)
    off = np.abs(x_b - x_t)
    y_in = (off - half_w) * slope - l2 / 2.0
    y_out = (off + half_w) * slope + l2 / 2.0
    hit_mid = between & (blk_y >= y_in) & (blk_y <= y_out)
    return hit_same | hit_tx_lane | hit_rx_lane | hit_mid


def _segment_hits_rectangle(x0, x1, dy, xc, yc, half_w, half_l):
    """Slab test: segment (x0, 0)->(x1, dy) against axis-aligned boxes
    centred at (xc, yc)."""
    x0, x1, dy, xc, yc = np.broadcast_arrays(
        np.asarray(x0, float), np.asarray(x1, float), np.asarray(dy, float),
        np.asarray(xc, float), np.asarray(yc, float),
    )
    t_lo = np.zeros(x0.shape)
    t_hi = np.ones(x0.shape)
    for p0, d, lo, hi in ((x0, x1 - x0, xc - half_w, xc + half_w), (np.zeros_like(dy), dy, yc - half_l, yc + half_l)):
        par = d == 0
        inside = (p0 >= lo) & (p0 <= hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = (lo - p0) / d
            b = (hi - p0) / d
        t1 = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(a, b))
        t2 = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(a, b))
        t_lo = np.maximum(t_lo, t1)
        t_hi = np.minimum(t_hi, t2)
    return t_lo <= t_hi


def _relative_frame(drop: VehicleDrop, scenario: Scenario, tx: int, rx):
    """Signed along-road offsets of ``rx`` and of every vehicle from ``tx``."""
    rel = _wrap(drop.y - drop.y[tx], drop.road_length, scenario.sim.wrap)
    return rel[rx], rel


def link_blocker_counts(drop: VehicleDrop, scenario: Scenario, tx: int, receivers: np.ndarray) -> np.ndarray:
    """Tall-blocker count on the link from ``tx`` to each of ``receivers``."""
    receivers = np.asarray(receivers, dtype=np.int64)
    blockers = np.flatnonzero(drop.tall)
    if receivers.size == 0:
        return np.zeros(0, dtype=np.int64)
    if blockers.size == 0:
        return np.zeros(receivers.size, dtype=np.int64)
    dy, rel = _relative_frame(drop, scenario, tx, receivers)
    sign = np.where(dy < 0, -1.0, 1.0)
    dyn = np.abs(dy)[:, None]
    blk_y = sign[:, None] * rel[blockers][None, :]
    hits = _blocker_hits(
        scenario,
        drop.lane[tx],
        drop.lane[receivers][:, None],
        dyn,
        drop.lane[blockers][None, :],
        blk_y,
        scenario.sim.blocker_footprint,
    )
    hits &= blockers[None, :] != tx
    hits &= blockers[None, :] != receivers[:, None]
    counts = hits.sum(axis=1)
    both_tall = drop.tall[tx] & drop.tall[receivers]
    return np.where(both_tall, 0, counts)


def count_los_blockers(drop: VehicleDrop, tx: int, rx: int, scenario: Scenario) -> int:
    if tx == rx:
        raise ValidationError("rx", "transmitter and receiver must differ")
    return int(link_blocker_counts(drop, scenario, tx, np.array([rx]))[0])


def sample_link_blocker_counts(
    scenario: Scenario, tx_lane: int, rx_lane: int, dy: float, samples: int, seed: int = 0
) -> np.ndarray:
    """Blocker counts on a fixed passenger-to-passenger link over many
    independent Poisson drops of the road section around it.

    Only trucks within one truck length of the link can block it, so each
    sample draws tall vehicles on ``[-l2, dy + l2]`` of every lane.
    """
    if not dy > 0:
        raise ValidationError("dy", f"must be > 0, got {dy}")
    rng = np.random.default_rng(seed)
    margin = scenario.tall.length
    span = dy + 2.0 * margin
    r = scenario.road.tall_fraction
    lanes, ys, owner = [], [], []
    for lane, lam in enumerate(scenario.road.lane_densities, start=1):
        n = rng.poisson(r * lam * span, size=samples)
        total = int(n.sum())
        lanes.append(np.full(total, lane, dtype=np.int64))
        ys.append(rng.uniform(-margin, dy + margin, total))
        owner.append(np.repeat(np.arange(samples), n))
    lane_b = np.concatenate(lanes)
    y_b = np.concatenate(ys)
    owner = np.concatenate(owner)
    hits = _blocker_hits(scenario, tx_lane, rx_lane, dy, lane_b, y_b, scenario.sim.blocker_footprint)
    return np.bincount(owner[hits], minlength=samples)


@dataclass(frozen=True, eq=False)
class TrialStats:
    covered_count: int
    sinr_samples: np.ndarray  # dB, one per receiver
    transmitter_density: float  # carrier-sensed transmitters per metre of surveyed road
    n_vehicles: int = 0
    seed: int = 0
    primary_count: int = 0
    surveyed_length: float = 0.0  # road length times drops drawn, discarded ones included

    def top_sinr(self, n: int = TOP_N) -> np.ndarray:
        return np.sort(self.sinr_samples)[::-1][:n]


@dataclass(frozen=True, eq=False)
class TrialGeometry:
    """Beam-independent part of a trial: link geometry and path loss of the
    tagged link and of every interferer, for every receiver."""

    drop: VehicleDrop
    tagged: int
    receivers: np.ndarray
    dx: np.ndarray  # (T, R), row 0 is the tagged transmitter
    dy: np.ndarray  # (T, R), signed, receiver ahead > 0
    inv_loss: np.ndarray  # (T, R), 1 / PL linear
    blockers: np.ndarray  # (T, R)
    drops_drawn: int = 1

    @classmethod
    def from_drop(
        cls, drop: VehicleDrop, scenario: Scenario, tagged: int | None = None, drops_drawn: int = 1
    ) -> TrialGeometry:
        if tagged is None:
            tagged = tagged_transmitter(drop)
        active = drop.active_tx.copy()
        active[tagged] = False
        sources = np.concatenate(([tagged], np.flatnonzero(active))).astype(np.int64)
        excluded = drop.active_tx if scenario.sim.half_duplex else np.zeros(len(drop), dtype=bool)
        excluded = excluded.copy()
        excluded[tagged] = True
        receivers = np.flatnonzero(~excluded)
        w = scenario.road.lane_width
        T, R = sources.size, receivers.size
        dx = np.empty((T, R))
        dy = np.empty((T, R))
        k = np.empty((T, R), dtype=np.int64)
        for row, src in enumerate(sources):
            dy[row] = _wrap(drop.y[receivers] - drop.y[src], drop.road_length, scenario.sim.wrap)
            dx[row] = np.abs(drop.lane[receivers] - drop.lane[src]) * w
            k[row] = link_blocker_counts(drop, scenario, src, receivers)
        d = np.hypot(dx, dy)
        # coincident vehicles (possible in a Poisson drop) get a millimetre floor
        d = np.maximum(d, 1e-3)
        pl = scenario.path_loss.loss_db(np.minimum(k, 2), d)
        return cls(drop, int(tagged), receivers, dx, dy, db_to_linear(-pl), k, drops_drawn)

    def evaluate(self, scenario: Scenario, pattern: AntennaPattern | None = None) -> TrialStats:
        pattern = scenario.antenna if pattern is None else pattern
        power = dbm_to_mw(scenario.radio.tx_power) * pattern.link_gain(self.dx, self.dy) * self.inv_loss
        signal = power[0]
        interference = power[1:].sum(axis=0)
        sinr = signal / (noise_power(scenario.radio) + interference)
        sinr_db = 10.0 * np.log10(sinr)
        covered = int(np.count_nonzero(sinr_db >= scenario.radio.sinr_threshold))
        n_primary = int(np.count_nonzero(self.drop.is_primary_tx))
        surveyed = self.drop.road_length * self.drops_drawn
        return TrialStats(
            covered_count=covered,
            sinr_samples=sinr_db,
            transmitter_density=n_primary / surveyed,
            n_vehicles=len(self.drop),
            seed=self.drop.rng_seed,
            primary_count=n_primary,
            surveyed_length=surveyed,
        )


def tagged_transmitter(drop: VehicleDrop) -> int:
    """Carrier-sensed transmitter nearest the middle of the road."""
    cand = np.flatnonzero(drop.is_primary_tx)
    if cand.size == 0:
        raise NoTransmitterError("drop has no carrier-sensed transmitter")
    return int(cand[np.argmin(np.abs(drop.y[cand] - drop.road_length / 2.0))])


def _attempt_seeds(seed: int, attempt: int) -> tuple[int, int]:
    state = np.random.SeedSequence(seed, spawn_key=(attempt,)).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def trial_seed(base_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence(base_seed, spawn_key=(trial,)).generate_state(1, np.uint64)[0])


def prepare_trial(scenario: Scenario, road_length: float | None = None, seed: int = 0) -> TrialGeometry:
    """Drop, select and tag; redraw (bounded) until a carrier-sensed transmitter exists."""
    for attempt in range(scenario.sim.max_retries):
        drop_seed, sel_seed = _attempt_seeds(seed, attempt)
        drop = select_transmitters(drop_vehicles(scenario, road_length, drop_seed), scenario, sel_seed)
        if drop.is_primary_tx.any():
            return TrialGeometry.from_drop(drop, scenario, drops_drawn=attempt + 1)
    raise NoTransmitterError(
        f"no carrier-sensed transmitter in {scenario.sim.max_retries} drops (seed {seed}); "
        "raise mac.p_t, densities or sim.max_retries"
    )


def trial_coverage(scenario: Scenario, road_length: float | None = None, seed: int = 0) -> TrialStats:
    return prepare_trial(scenario, road_length, seed).evaluate(scenario)


@dataclass(frozen=True, eq=False)
class CampaignResult:
    covered: np.ndarray  # per trial, in trial order
    transmitter_density: np.ndarray  # per trial
    top_sinr: np.ndarray  # pooled top-N SINRs, dB
    seeds: np.ndarray = field(default=None)
    primary_count: np.ndarray = field(default=None)
    surveyed_length: np.ndarray = field(default=None)

    @property
    def trials(self) -> int:
        return int(self.covered.size)

    @property
    def mean(self) -> float:
        return float(self.covered.mean())

    @property
    def std(self) -> float:
        return float(self.covered.std(ddof=1)) if self.trials > 1 else 0.0

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.trials)

    @property
    def ci95(self) -> float:
        return 1.96 * self.stderr

    @property
    def mean_transmitter_density(self) -> float:
        """Pooled intensity: all carrier-sensed transmitters over all road surveyed."""
        if self.surveyed_length is None or not self.surveyed_length.sum() > 0:
            return float(self.transmitter_density.mean())
        return float(self.primary_count.sum() / self.surveyed_length.sum())

    def cdf(self, grid) -> np.ndarray:
        """Empirical CDF of the pooled top-N SINRs on ``grid`` (dB)."""
        s = np.sort(self.top_sinr)
        return np.searchsorted(s, np.asarray(grid, dtype=float), side="right") / max(s.size, 1)

    @classmethod
    def from_trials(cls, stats: list[TrialStats]) -> CampaignResult:
        return cls(
            covered=np.array([s.covered_count for s in stats], dtype=np.int64),
            transmitter_density=np.array([s.transmitter_density for s in stats]),
            top_sinr=np.concatenate([s.top_sinr() for s in stats]) if stats else np.zeros(0),
            seeds=np.array([s.seed for s in stats], dtype=np.uint64),
            primary_count=np.array([s.primary_count for s in stats], dtype=np.int64),
            surveyed_length=np.array([s.surveyed_length for s in stats]),
        )


def _run_chunk(args) -> list[list[TrialStats]]:
    scenario, patterns, road_length, seeds = args
    out = []
    for seed in seeds:
        geom = prepare_trial(scenario, road_length, seed)
        out.append([geom.evaluate(scenario, p) for p in patterns])
    return out


def _campaign(scenario, patterns, trials, road_length, base_seed, workers, records_path):
    trials = scenario.sim.trials if trials is None else int(trials)
    if trials < 1:
        raise ValidationError("trials", "must be >= 1")
    seeds = [trial_seed(base_seed, i) for i in range(trials)]
    if workers and workers > 1:
        n_chunks = min(trials, workers * 4)
        bounds = np.linspace(0, trials, n_chunks + 1).astype(int)
        jobs = [(scenario, patterns, road_length, seeds[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_trial = [row for chunk in pool.map(_run_chunk, jobs) for row in chunk]
    else:
        per_trial = _run_chunk((scenario, patterns, road_length, seeds))
    if records_path is not None:
        _write_records(records_path, patterns, per_trial)
    return [CampaignResult.from_trials([row[j] for row in per_trial]) for j in range(len(patterns))]


def _write_records(path, patterns, per_trial) -> None:
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        for i, row in enumerate(per_trial):
            for p, st in zip(patterns, row):
                rec = {
                    "trial": i,
                    "seed": st.seed,
                    "beamwidth_deg": p.beamwidth_deg,
                    "covered": st.covered_count,
                    "n_vehicles": st.n_vehicles,
                    "transmitter_density": st.transmitter_density,
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def run_campaign(
    scenario: Scenario,
    trials: int | None = None,
    road_length: float | None = None,
    base_seed: int = 0,
    workers: int = 1,
    records_path=None,
) -> CampaignResult:
    """Independent trials with seeds derived from ``base_seed``; results are
    kept in trial order so aggregates do not depend on scheduling."""
    return _campaign(scenario, [scenario.antenna], trials, road_length, base_seed, workers, records_path)[0]


def run_beamwidth_campaign(
    scenario: Scenario,
    beamwidths,
    trials: int | None = None,
    road_length: float | None = None,
    base_seed: int = 0,
    workers: int = 1,
) -> dict[float, CampaignResult]:
    """Same drops evaluated under each beamwidth (common random numbers).

    Entry ``a`` equals ``run_campaign`` on the scenario with beamwidth ``a``.
    """
    patterns = [AntennaPattern(float(a), scenario.antenna.side_main_ratio) for a in beamwidths]
    results = _campaign(scenario, patterns, trials, road_length, base_seed, workers, None)
    return {p.beamwidth_deg: r for p, r in zip(patterns, results)}
