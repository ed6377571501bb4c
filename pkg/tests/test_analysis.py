import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmv2v import analysis as A
from mmv2v.channel import LinkGeometry, received_power_k
from mmv2v.errors import ConvergenceError, ValidationError
from mmv2v.scenario import DENSITY_ROWS, RadioParams, Scenario

from oracles import brute_force_series, hand_blended_power, hand_interferer_power, random_scenarios


def test_noise_power():
    assert 10 * math.log10(A.noise_power(RadioParams())) == pytest.approx(-94.990, abs=1e-3)
    assert 10 * math.log10(A.noise_power(RadioParams(bandwidth=1.0, noise_figure=0.0))) == pytest.approx(-174.0)
    ratio = A.noise_power(RadioParams(bandwidth=40e6)) / A.noise_power(RadioParams())
    assert 10 * math.log10(ratio) == pytest.approx(3.0103, abs=1e-4)


def test_blended_power_without_trucks_is_clear_path():
    sc = Scenario().replace(**{"road.tall_fraction": 0.0})
    for dx, lanes in ((0.0, (2, 2)), (3.2, (1, 2)), (6.4, (3, 1))):
        for dy in (5.0, 50.0, 400.0):
            g = LinkGeometry(dx, dy)
            assert A.mean_received_power(sc, *lanes, g) == received_power_k(sc, 0, g)


def test_blended_power_composition():
    sc = Scenario()
    g = LinkGeometry(0, 50)
    p = A.mean_received_power(sc, 2, 2, g)
    mean = 0.37
    p0 = math.exp(-mean)
    want = (p0 + (1 - p0) * 0.01) * received_power_k(sc, 0, g) + mean * p0 * 0.99 * received_power_k(sc, 1, g)
    assert p == pytest.approx(want, rel=1e-12)
    assert p == pytest.approx(hand_blended_power(sc, 2, 2, 50.0), rel=1e-12)
    with pytest.raises(ValidationError):
        A.mean_received_power(sc, 1, 2, LinkGeometry(0, 50))


def test_blended_power_vanishes_with_distance():
    sc = Scenario()
    dy = np.geomspace(20, 1e5, 200)
    p = A.blended_power(sc, 1, 1, dy)
    assert np.all(np.diff(p) < 0)
    assert p[-1] < 1e-50


def test_interferer_power_lane_average():
    sc = Scenario()
    l = 100.0
    w = sc.road.lane_width
    want = (
        max(A.mean_received_power(sc, t, t, LinkGeometry(0, l)) for t in (1, 2, 3)) / 3
        + 4 / 9 * max(A.mean_received_power(sc, t, r, LinkGeometry(w, math.sqrt(l * l - w * w))) for t, r in ((1, 2), (2, 3)))
        + 2 / 9 * A.mean_received_power(sc, 1, 3, LinkGeometry(2 * w, math.sqrt(l * l - 4 * w * w)))
    )
    assert A.lane_averaged_interferer_power(sc, l) == pytest.approx(want, rel=1e-12)
    assert A.lane_averaged_interferer_power(sc, l) == pytest.approx(hand_interferer_power(sc, l), rel=1e-12)
    short = 2.0
    same = max(A.mean_received_power(sc, t, t, LinkGeometry(0, short)) for t in (1, 2, 3))
    assert A.lane_averaged_interferer_power(sc, short) == pytest.approx(same / 3, rel=1e-12)


def test_primary_series_defaults():
    sc = Scenario()
    assert A.primary_spacing(sc) == pytest.approx(50 + 1 / 3e-4)
    s = A.primary_interference_series(sc, 20.0)
    first = 20.0 + 50.0 + 1 / 3e-4
    assert first == pytest.approx(3403.33, abs=0.01)
    assert s.terms >= 1
    assert s.total == pytest.approx(hand_interferer_power(sc, first), rel=1e-6)
    assert s.total < 1e-6 * A.noise_power(sc.radio)


def test_series_degenerate_cases():
    sc = Scenario().replace(**{"mac.p_t": 0.0, "mac.p_c": 0.0})
    assert A.primary_interference(sc, 10.0) == 0.0
    assert A.secondary_interference(sc) == 0.0
    assert A.secondary_interference(Scenario()) == pytest.approx(0.0, abs=1e-300)


def test_secondary_series_against_brute_force():
    sc = Scenario().replace(**{"mac.p_c": 0.01})
    s = A.secondary_interference_series(sc)
    spacing = 1 / (0.01 * 0.30)
    assert spacing == pytest.approx(333.33, abs=0.01)
    want = brute_force_series(sc, spacing, spacing, 1000)
    assert s.total == pytest.approx(want, rel=1e-9)


@pytest.mark.parametrize("i", range(20))
def test_series_match_brute_force(i):
    sc = random_scenarios(20)[i]
    link = 37.0
    s = A.primary_spacing(sc)
    io = A.primary_interference(sc, link)
    assert io == pytest.approx(brute_force_series(sc, link + s, s), rel=1e-9, abs=0.0)
    rate = sc.p_c * sc.road.total_density
    ic = A.secondary_interference(sc)
    assert ic == pytest.approx(brute_force_series(sc, 1 / rate, 1 / rate), rel=1e-9, abs=0.0)


@settings(max_examples=25, deadline=None)
@given(
    p_t=st.floats(1e-3, 0.5),
    r_e=st.floats(0.0, 300.0),
    link=st.floats(0.0, 500.0),
)
def test_tail_bound_is_certified(p_t, r_e, link):
    """What the truncated series leaves out is below its certified bound,
    and that bound is far below 1e-6 of the sum."""
    sc = Scenario().replace(**{"mac.p_t": p_t, "radio.carrier_sense_range": r_e})
    s = A.primary_spacing(sc)
    res = A.primary_interference_series(sc, link)
    nxt = link + s + res.terms * s
    bound = float(A._tail_bound(sc, np.array([nxt]), s)[0])
    dropped = math.fsum(hand_interferer_power(sc, nxt + j * s) for j in range(2000))
    assert dropped <= bound * (1 + 1e-12)
    assert bound < 1e-6 * res.total


def test_convergence_guard_names_tolerance():
    sc = Scenario().replace(**{"mac.p_t": 0.5, "radio.carrier_sense_range": 0.0, "analysis.series_max_terms": 2})
    with pytest.raises(ConvergenceError, match="1e-09"):
        A.primary_interference(sc, 0.0)


def test_threshold_power():
    sc = Scenario().replace(**{"mac.p_t": 0.0, "mac.p_c": 0.0})
    b = A.threshold_power(sc)
    n = A.noise_power(sc.radio)
    assert b.threshold_power == pytest.approx(n * 199.526, rel=1e-5)
    b0 = A.threshold_power(sc.replace(**{"radio.sinr_threshold": 0.0}))
    assert b0.threshold_power == n
    d = A.threshold_power(Scenario())
    assert d.terms_used >= 1
    assert isinstance(d.terms_used, int)
    assert d.denominator == pytest.approx(d.noise + d.primary_interference + d.secondary_interference)


def _slope(sc, tx, rx, y, h=1e-3):
    return abs(float(A.blended_power(sc, tx, rx, y + h) - A.blended_power(sc, tx, rx, y - h))) / (2 * h)


def test_inversion_round_trip():
    sc = Scenario().replace(**{"road.tall_fraction": 0.0})
    for d in np.linspace(2.0, 1500.0, 50):
        th = float(A.blended_power(sc, 1, 1, d))
        assert A.coverage_reach(sc, th, 0.0, 1, 1) == pytest.approx(d, abs=0.01)
    assert A.coverage_reach(sc, th, 0.0, 1, 1) == pytest.approx(1500.0, abs=0.01)


def test_inversion_residual_constructed_thresholds():
    sc = Scenario()
    rng = np.random.default_rng(7)
    w = sc.road.lane_width
    for _ in range(50):
        tx, rx = (int(v) for v in rng.integers(1, 4, 2))
        d = float(rng.uniform(20.0, 1200.0))
        th = float(A.blended_power(sc, tx, rx, d)) * float(rng.uniform(0.5, 2.0))
        reach = A.coverage_reach(sc, th, abs(tx - rx) * w, tx, rx)
        if reach in (0.0, sc.analysis.max_distance):
            continue
        resid = abs(float(A.blended_power(sc, tx, rx, reach)) - th)
        assert resid <= _slope(sc, tx, rx, reach) * 0.01


def test_inversion_out_of_range_is_zero():
    sc = Scenario()
    th = float(A.blended_power(sc, 1, 1, sc.analysis.min_distance)) * 10
    assert A.coverage_reach(sc, th, 0.0, 1, 1) == 0.0
    with pytest.raises(ValidationError):
        A.coverage_reach(sc, 1e-9, 3.2, 1, 1)


def test_extent_skips_side_lobe_gap():
    """Close cross-lane receivers in the side lobe can fall short of the
    threshold while farther main-lobe ones qualify."""
    sc = Scenario().replace(**{"antenna.beamwidth_deg": 10.0})
    th = A.threshold_power(sc).threshold_power
    iv = A.qualifying_intervals(sc, th, 1, 3)
    # near side-lobe stretch, a gap, then the main-lobe stretch
    assert len(iv) == 2 and iv[1][0] > iv[0][1]
    assert iv[1][0] >= sc.antenna.lobe_boundary_dy(6.4) - 1e-9
    assert A.coverage_extent(sc, th, 1, 3) < A.coverage_reach(sc, th, 6.4, 1, 3)


def test_expected_coverage_empty_road():
    sc = Scenario().replace(**{"road.lane_densities": [0.0, 0.0, 0.0]})
    assert A.expected_coverage(sc).expected_receivers == 0.0


def test_expected_coverage_symmetric_densities():
    lam = 0.1
    sc = Scenario().replace(**{"road.tall_fraction": 0.0, "road.lane_densities": [lam] * 3})
    res = A.expected_coverage(sc)
    th = res.budget.threshold_power
    d0 = A.coverage_extent(sc, th, 1, 1)
    d1 = A.coverage_extent(sc, th, 1, 2)
    d2 = A.coverage_extent(sc, th, 1, 3)
    assert res.expected_receivers == pytest.approx(lam * (d0 + 4 / 3 * d1 + 2 / 3 * d2), rel=1e-12)
    alt = A.expected_coverage(sc.replace(**{"analysis.coverage_weighting": "receiver"}))
    assert alt.expected_receivers == pytest.approx(res.expected_receivers, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(
    lam=st.lists(st.floats(0.0, 0.3), min_size=3, max_size=3),
    lane=st.integers(0, 2),
    bump=st.floats(0.001, 0.2),
)
def test_expected_coverage_monotone_in_density(lam, lane, bump):
    base = Scenario().replace(**{"road.tall_fraction": 0.0, "road.lane_densities": lam})
    more = list(lam)
    more[lane] += bump
    a = A.expected_coverage(base).expected_receivers
    b = A.expected_coverage(base.replace(**{"road.lane_densities": more})).expected_receivers
    assert b >= a - 1e-9 * max(a, 1.0)


@pytest.mark.parametrize("row", list(DENSITY_ROWS))
def test_beamwidth_sweep_has_interior_maximum(row):
    sc = Scenario().replace(**{"road.lane_densities": list(DENSITY_ROWS[row])})
    grid = np.arange(10, 361, 10)
    en = np.array([A.expected_coverage(sc.replace(**{"antenna.beamwidth_deg": a})).expected_receivers for a in grid])
    assert 0 < int(np.argmax(en)) < len(grid) - 1
    assert en[-1] < en.max()


def test_sinr_at_single_link():
    sc = Scenario().replace(**{"road.tall_fraction": 0.0})
    g = LinkGeometry(0, 100)
    # interference is negligible at the defaults, so this is the SNR
    assert A.sinr_at(sc, g, 2, 2) == pytest.approx(-65.14 + 94.99, abs=0.01)
    quiet = sc.replace(**{"mac.p_t": 0.0, "mac.p_c": 0.0})
    snr = 10 * math.log10(received_power_k(quiet, 0, g) / A.noise_power(quiet.radio))
    assert A.sinr_at(quiet, g, 2, 2) == pytest.approx(snr, abs=1e-12)


def _width95(grid, en):
    return int(np.count_nonzero(en >= 0.95 * en.max()))


def test_beamwidth_shape_with_busier_channel():
    """With p_t = 0.01 interference matters: the optimum widens and sits at
    wider beams as density grows, and the sparse row peaks highest."""
    grid = np.arange(10, 361, 10)
    peak, width, arg = {}, {}, {}
    for row in DENSITY_ROWS:
        sc = Scenario().replace(**{"road.lane_densities": list(DENSITY_ROWS[row]), "mac.p_t": 0.01})
        en = np.array([A.expected_coverage(sc.replace(**{"antenna.beamwidth_deg": a})).expected_receivers for a in grid])
        peak[row], width[row], arg[row] = en.max(), _width95(grid, en), grid[np.argmax(en)]
    assert width["high"] > width["low"]
    assert peak["low"] > peak["high"]
    assert arg["low"] < arg["high"]
