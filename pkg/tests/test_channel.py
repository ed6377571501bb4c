import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from mmv2v.channel import (
    AntennaPattern,
    AntennaRole,
    LinkGeometry,
    Lobe,
    PathLossTable,
    antenna_gains,
    lobe_membership,
    mw_to_dbm,
    path_loss_db,
    received_power_k,
)
from mmv2v.errors import ValidationError
from mmv2v.scenario import Scenario

from oracles import hand_gains, hand_path_loss

TABLE = PathLossTable()


def test_path_loss_spot_values():
    assert path_loss_db(TABLE, 0, LinkGeometry(0, 100)) == pytest.approx(106.900, abs=1e-3)
    assert path_loss_db(TABLE, 0, LinkGeometry(0, 1)) == pytest.approx(70.015, abs=1e-9)
    assert path_loss_db(TABLE, 1, LinkGeometry(3.2, 50)) == pytest.approx(108.420, abs=1e-3)


@given(k=st.sampled_from([0, 1, 2]), d=st.floats(0.1, 5000.0))
def test_path_loss_matches_hand_formula(k, d):
    want = hand_path_loss(TABLE.alpha[k], TABLE.beta[k], d)
    assert path_loss_db(TABLE, k, LinkGeometry(0, d)) == pytest.approx(want, rel=1e-12)


@given(k=st.sampled_from([0, 1, 2]), d=st.floats(0.1, 5000.0), step=st.floats(1e-3, 100.0))
def test_path_loss_strictly_increasing(k, d, step):
    assert TABLE.loss_db(k, d + step) > TABLE.loss_db(k, d)


def test_path_loss_errors():
    with pytest.raises(ValidationError):
        path_loss_db(TABLE, 3, LinkGeometry(0, 10))
    with pytest.raises(ValidationError):
        LinkGeometry(0, 0)
    with pytest.raises(ValidationError):
        LinkGeometry(-1, 10)


def test_gain_spot_values():
    g1, g2 = antenna_gains(30, 0.1)
    assert g1 == pytest.approx(8.6705, abs=1e-3)
    assert g2 == pytest.approx(0.86705, abs=1e-3)
    assert antenna_gains(360, 0.37)[0] == pytest.approx(1.0, abs=1e-15)
    assert_allclose(antenna_gains(45, 1.0), (1.0, 1.0), atol=1e-15)


@given(alpha=st.floats(1e-3, 360.0), k=st.floats(1e-3, 1.0))
def test_gain_normalisation(alpha, k):
    g1, g2 = antenna_gains(alpha, k)
    c = math.cos(math.radians(alpha) / 2.0)
    assert g1 * (1 - c) / 2 + g2 * (1 + c) / 2 == pytest.approx(1.0, abs=1e-12)
    assert_allclose((g1, g2), hand_gains(alpha, k), rtol=1e-14)


@given(a=st.floats(1.0, 359.0), da=st.floats(0.0, 1.0), k=st.floats(0.01, 1.0))
def test_main_gain_non_increasing_in_beamwidth(a, da, k):
    assert antenna_gains(min(a + da, 360.0), k)[0] <= antenna_gains(a, k)[0] * (1 + 1e-12)


def test_gain_errors():
    for bad in (0.0, -5.0, 361.0):
        with pytest.raises(ValidationError):
            antenna_gains(bad, 0.1)
    for bad in (0.0, 1.5):
        with pytest.raises(ValidationError):
            antenna_gains(30.0, bad)


def test_lobe_membership():
    pat = AntennaPattern(30, 0.1)
    assert lobe_membership(pat, LinkGeometry(0, 50)) is Lobe.MAIN
    assert lobe_membership(pat, LinkGeometry(3.2, 50)) is Lobe.MAIN
    assert lobe_membership(pat, LinkGeometry(3.2, 10)) is Lobe.SIDE
    assert lobe_membership(pat, LinkGeometry(3.2, 10), AntennaRole.RECEIVER_REAR) is Lobe.SIDE
    # the cone boundary itself counts as main
    b = pat.lobe_boundary_dy(3.2)
    assert lobe_membership(pat, LinkGeometry(3.2, b)) is Lobe.MAIN
    assert lobe_membership(pat, LinkGeometry(3.2, b * (1 - 1e-6))) is Lobe.SIDE
    with pytest.raises(ValueError):
        lobe_membership(pat, LinkGeometry(0, 5), "sideways")


def test_received_power_spot_values():
    sc = Scenario()
    p = received_power_k(sc, 0, LinkGeometry(0, 100))
    assert p == pytest.approx(10**2.3 * 8.670520 ** 2 / 10**10.69, rel=1e-4)
    # 23 dBm + 2 * 9.380 dBi - 106.900 dB
    assert p == pytest.approx(3.063e-7, rel=1e-3)
    assert mw_to_dbm(p) == pytest.approx(-65.14, abs=5e-3)
    # side-by-side coupling at the same path loss: k_lobe^2 of main-main
    side = received_power_k(sc, 0, LinkGeometry(3.2, 10))
    main_same_pl = received_power_k(sc, 0, LinkGeometry(0, math.hypot(3.2, 10)))
    assert side == pytest.approx(0.01 * main_same_pl, rel=1e-12)
    ratio_db = 10 * math.log10(received_power_k(sc, 0, LinkGeometry(0, 50)) / received_power_k(sc, 2, LinkGeometry(0, 50)))
    assert ratio_db >= 25.0


@given(dx=st.sampled_from([0.0, 3.2, 6.4]), d0=st.floats(30.0, 1000.0), step=st.floats(0.01, 500.0))
def test_received_power_decreases_along_bearing(dx, d0, step):
    sc = Scenario()
    # fixed bearing: scale the vector; both points stay in the same lobe
    u = np.array([dx, 30.0]) / math.hypot(dx, 30.0)
    a, b = u * d0, u * (d0 + step)
    for k in (0, 1, 2):
        assert received_power_k(sc, k, LinkGeometry(b[0], b[1])) < received_power_k(sc, k, LinkGeometry(a[0], a[1]))


def test_one_blocker_penalty_band():
    d = np.linspace(10, 100, 901)
    delta = TABLE.loss_db(1, d) - TABLE.loss_db(0, d)
    assert np.all((delta >= 7.0) & (delta <= 9.0))
    assert delta[0] == pytest.approx(8.0, abs=1e-9)


def test_path_loss_table_validation():
    with pytest.raises(ValidationError):
        PathLossTable(alpha=(1.0, 1.0))
    with pytest.raises(ValidationError):
        PathLossTable(beta=(80.0, 70.0, 115.0))
