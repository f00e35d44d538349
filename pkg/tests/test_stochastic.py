import numpy as np
import pytest

from hcransim.model import NetworkConfig
from hcransim.stochastic import (ArrivalSpec, ChannelSpec, draw_arrivals,
                                 draw_channel, draw_placement, mean_gains,
                                 pathloss_db, spawn_streams)


def cfg():
    return NetworkConfig()


# -- propagation --------------------------------------------------------------

def test_pathloss_reference_points():
    spec = ChannelSpec()
    # intercept + slope*log10(d): at 100 m the two tiers differ by the
    # slope difference times two decades
    assert pathloss_db(spec, 100.0, "rrh") == pytest.approx(111.5)
    assert pathloss_db(spec, 100.0, "hpn") == pytest.approx(101.5)
    assert pathloss_db(spec, 1.0, "rrh") == pytest.approx(31.5)
    with pytest.raises(ValueError):
        pathloss_db(spec, 100.0, "macro")


def test_noise_power():
    # -102 dBm -> 10^(-13.2) W
    assert ChannelSpec().noise_watts == pytest.approx(10.0 ** -13.2)


def test_mean_gain_matches_hand_value():
    spec = ChannelSpec()
    c = cfg()
    rng = np.random.default_rng(0)
    pl = draw_placement(c, spec, rng)
    g_rj, g_rm, g_hm = mean_gains(c, spec, pl)
    assert g_rj.shape == (c.num_rrh, c.num_rue)
    assert g_rm.shape == (c.num_rrh, c.num_hue)
    assert g_hm.shape == (c.num_hue,)
    # recompute one entry by hand
    d = np.linalg.norm(pl.rrh_xy[1] - pl.rue_xy[3])
    want = 10.0 ** (-(31.5 + 40.0 * np.log10(d)) / 10.0) / spec.noise_watts
    assert g_rj[1, 3] == pytest.approx(want, rel=1e-12)
    d0 = np.linalg.norm(pl.hue_xy[5])
    want0 = 10.0 ** (-(31.5 + 35.0 * np.log10(d0)) / 10.0) / spec.noise_watts
    assert g_hm[5] == pytest.approx(want0, rel=1e-12)


def test_placement_geometry():
    spec = ChannelSpec()
    c = cfg()
    rng = np.random.default_rng(7)
    for _ in range(20):
        pl = draw_placement(c, spec, rng)
        for pts in (pl.rrh_xy, pl.hue_xy, pl.rue_xy):
            r = np.linalg.norm(pts, axis=1)
            assert np.all(r <= spec.disc_radius_m + 1e-9)
            assert np.all(r >= spec.min_dist_m - 1e-9)
        # UEs keep their distance from every RRH as well
        for pts in (pl.hue_xy, pl.rue_xy):
            d = np.linalg.norm(pts[:, None, :] - pl.rrh_xy[None, :, :],
                               axis=2)
            assert np.all(d >= spec.min_dist_m - 1e-9)


def test_placement_roughly_uniform():
    # mean squared radius of uniform disc samples is R^2/2 (min_dist ~ 0)
    spec = ChannelSpec(min_dist_m=1.0)
    c = NetworkConfig(hue_ids=range(2000), rue_ids=range(2000),
                      rb_rrh=range(12), rb_hpn=range(8))
    pl = draw_placement(c, spec, np.random.default_rng(3))
    msr = np.mean(np.linalg.norm(pl.rue_xy, axis=1) ** 2)
    assert msr == pytest.approx(spec.disc_radius_m ** 2 / 2.0, rel=0.05)


# -- fading --------------------------------------------------------------------

def test_fading_is_unit_mean_and_uncorrelated():
    c = cfg()
    spec = ChannelSpec()
    pl = draw_placement(c, spec, np.random.default_rng(1))
    g0 = mean_gains(c, spec, pl)
    rng = np.random.default_rng(2)
    slots = 4000
    series = np.empty(slots)
    total = 0.0
    for t in range(slots):
        ch = draw_channel(c, g0, rng)
        f = ch.g_hpn_hue / g0[2][:, None]   # strip the mean gain
        series[t] = f[0, 0]
        total += f.mean()
    assert total / slots == pytest.approx(1.0, abs=0.01)
    x, y = series[:-1], series[1:]
    rho = np.corrcoef(x, y)[0, 1]
    assert abs(rho) < 0.05  # i.i.d. across slots


def test_channel_shapes_and_determinism():
    c = cfg()
    spec = ChannelSpec()
    pl = draw_placement(c, spec, np.random.default_rng(1))
    g0 = mean_gains(c, spec, pl)
    ch1 = draw_channel(c, g0, np.random.default_rng(9))
    ch2 = draw_channel(c, g0, np.random.default_rng(9))
    ch1.check_shapes(c)
    assert np.array_equal(ch1.g_rrh_rue, ch2.g_rrh_rue)
    assert np.array_equal(ch1.g_hpn_hue, ch2.g_hpn_hue)


# -- arrivals ------------------------------------------------------------------

def test_arrival_spec_validation():
    with pytest.raises(ValueError):
        ArrivalSpec(kind="uniform")
    with pytest.raises(ValueError):
        ArrivalSpec(mean_rue=50000.0, cap_rue=30000.0)
    with pytest.raises(ValueError):
        ArrivalSpec(depth=1.5)


def test_from_config_defaults():
    c = cfg()
    spec = ArrivalSpec.from_config(c, mean_rue=6000.0)
    assert spec.mean_hue == pytest.approx(3000.0)
    assert spec.cap_rue == c.a_max_rue and spec.cap_hue == c.a_max_hue


@pytest.mark.parametrize("kind", ["poisson", "bernoulli", "timevarying"])
def test_arrival_means_and_caps(kind):
    c = cfg()
    spec = ArrivalSpec(kind=kind, mean_rue=6000.0, mean_hue=3000.0,
                       cap_rue=30000.0, cap_hue=15000.0)
    rng = np.random.default_rng(5)
    slots = 20000
    tot_h = tot_r = 0.0
    for t in range(slots):
        a_h, a_r = draw_arrivals(c, spec, rng, t=t)
        assert a_h.shape == (c.num_hue,) and a_r.shape == (c.num_rue,)
        assert np.all(a_h >= 0) and np.all(a_h <= spec.cap_hue)
        assert np.all(a_r >= 0) and np.all(a_r <= spec.cap_rue)
        tot_h += a_h.mean()
        tot_r += a_r.mean()
    assert tot_h / slots == pytest.approx(3000.0, rel=0.01)
    assert tot_r / slots == pytest.approx(6000.0, rel=0.01)


def test_bernoulli_is_bang_bang():
    c = cfg()
    spec = ArrivalSpec(kind="bernoulli", mean_rue=6000.0, mean_hue=3000.0,
                       cap_rue=30000.0, cap_hue=15000.0)
    a_h, a_r = draw_arrivals(c, spec, np.random.default_rng(0))
    assert set(np.unique(a_h)) <= {0.0, 15000.0}
    assert set(np.unique(a_r)) <= {0.0, 30000.0}


def test_stream_separation():
    # the channel stream must not move when arrival draws are interleaved
    c = cfg()
    spec = ChannelSpec()
    aspec = ArrivalSpec()
    _, rng_arr, rng_ch = spawn_streams(123)
    pl = draw_placement(c, spec, spawn_streams(123)[0])
    g0 = mean_gains(c, spec, pl)
    seq_a = [draw_channel(c, g0, rng_ch).g_rrh_rue for _ in range(3)]

    _, rng_arr2, rng_ch2 = spawn_streams(123)
    seq_b = []
    for t in range(3):
        draw_arrivals(c, aspec, rng_arr2, t=t)  # interleaved traffic draws
        seq_b.append(draw_channel(c, g0, rng_ch2).g_rrh_rue)
    for a, b in zip(seq_a, seq_b):
        assert np.array_equal(a, b)
