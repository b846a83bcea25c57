import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfcancel.signals import (
    ALL_SCHEMES,
    OfdmConfig,
    ScenarioConfig,
    Scheme,
    SignalBuffer,
    WaveformParams,
    apply_waveform_params,
    awgn,
    compose_scenario,
    demodulate_ofdm,
    fractional_delay,
    lfm_soi,
    make_constellation,
    modulate_ofdm,
    modulate_single_carrier,
    rectangular_pulse,
    rrc_pulse,
)


@pytest.mark.parametrize("scheme", ALL_SCHEMES)
def test_constellations_have_unit_energy_and_expected_order(scheme):
    c = make_constellation(scheme)
    assert c.order == scheme.order
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
    assert len(np.unique(np.round(c.points, 9))) == c.order


def test_known_minimum_distances():
    assert make_constellation("qpsk").min_distance == pytest.approx(np.sqrt(2))
    assert make_constellation("bpsk").min_distance == pytest.approx(2.0)
    assert make_constellation("qam16").min_distance == pytest.approx(2 / np.sqrt(10))


@pytest.mark.parametrize("scheme", [Scheme.PSK8, Scheme.QAM16, Scheme.QAM64])
def test_gray_neighbours_differ_in_one_bit(scheme):
    c = make_constellation(scheme)
    d = np.abs(c.points[:, None] - c.points[None, :])
    dmin = c.min_distance
    for i in range(c.order):
        for j in np.flatnonzero(np.isclose(d[i], dmin)):
            assert bin(i ^ j).count("1") == 1


def test_scheme_parse_aliases_and_errors():
    assert Scheme.parse("8PSK") is Scheme.PSK8
    assert Scheme.parse("16-qam") is Scheme.QAM16
    with pytest.raises(ValueError):
        Scheme.parse("gmsk")


def test_decide_returns_nearest_point():
    c = make_constellation("qpsk")
    y = c.points * 0.9 + 0.05j
    assert np.array_equal(c.decide(y), c.points)


def test_rrc_unit_energy_symmetric_and_nyquist():
    p = rrc_pulse(0.4, 21, 8)
    assert len(p.taps) == 21 * 8 + 1
    assert np.sum(p.taps**2) == pytest.approx(1.0)
    assert np.allclose(p.taps, p.taps[::-1])
    rc = np.convolve(p.taps, p.taps)
    centre = len(rc) // 2
    zeros = rc[centre + 8 :: 8][:8]
    assert np.max(np.abs(zeros)) < 1e-2 * rc[centre]


def test_rrc_singular_points_are_finite():
    p = rrc_pulse(0.25, 8, 4)  # t = 1/(4b) = 1 lands on a tap
    assert np.all(np.isfinite(p.taps))
    with pytest.raises(ValueError):
        rrc_pulse(1.5, 8, 4)


def test_rectangular_pulse():
    p = rectangular_pulse(5)
    assert np.sum(p.taps**2) == pytest.approx(1.0)


def test_single_carrier_symbol_placement():
    p = rectangular_pulse(4)
    x = modulate_single_carrier([1, -1, 1j], p).samples
    assert len(x) == 2 * 4 + 4
    assert np.allclose(x[0:4], 0.5)
    assert np.allclose(x[4:8], -0.5)


def test_ofdm_round_trip():
    cfg = OfdmConfig(16, 2, 4)
    rng = np.random.default_rng(0)
    grid = make_constellation("qpsk").random((16, 3), rng)
    x = modulate_ofdm(grid, cfg)
    assert len(x) == 3 * cfg.symbol_len
    assert np.allclose(demodulate_ofdm(x, cfg), grid)
    one = x.samples[: cfg.symbol_len]
    assert np.allclose(one[: cfg.cp_len], one[-cfg.cp_len :])


def test_ofdm_config_numerology():
    cfg = OfdmConfig.from_kappa(64, 5 / 64, 82)
    assert (cfg.L, cfg.symbol_len, cfg.body_len, cfg.cp_len) == (5, 5658, 5248, 410)
    with pytest.raises(ValueError):
        OfdmConfig(1, 1, 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 50), st.floats(-0.45, 0.45))
def test_fractional_delay_integer_matches_roll(k, frac):
    rng = np.random.default_rng(k)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    assert np.allclose(fractional_delay(x, k), np.roll(x, k))
    y = fractional_delay(fractional_delay(x, frac), -frac)
    assert np.allclose(y, x)


def test_apply_waveform_params_origin_reference():
    base = np.ones(32, dtype=complex)
    p = WaveformParams(2.0, 0.1, 0.3, 0.0)
    y = apply_waveform_params(base, p, origin=10).samples
    assert y[10] == pytest.approx(2.0 * np.exp(0.3j))
    with pytest.raises(ValueError):
        WaveformParams(-1.0, 0.0, 0.0, 0.0)


def test_lfm_and_awgn():
    s = lfm_soi(2.0, 0.1, 0.0, 16).samples
    assert np.allclose(np.abs(s), 2.0)
    assert np.allclose(s[1] / s[0], np.exp(2j * np.pi * 0.1))
    w = awgn(200_000, 3.0, 1).samples
    assert np.mean(np.abs(w) ** 2) == pytest.approx(3.0, rel=0.02)
    assert np.array_equal(awgn(8, 1.0, 5).samples, awgn(8, 1.0, 5).samples)


def test_signal_buffer_validation():
    with pytest.raises(ValueError):
        SignalBuffer(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        SignalBuffer(np.ones((2, 2)))


def test_scenario_single_carrier_layout():
    cfg = ScenarioConfig(inr_db=10, seed=4)
    sc = compose_scenario(cfg)
    a, n = sc.windows[0]
    assert n == 69 * 82 == cfg.N
    assert len(sc.symbols) >= cfg.burst_symbols
    assert np.allclose(sc.r.samples, sc.z.samples + sc.s.samples + sc.w.samples)
    inr = np.mean(np.abs(sc.z.samples[a : a + n]) ** 2) / np.mean(np.abs(sc.w.samples) ** 2)
    assert 10 * np.log10(inr) == pytest.approx(10.0, abs=0.3)
    assert abs(sc.truth.omega) <= cfg.omega_max


def test_scenario_reproducible_and_seed_sensitive():
    a = compose_scenario(ScenarioConfig(seed=9)).r.samples
    b = compose_scenario(ScenarioConfig(seed=9)).r.samples
    c = compose_scenario(ScenarioConfig(seed=10)).r.samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_scenario_ofdm_and_soi():
    sc = compose_scenario(ScenarioConfig(kind="ofdm", sir_db=-10, seed=1, ofdm_symbols=3))
    assert len(sc.windows) == 3
    assert sc.symbols.shape == (64, 3)
    assert sc.sigma_s2 == pytest.approx(0.1 * sc.truth.A**2 / 82)
    assert np.mean(np.abs(sc.s.samples) ** 2) == pytest.approx(sc.sigma_s2)


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(kind="fm")
    with pytest.raises(ValueError):
        ScenarioConfig(kind="ofdm", ofdm_symbols=1)
    assert ScenarioConfig(guard=3).guard_symbols == 3
