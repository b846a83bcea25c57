import math

import numpy as np
import pytest

from rfcancel.cancel import demod_remod_sc
from rfcancel.estimators import (
    NoLockError,
    crlb_freq_ofdm,
    crlb_single_carrier,
    crlb_timing,
    estimate_amp_phase,
    estimate_freq_timing_ofdm,
    estimate_freq_timing_sc,
    m2m4_snr,
    matched_filter_symbols,
    power_law_tone,
    pulse_derivative_energy,
)
from rfcancel.signals import OfdmConfig, ScenarioConfig, compose_scenario, make_constellation, rrc_pulse
from tests import golden


def test_crlbs_against_oracle():
    c = crlb_single_carrier(10.0, 6000)
    assert c["sigma_omega2"] == pytest.approx(golden.CRLB_OMEGA_10_6000, rel=1e-9)
    assert c["sigma_theta2"] == pytest.approx(1 / (2 * 10 * 6000))
    ep = pulse_derivative_energy(rrc_pulse(0.4, 21, 82))
    assert ep == pytest.approx(golden.EP_PRIME_RRC_04_21_82, rel=1e-6)
    assert crlb_timing(10.0, 6000, golden.EP_PRIME_RRC_04_21_82) == pytest.approx(golden.CRLB_TIMING_10_6000, rel=1e-12)
    assert crlb_freq_ofdm(10.0, 5658, 5 / 64) == pytest.approx(golden.CRLB_OFDM_10_5658, rel=1e-12)
    with pytest.raises(ValueError):
        crlb_timing(1.0, 10, 0.0)


def test_power_law_tone_finds_offset():
    n = np.arange(512)
    w = 0.0123
    y = np.exp(1j * (w * n + 0.4))
    freq, line, strength = power_law_tone(y, 1)
    assert freq == pytest.approx(w / (2 * np.pi), abs=1e-6)
    assert strength == pytest.approx(1.0, rel=1e-3)
    f2, _, _ = power_law_tone(y, 4)
    assert f2 == pytest.approx(4 * w / (2 * np.pi), abs=1e-6)


def test_m2m4_noiseless_and_noisy():
    rng = np.random.default_rng(0)
    const = make_constellation("qpsk")
    s = const.random(20000, rng) * 2.0
    sp, npow = m2m4_snr(s, 1.0)
    assert sp == pytest.approx(4.0, rel=1e-9)
    assert npow == pytest.approx(0.0, abs=1e-9)
    w = (rng.standard_normal(20000) + 1j * rng.standard_normal(20000)) / math.sqrt(2)
    sp, npow = m2m4_snr(s + w, 1.0)
    assert sp == pytest.approx(4.0, rel=0.05)
    assert npow == pytest.approx(1.0, rel=0.1)


@pytest.mark.parametrize("scheme", ["qpsk", "qam16"])
def test_amp_phase_recovers_rotation(scheme):
    rng = np.random.default_rng(4)
    s = make_constellation(scheme).random(4000, rng)
    y = 1.7 * s * np.exp(0.2j) + 0.02 * (rng.standard_normal(4000) + 1j * rng.standard_normal(4000))
    A, th = estimate_amp_phase(y, scheme)
    assert A == pytest.approx(1.7, rel=0.01)
    assert th == pytest.approx(0.2, abs=0.01)


@pytest.mark.parametrize("scheme", ["bpsk", "qpsk", "psk8", "qam16"])
def test_sc_sync_at_moderate_inr(scheme):
    cfg = ScenarioConfig(scheme=scheme, inr_db=10, seed=21)
    sc = compose_scenario(cfg)
    res = estimate_freq_timing_sc(sc.r, cfg.pulse, sc.windows[0])
    bound = math.sqrt(crlb_single_carrier(10.0, cfg.N)["sigma_omega2"])
    assert abs(res.omega_hat - sc.truth.omega) < 20 * bound
    a, n = sc.windows[0]
    _, pos = matched_filter_symbols(sc.r, cfg.pulse, res.omega_hat, res.epsilon_hat, a, a + n)
    # the blind stage only needs to land inside the refinement's capture range
    off = (pos - sc.first_symbol + cfg.P / 2) % cfg.P - cfg.P / 2
    assert np.max(np.abs(off)) < 0.15 * cfg.P
    out = demod_remod_sc(sc.r, cfg.pulse, windows=sc.windows, scheme=scheme)
    fine = (out.sync[0].epsilon_hat - sc.first_symbol + cfg.P / 2) % cfg.P - cfg.P / 2
    assert abs(fine) < 0.5


def test_sc_sync_rejects_bad_windows():
    cfg = ScenarioConfig(seed=1)
    sc = compose_scenario(cfg)
    with pytest.raises(ValueError):
        estimate_freq_timing_sc(sc.r, cfg.pulse, (0, 10))
    with pytest.raises(NoLockError):
        estimate_freq_timing_sc(np.zeros(20000, complex), cfg.pulse, (100, 10000))


def test_ofdm_sync():
    cfg = ScenarioConfig(kind="ofdm", inr_db=10, seed=3)
    sc = compose_scenario(cfg)
    res = estimate_freq_timing_ofdm(sc.r, cfg.ofdm)
    bound = math.sqrt(crlb_freq_ofdm(10.0, cfg.ofdm.symbol_len, cfg.ofdm.kappa))
    assert abs(res.omega_hat - sc.truth.omega) < 20 * bound
    assert len(res.starts) == cfg.ofdm_symbols
    assert res.starts[0] == pytest.approx(sc.windows[0][0], abs=cfg.ofdm.cp_len / 4)


def test_ofdm_sync_errors():
    cfg = OfdmConfig(64, 5, 82)
    with pytest.raises(ValueError):
        estimate_freq_timing_ofdm(np.ones(100, complex), cfg)
    with pytest.raises(NoLockError):
        estimate_freq_timing_ofdm(np.zeros(3 * cfg.symbol_len, complex), cfg)


def test_noiseless_sc_sync_is_exact_after_refinement():
    cfg = ScenarioConfig(inr_db=10, seed=5, noise_var=0.0, omega=0.001, epsilon=10.3)
    sc = compose_scenario(cfg)
    res = estimate_freq_timing_sc(sc.r, cfg.pulse, sc.windows[0])
    assert res.omega_hat == pytest.approx(0.001, abs=1e-4)
    out = demod_remod_sc(sc.r, cfg.pulse, windows=sc.windows)
    fine = (out.sync[0].epsilon_hat - sc.first_symbol + cfg.P / 2) % cfg.P - cfg.P / 2
    assert abs(out.sync[0].omega_hat - 0.001) < 1e-4
    assert abs(fine) < 0.05


@pytest.mark.parametrize("frac", [0.0, 0.3, -0.45])
def test_noiseless_ofdm_sync_is_exact(frac):
    cfg = ScenarioConfig(kind="ofdm", seed=2, noise_var=0.0, epsilon=7.0, omega=0.0)
    spacing = 2 * np.pi / cfg.ofdm.body_len
    cfg = ScenarioConfig(kind="ofdm", seed=2, noise_var=0.0, epsilon=7.0, omega=frac * spacing)
    sc = compose_scenario(cfg)
    res = estimate_freq_timing_ofdm(sc.r, cfg.ofdm)
    assert res.omega_hat == pytest.approx(frac * spacing, abs=1e-6)
    # windows mark the undelayed symbol grid
    assert res.starts[0] == sc.windows[0][0] + 7


def test_ofdm_frequency_aliases_at_one_subcarrier():
    cfg = ScenarioConfig(kind="ofdm", seed=2, noise_var=0.0, epsilon=7.0)
    spacing = 2 * np.pi / cfg.ofdm.body_len
    cfg = ScenarioConfig(kind="ofdm", seed=2, noise_var=0.0, epsilon=7.0, omega=spacing)
    res = estimate_freq_timing_ofdm(compose_scenario(cfg).r, cfg.ofdm)
    assert res.omega_hat == pytest.approx(0.0, abs=1e-6)


def test_power_law_phase_leaves_quarter_turn_ambiguity():
    y = make_constellation("qpsk").random(500, np.random.default_rng(1)) * np.exp(0.3j)
    A, th = estimate_amp_phase(y, "qpsk")
    assert A == pytest.approx(1.0, abs=1e-9)
    k = (th - 0.3) / (np.pi / 2)
    assert k == pytest.approx(round(k), abs=1e-9)
