import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfcancel import io as iqio
from rfcancel.signals import awgn


def test_eight_byte_float32_file(tmp_path):
    p = tmp_path / "one.iq"
    np.array([1.0, -0.5], dtype="<f4").tofile(p)
    rec = iqio.read_iq(p)
    assert len(rec) == 1
    assert rec.samples.samples[0] == 1 - 0.5j


def test_empty_and_ragged_files(tmp_path):
    p = tmp_path / "empty.iq"
    p.write_bytes(b"")
    assert len(iqio.read_iq(p)) == 0
    q = tmp_path / "ragged.iq"
    q.write_bytes(b"\x00" * 6)
    with pytest.raises(ValueError):
        iqio.read_iq(q)
    with pytest.raises(ValueError):
        iqio.read_iq(p, "uint8")


def test_int16_scaling_and_saturation(tmp_path):
    p = tmp_path / "x.iq"
    iqio.write_iq(p, np.array([0.5 - 0.25j, 2.0 + 0j]), "int16")
    raw = np.fromfile(p, dtype="<i2")
    assert list(raw) == [16384, -8192, 32767, 0]
    y = iqio.read_iq(p, "int16-interleaved").samples.samples
    assert y[0] == 0.5 - 0.25j


@settings(max_examples=25, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False), max_size=64))
def test_float32_round_trip_is_bit_exact(tmp_path_factory, vals):
    x = np.array(vals, dtype=np.complex64)
    p = tmp_path_factory.mktemp("rt") / "x.iq"
    iqio.write_iq(p, x, "float32")
    y = iqio.read_iq(p, "float32").samples.samples.astype(np.complex64)
    assert np.array_equal(y.view(np.uint32), x.view(np.uint32))


def test_recording_rejects_bad_rate(tmp_path):
    p = tmp_path / "x.iq"
    iqio.write_iq(p, np.ones(4))
    with pytest.raises(ValueError):
        iqio.read_iq(p, sample_rate=0.0)


def _bursty(spans, n=60_000, inr_db=10.0, seed=0):
    rng = np.random.default_rng(seed)
    x = awgn(n, 1.0, seed).samples
    a = math.sqrt(10 ** (inr_db / 10))
    for lo, hi in spans:
        x[lo:hi] += a * np.exp(1j * rng.uniform(0, 2 * np.pi, hi - lo))
    return x


def test_pure_noise_has_no_bursts():
    assert iqio.detect_bursts(awgn(60_000, 1.0, 3).samples) == []


def test_single_burst_coverage():
    x = _bursty([(20_000, 30_000)])
    segs = iqio.detect_bursts(x)
    assert len(segs) == 1
    s = segs[0]
    overlap = max(0, min(s.stop, 30_000) - max(s.start, 20_000))
    assert overlap >= 0.9 * 10_000
    assert s.inr_est_db == pytest.approx(10.0, abs=0.5)


def test_two_bursts_in_order():
    segs = iqio.detect_bursts(_bursty([(5_000, 12_000), (30_000, 40_000)]))
    assert len(segs) == 2
    assert segs[0].stop <= segs[1].start
    assert segs[0].start < 12_000 < segs[1].start


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_detection_is_translation_equivariant(shift):
    x = _bursty([(15_000, 25_000)], n=50_000)
    base = iqio.detect_bursts(x)
    moved = iqio.detect_bursts(np.roll(x, shift))
    assert len(base) == len(moved) == 1
    assert abs(moved[0].start - base[0].start - shift) <= 1
    assert abs(moved[0].length - base[0].length) <= 2


def test_detect_bursts_validation():
    with pytest.raises(ValueError):
        iqio.detect_bursts(np.ones(100), window=4)
    assert iqio.detect_bursts(np.ones(10)) == []


@pytest.mark.parametrize("inr_db", [0.0, 20.0])
def test_estimate_inr_accuracy(inr_db):
    noise = awgn(200_000, 1.0, 1).samples
    seg = awgn(200_000, 1.0, 2).samples + math.sqrt(10 ** (inr_db / 10)) * np.exp(0.01j * np.arange(200_000))
    assert iqio.estimate_inr(seg, noise) == pytest.approx(inr_db, abs=0.3)


def test_estimate_inr_floor():
    noise = awgn(100_000, 1.0, 1).samples
    assert iqio.estimate_inr(noise, noise) == iqio.INR_FLOOR_DB
    tiny = awgn(400_000, 1.0, 2).samples + math.sqrt(1e-3) * np.exp(0.02j * np.arange(400_000))
    assert iqio.estimate_inr(tiny, awgn(400_000, 1.0, 2).samples) == pytest.approx(-30.0, abs=0.3)
    with pytest.raises(ValueError):
        iqio.estimate_inr([], noise)


def test_psd_tone_reads_zero_db():
    n = np.arange(1 << 16)
    x = np.exp(2j * np.pi * 0.125 * n)
    f, p = iqio.export_psd(x, 1024)
    k = int(np.argmax(p))
    assert f[k] == pytest.approx(0.125)
    assert p[k] == pytest.approx(0.0, abs=0.1)
    assert np.all(np.diff(f) > 0) and f[0] == -0.5


def test_psd_white_noise_flat_and_parseval():
    x = awgn(1 << 18, 2.0, 9).samples
    _, p = iqio.export_psd(x, 512, scaling="density")
    assert np.max(np.abs(p - 10 * np.log10(2.0))) < 1.0
    assert np.sum(10 ** (p / 10)) / 512 == pytest.approx(2.0, rel=0.01)
    with pytest.raises(ValueError):
        iqio.export_psd(x, 1000)
    with pytest.raises(ValueError):
        iqio.export_psd(x, 512, overlap=1.0)
    with pytest.raises(ValueError):
        iqio.export_psd(x, 512, scaling="power")


def test_psd_csv_round_trip_and_spectrogram(tmp_path):
    x = awgn(8192, 1.0, 1).samples
    f, p = iqio.export_psd(x, 256)
    path = tmp_path / "psd.csv"
    iqio.write_psd_csv(path, f, p)
    f2, p2 = iqio.read_psd_csv(path)
    assert np.array_equal(f, f2) and np.array_equal(p, p2)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n")
    with pytest.raises(ValueError):
        iqio.read_psd_csv(bad)
    fs, t, s = iqio.export_spectrogram(x, 256)
    assert s.shape == (len(fs), len(t))
