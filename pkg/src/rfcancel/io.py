"""Raw IQ ingestion, burst detection, INR estimation and spectral export."""

from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .signals import SignalBuffer, as_samples

__all__ = [
    "IqFormat",
    "IqRecording",
    "BurstSegment",
    "read_iq",
    "write_iq",
    "detect_bursts",
    "estimate_inr",
    "export_psd",
    "export_spectrogram",
    "write_psd_csv",
    "read_psd_csv",
    "DEFAULT_THRESHOLD_DB",
    "INR_FLOOR_DB",
]

DEFAULT_THRESHOLD_DB = 6.0
INR_FLOOR_DB = -30.0


class IqFormat(str, enum.Enum):
    FLOAT32 = "float32"
    INT16 = "int16"

    @classmethod
    def parse(cls, value) -> "IqFormat":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-interleaved", "")
        for f in cls:
            if f.value == key:
                return f
        raise ValueError(f"unknown IQ format {value!r}")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<f4") if self is IqFormat.FLOAT32 else np.dtype("<i2")

    @property
    def frame_bytes(self) -> int:
        return 2 * self.dtype.itemsize


@dataclass(frozen=True)
class IqRecording:
    """Interleaved little-endian IQ capture."""

    format: IqFormat
    sample_rate: float
    samples: SignalBuffer

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class BurstSegment:
    start: int
    length: int
    inr_est_db: float

    @property
    def stop(self) -> int:
        return self.start + self.length


def read_iq(path, format="float32", sample_rate: float = 1.0) -> IqRecording:
    """Decode a raw interleaved IQ file; int16 values are scaled by 1/32768."""
    fmt = IqFormat.parse(format)
    size = os.path.getsize(path)
    if size % fmt.frame_bytes:
        raise ValueError(f"{path}: {size} bytes is not a whole number of {fmt.value} IQ frames")
    raw = np.fromfile(path, dtype=fmt.dtype)
    iq = raw.astype(np.float64)
    if fmt is IqFormat.INT16:
        iq /= 32768.0
    # a view keeps signed zeros that re + 1j * im would fold to +0
    x = np.ascontiguousarray(iq).view(np.complex128)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{path}: non-finite samples")
    return IqRecording(fmt, float(sample_rate), SignalBuffer(x, float(sample_rate)))


def write_iq(path, samples, format="float32") -> None:
    """Write samples as interleaved IQ; int16 output is rounded and saturated."""
    fmt = IqFormat.parse(format)
    x = as_samples(samples)
    iq = np.empty(2 * len(x))
    iq[0::2] = x.real
    iq[1::2] = x.imag
    if fmt is IqFormat.INT16:
        iq = np.clip(np.round(iq * 32768.0), -32768, 32767)
    iq.astype(fmt.dtype).tofile(path)


def estimate_inr(segment, noise) -> float:
    """``10 log10((P_seg - P_noise) / P_noise)``, clamped below at -30 dB."""
    seg = as_samples(segment)
    nz = as_samples(noise)
    if seg.size == 0 or nz.size == 0:
        raise ValueError("segment and noise must be non-empty")
    p_seg = float(np.mean(np.abs(seg) ** 2))
    p_n = float(np.mean(np.abs(nz) ** 2))
    if p_n <= 0:
        raise ValueError("noise power must be positive")
    excess = (p_seg - p_n) / p_n
    if excess <= 10 ** (INR_FLOOR_DB / 10):
        return INR_FLOOR_DB
    return 10 * math.log10(excess)


def detect_bursts(
    rec,
    window: int = 256,
    threshold_db: float = DEFAULT_THRESHOLD_DB,
    min_len: int = 1024,
) -> list[BurstSegment]:
    """Energy detector against a percentile noise floor.

    The moving average of ``|x|**2`` over ``window`` samples is compared with
    its 10th percentile raised by ``threshold_db``.  Runs above threshold
    at least ``min_len`` long become segments, each with an INR estimate
    against the samples outside every segment.
    """
    x = as_samples(rec.samples if isinstance(rec, IqRecording) else rec)
    if window < 8:
        raise ValueError("window must be at least 8 samples")
    if len(x) < window:
        return []
    c = np.concatenate([[0.0], np.cumsum(np.abs(x) ** 2)])
    avg = (c[window:] - c[:-window]) / window
    floor = float(np.percentile(avg, 10))
    if floor <= 0:
        floor = float(np.finfo(float).tiny)
    above = np.concatenate([[False], avg > floor * 10 ** (threshold_db / 10), [False]])
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    half = window // 2
    spans = []
    for s, e in zip(edges[0::2], edges[1::2]):
        lo, hi = s + half, min(len(x), e + half)
        if hi - lo >= min_len:
            spans.append((lo, hi))
    if not spans:
        return []
    mask = np.ones(len(x), dtype=bool)
    for lo, hi in spans:
        mask[lo:hi] = False
    noise = x[mask] if np.count_nonzero(mask) >= window else None
    out = []
    for lo, hi in spans:
        if noise is not None:
            inr = estimate_inr(x[lo:hi], noise)
        else:
            inr = estimate_inr(x[lo:hi], np.full(1, math.sqrt(floor)))
        out.append(BurstSegment(int(lo), int(hi - lo), inr))
    return out


def _welch_args(nfft: int, overlap: float) -> dict:
    if nfft < 2 or nfft & (nfft - 1):
        raise ValueError("nfft must be a power of two")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be a fraction in [0, 1)")
    return dict(window="hann", nperseg=nfft, noverlap=int(round(overlap * nfft)), detrend=False, return_onesided=False)


def export_psd(buffer, nfft: int = 1024, overlap: float = 0.5, scaling: str = "spectrum") -> tuple[np.ndarray, np.ndarray]:
    """Welch PSD on a Hann window, returned as ``(freq_norm, power_db)`` from -0.5 to 0.5.

    ``scaling="spectrum"`` reads a unit-power tone as 0 dB at its bin.
    ``scaling="density"`` is power per unit normalised frequency, so the sum
    of the linear values times ``1 / nfft`` equals the mean power.
    """
    if scaling not in ("spectrum", "density"):
        raise ValueError("scaling must be 'spectrum' or 'density'")
    x = as_samples(buffer)
    if len(x) < nfft:
        raise ValueError("buffer shorter than nfft")
    f, p = sps.welch(x, fs=1.0, scaling=scaling, **_welch_args(nfft, overlap))
    f = np.fft.fftshift(f)
    p = np.fft.fftshift(p)
    with np.errstate(divide="ignore"):
        return f, 10 * np.log10(p)


def export_spectrogram(
    buffer, nfft: int = 256, overlap: float = 0.5
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Short-time power grid ``(freq_norm, time_samples, power_db[freq, time])``."""
    x = as_samples(buffer)
    if len(x) < nfft:
        raise ValueError("buffer shorter than nfft")
    f, t, s = sps.spectrogram(x, fs=1.0, scaling="spectrum", mode="psd", **_welch_args(nfft, overlap))
    f = np.fft.fftshift(f)
    s = np.fft.fftshift(s, axes=0)
    with np.errstate(divide="ignore"):
        return f, t, 10 * np.log10(s)


def write_psd_csv(path, freq, power_db) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_norm", "power_db"])
        for f, p in zip(freq, power_db):
            w.writerow([repr(float(f)), repr(float(p))])


def read_psd_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        if next(rd, None) != ["freq_norm", "power_db"]:
            raise ValueError(f"{path}: not a PSD table")
        rows = [(float(a), float(b)) for a, b in rd]
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]
