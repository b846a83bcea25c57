"""Kolmogorov-Smirnov modulation classifier and empirical P_c calibration."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

from .estimators import power_law_tone
from .signals import ALL_SCHEMES, Scheme, make_constellation

__all__ = [
    "ClassifierVerdict",
    "PcTable",
    "ks_statistic",
    "magnitude_cdf",
    "phase_cdf",
    "cut_rotation",
    "classify_modulation",
    "classify_burst",
    "trim_edges",
    "edge_span",
    "calibrate_pc",
    "MIN_CONFIDENT_LENGTH",
]

MIN_CONFIDENT_LENGTH = 100
GRID_POINTS = 2048
SIGMA_FLOOR = 0.02


@dataclass
class ClassifierVerdict:
    scheme: Scheme
    ks_distances: dict[Scheme, float]
    rotation: int = 0
    theta: float = 0.0
    low_confidence: bool = False


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Two-sided one-sample K-S distance between the samples and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 2:
        raise ValueError("need at least two samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    n = x.size
    F = np.clip(np.asarray(cdf(x), dtype=float), 0.0, 1.0)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def _rings(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mags = np.round(np.abs(points), 12)
    rings, counts = np.unique(mags, return_counts=True)
    return rings, counts / counts.sum()


def magnitude_cdf(scheme: Scheme, sigma2: float) -> Callable[[np.ndarray], np.ndarray]:
    """CDF of ``|s + n|`` with ``n`` circular Gaussian of variance ``sigma2``."""
    rings, w = _rings(make_constellation(scheme).points)
    s = math.sqrt(sigma2 / 2.0)
    nc = (rings / s) ** 2

    def cdf(v):
        v = np.asarray(v, dtype=float)
        return special.chndtr((v[..., None] / s) ** 2, 2, nc) @ w

    return cdf


def _point_phase_pdf(psi: np.ndarray, rho: float) -> np.ndarray:
    """Phase density of a point with SNR ``rho`` in Gaussian noise, relative to its angle."""
    c = np.cos(psi)
    sr = math.sqrt(rho)
    return np.exp(-rho) / (2 * np.pi) + sr * c / (2 * math.sqrt(np.pi)) * np.exp(
        -rho * np.sin(psi) ** 2
    ) * special.erfc(-sr * c)


def cut_rotation(points: np.ndarray) -> float:
    """Rotation that puts the widest angular gap of ``points`` on the branch cut at ``pi``."""
    ang = np.sort(np.unique(np.round(np.angle(points), 12)))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    i = int(np.argmax(gaps))
    return float(np.pi - (ang[i] + gaps[i] / 2))


def phase_cdf(scheme: Scheme, sigma2: float, rotation: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """CDF on ``(-pi, pi]`` of the phase of ``s + n``, mixed over the rotated constellation."""
    pts = make_constellation(scheme).points * np.exp(1j * rotation)
    grid = np.linspace(-np.pi, np.pi, GRID_POINTS)
    pdf = np.zeros_like(grid)
    for p in pts:
        psi = np.angle(np.exp(1j * (grid - np.angle(p))))
        pdf += _point_phase_pdf(psi, abs(p) ** 2 / sigma2)
    pdf /= len(pts)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return lambda v: np.interp(v, grid, cdf)


def _dither(n: int, var: float) -> np.ndarray:
    rng = np.random.default_rng(0x5EED)
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(var / 2.0)


DD_SWITCH = 0.03


def _dd_scale(y: np.ndarray, const, s_pow: float, sigma2: float) -> tuple[float, float]:
    """Decision-directed scale and noise for a multi-ring hypothesis.

    The moment split leans on the constellation kurtosis, and the sample
    kurtosis of a few hundred QAM symbols scatters enough to swamp a small
    noise term.  Above roughly 15 dB the decision-directed fit is cleaner;
    below it decision errors bias it low, so the moment split is kept.
    """
    m = const.scheme.symmetry
    amp = math.sqrt(s_pow)
    th = float(np.angle(np.sum(y**m) * np.conj(const.moment(m))) / m)
    for _ in range(4):
        u = y * np.exp(-1j * th)
        sh = const.decide(u / amp)
        e = float(np.sum(np.abs(sh) ** 2))
        new = float(np.real(np.sum(u * np.conj(sh)))) / e
        if not new > 0:
            return s_pow, sigma2
        amp = new
        th = float(np.angle(np.sum(y * np.conj(sh))))
    u = y * np.exp(-1j * th)
    dd = float(np.mean(np.abs(u - amp * const.decide(u / amp)) ** 2)) / amp**2
    if dd < DD_SWITCH:
        return amp**2, dd
    return s_pow, sigma2


def classify_modulation(
    y,
    snr_est: float | None = None,
    candidates: Sequence[Scheme | str] = ALL_SCHEMES,
) -> ClassifierVerdict:
    """Pick the candidate whose magnitude and phase CDFs best fit ``y``.

    ``y`` holds symbol-spaced samples with frequency and timing removed.
    Scale and carrier phase are estimated per hypothesis.  The score of a
    candidate is the larger of its magnitude and phase K-S distances; ties
    are broken by their sum.
    """
    y = np.asarray(y, dtype=complex)
    if y.size < 2:
        raise ValueError("need at least two symbols")
    cands = [Scheme.parse(c) for c in candidates]
    a2 = np.abs(y) ** 2
    m2 = float(np.mean(a2))
    m4 = float(np.mean(a2 * a2))
    if m2 <= 0:
        raise ValueError("all-zero symbol sequence")
    dists: dict[Scheme, float] = {}
    keys = {}
    thetas = {}
    for c in cands:
        const = make_constellation(c)
        if snr_est is not None:
            s_pow = m2 * snr_est / (1.0 + snr_est)
        else:
            kurt = float(np.mean(np.abs(const.points) ** 4))
            s2 = (m4 - 2.0 * m2 * m2) / (kurt - 2.0)
            s_pow = math.sqrt(s2) if s2 > 0 else 0.0
        s_pow = min(max(s_pow, 0.05 * m2), m2)
        sigma2 = (m2 - s_pow) / s_pow
        if snr_est is None and not c.is_psk:
            s_pow, sigma2 = _dd_scale(y, const, s_pow, sigma2)
        u = y / math.sqrt(s_pow)
        if sigma2 < SIGMA_FLOOR**2:
            # near-noiseless data has atoms the tabulated phase CDF cannot resolve;
            # a fixed dither lifts both data and model to the floor
            u = u + _dither(len(u), SIGMA_FLOOR**2 - sigma2)
            sigma2 = SIGMA_FLOOR**2
        m = c.symmetry
        theta = float(np.angle(np.sum(u**m) * np.conj(const.moment(m))) / m)
        thetas[c] = theta
        d_mag = ks_statistic(np.abs(u), magnitude_cdf(c, sigma2))
        # a branch cut through a constellation point would split its phase cluster
        rot = cut_rotation(const.points)
        d_ph = ks_statistic(np.angle(u * np.exp(1j * (rot - theta))), phase_cdf(c, sigma2, rot))
        dists[c] = max(d_mag, d_ph)
        keys[c] = (dists[c], d_mag + d_ph)
    best = min(cands, key=lambda c: keys[c])
    return ClassifierVerdict(
        best, dists, 0, thetas[best], low_confidence=y.size < MIN_CONFIDENT_LENGTH
    )


def edge_span(
    y: np.ndarray, width: int = 8, rel: float = 0.25, floor: float | None = None
) -> tuple[int, int]:
    """Index range ``[lo, hi)`` of ``y`` left after dropping out-of-burst ends.

    The smoothed power must reach ``rel`` of its 90th percentile; then single
    symbols below ``floor`` (default the same level) are peeled off each end.
    """
    n = len(y)
    if n <= width:
        return 0, n
    p = np.abs(y) ** 2
    pw = np.convolve(p, np.ones(width) / width, mode="same")
    ref = np.percentile(pw, 90)
    if ref <= 0:
        return 0, n
    hits = np.flatnonzero(pw >= rel * ref)
    lo, hi = int(hits[0]), int(hits[-1]) + 1
    level = rel * ref if floor is None else floor
    # smoothing blurs the edges; symbols just outside a burst carry noise only
    while hi - lo > width and p[lo] < level:
        lo += 1
    while hi - lo > width and p[hi - 1] < level:
        hi -= 1
    return lo, hi


def trim_edges(y: np.ndarray, width: int = 8, rel: float = 0.25) -> np.ndarray:
    """Drop leading and trailing symbols outside the burst (noise or pulse ramps)."""
    lo, hi = edge_span(y, width, rel)
    return y[lo:hi]


def classify_burst(
    y, power: int, candidates: Sequence[Scheme | str] = ALL_SCHEMES
) -> ClassifierVerdict:
    """Classify matched-filter samples taken over a whole burst.

    Edge symbols outside the burst are dropped first, then any frequency
    drift left by a short synchronisation window is removed with the
    ``power``-law line.
    """
    y = trim_edges(np.asarray(y, dtype=complex))
    if len(y) < 2:
        raise ValueError("need at least two in-burst symbols")
    # the long span exposes residual drift the window estimate cannot see
    f = power_law_tone(y, power)[0]
    y = y * np.exp(-2j * np.pi * f / power * np.arange(len(y)))
    return classify_modulation(y, candidates=candidates)


# ---------------------------------------------------------------- P_c table

PC_COLUMNS = ("inr_db", "len_symbols", "pc", "trials")


@dataclass
class PcTable:
    """Empirical probability of correct classification per (INR, length)."""

    rows: list[tuple[float, int, float, int]] = field(default_factory=list)

    def __post_init__(self):
        for _, _, pc, _ in self.rows:
            if not 0.0 <= pc <= 1.0:
                raise ValueError("pc values must lie in [0, 1]")

    def lookup(self, inr_db: float, len_symbols: int | None = None) -> float:
        """Linear interpolation in dB at the nearest calibrated length, clamped at the edges."""
        if not self.rows:
            raise ValueError("empty table")
        lens = sorted({r[1] for r in self.rows})
        if len_symbols is None:
            ln = lens[-1]
        else:
            ln = min(lens, key=lambda v: (abs(v - len_symbols), -v))
        pts = sorted((r[0], r[2]) for r in self.rows if r[1] == ln)
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        return float(np.interp(inr_db, xs, ys))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PC_COLUMNS)
        for inr, ln, pc, n in self.rows:
            w.writerow([repr(float(inr)), int(ln), repr(float(pc)), int(n)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PcTable":
        rd = csv.DictReader(io.StringIO(text))
        if tuple(rd.fieldnames or ()) != PC_COLUMNS:
            raise ValueError("unexpected P_c table header")
        return cls([(float(r["inr_db"]), int(r["len_symbols"]), float(r["pc"]), int(r["trials"])) for r in rd])

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "PcTable":
        with open(path, newline="") as fh:
            return cls.from_csv(fh.read())


def calibrate_pc(
    grid: Iterable[tuple[float, int]],
    trials: int,
    seed: int,
    scheme: Scheme | str = Scheme.QPSK,
    candidates: Sequence[Scheme | str] = ALL_SCHEMES,
    P: int = 82,
    rolloff: float = 0.4,
    span: int = 21,
    sync_symbols: int = 69,
    noise_var: float = 1.0,
) -> PcTable:
    """Monte-Carlo P_c through blind synchronisation and classification.

    Each trial synthesises a burst of ``len_symbols`` symbols, synchronises
    on a ``sync_symbols`` window at its centre and classifies the whole burst.
    """
    from .estimators import NoLockError, estimate_freq_timing_sc, matched_filter_symbols
    from .signals import ScenarioConfig, compose_scenario

    if trials < 1:
        raise ValueError("trials must be positive")
    scheme = Scheme.parse(scheme)
    rows = []
    for gi, (inr_db, length) in enumerate(grid):
        hits = 0
        for t in range(trials):
            tseed = int(np.random.SeedSequence([seed, gi, t]).generate_state(1)[0])
            cfg = ScenarioConfig(
                scheme=scheme, inr_db=inr_db, P=P, rolloff=rolloff, span=span,
                K=int(length), guard=0, noise_var=noise_var, seed=tseed,
            )
            sc = compose_scenario(cfg)
            pulse = cfg.pulse
            a0, n0 = sc.windows[0]
            sync_len = min(sync_symbols, int(length)) * P
            win = (a0 + (n0 - sync_len) // 2, sync_len)
            try:
                res = estimate_freq_timing_sc(sc.r, pulse, win)
                y, _ = matched_filter_symbols(sc.r, pulse, res.omega_hat, res.epsilon_hat, a0, a0 + n0)
                verdict = classify_burst(y, res.power, candidates)
                hits += verdict.scheme is scheme
            except (NoLockError, ValueError):
                pass
        rows.append((float(inr_db), int(length), hits / trials, trials))
    return PcTable(rows)
