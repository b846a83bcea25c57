"""Blind synchronisation, amplitude/phase estimation, joint refinement and CRLBs.

Timing conventions: for single-carrier signals ``epsilon_hat`` is the absolute
sample position of a symbol centre, reported modulo ``P``; for OFDM it is the
start of a symbol (first cyclic-prefix sample) modulo the symbol length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .signals import OfdmConfig, PulseShape, Scheme, as_samples, make_constellation

__all__ = [
    "NoLockError",
    "SyncEstimate",
    "SyncResult",
    "OfdmSyncResult",
    "matched_filter_response",
    "estimate_freq_timing_sc",
    "estimate_freq_timing_ofdm",
    "estimate_amp_phase",
    "matched_filter_symbols",
    "m2m4_snr",
    "power_law_tone",
    "refine_sync",
    "crlb_single_carrier",
    "crlb_timing",
    "crlb_freq_ofdm",
    "crlb_timing_ofdm",
    "pulse_derivative_energy",
]


class NoLockError(RuntimeError):
    """Raised when a synchroniser cannot find the interferer."""


@dataclass
class SyncEstimate:
    """Estimated waveform parameters plus predicted error variances.

    ``theta_hat`` is referenced to sample ``origin``; ``epsilon_hat`` follows
    the module timing convention.
    """

    A_hat: float
    omega_hat: float
    theta_hat: float
    epsilon_hat: float
    origin: float = 0.0
    var_A: float = math.nan
    var_omega: float = math.nan
    var_theta: float = math.nan
    var_epsilon: float = math.nan


@dataclass
class SyncResult:
    omega_hat: float
    epsilon_hat: float
    power: int = 4
    strength: float = 0.0

    def __iter__(self):
        yield self.omega_hat
        yield self.epsilon_hat


@dataclass
class OfdmSyncResult:
    omega_hat: float
    epsilon_hat: float
    rho: float
    starts: list[int] = field(default_factory=list)
    omegas: list[float] = field(default_factory=list)

    def __iter__(self):
        yield self.omega_hat
        yield self.epsilon_hat


# ---------------------------------------------------------------- CRLBs


def crlb_single_carrier(inr_eff: float, N: float) -> dict[str, float]:
    """Bounds on relative amplitude, frequency and phase error variances."""
    x = inr_eff * N
    return {
        "sigmaA2_over_A2": 1.0 / (2.0 * x),
        "sigma_omega2": 6.0 / (inr_eff * N * (N**2 - 1.0)),
        "sigma_theta2": 1.0 / (2.0 * x),
    }


def crlb_timing(inr_eff: float, N: float, Ep_prime: float) -> float:
    """Timing bound in squared symbol periods for known symbols."""
    if not Ep_prime > 0:
        raise ValueError("Ep_prime must be positive")
    return 1.0 / (2.0 * inr_eff * N * Ep_prime)


def crlb_freq_ofdm(inr_eff: float, N: float, kappa: float) -> float:
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    return (1.0 + kappa) ** 3 / (inr_eff * kappa * N**3)


def crlb_timing_ofdm(inr_eff: float, N: float) -> float:
    """Decision-aided OFDM timing bound, in squared units of ``P`` samples.

    Counts only the part of the delay error that a joint phase estimate
    cannot absorb, rescaled so it plugs into the uncentred subcarrier
    average used by :func:`rfcancel.metrics.timing_gain_ofdm`.
    """
    return 3.0 / (8.0 * math.pi**2 * inr_eff * N)


def pulse_derivative_energy(pulse: PulseShape) -> float:
    """``P**2 * sum |p(n) - p(n-1)|**2`` with the taps zero-extended."""
    taps = np.asarray(pulse.taps, dtype=float)
    d = np.diff(np.concatenate([[0.0], taps, [0.0]]))
    return float(pulse.P**2 * np.sum(d**2))


# ---------------------------------------------------------------- helpers


def _freq_grid(n: int) -> np.ndarray:
    return np.fft.fftfreq(n)


def matched_filter_response(n: int, pulse: PulseShape) -> np.ndarray:
    """Zero-phase DFT response of the matched filter on an ``n``-point grid."""
    taps = pulse.taps
    h = np.zeros(n)
    h[: len(taps)] = taps
    return np.fft.fft(h) * np.exp(2j * np.pi * _freq_grid(n) * pulse.delay)


def m2m4_snr(y: np.ndarray, kurtosis: float) -> tuple[float, float]:
    """Moment-based split of ``mean|y|^2`` into signal and noise power."""
    a = np.abs(y) ** 2
    m2 = float(np.mean(a))
    m4 = float(np.mean(a * a))
    if m2 <= 0:
        return 0.0, 0.0
    if abs(kurtosis - 2.0) < 1e-9:
        return m2, 0.0
    s2 = (m4 - 2.0 * m2 * m2) / (kurtosis - 2.0)
    s = math.sqrt(s2) if s2 > 0 else 0.0
    s = min(max(s, 0.05 * m2), m2)
    return s, m2 - s


LINE_GATE = 8.0
LINE_RATIO = 0.5


def _parabolic(mag: np.ndarray, k: int) -> float:
    n = len(mag)
    a, b, c = mag[(k - 1) % n], mag[k], mag[(k + 1) % n]
    den = a - 2 * b + c
    return 0.0 if den == 0 else 0.5 * (a - c) / den


def power_law_tone(y: np.ndarray, m: int, oversample: int = 8) -> tuple[float, complex, float]:
    """Peak of the ``m``-th power spectrum of ``y``.

    Returns the frequency (cycles per sample of ``y``), the complex line
    value at that frequency and the normalised line strength.
    """
    v = y**m
    n = len(v)
    nfft = 1 << int(math.ceil(math.log2(max(n, 2) * oversample)))
    spec = np.fft.fft(v, nfft)
    mag = np.abs(spec)
    k = int(np.argmax(mag))
    f = (k + _parabolic(mag, k)) / nfft
    f = (f + 0.5) % 1.0 - 0.5
    for _ in range(2):
        idx = np.arange(n)
        ph = np.exp(-2j * np.pi * f * idx)
        c0 = np.sum(v * ph)
        c1 = np.sum(-2j * np.pi * idx * v * ph)
        c2 = np.sum(-4 * np.pi**2 * idx**2 * v * ph)
        g = 2 * np.real(np.conj(c0) * c1)
        h = 2 * np.real(np.conj(c1) * c1 + np.conj(c0) * c2)
        if h >= 0:
            break
        f -= g / h
    line = complex(np.sum(v * np.exp(-2j * np.pi * f * np.arange(n))))
    den = float(np.sum(np.abs(v)))
    return float(f), line, abs(line) / den if den > 0 else 0.0


def _outer_ring(ys: np.ndarray) -> np.ndarray:
    """``ys`` with all but the largest-magnitude quarter zeroed."""
    mag = np.abs(ys)
    return np.where(mag >= np.quantile(mag, 0.75), ys, 0.0)


def _golden(fun, a: float, b: float, tol: float) -> float:
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fun(d)
    return (a + b) / 2


class _Segment:
    """Window of a buffer with margins, matched-filtered in the DFT domain."""

    def __init__(self, x: np.ndarray, pulse: PulseShape, window: tuple[int, int]):
        a, n = window
        P = pulse.P
        margin = int(math.ceil(pulse.delay)) + 2 * P
        self.lo = max(0, a - margin)
        self.hi = min(len(x), a + n + margin)
        self.seg = x[self.lo : self.hi]
        self.a, self.n, self.P = a, n, P
        self.pulse = pulse
        self.f = _freq_grid(len(self.seg))
        self.H = matched_filter_response(len(self.seg), pulse)
        self.t = np.arange(self.lo, self.hi, dtype=float)

    def mf(self, omega: float) -> np.ndarray:
        """Spectrum of the matched-filter output after removing ``omega``."""
        return np.fft.fft(self.seg * np.exp(-1j * omega * self.t)) * self.H

    def symbols(self, spec: np.ndarray, tau: float, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
        """Samples at ``tau + kP`` inside ``[lo, hi)`` (absolute positions)."""
        P = self.P
        k0 = math.ceil((lo - tau) / P)
        k1 = math.floor((hi - 1e-9 - tau) / P)
        pos = tau + P * np.arange(k0, k1 + 1)
        base = math.floor(tau)
        frac = tau - base
        shifted = np.fft.ifft(spec * np.exp(2j * np.pi * self.f * frac))
        idx = np.round(pos - frac).astype(int) - self.lo
        ok = (idx >= 0) & (idx < len(shifted))
        return shifted[idx[ok]], pos[ok]


# ---------------------------------------------------------------- single carrier


def _coarse_omega(seg: _Segment, max_offset: float) -> float:
    """Frequency shift that maximises the matched-filter output energy."""
    L = len(seg.seg)
    X = np.abs(np.fft.fft(seg.seg)) ** 2
    H = np.abs(seg.H) ** 2
    kmax = int(math.ceil(max_offset * L / (2 * np.pi))) + 2
    shifts = np.arange(-kmax, kmax + 1)
    e = np.array([np.dot(np.roll(X, -k), H) for k in shifts])
    i = int(np.argmax(e))
    d = _parabolic(e, i) if 0 < i < len(e) - 1 else 0.0
    return 2 * np.pi * (shifts[i] + d) / L


def estimate_freq_timing_sc(
    r,
    pulse: PulseShape,
    window: tuple[int, int] | None = None,
    powers: tuple[int, ...] = (2, 4, 8),
    iterations: int = 2,
    max_offset: float | None = None,
) -> SyncResult:
    """Blind carrier-frequency and symbol-timing estimate for one window.

    The shift maximising matched-filter output energy gives a coarse
    frequency (searched over ``+-max_offset`` rad/sample, default a quarter
    of the symbol rate), the symbol-rate cyclic component of ``|y|**2`` gives a coarse
    timing phase, and both are then refined by maximising the power-law
    spectral line of the symbol-spaced matched-filter samples.
    """
    x = as_samples(r)
    if window is None:
        window = (0, len(x))
    a, n = window
    P = pulse.P
    if n < 4 * P or a < 0 or a + n > len(x):
        raise ValueError("window must hold several symbols and lie inside the buffer")
    if max_offset is None:
        max_offset = 2 * np.pi * 0.25 / P
    seg = _Segment(x, pulse, window)
    if not np.any(seg.seg[a - seg.lo : a - seg.lo + n]):
        raise NoLockError("no signal energy in the window")
    core = slice(a - seg.lo, a - seg.lo + n)

    omega = _coarse_omega(seg, max_offset)
    spec = seg.mf(omega)
    y = np.fft.ifft(spec)[core]
    t = seg.t[core]
    cyc = np.sum(np.abs(y) ** 2 * np.exp(-2j * np.pi * t / P))
    if abs(cyc) == 0:
        raise NoLockError("no symbol-rate cyclic component")
    tau = (-np.angle(cyc) * P / (2 * np.pi)) % P

    m_best, outer, strength = powers[0], False, 0.0
    for it in range(iterations + 1):
        ys, _ = seg.symbols(spec, tau, a, a + n)
        if it == 0:
            # QAM self-noise buries the fourth-power line over short windows; the corners alone carry it cleanly
            best = {}
            for m in powers:
                for use_outer in (False, True) if m >= 4 else (False,):
                    v = _outer_ring(ys) if use_outer else ys
                    den = float(np.sum(np.abs(v) ** (2 * m)))
                    fm, line, _ = power_law_tone(v, m)
                    snr = abs(line) ** 2 / den if den > 0 else 0.0
                    if m not in best or snr > best[m][0]:
                        best[m] = (snr, fm, use_outer)
            if max(v[0] for v in best.values()) <= 0:
                raise NoLockError("no power-law line")
            # squared QPSK and fourth-power 8PSK are real-valued up to rotation, so their
            # noise peaks follow a one-degree chi-square; the gate sits above that tail
            gate = 2.0 * math.log(len(ys)) + LINE_GATE
            pool = [m for m in powers if best[m][0] >= gate]
            if not pool:
                # weak lines (dense QAM over short windows): a true squared line is never weak
                pool = [m for m in powers if m >= 4] or list(powers)
            top = max(best[m][0] for m in pool)
            m_best = next(m for m in pool if best[m][0] >= LINE_RATIO * top)
            _, f, outer = best[m_best]
        else:
            f = power_law_tone(_outer_ring(ys) if outer else ys, m_best)[0]
        omega += 2 * np.pi * f / (m_best * P)
        spec = seg.mf(omega)

        def cost(tt):
            v, _ = seg.symbols(spec, tt, a, a + n)
            vm = (_outer_ring(v) if outer else v) ** m_best
            return abs(np.sum(vm)) / max(np.sum(np.abs(vm)), 1e-300)

        half = P / 4 if it == 0 else P / 16
        tau = _golden(cost, tau - half, tau + half, 1e-3)
        strength = cost(tau)
    return SyncResult(float(omega), float(tau % P), int(m_best), float(strength))


def matched_filter_symbols(
    r, pulse: PulseShape, omega: float, tau: float, lo: int, hi: int
) -> tuple[np.ndarray, np.ndarray]:
    """Matched-filter samples at ``tau + kP`` inside ``[lo, hi)`` after removing ``omega``.

    Returns the samples and their absolute positions.
    """
    x = as_samples(r)
    lo, hi = max(0, int(lo)), min(len(x), int(hi))
    seg = _Segment(x, pulse, (lo, hi - lo))
    return seg.symbols(seg.mf(omega), tau, lo, hi)


def estimate_amp_phase(y, scheme: Scheme | str, iterations: int = 8) -> tuple[float, float]:
    """Amplitude and phase of symbol-spaced samples under a constellation hypothesis."""
    y = np.asarray(y, dtype=complex)
    if y.size == 0:
        raise ValueError("empty sequence")
    const = make_constellation(scheme)
    m = const.scheme.symmetry
    ref = const.moment(m)
    theta = float(np.angle(np.sum(y**m) * np.conj(ref)) / m)
    kurt = float(np.mean(np.abs(const.points) ** 4))
    s_pow, _ = m2m4_snr(y, kurt)
    amp = math.sqrt(s_pow) if s_pow > 0 else math.sqrt(float(np.mean(np.abs(y) ** 2)))
    if amp == 0:
        return 0.0, theta
    for _ in range(iterations):
        u = y * np.exp(-1j * theta)
        s_hat = const.decide(u / amp)
        e = float(np.sum(np.abs(s_hat) ** 2))
        new_amp = float(np.real(np.sum(u * np.conj(s_hat)))) / e
        if not const.scheme.is_psk:
            theta = float(np.angle(np.sum(y * np.conj(s_hat))))
        if new_amp <= 0:
            break
        done = abs(new_amp - amp) <= 1e-12 * amp
        amp = new_amp
        if done and const.scheme.is_psk:
            break
    return float(amp), float(theta)


# ---------------------------------------------------------------- joint refinement


def refine_sync(
    r,
    base_spectrum: np.ndarray,
    window: tuple[int, int],
    A: float,
    omega: float,
    theta: float,
    delay: float,
    origin: float,
    fit_omega: bool = True,
    iterations: int = 8,
) -> tuple[float, float, float, float, np.ndarray]:
    """Least-squares fit of ``A u(n - delay) exp(j(omega (n - origin) + theta))``.

    ``base_spectrum`` is the DFT of the undelayed replica ``u`` on the grid of
    ``r``.  Gauss-Newton iterations over the window samples only.  Returns the
    refined ``(A, omega, theta, delay)`` and the model over the whole buffer.
    """
    x = as_samples(r)
    L = len(x)
    a, n = window
    f = _freq_grid(L)
    t = np.arange(a, a + n) - origin
    xw = x[a : a + n]
    params = np.array([A, omega, theta, delay], dtype=float)
    active = [0, 1, 2, 3] if fit_omega else [0, 2, 3]

    def model(p):
        ramp = np.exp(-2j * np.pi * f * p[3])
        u = np.fft.ifft(base_spectrum * ramp)
        return u, ramp

    for _ in range(iterations):
        u, ramp = model(params)
        du = np.fft.ifft(base_spectrum * ramp * (-2j * np.pi * f))[a : a + n]
        rot = np.exp(1j * (params[1] * t + params[2]))
        m = params[0] * u[a : a + n] * rot
        e = xw - m
        cols = {
            0: u[a : a + n] * rot,
            1: 1j * t * m,
            2: 1j * m,
            3: params[0] * du * rot,
        }
        J = np.stack([cols[i] for i in active], axis=1)
        G = np.real(J.conj().T @ J)
        g = np.real(J.conj().T @ e)
        try:
            step = np.linalg.solve(G, g)
        except np.linalg.LinAlgError:
            break
        params[active] += step
        if params[0] <= 0:
            params[0] = abs(params[0]) or A
        if np.all(np.abs(step) <= np.array([1e-12 * params[0], 1e-15, 1e-12, 1e-10])[active]):
            break
    u, _ = model(params)
    full = params[0] * u * np.exp(1j * (params[1] * (np.arange(L) - origin) + params[2]))
    return float(params[0]), float(params[1]), float(params[2]), float(params[3]), full


# ---------------------------------------------------------------- OFDM


def _moving_sum(v: np.ndarray, w: int) -> np.ndarray:
    c = np.concatenate([[0], np.cumsum(v)])
    return c[w:] - c[:-w]


def estimate_freq_timing_ofdm(r, cfg: OfdmConfig) -> OfdmSyncResult:
    """Cyclic-prefix ML timing and frequency, averaged over the symbols present."""
    x = as_samples(r)
    S, N, Lc = cfg.symbol_len, cfg.body_len, cfg.cp_len
    if len(x) < S + N:
        raise ValueError("buffer shorter than one OFDM symbol plus its body")
    prod = x[:-N] * np.conj(x[N:])
    en = np.abs(x) ** 2
    gam = _moving_sum(prod, Lc)
    phi = 0.5 * (_moving_sum(en[:-N], Lc) + _moving_sum(en[N:], Lc))
    n_pos = len(gam)
    n_fold = n_pos // S
    if n_fold < 1:
        raise ValueError("buffer too short")
    G = gam[: n_fold * S].reshape(n_fold, S)
    F = phi[: n_fold * S].reshape(n_fold, S)
    total = float(np.sum(F))
    if total == 0:
        raise NoLockError("no signal energy")

    def best(rho):
        metric = np.sum(np.abs(G), axis=0) - rho * np.sum(F, axis=0)
        return int(np.argmax(metric))

    k = best(0.0)
    rho = float(np.sum(np.abs(G[:, k])) / max(np.sum(F[:, k]), 1e-300))
    k = best(min(rho, 1.0))
    col_g = G[:, k]
    col_f = F[:, k]
    ratio = np.abs(col_g) / np.maximum(col_f, 1e-300)
    floor = 4.0 / math.sqrt(Lc)
    rho = float(np.sum(np.abs(col_g)) / max(np.sum(col_f), 1e-300))
    if ratio.max() < floor:
        raise NoLockError("cyclic-prefix correlation below detection floor")
    # a short prefix spans few independent samples, so per-symbol ratios scatter widely;
    # keep every fold above the floor and close any gaps inside the burst
    hits = np.nonzero(ratio >= floor)[0]
    live = np.arange(hits[0], hits[-1] + 1)
    starts = [int(k + l * S) for l in live]
    omegas = [float(-np.angle(col_g[l]) / N) for l in live]
    omega = float(-np.angle(np.sum(col_g[live])) / N)
    return OfdmSyncResult(omega, float(k), rho, starts, omegas)
