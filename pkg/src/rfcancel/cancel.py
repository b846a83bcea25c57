"""Cancelers: Demod-Remod (single carrier and OFDM), STSA, reference filter, genie oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.fft import next_fast_len

from .classify import ClassifierVerdict, classify_burst, classify_modulation, edge_span
from .estimators import (
    NoLockError,
    SyncEstimate,
    crlb_single_carrier,
    estimate_amp_phase,
    estimate_freq_timing_ofdm,
    estimate_freq_timing_sc,
    matched_filter_symbols,
    pulse_derivative_energy,
    refine_sync,
)
from .signals import (
    ALL_SCHEMES,
    OfdmConfig,
    PulseShape,
    Scheme,
    SignalBuffer,
    WaveformParams,
    as_samples,
    fractional_delay,
    make_constellation,
    modulate_ofdm,
    modulate_single_carrier,
)

__all__ = [
    "CancellationOutcome",
    "GenieErrors",
    "demod_remod_sc",
    "demod_remod_ofdm",
    "remodulate_sc",
    "genie_remod",
    "genie_xi_monte_carlo",
    "genie_ofdm_correlation",
    "stsa_cancel",
    "reference_filter_cancel",
    "symbol_error_rate",
]


@dataclass
class CancellationOutcome:
    """Replica, residual and the estimates that produced them.

    ``symbols_hat`` and ``symbol_positions`` list the hard decisions and
    the absolute sample positions they were placed at (symbol centres for
    single carrier, symbol starts for OFDM, where ``symbols_hat`` has one
    column per OFDM symbol).
    """

    z_hat: SignalBuffer
    residual: SignalBuffer
    sync: list[SyncEstimate] = field(default_factory=list)
    verdict: ClassifierVerdict | None = None
    symbols_hat: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    symbol_positions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scheme: Scheme | None = None
    failed: bool = False
    ser: float | None = None


def _outcome(x: np.ndarray, z_hat: np.ndarray, **kw) -> CancellationOutcome:
    return CancellationOutcome(SignalBuffer(z_hat), SignalBuffer(x - z_hat), **kw)


def _failed(x: np.ndarray) -> CancellationOutcome:
    return _outcome(x, np.zeros_like(x), failed=True)


# ---------------------------------------------------------------- remodulation


def remodulate_sc(
    symbols_hat,
    pulse: PulseShape,
    sync: SyncEstimate | WaveformParams,
    length: int | None = None,
    start: int = 0,
) -> SignalBuffer:
    """Pulse-shape ``symbols_hat``, place the burst at ``start`` and apply the estimates.

    Mirrors the synthesis path: symbol 0 ends up centred at
    ``start + pulse.delay + epsilon``; the phase is referenced to
    ``sync.origin`` (0 for plain :class:`WaveformParams`).
    """
    symbols_hat = np.asarray(symbols_hat, dtype=complex)
    base = modulate_single_carrier(symbols_hat, pulse).samples
    if length is None:
        length = start + len(base)
    buf = np.zeros(length, dtype=complex)
    stop = min(length, start + len(base))
    buf[start:stop] = base[: stop - start]
    if isinstance(sync, SyncEstimate):
        A, w, th, eps, origin = sync.A_hat, sync.omega_hat, sync.theta_hat, sync.epsilon_hat, sync.origin
    else:
        A, w, th, eps, origin = sync.A, sync.omega, sync.theta, sync.epsilon, 0.0
    y = fractional_delay(buf, eps)
    y *= A * np.exp(1j * (w * (np.arange(length) - origin) + th))
    return SignalBuffer(y)


def _pulse_spectrum(pulse: PulseShape, L: int) -> np.ndarray:
    h = np.zeros(L)
    h[: len(pulse.taps)] = pulse.taps
    return np.fft.fft(h)


def _sc_base(symbols: np.ndarray, pos: np.ndarray, pulse: PulseShape, H: np.ndarray) -> tuple[np.ndarray, float]:
    """Spectrum of the circular pulse train and the residual sub-sample delay."""
    L = len(H)
    d_int = math.floor(pulse.delay)
    ip = np.floor(pos).astype(int)
    up = np.zeros(L, dtype=complex)
    np.add.at(up, (ip - d_int) % L, symbols)
    frac = float(pos[0] - ip[0]) - (pulse.delay - d_int)
    return np.fft.fft(up) * H, frac


def _var_predictions(A: float, N: int, noise: float, Ep: float, P: int) -> dict[str, float]:
    inr = max(A**2 / P / max(noise, 1e-300), 1e-300)
    c = crlb_single_carrier(inr, N)
    return {
        "var_A": c["sigmaA2_over_A2"] * A**2,
        "var_omega": c["sigma_omega2"],
        "var_theta": c["sigma_theta2"],
        "var_epsilon": P**2 / (2.0 * inr * N * Ep),
    }


# ---------------------------------------------------------------- single carrier


def demod_remod_sc(
    r,
    pulse: PulseShape,
    candidates: Sequence[Scheme | str] = ALL_SCHEMES,
    windows: Sequence[tuple[int, int]] | None = None,
    classify_span: tuple[int, int] | None = None,
    scheme: Scheme | str | None = None,
    refine: bool = True,
) -> CancellationOutcome:
    """Blind demodulate-remodulate-subtract for a pulse-shaped single-carrier interferer.

    Each window gets its own frequency, timing, amplitude and phase; one
    modulation verdict is shared by the whole burst and is computed on
    ``classify_span`` (default: the windows plus a pulse length either side).
    Passing ``scheme`` skips classification.  With ``refine`` the window
    estimates are polished by a decision-directed least-squares fit.
    """
    x = as_samples(r)
    L, P = len(x), pulse.P
    windows = [(0, L)] if windows is None else [tuple(map(int, w)) for w in windows]
    margin = int(math.ceil(pulse.delay)) + P
    try:
        syncs = [estimate_freq_timing_sc(x, pulse, w) for w in windows]
    except NoLockError:
        return _failed(x)

    verdict = None
    if scheme is None:
        lo, hi = classify_span if classify_span is not None else (
            windows[0][0] - margin, windows[-1][0] + windows[-1][1] + margin)
        y, _ = matched_filter_symbols(x, pulse, syncs[0].omega_hat, syncs[0].epsilon_hat, lo, hi)
        try:
            verdict = classify_burst(y, syncs[0].power, candidates)
        except ValueError:
            return _failed(x)
        chosen = verdict.scheme
    else:
        chosen = Scheme.parse(scheme)
    const = make_constellation(chosen)
    Ep = pulse_derivative_energy(pulse)
    z_hat = np.zeros(L, dtype=complex)
    estimates, all_sym, all_pos = [], [], []

    for (a, n), s in zip(windows, syncs):
        origin = a + (n - 1) / 2
        lo, hi = a - margin, a + n + margin
        # local zero-padded frame wide enough that the circular replica never wraps into the window
        f_lo = max(0, lo - margin)
        f_hi = min(L, hi + margin)
        frame = np.zeros(next_fast_len(f_hi - f_lo), dtype=complex)
        frame[: f_hi - f_lo] = x[f_lo:f_hi]
        H = _pulse_spectrum(pulse, len(frame))
        omega, tau = s.omega_hat, s.epsilon_hat
        y, pos = matched_filter_symbols(x, pulse, omega, tau, lo, hi)
        core = (pos >= a) & (pos < a + n)
        if not np.any(core):
            return _failed(x)
        amp, ph = estimate_amp_phase(y[core], chosen)
        if amp <= 0:
            return _failed(x)
        theta = ph + omega * origin
        # symbols past either end of the burst would be remodulated at full amplitude
        e_min = 0.5 * float(np.min(np.abs(const.points) ** 2)) * amp**2
        b_lo, b_hi = edge_span(y, floor=e_min)
        live = np.zeros(len(y), dtype=bool)
        live[b_lo:b_hi] = True
        sym = np.where(live, const.decide(y * np.exp(-1j * ph) / amp), 0)
        U, delay = _sc_base(sym, pos - f_lo, pulse, H)
        model = None
        for _ in range(3 if refine else 0):
            amp, omega, theta, delay_new, model = refine_sync(
                frame, U, (a - f_lo, n), amp, omega, theta, delay, origin - f_lo)
            tau = tau + (delay_new - delay)
            y, pos = matched_filter_symbols(x, pulse, omega, tau, lo, hi)
            new_sym = const.decide(y * np.exp(-1j * (theta - omega * origin)) / amp)
            if len(new_sym) == len(live):
                new_sym = np.where(live, new_sym, 0)
            if len(new_sym) == len(sym) and np.array_equal(new_sym, sym):
                delay = delay_new
                break
            sym = new_sym
            U, delay = _sc_base(sym, pos - f_lo, pulse, H)
            model = None
        if model is None:
            Lf = len(frame)
            t = np.arange(Lf) - (origin - f_lo)
            model = amp * np.fft.ifft(U * np.exp(-2j * np.pi * np.fft.fftfreq(Lf) * delay))
            model *= np.exp(1j * (omega * t + theta))
        z_hat[a : a + n] = model[a - f_lo : a - f_lo + n]
        noise = float(np.mean(np.abs(x[a : a + n] - z_hat[a : a + n]) ** 2))
        estimates.append(SyncEstimate(
            amp, omega, float(np.angle(np.exp(1j * theta))), float(tau % P), origin,
            **_var_predictions(amp, n, noise, Ep, P)))
        keep = (pos >= a) & (pos < a + n)
        all_sym.append(sym[keep])
        all_pos.append(pos[keep])
    return _outcome(
        x, z_hat, sync=estimates, verdict=verdict, scheme=chosen,
        symbols_hat=np.concatenate(all_sym), symbol_positions=np.concatenate(all_pos))


# ---------------------------------------------------------------- OFDM


def _ofdm_bodies(x, cfg: OfdmConfig, starts, omegas) -> np.ndarray:
    Lc, S, Nb, M = cfg.cp_len, cfg.symbol_len, cfg.body_len, cfg.M
    out = np.empty((M, len(starts)), dtype=complex)
    for i, (st, w) in enumerate(zip(starts, omegas)):
        t = np.arange(st + Lc, st + S)
        out[:, i] = np.fft.fft(x[t] * np.exp(-1j * w * t))[:M] / math.sqrt(Nb)
    return out


def _slope_delay(Y: np.ndarray, q: int, Nb: int) -> float:
    """Common delay (samples) from the subcarrier phase slope of ``Y**q``."""
    v = Y**q
    nfft = 1 << int(math.ceil(math.log2(Y.shape[0] * 16)))
    pw = np.sum(np.abs(np.fft.fft(v, nfft, axis=0)) ** 2, axis=1)
    k = int(np.argmax(pw))
    a, b, c = pw[(k - 1) % nfft], pw[k], pw[(k + 1) % nfft]
    den = a - 2 * b + c
    f = (k + (0.5 * (a - c) / den if den != 0 else 0.0)) / nfft
    f = (f + 0.5) % 1.0 - 0.5
    return f * Nb / q


def demod_remod_ofdm(
    r,
    cfg: OfdmConfig,
    candidates: Sequence[Scheme | str] = ALL_SCHEMES,
    windows: Sequence[tuple[int, int]] | None = None,
    scheme: Scheme | str | None = None,
    refine: bool = True,
) -> CancellationOutcome:
    """Blind demodulate-remodulate-subtract for a CP-OFDM interferer.

    Frequency comes from each symbol's own cyclic-prefix correlation and is
    not refined further.  Timing is refined from the subcarrier phase slope
    and, with ``refine``, by a decision-directed fit of amplitude, phase and
    delay per window.  Windows default to one per detected symbol.
    """
    x = as_samples(r)
    L = len(x)
    S, Nb, M = cfg.symbol_len, cfg.body_len, cfg.M
    try:
        sync = estimate_freq_timing_ofdm(x, cfg)
    except NoLockError:
        return _failed(x)
    starts = [s for s in sync.starts if s + S <= L]
    omegas = [w for s, w in zip(sync.starts, sync.omegas) if s + S <= L]
    if not starts:
        return _failed(x)
    Yc = _ofdm_bodies(x, cfg, starts, [sync.omega_hat] * len(starts))
    cands = [Scheme.parse(c) for c in candidates]
    verdict = None
    if scheme is None:
        dists, keys, thetas = {}, {}, {}
        for q in sorted({c.symmetry for c in cands}):
            dq = _slope_delay(Yc, q, Nb)
            Yq = Yc * np.exp(2j * np.pi * np.arange(M) * dq / Nb)[:, None]
            # symbols carry their own common phase; align them modulo the symmetry, unwrapped
            # so that a finer candidate cannot interleave independently rotated symbols
            ph = np.angle(np.sum(Yq**q, axis=0)) / q
            ph = ph[0] + np.unwrap(q * (ph - ph[0])) / q
            Yq = Yq * np.exp(-1j * ph)
            group = [c for c in cands if c.symmetry == q]
            v = classify_modulation(Yq.T.reshape(-1), candidates=group)
            for c in group:
                dists[c] = v.ks_distances[c]
            keys[v.scheme] = v.ks_distances[v.scheme]
            thetas[v.scheme] = v.theta
        chosen = min(keys, key=keys.get)
        verdict = ClassifierVerdict(chosen, dists, 0, thetas[chosen], Yc.size < 100)
    else:
        chosen = Scheme.parse(scheme)
    const = make_constellation(chosen)
    delay = _slope_delay(Yc, chosen.symmetry, Nb)

    Y = _ofdm_bodies(x, cfg, starts, omegas)
    ramp = np.exp(2j * np.pi * np.arange(M) * delay / Nb)[:, None]
    Y = Y * ramp
    grid = np.empty_like(Y)
    amps, phases = [], []
    step = 2 * np.pi / chosen.symmetry
    for i in range(len(starts)):
        amp, ph = estimate_amp_phase(Y[:, i], chosen)
        amp = amp if amp > 0 else 1.0
        if phases:
            # one carrier phase across the burst: the delayed replica smears symbol edges
            ph += step * round((phases[0] - ph) / step)
        grid[:, i] = const.decide(Y[:, i] * np.exp(-1j * ph) / amp)
        amps.append(amp)
        phases.append(ph)
    if windows is None:
        windows = [(s, S) for s in starts]
    windows = [(int(a), int(n)) for a, n in windows]
    burst = modulate_ofdm(grid, cfg).samples
    # the replica is zero outside the burst, so a zero-padded frame around it is exact
    f_lo = max(0, min([starts[0]] + [a for a, _ in windows]) - S)
    f_hi = min(L, max([starts[0] + len(burst)] + [a + n for a, n in windows]) + S)
    Lf = next_fast_len(f_hi - f_lo)
    frame = np.zeros(Lf, dtype=complex)
    frame[: f_hi - f_lo] = x[f_lo:f_hi]
    base = np.zeros(Lf, dtype=complex)
    b0 = starts[0] - f_lo
    stop = min(f_hi - f_lo, b0 + len(burst))
    base[b0:stop] = burst[: stop - b0]
    U = np.fft.fft(base)

    z_hat = np.zeros(L, dtype=complex)
    estimates = []
    f = np.fft.fftfreq(Lf)
    for (a, n) in windows:
        i = int(np.argmin([abs(s - a) for s in starts]))
        if abs(starts[i] - a) > S // 2 or a < f_lo or a + n > f_hi:
            continue  # no detected symbol here; leave the window untouched
        origin = a + (n - 1) / 2
        amp, omega = amps[i], omegas[i]
        theta = phases[i] + omega * origin
        d = delay
        if refine:
            amp, omega, theta, d, model = refine_sync(
                frame, U, (a - f_lo, n), amp, omega, theta, d, origin - f_lo, fit_omega=False)
        else:
            model = amp * np.fft.ifft(U * np.exp(-2j * np.pi * f * d))
            model *= np.exp(1j * (omega * (np.arange(Lf) - (origin - f_lo)) + theta))
        z_hat[a : a + n] = model[a - f_lo : a - f_lo + n]
        estimates.append(SyncEstimate(
            amp, omega, float(np.angle(np.exp(1j * theta))), float((starts[i] + d) % S), origin))
    return _outcome(
        x, z_hat, sync=estimates, verdict=verdict, scheme=chosen,
        symbols_hat=grid, symbol_positions=np.asarray(starts, dtype=float) + delay)


# ---------------------------------------------------------------- genie oracle


@dataclass
class GenieErrors:
    """Estimation errors injected into a genie replica.

    ``depsilon`` is in samples.  ``flips`` marks symbols replaced by a
    nearest neighbour; ``alt_scheme`` (when set) replaces every symbol by its
    nearest point of that constellation, modelling a misclassification.
    """

    dA: float = 0.0
    domega: float = 0.0
    dtheta: float = 0.0
    depsilon: float = 0.0
    flips: np.ndarray | None = None
    alt_scheme: Scheme | None = None
    seed: int = 0


def _nearest_neighbours(points: np.ndarray) -> list[np.ndarray]:
    d = np.abs(points[:, None] - points[None, :])
    np.fill_diagonal(d, np.inf)
    dmin = d.min()
    return [np.nonzero(np.isclose(row, dmin, rtol=1e-9))[0] for row in d]


def _flip_symbols(symbols: np.ndarray, scheme: Scheme, mask: np.ndarray, rng) -> np.ndarray:
    const = make_constellation(scheme)
    nbrs = _nearest_neighbours(const.points)
    lab = const.labels(symbols)
    out = symbols.copy()
    for k in np.nonzero(mask)[0]:
        choices = nbrs[lab[k]]
        out[k] = const.points[choices[rng.integers(len(choices))]]
    return out


def genie_remod(
    truth: WaveformParams,
    symbols,
    pulse: PulseShape,
    errors: GenieErrors,
    length: int,
    start: int = 0,
    origin: float = 0.0,
) -> SignalBuffer:
    """Replica built from the true parameters plus injected errors, bypassing estimation."""
    symbols = np.asarray(symbols, dtype=complex).copy()
    rng = np.random.default_rng(errors.seed)
    if errors.alt_scheme is not None:
        symbols = make_constellation(errors.alt_scheme).decide(symbols)
    if errors.flips is not None and np.any(errors.flips):
        symbols = _flip_symbols(symbols, truth.scheme, np.asarray(errors.flips, bool), rng)
    est = SyncEstimate(
        truth.A + errors.dA,
        truth.omega + errors.domega,
        truth.theta + errors.dtheta,
        truth.epsilon + errors.depsilon,
        origin,
    )
    return remodulate_sc(symbols, pulse, est, length, start)


def _stratified_normal(n: int, rng) -> np.ndarray:
    from scipy.special import ndtri

    u = (rng.permutation(n) + rng.random(n)) / n
    return ndtri(u)


def genie_xi_monte_carlo(
    A: float,
    pulse: PulseShape,
    N: int,
    sigma_A: float = 0.0,
    sigma_theta: float = 0.0,
    sigma_omega: float = 0.0,
    sigma_eps: float = 0.0,
    Ps: float = 0.0,
    draws: int = 100_000,
    seed: int = 0,
    scheme: Scheme | str = Scheme.QPSK,
    chunk: int = 2000,
) -> tuple[float, float]:
    """Brute-force mean squared replica error per sample over a centred window.

    Errors are Gaussian with the given standard deviations (``sigma_eps``
    in symbol periods) and drawn by stratified sampling; each symbol is
    replaced by a random nearest neighbour with probability ``Ps``.
    Returns the estimate and its standard error.
    """
    scheme = Scheme.parse(scheme)
    P = pulse.P
    const = make_constellation(scheme)
    rng = np.random.default_rng(seed)
    span_sym = int(math.ceil(len(pulse.taps) / P)) + 2
    K = int(math.ceil(N / P)) + 2 * span_sym
    base_len = (K - 1) * P + len(pulse.taps)
    L = 1 << int(math.ceil(math.log2(base_len + 8 * P)))
    centre = (base_len - 1) / 2
    a = int(round(centre - (N - 1) / 2))
    n = np.arange(a, a + N) - (a + (N - 1) / 2)
    Hp = _pulse_spectrum(pulse, L)
    f = np.fft.fftfreq(L)
    dA = _stratified_normal(draws, rng) * sigma_A
    dth = _stratified_normal(draws, rng) * sigma_theta
    dw = _stratified_normal(draws, rng) * sigma_omega
    de = _stratified_normal(draws, rng) * sigma_eps * P
    nbrs = _nearest_neighbours(const.points)
    nb_tab = np.array([[row[i % len(row)] for i in range(2)] for row in nbrs])
    vals = np.empty(draws)
    for c0 in range(0, draws, chunk):
        c1 = min(draws, c0 + chunk)
        m = c1 - c0
        lab = rng.integers(0, const.order, size=(m, K))
        s = const.points[lab]
        if Ps > 0:
            flip = rng.random((m, K)) < Ps
            pick = nb_tab[lab, rng.integers(0, 2, size=(m, K))]
            s_hat = np.where(flip, const.points[pick], s)
        else:
            s_hat = s
        up = np.zeros((m, L), dtype=complex)
        up[:, : (K - 1) * P + 1 : P] = s
        up_hat = np.zeros((m, L), dtype=complex)
        up_hat[:, : (K - 1) * P + 1 : P] = s_hat
        zb = np.fft.ifft(np.fft.fft(up, axis=1) * Hp, axis=1)[:, a : a + N]
        ramp = np.exp(-2j * np.pi * f[None, :] * de[c0:c1, None])
        zh = np.fft.ifft(np.fft.fft(up_hat, axis=1) * Hp * ramp, axis=1)[:, a : a + N]
        rot = np.exp(1j * (dw[c0:c1, None] * n[None, :] + dth[c0:c1, None]))
        e = A * zb - (A + dA[c0:c1, None]) * zh * rot
        vals[c0:c1] = np.mean(np.abs(e) ** 2, axis=1)
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(draws))


def genie_ofdm_correlation(
    M: int,
    P: int,
    sigma_eps: float,
    Ps: float = 0.0,
    draws: int = 100_000,
    seed: int = 0,
    scheme: Scheme | str = Scheme.QPSK,
    chunk: int = 2000,
) -> tuple[float, float]:
    """Brute-force mean of ``Re(z_b(n) conj(z_hat_b(n + delta)))`` over one OFDM body.

    ``delta`` is Gaussian with standard deviation ``sigma_eps`` in units of
    ``P`` samples (stratified draws); decided symbols are nearest-neighbour
    flips of the truth with probability ``Ps``.  Returns mean and standard error.
    """
    scheme = Scheme.parse(scheme)
    const = make_constellation(scheme)
    rng = np.random.default_rng(seed)
    Nb = P * M
    dl = _stratified_normal(draws, rng) * sigma_eps * P
    nbrs = _nearest_neighbours(const.points)
    nb_tab = np.array([[row[i % len(row)] for i in range(2)] for row in nbrs])
    k = np.arange(M)
    vals = np.empty(draws)
    for c0 in range(0, draws, chunk):
        c1 = min(draws, c0 + chunk)
        m = c1 - c0
        lab = rng.integers(0, const.order, size=(m, M))
        s = const.points[lab]
        if Ps > 0:
            flip = rng.random((m, M)) < Ps
            pick = nb_tab[lab, rng.integers(0, 2, size=(m, M))]
            s_hat = np.where(flip, const.points[pick], s)
        else:
            s_hat = s
        # the body is periodic inside the cyclic prefix, so advancing the replica
        # is a per-subcarrier phase ramp and the time average follows from Parseval
        adv = np.exp(-2j * np.pi * k[None, :] * dl[c0:c1, None] / Nb)
        vals[c0:c1] = np.real(np.sum(s * np.conj(s_hat) * adv, axis=1)) / Nb
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(draws))


# ---------------------------------------------------------------- baselines


def stsa_cancel(r, block: int, oversample: int = 8) -> CancellationOutcome:
    """Blockwise single-tone fit and subtraction.

    Each non-overlapping block gets the peak of its zero-padded periodogram,
    refined by parabolic interpolation, and a least-squares complex amplitude.
    """
    if block < 3:
        raise ValueError("block must be at least 3 samples")
    x = as_samples(r)
    z_hat = np.zeros_like(x)
    nfft = max(64, 1 << int(math.ceil(math.log2(block * oversample))))
    full = len(x) // block
    pieces = []
    if full:
        pieces.append((0, x[: full * block].reshape(full, block)))
    if len(x) - full * block:
        pieces.append((full * block, x[full * block :][None, :]))
    for off, blk in pieces:
        B = blk.shape[1]
        spec = np.abs(np.fft.fft(blk, nfft, axis=1))
        k = np.argmax(spec, axis=1)
        rows = np.arange(blk.shape[0])
        a = spec[rows, (k - 1) % nfft]
        b = spec[rows, k]
        c = spec[rows, (k + 1) % nfft]
        den = a - 2 * b + c
        d = np.where(den != 0, 0.5 * (a - c) / np.where(den != 0, den, 1), 0.0)
        fhat = (k + d) / nfft
        tone = np.exp(2j * np.pi * fhat[:, None] * np.arange(B)[None, :])
        amp = np.sum(blk * np.conj(tone), axis=1) / B
        z_hat[off : off + blk.size] = (amp[:, None] * tone).reshape(-1)
    return _outcome(x, z_hat)


def reference_filter_cancel(r, d, train_len: int, start: int = 0) -> CancellationOutcome:
    """Single-tap least-squares canceler driven by a reference channel ``d``."""
    x = as_samples(r)
    ref = as_samples(d)
    if ref.shape != x.shape:
        raise ValueError("reference and input must have equal length")
    sl = slice(start, start + train_len)
    e = float(np.sum(np.abs(ref[sl]) ** 2))
    if e == 0:
        raise ValueError("reference has zero energy over the training span")
    c = np.sum(x[sl] * np.conj(ref[sl])) / e
    return _outcome(x, c * ref)


def symbol_error_rate(
    decided: np.ndarray,
    positions: np.ndarray,
    truth_symbols: np.ndarray,
    first_centre: float,
    P: int,
    scheme: Scheme | str,
) -> tuple[int, int]:
    """Errors and count after resolving the rotational ambiguity of the decisions."""
    scheme = Scheme.parse(scheme)
    k = np.round((np.asarray(positions) - first_centre) / P).astype(int)
    ok = (k >= 0) & (k < len(truth_symbols))
    if not np.any(ok):
        return 0, 0
    dec = np.asarray(decided)[ok]
    tru = truth_symbols[k[ok]]
    m = scheme.symmetry
    best = min(
        int(np.sum(np.abs(dec * np.exp(2j * np.pi * i / m) - tru) > 1e-6)) for i in range(m)
    )
    return best, int(ok.sum())
