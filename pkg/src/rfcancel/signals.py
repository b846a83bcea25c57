"""Waveform synthesis: constellations, pulses, interferers, SOI, noise and scenarios.

Conventions used throughout the package:

* noise power is the unit reference, so ``INR = A**2 / P``;
* ``omega`` is in radians per sample, ``theta`` is the carrier phase at the
  time origin of the buffer it describes, ``epsilon`` is a delay in samples;
* fractional delays are DFT phase ramps over the whole buffer, so synthesis
  and remodulation share one interpolation method.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

__all__ = [
    "Scheme",
    "Constellation",
    "PulseShape",
    "WaveformParams",
    "SignalBuffer",
    "OfdmConfig",
    "ScenarioConfig",
    "Scenario",
    "make_constellation",
    "rrc_pulse",
    "rectangular_pulse",
    "modulate_single_carrier",
    "modulate_ofdm",
    "demodulate_ofdm",
    "fractional_delay",
    "apply_waveform_params",
    "lfm_soi",
    "awgn",
    "compose_scenario",
    "as_samples",
]


class Scheme(str, enum.Enum):
    """Supported modulation schemes."""

    BPSK = "bpsk"
    QPSK = "qpsk"
    PSK8 = "psk8"
    QAM16 = "qam16"
    QAM64 = "qam64"

    @classmethod
    def parse(cls, value: "Scheme | str") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"8psk": "psk8", "16qam": "qam16", "64qam": "qam64"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unsupported modulation scheme: {value!r}") from None

    @property
    def order(self) -> int:
        return {"bpsk": 2, "qpsk": 4, "psk8": 8, "qam16": 16, "qam64": 64}[self.value]

    @property
    def symmetry(self) -> int:
        """Order of the rotational symmetry of the constellation."""
        return {"bpsk": 2, "qpsk": 4, "psk8": 8, "qam16": 4, "qam64": 4}[self.value]

    @property
    def is_psk(self) -> bool:
        return self in (Scheme.BPSK, Scheme.QPSK, Scheme.PSK8)


ALL_SCHEMES: tuple[Scheme, ...] = tuple(Scheme)


def _gray(k: np.ndarray) -> np.ndarray:
    return k ^ (k >> 1)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit-energy point set; ``points[label]`` is the symbol for a Gray label."""

    scheme: Scheme
    points: np.ndarray

    @property
    def order(self) -> int:
        return len(self.points)

    @property
    def min_distance(self) -> float:
        d = np.abs(self.points[:, None] - self.points[None, :])
        return float(d[~np.eye(self.order, dtype=bool)].min())

    def moment(self, m: int) -> complex:
        """E[s**m] under equiprobable symbols."""
        return complex(np.mean(self.points**m))

    def decide(self, y: np.ndarray) -> np.ndarray:
        """Nearest-point hard decisions, returned as point values."""
        return self.points[self.labels(y)]

    def labels(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        d = np.abs(y[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    def random(self, n, rng: np.random.Generator) -> np.ndarray:
        return self.points[rng.integers(0, self.order, size=n)]


def make_constellation(scheme: Scheme | str) -> Constellation:
    """Gray-mapped, unit average energy constellation."""
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.BPSK:
        pts = np.array([1.0, -1.0], dtype=complex)
    elif scheme is Scheme.PSK8:
        pos = np.arange(8)
        pts = np.empty(8, dtype=complex)
        pts[_gray(pos)] = np.exp(2j * np.pi * pos / 8)
    else:
        side = int(round(np.sqrt(scheme.order)))
        bits = side.bit_length() - 1
        pos = np.arange(side)
        levels = np.empty(side)
        levels[_gray(pos)] = 2 * pos - (side - 1)
        label = np.arange(scheme.order)
        pts = levels[label >> bits] + 1j * levels[label & (side - 1)]
        pts = pts.astype(complex)
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(scheme, pts)


@dataclass(frozen=True, eq=False)
class PulseShape:
    """Real pulse with ``span * P + 1`` taps and unit energy."""

    taps: np.ndarray
    P: int
    rolloff: float
    span: int

    @property
    def delay(self) -> float:
        """Group delay in samples (position of the centre tap)."""
        return (len(self.taps) - 1) / 2


def rrc_pulse(rolloff: float, span: int, P: int) -> PulseShape:
    """Root-raised-cosine taps, unit energy, singular points at their limits."""
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError("rolloff must lie in [0, 1]")
    if span < 2 or P < 1:
        raise ValueError("need span >= 2 and P >= 1")
    b = float(rolloff)
    n = np.arange(span * P + 1)
    t = (n - span * P / 2) / P
    h = np.empty_like(t)
    at0 = np.isclose(t, 0.0, atol=1e-12)
    if b > 0:
        at_q = np.isclose(np.abs(t), 1 / (4 * b), atol=1e-12)
    else:
        at_q = np.zeros_like(at0)
    reg = ~(at0 | at_q)
    tr = t[reg]
    h[reg] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2)
    )
    h[at0] = 1 - b + 4 * b / np.pi
    if b > 0:
        h[at_q] = (b / np.sqrt(2)) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
        )
    h /= np.sqrt(np.sum(h**2))
    return PulseShape(h, int(P), b, int(span))


def rectangular_pulse(P: int) -> PulseShape:
    """Unit-energy rectangular pulse of length ``P``."""
    return PulseShape(np.full(P, 1 / np.sqrt(P)), int(P), 0.0, 1)


@dataclass
class WaveformParams:
    """Amplitude, frequency (rad/sample), phase (rad) and delay (samples)."""

    A: float
    omega: float
    theta: float
    epsilon: float
    scheme: Scheme = Scheme.QPSK

    def __post_init__(self):
        self.scheme = Scheme.parse(self.scheme)
        if not self.A > 0:
            raise ValueError("amplitude must be positive")
        if not abs(self.omega) < np.pi:
            raise ValueError("|omega| must be below pi")


@dataclass
class SignalBuffer:
    samples: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    def __len__(self) -> int:
        return len(self.samples)

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2)) if len(self) else 0.0

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))


def as_samples(x) -> np.ndarray:
    """Complex ndarray view of a buffer or array-like."""
    if isinstance(x, SignalBuffer):
        return x.samples
    return np.asarray(x, dtype=complex)


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM numerology: ``M`` subcarriers, CP of ``L`` subcarrier-samples, oversampling ``P``."""

    M: int = 64
    L: int = 5
    P: int = 82

    def __post_init__(self):
        if self.M < 2 or self.L < 1 or self.P < 1:
            raise ValueError("invalid OFDM configuration")

    @classmethod
    def from_kappa(cls, M: int, kappa: float, P: int) -> "OfdmConfig":
        return cls(M, int(round(kappa * M)), P)

    @property
    def kappa(self) -> float:
        return self.L / self.M

    @property
    def symbol_len(self) -> int:
        return self.P * (self.M + self.L)

    @property
    def body_len(self) -> int:
        return self.P * self.M

    @property
    def cp_len(self) -> int:
        return self.P * self.L


def modulate_single_carrier(symbols, pulse: PulseShape) -> SignalBuffer:
    """Pulse-shaped symbol stream; symbol ``k`` is centred at ``pulse.delay + k*P``."""
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.size == 0:
        raise ValueError("empty symbol list")
    up = np.zeros((len(symbols) - 1) * pulse.P + 1, dtype=complex)
    up[:: pulse.P] = symbols
    return SignalBuffer(sps.convolve(up, pulse.taps))


def modulate_ofdm(symbol_grid, cfg: OfdmConfig) -> SignalBuffer:
    """CP-OFDM burst from an ``M x Lsym`` grid, subcarriers ``0..M-1``."""
    grid = np.asarray(symbol_grid, dtype=complex)
    if grid.ndim == 1:
        grid = grid[:, None]
    if grid.shape[0] != cfg.M:
        raise ValueError(f"grid has {grid.shape[0]} rows, expected M={cfg.M}")
    spec = np.zeros((cfg.body_len, grid.shape[1]), dtype=complex)
    spec[: cfg.M] = grid
    body = np.fft.ifft(spec, axis=0) * np.sqrt(cfg.body_len)
    sym = np.concatenate([body[-cfg.cp_len :], body], axis=0)
    return SignalBuffer(sym.T.reshape(-1))


def demodulate_ofdm(x, cfg: OfdmConfig, n_symbols: int | None = None) -> np.ndarray:
    """Inverse of :func:`modulate_ofdm` for an aligned, impairment-free burst."""
    x = as_samples(x)
    if n_symbols is None:
        n_symbols = len(x) // cfg.symbol_len
    blocks = x[: n_symbols * cfg.symbol_len].reshape(n_symbols, cfg.symbol_len)
    body = blocks[:, cfg.cp_len :]
    return (np.fft.fft(body, axis=1)[:, : cfg.M] / np.sqrt(cfg.body_len)).T


def fractional_delay(x: np.ndarray, delay: float) -> np.ndarray:
    """Circular delay by ``delay`` samples through a DFT-domain phase ramp."""
    x = np.asarray(x, dtype=complex)
    if delay == 0:
        return x.copy()
    f = np.fft.fftfreq(len(x))
    return np.fft.ifft(np.fft.fft(x) * np.exp(-2j * np.pi * f * delay))


def apply_waveform_params(base, params: WaveformParams, origin: float = 0.0) -> SignalBuffer:
    """``A * base(n - epsilon) * exp(j(omega (n - origin) + theta))``."""
    x = as_samples(base)
    if abs(params.epsilon) >= max(len(x), 1):
        raise ValueError("|epsilon| must be shorter than the buffer")
    y = fractional_delay(x, params.epsilon)
    n = np.arange(len(x)) - origin
    y *= params.A * np.exp(1j * (params.omega * n + params.theta))
    return SignalBuffer(y, getattr(base, "sample_rate", 1.0))


def lfm_soi(A_s: float, f0: float, c: float, N: int, origin: float = 0.0) -> SignalBuffer:
    """Linear chirp ``A_s exp(j 2 pi (f0 n + c n^2 / 2))`` with ``n`` counted from ``origin``."""
    if N < 1:
        raise ValueError("N must be positive")
    n = np.arange(N) - origin
    return SignalBuffer(A_s * np.exp(2j * np.pi * (f0 * n + 0.5 * c * n**2)))


def awgn(N: int, variance: float, seed) -> SignalBuffer:
    """Circular complex Gaussian noise with total variance ``variance``."""
    if variance < 0:
        raise ValueError("variance must be non-negative")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    return SignalBuffer(w * np.sqrt(variance / 2))


@dataclass
class ScenarioConfig:
    """One synthetic trial. ``kind`` is ``"sc"`` (single carrier) or ``"ofdm"``.

    Truth parameters left as ``None`` are drawn per seed: theta uniform on
    (-pi, pi], epsilon uniform on [0, P), omega uniform over
    ``+-omega_frac`` of the symbol rate (single carrier) or of the
    subcarrier spacing (OFDM).

    A single-carrier burst holds ``guard`` symbols either side of the
    analysis windows.  By default the guard is sized so the burst spans
    ``burst_symbols`` (and at least one pulse length).
    """

    kind: str = "sc"
    scheme: Scheme = Scheme.QPSK
    inr_db: float = 10.0
    sir_db: float | None = None
    P: int = 82
    rolloff: float = 0.4
    span: int = 21
    K: int = 69
    windows: int = 1
    guard: int | None = None
    burst_symbols: int = 450
    ofdm_M: int = 64
    ofdm_L: int = 5
    ofdm_symbols: int = 7
    soi_f0: float = 0.05
    soi_c: float = 4e-5
    alpha: float = 0.07
    omega_frac: float | None = None
    omega: float | None = None
    theta: float | None = None
    epsilon: float | None = None
    noise_var: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.scheme = Scheme.parse(self.scheme)
        if self.kind not in ("sc", "ofdm"):
            raise ValueError("kind must be 'sc' or 'ofdm'")
        if not np.isfinite(self.inr_db):
            raise ValueError("inr_db must be finite")
        if self.K < 1 or self.windows < 1 or self.ofdm_symbols < 1 or self.P < 1:
            raise ValueError("window and symbol counts must be positive")
        if self.kind == "ofdm" and self.ofdm_symbols < 2:
            raise ValueError("an OFDM burst needs at least two symbols")

    @property
    def N(self) -> int:
        """Samples per analysis window."""
        return self.K * self.P if self.kind == "sc" else self.ofdm.symbol_len

    @property
    def guard_symbols(self) -> int:
        if self.guard is not None:
            return self.guard
        return max(self.span, -(-(self.burst_symbols - self.windows * self.K) // 2))

    @property
    def ofdm(self) -> OfdmConfig:
        return OfdmConfig(self.ofdm_M, self.ofdm_L, self.P)

    @property
    def pulse(self) -> PulseShape:
        return rrc_pulse(self.rolloff, self.span, self.P)

    @property
    def amplitude(self) -> float:
        return float(np.sqrt(10 ** (self.inr_db / 10) * self.P))

    @property
    def omega_max(self) -> float:
        if self.kind == "sc":
            frac = 0.1 if self.omega_frac is None else self.omega_frac
            return 2 * np.pi * frac / self.P
        frac = 0.4 if self.omega_frac is None else self.omega_frac
        return 2 * np.pi * frac / self.ofdm.body_len


@dataclass
class Scenario:
    config: ScenarioConfig
    r: SignalBuffer
    z: SignalBuffer
    s: SignalBuffer
    w: SignalBuffer
    truth: WaveformParams
    symbols: np.ndarray
    windows: list[tuple[int, int]]
    origin: float
    first_symbol: float
    sigma_s2: float = 0.0
    extra: dict = field(default_factory=dict)

    def theta_at(self, t0: float) -> float:
        """Truth carrier phase referenced to sample position ``t0``."""
        th = self.truth.theta + self.truth.omega * (t0 - self.origin)
        return float(np.angle(np.exp(1j * th)))

    def window_slice(self, i: int) -> slice:
        a, n = self.windows[i]
        return slice(a, a + n)


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def compose_scenario(cfg: ScenarioConfig) -> Scenario:
    """Synthesize ``r = z + s + w`` with known truth and analysis windows."""
    ss_truth, ss_sym, ss_noise = np.random.SeedSequence(cfg.seed).spawn(3)
    rng = np.random.default_rng(ss_truth)
    const = make_constellation(cfg.scheme)
    P = cfg.P
    omega = rng.uniform(-cfg.omega_max, cfg.omega_max)
    theta = np.pi - rng.uniform(0.0, 2 * np.pi)
    eps = rng.uniform(0.0, P)
    omega = omega if cfg.omega is None else cfg.omega
    theta = theta if cfg.theta is None else cfg.theta
    eps = eps if cfg.epsilon is None else cfg.epsilon
    truth = WaveformParams(cfg.amplitude, omega, theta, eps, cfg.scheme)
    srng = np.random.default_rng(ss_sym)

    if cfg.kind == "sc":
        pulse = cfg.pulse
        if cfg.N < P:
            raise ValueError("window shorter than one symbol")
        guard = cfg.guard_symbols
        n_sym = cfg.windows * cfg.K + 2 * guard
        symbols = const.random(n_sym, srng)
        base = modulate_single_carrier(symbols, pulse).samples
        pad = 4 * P
        base = np.concatenate([np.zeros(pad), base, np.zeros(pad)])
        centre0 = pad + pulse.delay
        starts = [
            int(np.floor(centre0 + (guard + w * cfg.K) * P - P / 2)) for w in range(cfg.windows)
        ]
        windows = [(a, cfg.N) for a in starts]
        first = centre0 + eps
    else:
        ocfg = cfg.ofdm
        grid = const.random((ocfg.M, cfg.ofdm_symbols), srng)
        symbols = grid
        base = modulate_ofdm(grid, ocfg).samples
        pad = ocfg.symbol_len
        base = np.concatenate([np.zeros(pad), base, np.zeros(pad)])
        S = ocfg.symbol_len
        windows = [(pad + l * S, S) for l in range(cfg.ofdm_symbols)]
        first = pad + eps
    origin = windows[0][0] + (windows[-1][0] + windows[-1][1] - windows[0][0] - 1) / 2
    z = apply_waveform_params(base, truth, origin)
    n_tot = len(base)
    w = awgn(n_tot, cfg.noise_var, _seed_int(ss_noise))
    sigma_s2 = 0.0
    if cfg.sir_db is not None:
        sigma_s2 = 10 ** (cfg.sir_db / 10) * truth.A**2 / P
        s = lfm_soi(np.sqrt(sigma_s2), cfg.soi_f0, cfg.soi_c, n_tot, origin)
    else:
        s = SignalBuffer(np.zeros(n_tot, dtype=complex))
    r = SignalBuffer(z.samples + s.samples + w.samples)
    return Scenario(cfg, r, z, s, w, truth, symbols, windows, origin, first, sigma_s2)
