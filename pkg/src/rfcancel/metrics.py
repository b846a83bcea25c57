"""Empirical rejection ratios and the closed-form theory engine.

All theory functions work with noise power normalised to one, so the
per-sample interference power is ``A**2 / P`` and equals the INR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import integrate, special

from .signals import Scheme, as_samples, make_constellation

__all__ = [
    "to_db",
    "from_db",
    "irr_sample",
    "irr_bar_empirical",
    "irr_c_empirical",
    "IrrAccumulator",
    "IrrReport",
    "REPORT_COLUMNS",
    "inr_effective",
    "GammaInputs",
    "gamma_sc",
    "gamma_ofdm",
    "timing_gain_ofdm",
    "XiResult",
    "xi_theoretical_sc",
    "freq_factor",
    "irr_bar_theory_sc",
    "irr_bar_theory_ofdm",
    "irr_c_theory",
    "ser_theoretical",
    "error_distances",
]


def to_db(x: float) -> float:
    if x == math.inf:
        return math.inf
    if x <= 0:
        return -math.inf
    return 10.0 * math.log10(x)


def from_db(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return math.inf
    return num / den


def _energies(a, b) -> tuple[float, float]:
    a = as_samples(a)
    b = as_samples(b)
    if a.shape != b.shape:
        raise ValueError("buffers must have equal length")
    return float(np.sum(np.abs(a) ** 2)), float(np.sum(np.abs(a - b) ** 2))


def irr_sample(z, z_hat) -> float:
    """Energy of ``z`` over energy of ``z - z_hat``; ``inf`` when the residual is exactly zero."""
    num, den = _energies(z, z_hat)
    if num == 0.0:
        raise ValueError("reference signal is all zero")
    return _ratio(num, den)


def irr_bar_empirical(trials: Iterable[tuple]) -> float:
    """Ratio of mean energies over trials of ``(z, z_hat)``."""
    acc = IrrAccumulator()
    for z, z_hat in trials:
        acc.add(*_energies(z, z_hat))
    if acc.count == 0:
        raise ValueError("need at least one trial")
    return acc.irr_bar


def irr_c_empirical(trials: Iterable[tuple]) -> float:
    """Same as :func:`irr_bar_empirical` but the reference is the noisy ``z + w``."""
    return irr_bar_empirical(trials)


@dataclass
class IrrAccumulator:
    """Order-insensitive energy sums for IRR-bar and IRR_c."""

    num: float = 0.0
    den: float = 0.0
    num_c: float = 0.0
    den_c: float = 0.0
    count: int = 0

    def add(self, num: float, den: float, num_c: float = 0.0, den_c: float = 0.0) -> None:
        self.num += num
        self.den += den
        self.num_c += num_c
        self.den_c += den_c
        self.count += 1

    def merge(self, other: "IrrAccumulator") -> "IrrAccumulator":
        return IrrAccumulator(
            self.num + other.num,
            self.den + other.den,
            self.num_c + other.num_c,
            self.den_c + other.den_c,
            self.count + other.count,
        )

    @property
    def irr_bar(self) -> float:
        return _ratio(self.num, self.den)

    @property
    def irr_c(self) -> float:
        return _ratio(self.num_c, self.den_c)


REPORT_COLUMNS = (
    "inr_db",
    "inr_eff_db",
    "irr_bar_meas_db",
    "irr_bar_theory_db",
    "irr_c_meas_db",
    "irr_c_theory_db",
    "ser_meas",
    "pc_used",
    "gamma",
    "trials",
    "seed",
)


@dataclass
class IrrReport:
    """One sweep point of measured and predicted rejection."""

    inr_db: float
    inr_eff_db: float
    irr_bar_meas_db: float
    irr_bar_theory_db: float
    irr_c_meas_db: float
    irr_c_theory_db: float
    ser_meas: float
    pc_used: float
    gamma: float
    trials: int
    seed: int
    canceler: str = ""
    sweep_key: str = "inr_db"
    sweep_value: float = 0.0
    failures: int = 0

    def __post_init__(self):
        if self.trials <= 0:
            raise ValueError("trials must be positive")


def inr_effective(inr: float, sir: float | None = None, alpha: float = 0.0) -> float:
    """INR against noise plus the in-band share ``alpha`` of the SOI power."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if sir is None:
        return float(inr)
    sigma_s2 = sir * inr
    return float(inr / (1.0 + alpha * sigma_s2))


@dataclass
class GammaInputs:
    Pc: float = 1.0
    Ps: float = 0.0
    d1: float = 0.0
    d2: float = 0.0
    sigma_eps2: float = 0.0
    Ep_prime: float = 0.0
    sigma_eps: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.Pc <= 1.0 and 0.0 <= self.Ps <= 1.0):
            raise ValueError("Pc and Ps must lie in [0, 1]")
        if self.d1 < 0 or self.d2 < 0 or self.sigma_eps2 < 0 or self.sigma_eps < 0:
            raise ValueError("distances and variances must be non-negative")

    def symbol_factor(self) -> float:
        return 1.0 - (self.Pc * self.d1**2 * self.Ps + (1.0 - self.Pc) * self.d2**2) / 2.0


def _clip_gamma(g: float) -> float:
    return float(min(1.0, max(g, np.finfo(float).tiny)))


def gamma_sc(inputs: GammaInputs) -> float:
    """Symbol-error and timing degradation for single-carrier remodulation."""
    g = inputs.symbol_factor() * (1.0 - inputs.sigma_eps2 * inputs.Ep_prime / 2.0)
    return _clip_gamma(g)


def timing_gain_ofdm(sigma_eps: float) -> float:
    """Mean correlation loss of a Gaussian timing error (in units of ``P`` samples)."""
    a = math.sqrt(2.0) * math.pi * sigma_eps
    if a < 1e-4:
        return 1.0 - a**2 / 3.0 + a**4 / 10.0
    return math.sqrt(math.pi) * math.erf(a) / (2.0 * a)


def gamma_ofdm(inputs: GammaInputs) -> float:
    return _clip_gamma(inputs.symbol_factor() * timing_gain_ofdm(inputs.sigma_eps))


def freq_factor(N: int, sigma_omega: float, exact: bool = True) -> float:
    """Window average of the frequency-error decorrelation, times 2.

    The exact form sums ``exp(-n**2 s**2 / 2)`` over the centred window;
    the approximate form is its erf integral.  Both equal 2 at ``s = 0``.
    """
    s = float(sigma_omega)
    if s == 0.0:
        return 2.0
    if exact:
        n = np.arange(N) - (N - 1) / 2.0
        return float(2.0 / N * np.sum(np.exp(-(n**2) * s**2 / 2.0)))
    b = N * s / (2.0 * math.sqrt(2.0))
    return 2.0 * _h(b * b)


@dataclass(frozen=True)
class XiResult:
    exact: float
    approx: float


def xi_theoretical_sc(A, P, sigmaA2, sigma_theta2, sigma_omega2, gamma, N) -> XiResult:
    """Mean squared replica error per sample, exact sum and erf form."""
    a2 = A**2 / P
    s = math.sqrt(sigma_omega2)
    ph = math.exp(-sigma_theta2 / 2.0)
    base = 2.0 * a2 + sigmaA2 / P
    ex = base - gamma * a2 * ph * freq_factor(N, s, exact=True)
    ap = base - gamma * a2 * ph * freq_factor(N, s, exact=False)
    return XiResult(max(ex, 0.0), max(ap, 0.0))


def _h(u: float) -> float:
    """``sqrt(pi) erf(sqrt(u)) / (2 sqrt(u))``, accurate for small ``u``."""
    if u < 1e-3:
        return 1.0 - u / 3.0 + u**2 / 10.0 - u**3 / 42.0
    r = math.sqrt(u)
    return math.sqrt(math.pi) * math.erf(r) / (2.0 * r)


def _one_minus_h(u: float) -> float:
    if u < 1e-3:
        return u / 3.0 - u**2 / 10.0 + u**3 / 42.0
    return 1.0 - _h(u)


def _crlb_irr(x: float, u: float, gamma: float) -> float:
    v = 1.0 / (4.0 * x)
    h = _h(u)
    den = 2.0 * (1.0 - gamma) + 1.0 / (2.0 * x) + 2.0 * gamma * (-math.expm1(-v) * h + _one_minus_h(u))
    if den <= 0.0:
        return math.inf
    return 1.0 / den


def irr_bar_theory_sc(inr_eff: float, N: float, gamma: float = 1.0) -> float:
    """Predicted IRR-bar for a single-carrier interferer with CRLB-level estimates."""
    x = inr_eff * N
    if not x > 0:
        raise ValueError("inr_eff * N must be positive")
    if x == math.inf:
        return math.inf if gamma == 1.0 else 1.0 / (2.0 * (1.0 - gamma))
    return _crlb_irr(x, 3.0 / (4.0 * x), gamma)


def irr_bar_theory_ofdm(inr_eff: float, N: float, kappa: float, gamma: float = 1.0) -> float:
    """Predicted IRR-bar for a CP-OFDM interferer with CRLB-level estimates."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    x = inr_eff * N
    if not x > 0:
        raise ValueError("inr_eff * N must be positive")
    if x == math.inf:
        return math.inf if gamma == 1.0 else 1.0 / (2.0 * (1.0 - gamma))
    b2 = (1.0 + kappa) ** 2 / (8.0 * x * kappa)
    return _crlb_irr(x, b2, gamma)


def irr_c_theory(
    inr: float,
    N: int,
    sigmaA2_rel: float = 0.0,
    sigma_theta2: float = 0.0,
    sigma_omega2: float = 0.0,
    gamma: float = 1.0,
) -> float:
    """Predicted ratio of ``E|z+w|^2`` to ``E|z+w-z_hat|^2`` at unit noise power.

    ``sigmaA2_rel`` is the amplitude error variance relative to ``A**2``.
    """
    a2 = float(inr)
    corr = gamma * math.exp(-sigma_theta2 / 2.0) * a2 * freq_factor(N, math.sqrt(sigma_omega2), exact=False)
    den = 2.0 * a2 + sigmaA2_rel * a2 - corr + 1.0
    return (a2 + 1.0) / den


def _q(x):
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def ser_theoretical(scheme: Scheme | str, esn0: float) -> float:
    """Symbol error rate in AWGN at symbol SNR ``esn0`` (linear)."""
    scheme = Scheme.parse(scheme)
    if esn0 < 0:
        raise ValueError("esn0 must be non-negative")
    if scheme is Scheme.BPSK:
        return float(_q(math.sqrt(2.0 * esn0)))
    if scheme is Scheme.QPSK:
        q = float(_q(math.sqrt(esn0)))
        return 2.0 * q - q * q
    if scheme is Scheme.PSK8:
        m = 8
        s2 = math.sin(math.pi / m) ** 2

        def f(phi):
            return math.exp(-esn0 * s2 / math.sin(phi) ** 2)

        val, _ = integrate.quad(f, 0.0, (m - 1) * math.pi / m, limit=200, epsabs=1e-300, epsrel=1e-12)
        return float(min(1.0, val / math.pi))
    M = scheme.order
    p = 2.0 * (1.0 - 1.0 / math.sqrt(M)) * float(_q(math.sqrt(3.0 * esn0 / (M - 1))))
    return float(1.0 - (1.0 - p) ** 2)


def error_distances(
    scheme: Scheme | str,
    candidates: Sequence[Scheme | str] | None = None,
    weights: Mapping[Scheme, float] | None = None,
) -> tuple[float, float]:
    """Minimum distance of ``scheme`` and mean nearest-alternate distance to the others.

    The alternates are averaged uniformly unless ``weights`` (for example
    measured confusion counts) says otherwise.
    """
    scheme = Scheme.parse(scheme)
    cands = [Scheme.parse(c) for c in (candidates if candidates is not None else list(Scheme))]
    if scheme not in cands:
        raise ValueError("scheme must be among the candidates")
    pts = make_constellation(scheme).points
    d1 = make_constellation(scheme).min_distance
    others = [c for c in cands if c is not scheme]
    if not others:
        return d1, 0.0
    per = []
    for c in others:
        alt = make_constellation(c).points
        per.append(np.mean(np.min(np.abs(pts[:, None] - alt[None, :]), axis=1)))
    if weights is None:
        return float(d1), float(np.mean(per))
    w = np.array([float(weights.get(c, 0.0)) for c in others])
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive total over the alternates")
    return float(d1), float(np.dot(w, per) / w.sum())
