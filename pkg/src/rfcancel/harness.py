"""Configuration, Monte-Carlo sweep engine and command-line interface."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from . import io as iqio
from .cancel import (
    demod_remod_ofdm,
    demod_remod_sc,
    reference_filter_cancel,
    stsa_cancel,
    symbol_error_rate,
)
from .classify import PcTable, calibrate_pc
from .estimators import (
    crlb_freq_ofdm,
    crlb_single_carrier,
    crlb_timing,
    crlb_timing_ofdm,
    pulse_derivative_energy,
)
from .metrics import (
    REPORT_COLUMNS,
    GammaInputs,
    IrrAccumulator,
    IrrReport,
    error_distances,
    gamma_ofdm,
    gamma_sc,
    inr_effective,
    irr_bar_theory_ofdm,
    irr_bar_theory_sc,
    irr_c_theory,
    ser_theoretical,
    to_db,
)
from .signals import ALL_SCHEMES, Scheme, ScenarioConfig, SignalBuffer, awgn, compose_scenario

__all__ = [
    "CONFIG_KEYS",
    "CSV_COLUMNS",
    "WORKERS_ENV",
    "ConfigError",
    "SweepSpec",
    "TrialResult",
    "parse_config",
    "load_config",
    "parse_values",
    "scenario_config",
    "split_windows",
    "trial_seed",
    "run_trial",
    "run_sweep",
    "theory_row",
    "reports_to_csv",
    "cli",
    "main",
]

WORKERS_ENV = "RFCANCEL_WORKERS"
CSV_COLUMNS = REPORT_COLUMNS + ("canceler", "sweep_key", "sweep_value", "failures")
CANCELERS = ("demod_remod", "stsa", "ref")


class ConfigError(ValueError):
    """Malformed configuration or command line."""


def _none_or_float(v: str) -> float | None:
    return None if v.strip().lower() in ("", "none") else float(v)


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _scheme_list(v: str) -> tuple[Scheme, ...]:
    return tuple(Scheme.parse(s) for s in v.split(",") if s.strip())


def _name_list(v: str) -> tuple[str, ...]:
    names = tuple(s.strip().lower() for s in v.split(",") if s.strip())
    for n in names:
        if n not in CANCELERS:
            raise ValueError(f"unknown canceler {n!r}")
    return names


# key -> (parser, default, meaning)
CONFIG_KEYS: dict[str, tuple[Any, Any, str]] = {
    "scenario.kind": (str, "sc", "sc (single carrier) or ofdm"),
    "scenario.scheme": (Scheme.parse, Scheme.QPSK, "interferer constellation"),
    "scenario.inr_db": (float, 10.0, "A^2/(P sigma_n^2) in dB"),
    "scenario.sir_db": (_none_or_float, None, "SOI to interference power in dB; none = no SOI"),
    "scenario.alpha": (float, 0.07, "share of SOI bandwidth overlapping the interferer"),
    "scenario.k": (int, 69, "symbols per single-carrier analysis window"),
    "scenario.windows": (int, 1, "analysis windows per burst"),
    "scenario.burst_symbols": (int, 450, "single-carrier burst length in symbols"),
    "scenario.noise_var": (float, 1.0, "noise variance (0 for noiseless runs)"),
    "scenario.omega_frac": (_none_or_float, None, "frequency offset range as a fraction of the symbol rate"),
    "pulse.p": (int, 82, "samples per symbol"),
    "pulse.rolloff": (float, 0.4, "root-raised-cosine roll-off"),
    "pulse.span": (int, 21, "pulse length in symbols"),
    "ofdm.m": (int, 64, "subcarriers"),
    "ofdm.l": (int, 5, "cyclic prefix in subcarrier samples"),
    "ofdm.symbols": (int, 7, "OFDM symbols per burst, about the single-carrier burst duration"),
    "soi.f0": (float, 0.05, "chirp start frequency, cycles/sample"),
    "soi.c": (float, 4e-5, "chirp rate, cycles/sample^2"),
    "stsa.block": (int, 11, "STSA block length in samples"),
    "ref.inr_d_db": (float, 100.0, "INR of the reference channel in dB"),
    "sweep.key": (str, "scenario.inr_db", "swept key: scenario.inr_db, scenario.sir_db or stsa.block"),
    "sweep.values": (str, "-20:5:25", "start:step:stop (inclusive) or comma list"),
    "sweep.trials": (int, 300, "trials per point"),
    "sweep.seed": (int, 0, "base seed"),
    "sweep.cancelers": (_name_list, ("demod_remod",), "comma list of demod_remod, stsa, ref"),
    "sweep.candidates": (_scheme_list, ALL_SCHEMES, "classifier candidates"),
    "sweep.workers": (int, 1, f"worker processes (overridden by ${WORKERS_ENV})"),
    "theory.pc_table": (str, "", "P_c table CSV; empty = empirical P_c of the run"),
    "theory.d2_confusion": (_bool, False, "weight d2 by the run's measured confusions instead of uniformly"),
    "output.csv": (str, "", "results CSV path"),
    "output.residual": (str, "", "float32 IQ path for the first trial's residual"),
}

SWEEPABLE = ("scenario.inr_db", "scenario.sir_db", "stsa.block")


def _defaults() -> dict[str, Any]:
    return {k: v[1] for k, v in CONFIG_KEYS.items()}


def _set(cfg: dict[str, Any], key: str, raw: str) -> None:
    k = key.strip().lower()
    if k not in CONFIG_KEYS:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        cfg[k] = CONFIG_KEYS[k][0](raw.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {k}: {exc}") from None


def parse_config(text: str, base: dict[str, Any] | None = None) -> dict[str, Any]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    cfg = dict(base) if base is not None else _defaults()
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        _set(cfg, k, v)
    return cfg


def load_config(path: str | None, overrides: Sequence[str] = ()) -> dict[str, Any]:
    cfg = _defaults()
    if path:
        try:
            with open(path) as fh:
                cfg = parse_config(fh.read(), cfg)
        except OSError as exc:
            raise ConfigError(str(exc)) from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        _set(cfg, k, v)
    return cfg


def parse_values(text: str) -> list[float]:
    """``start:step:stop`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        try:
            a, s, b = (float(t) for t in text.split(":"))
        except ValueError:
            raise ConfigError(f"bad range {text!r}") from None
        if s == 0 or (b - a) / s < 0:
            raise ConfigError(f"empty range {text!r}")
        n = int(math.floor((b - a) / s + 1e-9)) + 1
        return [a + i * s for i in range(n)]
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad value list {text!r}") from None
    if not vals:
        raise ConfigError("no sweep values")
    return vals


def scenario_config(cfg: dict[str, Any], seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(
        kind=cfg["scenario.kind"],
        scheme=cfg["scenario.scheme"],
        inr_db=cfg["scenario.inr_db"],
        sir_db=cfg["scenario.sir_db"],
        P=cfg["pulse.p"],
        rolloff=cfg["pulse.rolloff"],
        span=cfg["pulse.span"],
        K=cfg["scenario.k"],
        windows=cfg["scenario.windows"],
        burst_symbols=cfg["scenario.burst_symbols"],
        ofdm_M=cfg["ofdm.m"],
        ofdm_L=cfg["ofdm.l"],
        ofdm_symbols=cfg["ofdm.symbols"],
        soi_f0=cfg["soi.f0"],
        soi_c=cfg["soi.c"],
        alpha=cfg["scenario.alpha"],
        omega_frac=cfg["scenario.omega_frac"],
        noise_var=cfg["scenario.noise_var"],
        seed=seed,
    )


# ---------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepSpec:
    """A scenario template, one swept key and how to run it."""

    config: dict[str, Any] = field(default_factory=_defaults)
    key: str = "scenario.inr_db"
    values: tuple[float, ...] = (10.0,)
    trials: int = 300
    cancelers: tuple[str, ...] = ("demod_remod",)
    seed: int = 0
    workers: int = 1
    pc_table: PcTable | None = None
    residual_path: str = ""

    def __post_init__(self):
        if not self.values:
            raise ConfigError("a sweep needs at least one point")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.key not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {self.key!r}")
        for c in self.cancelers:
            if c not in CANCELERS:
                raise ConfigError(f"unknown canceler {c!r}")

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "SweepSpec":
        table = PcTable.load(cfg["theory.pc_table"]) if cfg["theory.pc_table"] else None
        workers = cfg["sweep.workers"]
        if os.environ.get(WORKERS_ENV):
            workers = int(os.environ[WORKERS_ENV])
        return cls(
            config=dict(cfg),
            key=cfg["sweep.key"].lower(),
            values=tuple(parse_values(cfg["sweep.values"])),
            trials=cfg["sweep.trials"],
            cancelers=tuple(cfg["sweep.cancelers"]),
            seed=cfg["sweep.seed"],
            workers=max(1, workers),
            pc_table=table,
            residual_path=cfg["output.residual"],
        )

    def point_config(self, value: float) -> dict[str, Any]:
        cfg = dict(self.config)
        cfg[self.key] = int(value) if self.key == "stsa.block" else float(value)
        return cfg


@dataclass
class TrialResult:
    num: float = 0.0
    den: float = 0.0
    num_c: float = 0.0
    den_c: float = 0.0
    errors: int = 0
    symbols: int = 0
    classified: int = 0
    correct: int = 0
    verdict: str = ""
    failed: bool = False


def trial_seed(base: int, point: int, trial: int) -> int:
    """Seed of one trial, independent of every other trial."""
    return int(np.random.SeedSequence([base, point, trial]).generate_state(1)[0])


def _ofdm_ser(out, sc) -> tuple[int, int]:
    S = sc.config.ofdm.symbol_len
    grid = np.asarray(out.symbols_hat)
    truth = np.asarray(sc.symbols)
    if grid.size == 0:
        return 0, 0
    idx = np.round((np.asarray(out.symbol_positions) - sc.first_symbol) / S).astype(int)
    ok = (idx >= 0) & (idx < truth.shape[1])
    if not np.any(ok):
        return 0, 0
    dec, tru = grid[:, ok], truth[:, idx[ok]]
    m = out.scheme.symmetry
    errs = min(int(np.sum(np.abs(dec * np.exp(2j * np.pi * i / m) - tru) > 1e-6)) for i in range(m))
    return errs, int(dec.size)


def run_trial(cfg: dict[str, Any], canceler: str, seed: int, keep_residual: bool = False):
    """One synthetic trial; estimation failures are flagged, never raised."""
    if canceler not in CANCELERS:
        raise ValueError(f"unknown canceler {canceler!r}")
    scfg = scenario_config(cfg, seed)
    sc = compose_scenario(scfg)
    x = sc.r.samples
    res = TrialResult()
    out = None
    try:
        if canceler == "demod_remod":
            cands = cfg["sweep.candidates"]
            if scfg.kind == "sc":
                P = scfg.P
                n_sym = len(sc.symbols)
                span = (int(sc.first_symbol - P / 2), int(sc.first_symbol + (n_sym - 1) * P + P / 2))
                out = demod_remod_sc(x, scfg.pulse, cands, sc.windows, classify_span=span)
                if not out.failed:
                    res.errors, res.symbols = symbol_error_rate(
                        out.symbols_hat, out.symbol_positions, sc.symbols, sc.first_symbol, P, out.scheme)
            else:
                out = demod_remod_ofdm(x, scfg.ofdm, cands, sc.windows)
                if not out.failed:
                    res.errors, res.symbols = _ofdm_ser(out, sc)
            if out.verdict is not None:
                res.classified = 1
                res.correct = int(out.verdict.scheme is scfg.scheme)
                res.verdict = out.verdict.scheme.value
        elif canceler == "stsa":
            out = stsa_cancel(x, cfg["stsa.block"])
        else:
            sigma_d2 = sc.truth.A**2 / scfg.P / 10 ** (cfg["ref.inr_d_db"] / 10)
            d = sc.z.samples + awgn(len(x), sigma_d2, seed ^ 0x5A5A5A5A).samples
            a, n = sc.windows[0]
            out = reference_filter_cancel(x, d, n, a)
        res.failed = bool(out.failed)
        z_hat = out.z_hat.samples
    except Exception:  # noqa: BLE001 - a broken trial must not abort a sweep
        res.failed = True
        z_hat = np.zeros_like(x)
    z = sc.z.samples
    for a, n in sc.windows:
        sl = slice(a, a + n)
        res.num += float(np.sum(np.abs(z[sl]) ** 2))
        res.den += float(np.sum(np.abs(z[sl] - z_hat[sl]) ** 2))
        res.num_c += float(np.sum(np.abs(x[sl]) ** 2))
        res.den_c += float(np.sum(np.abs(x[sl] - z_hat[sl]) ** 2))
    if keep_residual:
        return res, x - z_hat
    return res


def _run_job(job):
    cfg, canceler, seed = job
    return run_trial(cfg, canceler, seed)


def theory_row(cfg: dict[str, Any], pc: float = 1.0, confusion: dict[Scheme, int] | None = None) -> dict[str, float]:
    """Closed-form predictions for one configuration at the CRLB."""
    scfg = scenario_config(cfg)
    noise = scfg.noise_var
    inr = 10 ** (scfg.inr_db / 10) / noise if noise > 0 else math.inf
    sir = None if scfg.sir_db is None else 10 ** (scfg.sir_db / 10)
    inr_eff = inr_effective(inr, sir, scfg.alpha) if math.isfinite(inr) else math.inf
    scheme = scfg.scheme
    cands = list(cfg["sweep.candidates"])
    if scheme not in cands:
        cands.append(scheme)
    d1, d2 = error_distances(scheme, cands, confusion or None)
    N = scfg.N
    if not math.isfinite(inr_eff):
        return dict(inr_eff=inr_eff, gamma=1.0, irr_bar=math.inf, irr_c=math.inf, ps=0.0)
    ps = ser_theoretical(scheme, inr_eff * scfg.P)
    if scfg.kind == "sc":
        Ep = pulse_derivative_energy(scfg.pulse)
        g = gamma_sc(GammaInputs(pc, ps, d1, d2, crlb_timing(inr_eff, N, Ep), Ep))
        irr = irr_bar_theory_sc(inr_eff, N, g)
        sw2 = crlb_single_carrier(inr_eff, N)["sigma_omega2"]
    else:
        k = scfg.ofdm.kappa
        g = gamma_ofdm(GammaInputs(pc, ps, d1, d2, sigma_eps=math.sqrt(crlb_timing_ofdm(inr_eff, N))))
        irr = irr_bar_theory_ofdm(inr_eff, N, k, g)
        sw2 = crlb_freq_ofdm(inr_eff, N, k)
    c = crlb_single_carrier(inr_eff, N)
    irr_c = irr_c_theory(inr, N, c["sigmaA2_over_A2"], c["sigma_theta2"], sw2, g)
    return dict(inr_eff=inr_eff, gamma=g, irr_bar=irr, irr_c=irr_c, ps=ps)


def run_sweep(spec: SweepSpec) -> list[IrrReport]:
    """Every (point, canceler) aggregated into one report row."""
    jobs, keys = [], []
    for pi, value in enumerate(spec.values):
        pcfg = spec.point_config(value)
        for ci, canc in enumerate(spec.cancelers):
            for t in range(spec.trials):
                jobs.append((pcfg, canc, trial_seed(spec.seed, pi, t)))
                keys.append((pi, ci, t))
    if spec.residual_path:
        _, resid = run_trial(*jobs[0], keep_residual=True)
        iqio.write_iq(spec.residual_path, resid, "float32")
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (8 * spec.workers))))
    else:
        results = [_run_job(j) for j in jobs]
    by_key = dict(zip(keys, results))

    reports = []
    for pi, value in enumerate(spec.values):
        pcfg = spec.point_config(value)
        for ci, canc in enumerate(spec.cancelers):
            acc = IrrAccumulator()
            errs = syms = classified = correct = fails = 0
            confusion: dict[Scheme, int] = {}
            for t in range(spec.trials):  # fixed order keeps sums reproducible
                r = by_key[(pi, ci, t)]
                acc.add(r.num, r.den, r.num_c, r.den_c)
                errs += r.errors
                syms += r.symbols
                classified += r.classified
                correct += r.correct
                fails += int(r.failed)
                if r.verdict and not r.correct:
                    s = Scheme.parse(r.verdict)
                    confusion[s] = confusion.get(s, 0) + 1
            if spec.pc_table is not None:
                pc = spec.pc_table.lookup(pcfg["scenario.inr_db"])
            elif classified:
                pc = correct / classified
            else:
                pc = 1.0
            th = theory_row(pcfg, pc, confusion if pcfg["theory.d2_confusion"] else None)
            has_theory = canc == "demod_remod"
            nan = math.nan
            reports.append(IrrReport(
                inr_db=float(pcfg["scenario.inr_db"]),
                inr_eff_db=to_db(th["inr_eff"]),
                irr_bar_meas_db=to_db(acc.irr_bar),
                irr_bar_theory_db=to_db(th["irr_bar"]) if has_theory else nan,
                irr_c_meas_db=to_db(acc.irr_c),
                irr_c_theory_db=to_db(th["irr_c"]) if has_theory else nan,
                ser_meas=errs / syms if syms else nan,
                pc_used=pc if has_theory else nan,
                gamma=th["gamma"] if has_theory else nan,
                trials=spec.trials,
                seed=spec.seed,
                canceler=canc,
                sweep_key=spec.key,
                sweep_value=float(value),
                failures=fails,
            ))
    return reports


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def reports_to_csv(reports: Sequence[IrrReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


# ---------------------------------------------------------------- CLI


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}\n{self.format_usage()}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a configuration key")


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rfcancel", description="Demod-Remod interference cancellation toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="synthesise one scenario to a float32 IQ file")
    _common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cancel", help="cancel the interferer in an IQ file")
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--format", default="float32", choices=[f.value for f in iqio.IqFormat])
    p.add_argument("--canceler", default="demod_remod", choices=["demod_remod", "stsa"])
    p.add_argument("--window", help="analysis window start:length (default: whole file)")
    p.add_argument("--out", required=True, help="residual, float32 IQ")

    p = sub.add_parser("sweep", help="Monte-Carlo sweep to CSV")
    _common(p)
    p.add_argument("--out", help="CSV path (overrides output.csv)")
    p.add_argument("--residual", help="save the first trial's residual as float32 IQ")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("theory", help="closed-form curves without simulation")
    p.add_argument("--inr", required=True, help="start:step:stop or comma list, dB")
    p.add_argument("--n", type=int, required=True, help="window length in samples")
    p.add_argument("--mod", default="qpsk")
    p.add_argument("--kind", default="sc", choices=["sc", "ofdm"])
    p.add_argument("--sir", type=float, help="SIR in dB (omit for no SOI)")
    p.add_argument("--alpha", type=float, default=0.07)
    p.add_argument("--p", type=int, default=82)
    p.add_argument("--kappa", type=float, default=5 / 64)

    p = sub.add_parser("calibrate-pc", help="empirical classification probability table")
    p.add_argument("--inr", required=True, help="start:step:stop or comma list, dB")
    p.add_argument("--len", dest="lens", default="450", help="sequence lengths in symbols, comma list")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mod", default="qpsk")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="detect bursts in an IQ capture")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--format", default="float32", choices=[f.value for f in iqio.IqFormat])
    p.add_argument("--rate", type=float, default=1.0, help="sample rate in Hz")
    p.add_argument("--window", type=int, default=256)
    p.add_argument("--threshold", type=float, default=iqio.DEFAULT_THRESHOLD_DB)
    p.add_argument("--min-len", type=int, default=1024)
    p.add_argument("--out", help="segment CSV (default stdout)")

    p = sub.add_parser("psd", help="Welch PSD table of an IQ file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--format", default="float32", choices=[f.value for f in iqio.IqFormat])
    p.add_argument("--nfft", type=int, default=1024)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--scaling", default="spectrum", choices=["spectrum", "density"])
    p.add_argument("--out", help="CSV path (default stdout)")
    return ap


def _cmd_synth(a) -> int:
    cfg = load_config(a.config, a.set)
    sc = compose_scenario(scenario_config(cfg, a.seed))
    iqio.write_iq(a.out, sc.r, "float32")
    t = sc.truth
    json.dump({
        "samples": len(sc.r), "windows": [list(w) for w in sc.windows], "origin": sc.origin,
        "first_symbol": sc.first_symbol, "A": t.A, "omega": t.omega, "theta": t.theta,
        "epsilon": t.epsilon, "scheme": t.scheme.value,
    }, sys.stdout)
    sys.stdout.write("\n")
    return 0


def split_windows(start: int, length: int, N: int) -> list[tuple[int, int]]:
    """Consecutive ``N``-sample estimation windows; the remainder joins the last one."""
    if length <= 0 or N <= 0:
        raise ValueError("length and N must be positive")
    k = max(1, length // N)
    out = [(start + i * N, N) for i in range(k)]
    s0 = out[-1][0]
    out[-1] = (s0, start + length - s0)
    return out


def _cmd_cancel(a) -> int:
    cfg = load_config(a.config, a.set)
    scfg = scenario_config(cfg)
    rec = iqio.read_iq(a.inp, a.format)
    x = rec.samples.samples
    if a.window:
        try:
            s, n = (int(v) for v in a.window.split(":"))
        except ValueError:
            raise ConfigError("--window must be start:length") from None
        windows = [(s, n)]
    else:
        segs = [(s.start, s.length) for s in iqio.detect_bursts(rec)] or [(0, len(x))]
        windows = [w for s, n in segs for w in split_windows(s, n, scfg.N)]
    if a.canceler == "stsa":
        out = stsa_cancel(x, cfg["stsa.block"])
    elif scfg.kind == "sc":
        out = demod_remod_sc(x, scfg.pulse, cfg["sweep.candidates"], windows)
    else:
        out = demod_remod_ofdm(x, scfg.ofdm, cfg["sweep.candidates"], None if not a.window else windows)
    iqio.write_iq(a.out, out.residual, "float32")
    json.dump({
        "failed": out.failed,
        "scheme": out.scheme.value if out.scheme else None,
        "sync": [{"A": e.A_hat, "omega": e.omega_hat, "theta": e.theta_hat, "epsilon": e.epsilon_hat}
                 for e in out.sync],
    }, sys.stdout)
    sys.stdout.write("\n")
    return 2 if out.failed else 0


def _cmd_sweep(a) -> int:
    cfg = load_config(a.config, a.set)
    if a.out:
        cfg["output.csv"] = a.out
    if a.residual:
        cfg["output.residual"] = a.residual
    spec = SweepSpec.from_config(cfg)
    if a.workers:
        spec = replace(spec, workers=a.workers)
    text = reports_to_csv(run_sweep(spec))
    if cfg["output.csv"]:
        with open(cfg["output.csv"], "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_theory(a) -> int:
    cfg = _defaults()
    cfg["scenario.kind"] = a.kind
    cfg["scenario.scheme"] = Scheme.parse(a.mod)
    cfg["scenario.sir_db"] = a.sir
    cfg["scenario.alpha"] = a.alpha
    cfg["pulse.p"] = a.p
    if a.n < 1:
        raise ConfigError("--n must be positive")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["inr_db", "inr_eff_db", "irr_bar_theory_db", "irr_c_theory_db", "gamma"])
    for inr in parse_values(a.inr):
        cfg["scenario.inr_db"] = inr
        th = _theory_n(cfg, a.n, a.kappa)
        w.writerow([repr(float(inr)), repr(to_db(th["inr_eff"])), repr(to_db(th["irr_bar"])),
                    repr(to_db(th["irr_c"])), repr(th["gamma"])])
    return 0


def _theory_n(cfg: dict[str, Any], N: int, kappa: float) -> dict[str, float]:
    """Theory at an explicit window length rather than the scenario's own."""
    scfg = scenario_config(cfg)
    inr = 10 ** (scfg.inr_db / 10)
    sir = None if scfg.sir_db is None else 10 ** (scfg.sir_db / 10)
    inr_eff = inr_effective(inr, sir, scfg.alpha)
    scheme = scfg.scheme
    d1, d2 = error_distances(scheme, list(ALL_SCHEMES))
    ps = ser_theoretical(scheme, inr_eff * scfg.P)
    c = crlb_single_carrier(inr_eff, N)
    if scfg.kind == "sc":
        Ep = pulse_derivative_energy(scfg.pulse)
        g = gamma_sc(GammaInputs(1.0, ps, d1, d2, crlb_timing(inr_eff, N, Ep), Ep))
        irr = irr_bar_theory_sc(inr_eff, N, g)
        sw2 = c["sigma_omega2"]
    else:
        g = gamma_ofdm(GammaInputs(1.0, ps, d1, d2, sigma_eps=math.sqrt(crlb_timing_ofdm(inr_eff, N))))
        irr = irr_bar_theory_ofdm(inr_eff, N, kappa, g)
        sw2 = crlb_freq_ofdm(inr_eff, N, kappa)
    irr_c = irr_c_theory(inr, N, c["sigmaA2_over_A2"], c["sigma_theta2"], sw2, g)
    return dict(inr_eff=inr_eff, gamma=g, irr_bar=irr, irr_c=irr_c)


def _cmd_calibrate(a) -> int:
    try:
        lens = [int(v) for v in a.lens.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("--len must be a comma list of integers") from None
    grid = [(inr, ln) for ln in lens for inr in parse_values(a.inr)]
    table = calibrate_pc(grid, a.trials, a.seed, scheme=a.mod)
    table.save(a.out)
    return 0


def _write_or_print(path: str | None, text: str) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_ingest(a) -> int:
    rec = iqio.read_iq(a.inp, a.format, a.rate)
    segs = iqio.detect_bursts(rec, a.window, a.threshold, a.min_len)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["start", "length", "inr_est_db"])
    for s in segs:
        w.writerow([s.start, s.length, repr(float(s.inr_est_db))])
    _write_or_print(a.out, buf.getvalue())
    return 0


def _cmd_psd(a) -> int:
    rec = iqio.read_iq(a.inp, a.format)
    f, p = iqio.export_psd(rec.samples, a.nfft, a.overlap, a.scaling)
    if a.out:
        iqio.write_psd_csv(a.out, f, p)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["freq_norm", "power_db"])
        for fi, pi in zip(f, p):
            w.writerow([repr(float(fi)), repr(float(pi))])
        sys.stdout.write(buf.getvalue())
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "cancel": _cmd_cancel,
    "sweep": _cmd_sweep,
    "theory": _cmd_theory,
    "calibrate-pc": _cmd_calibrate,
    "ingest": _cmd_ingest,
    "psd": _cmd_psd,
}


def cli(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; 0 on success, 1 on usage errors, 2 on data errors."""
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # let option values such as "-10:5:25" through
    for i in range(len(argv) - 1, 0, -1):
        if argv[i - 1].startswith("--") and "=" not in argv[i - 1] and re.match(r"^-\d", argv[i]):
            argv[i - 1 : i + 1] = [f"{argv[i - 1]}={argv[i]}"]
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.cmd](args)
    except ConfigError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"rfcancel: {exc}\n")
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
