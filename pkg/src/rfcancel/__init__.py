"""Blind demodulate-remodulate cancellation of modulated RF interference.

Submodules: ``signals`` (synthesis), ``estimators`` (blind synchronisation and
bounds), ``classify`` (modulation identification), ``cancel`` (cancelers),
``metrics`` (rejection ratios and closed-form predictions), ``io`` (IQ files,
burst detection, spectra) and ``harness`` (sweeps and the command line).
"""

from .cancel import CancellationOutcome, demod_remod_ofdm, demod_remod_sc, reference_filter_cancel, stsa_cancel
from .classify import PcTable, classify_modulation
from .metrics import IrrReport, irr_bar_theory_ofdm, irr_bar_theory_sc
from .signals import OfdmConfig, Scheme, ScenarioConfig, compose_scenario, rrc_pulse

__version__ = "0.1.0"

__all__ = [
    "CancellationOutcome",
    "IrrReport",
    "OfdmConfig",
    "PcTable",
    "Scheme",
    "ScenarioConfig",
    "classify_modulation",
    "compose_scenario",
    "demod_remod_ofdm",
    "demod_remod_sc",
    "irr_bar_theory_ofdm",
    "irr_bar_theory_sc",
    "reference_filter_cancel",
    "rrc_pulse",
    "stsa_cancel",
]
