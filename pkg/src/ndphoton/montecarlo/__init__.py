from .config import Estimate, EstimatorSet, ProtocolConfig, TrialRecord
from .engine import (amplitudes_for, concatenated_batch, run_batch, run_trial, simulate, tally,
                     trial_stream)
from .oracle import OracleResult, PulseOracle, forward_oracle, pulse_oracle, single_photon_oracle

__all__ = [
    "Estimate", "EstimatorSet", "ProtocolConfig", "TrialRecord",
    "amplitudes_for", "concatenated_batch", "run_batch", "run_trial", "simulate", "tally",
    "trial_stream", "OracleResult", "PulseOracle", "forward_oracle", "pulse_oracle",
    "single_photon_oracle",
]
