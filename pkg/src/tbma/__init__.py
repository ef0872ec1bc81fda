"""Type-based multiple access in a two-cell fog radio access network.

Simulation of the TBMA uplink, fronthaul quantization, optimal and learned
edge/cloud detectors, Chernoff error exponents and Monte Carlo sweeps.
"""

from .airlink import SimBatch, simulate_batch, simulate_interval, simulate_trace
from .config import (ConfigError, Hypothesis, HYPOTHESES, QoiPair, ReuseMode, SystemConfig,
                     default_config, load_config, observation_pmf, sample_qoi_pair)
from .detect import (ADAPTIVE, Detector, TruncationPolicy, brute_force_loglik_oracle, cloud_detect,
                     edge_detect, loglik_interval)
from .experiments import ExperimentRecord, SweepPlan, emit_csv, estimate_pe, figure_plans, run_sweep
from .exponents import (alpha_chernoff_gaussian, chernoff_info, cloud_exponent, edge_exponent,
                        exponent_report, interference_limit_check)
from .fronthaul import QuantizationSpec, solve_quantization_variance

__all__ = [
    "ADAPTIVE", "ConfigError", "Detector", "ExperimentRecord", "HYPOTHESES", "Hypothesis", "QoiPair",
    "QuantizationSpec", "ReuseMode", "SimBatch", "SweepPlan", "SystemConfig", "TruncationPolicy",
    "alpha_chernoff_gaussian", "brute_force_loglik_oracle", "chernoff_info", "cloud_detect",
    "cloud_exponent", "default_config", "edge_detect", "edge_exponent", "emit_csv", "estimate_pe",
    "exponent_report", "figure_plans", "load_config", "loglik_interval", "observation_pmf",
    "run_sweep", "sample_qoi_pair", "simulate_batch", "simulate_interval", "simulate_trace",
    "solve_quantization_variance", "interference_limit_check",
]
