"""Massive MIMO uplink under double-scattering channels.

Channel statistics, LMMSE estimation, closed-form and simulated spectral
efficiency with MR combining, and QoS-constrained power minimization.
"""

from .config import ConfigError, NetworkConfig, load_config
from .channel import (ChannelSampler, NetworkStatistics, drop_network, large_scale_fading,
                      network_statistics, sample_channel)
from .estimation import EstimationContext, PilotPlan, assign_pilots, lmmse_estimate
from .spectral import (SinrCoefficients, closed_form_sinr, monte_carlo_sinr,
                       spectral_efficiency)
from .power import (QoSTargets, algorithm1_solve, algorithm2_solve,
                    check_feasibility_and_optimality, satisfied_probability, sinr_target)
from .harness import ExperimentSpec, run_power_sweep, run_se_validation

__all__ = [
    "ConfigError", "NetworkConfig", "load_config",
    "ChannelSampler", "NetworkStatistics", "drop_network", "large_scale_fading",
    "network_statistics", "sample_channel",
    "EstimationContext", "PilotPlan", "assign_pilots", "lmmse_estimate",
    "SinrCoefficients", "closed_form_sinr", "monte_carlo_sinr", "spectral_efficiency",
    "QoSTargets", "algorithm1_solve", "algorithm2_solve",
    "check_feasibility_and_optimality", "satisfied_probability", "sinr_target",
    "ExperimentSpec", "run_power_sweep", "run_se_validation",
]
__version__ = "0.1.0"
