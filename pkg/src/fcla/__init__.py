"""Beamforming and antenna-position optimisation for flexible cylindrical arrays."""

from .channel import PathParameters, Scenario, build_channel, channel_entry, sample_scenario, steering_entry
from .fp import solve_beamformer, sum_rate
from .geometry import AntennaLayout, ArrayConfig, check_feasible, default_layout
from .orchestrator import SolverOptions, SystemSetup, Variant, monte_carlo, run_fp_loop
from .position import PositionOptions, cgs_adam_psi, cgs_adam_z

__version__ = "0.1.0"
