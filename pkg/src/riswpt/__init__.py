"""Joint constant-envelope transmit and RIS phase design for wireless power transfer."""

from .channels import ScenarioConfig, build_scenario
from .model import (
    ChannelSet,
    PowerConstraints,
    RisPhases,
    SolveResult,
    TxBeamformer,
    build_ris_quadratic,
    check_feasibility,
    compose_channel,
    received_powers,
    sca_bound_x,
    total_power,
)
from .oracle import GridSpec, estimate_qmm, grid_search
from .solver import SolverConfig, initial_point, spmc_sca_admm

__version__ = "0.1.0"
