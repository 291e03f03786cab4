"""Constant-envelope precoding transceiver design for point-to-point MIMO."""

from .annulus import Annulus, annulus_of, is_constellation_feasible, optimal_scaling
from .ce_phase import TargetOutsideAnnulus, solve_phases, synthesize
from .constellation import Constellation, make_psk, make_qam, ml_detect
from .core import CeTransmitVector, SystemConfig, apply_channel, sample_rayleigh_channel
from .multi_stream import GroupingPlan, grouping_search, index_grouping, solve_mmse_receiver, solve_zf_receiver
from .simharness import SweepConfig, compare_schemes, run_sweep, write_csv
from .single_stream import RandomizationConfig, ReceiverSolution, optimize_receiver

__all__ = [
    "Annulus", "annulus_of", "is_constellation_feasible", "optimal_scaling",
    "TargetOutsideAnnulus", "solve_phases", "synthesize",
    "Constellation", "make_psk", "make_qam", "ml_detect",
    "CeTransmitVector", "SystemConfig", "apply_channel", "sample_rayleigh_channel",
    "GroupingPlan", "grouping_search", "index_grouping", "solve_mmse_receiver", "solve_zf_receiver",
    "SweepConfig", "compare_schemes", "run_sweep", "write_csv",
    "RandomizationConfig", "ReceiverSolution", "optimize_receiver",
]
