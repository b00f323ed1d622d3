"""Spatially coupled sparse graph modulation: density evolution, capacity
analysis and link-level simulation of interference-cancellation receivers."""

from sgmod.capacity import (CurvePoint, CurveTable, Receiver, SweepSpec, c_eff, ebn0_of,
                            sweep_fig2, theorem1_rate)
from sgmod.core import (EbN0, awgn_capacity_fixed_point, biawgn_capacity,
                        biawgn_capacity_inverse, mse_g)
from sgmod.density import (DeTrajectory, Mode, Model, SinrProfile, SystemParams, operator_F,
                           run_de, two_stage_max_rate)
from sgmod.errors import ConfigurationError, DomainError, InvariantError
from sgmod.linksim import LinkSimConfig, LinkSimState, generate_world, run_linksim

__version__ = "0.1.0"
