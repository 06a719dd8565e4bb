"""Projection-free bilevel optimization with an inexact conditional gradient."""
from .geometry import L1Ball, NuclearBall, Simplex, Box, fw_gap, lmo, project
from .oracle import (BilevelOracle, CountingOracle, ProblemConstants, derived_lipschitz_bundle,
                     validate_oracle)
from .solver import (GammaPolicy, IbcgState, SolverError, StepSchedule, ibcg_step,
                     lemma2_bound, resolve_schedule, run_ibcg)

__version__ = "0.1.0"
