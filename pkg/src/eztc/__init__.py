"""Investment-consumption under proportional transaction costs with Epstein-Zin utility.

Subpackages follow the pipeline: model -> wellposed -> fbsolver -> policy,
plus asymptotics (small-cost expansions), simulate (reflected-diffusion Monte
Carlo), statics (comparative-statics sweeps) and a CLI front end.
"""

from .model import CostParams, ModelParams
from .wellposed import WellPosedness, classify, threshold_xi_bar
from .fbsolver import ShadowSolution, solve_free_boundary
from .policy import PolicyTables, build_tables, mobius

__all__ = [
    "CostParams",
    "ModelParams",
    "WellPosedness",
    "classify",
    "threshold_xi_bar",
    "ShadowSolution",
    "solve_free_boundary",
    "PolicyTables",
    "build_tables",
    "mobius",
]
