"""Property-driven coarsening of population CTMCs.

Pipeline: exact Gillespie simulation -> MITL monitoring -> statistical
estimation of joint satisfaction patterns per initial state -> GP
imputation over the remaining states -> JSD dissimilarities -> classical
MDS embedding -> k-means macro-states -> empirical semi-Markov coarse
dynamics with histogram-distance validation.
"""

from coarseqest.model import (
    ModelError,
    Reaction,
    ReactionNetwork,
    Trajectory,
    enumerate_states,
    load_model,
    parse_model,
    propensities,
    simulate_ssa,
)
from coarseqest.mitl import (
    FormulaError,
    FormulaSet,
    HorizonError,
    eval_formula,
    joint_pattern,
    parse_formula,
)

__version__ = "0.1.0"
