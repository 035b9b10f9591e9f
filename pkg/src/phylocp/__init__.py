"""Bayesian change-point inference for substitution rates on a fixed phylogeny.

The pieces compose bottom-up: a Newick tree and the Jukes-Cantor model
feed a pruning likelihood engine (exact, or with the top of the tree
replaced by stationary boundary terms); a tempered SMC sampler turns that
into unbiased per-model evidence estimates; a trans-dimensional PMMH
chain rides on those estimates; and two likelihood-free baselines plus
chain diagnostics round out the toolbox.  The ``phylocp`` CLI wires file
formats to the engines.
"""

from .changepoint import (
    ChangePointState,
    PriorSpec,
    ProposalSpec,
    log_prior,
    sample_prior,
)
from .likelihood import LikelihoodEngine, SequenceData
from .pmmh import ChainRecord, PmmhConfig, run_pmmh
from .simulate import SimulationSpec, simulate_dataset
from .smc import ParticleSystem, TemperSchedule, make_schedule, run_smc, select_particle
from .substitution import JukesCantorModel
from .tree import Tree, boundary_nodes, parse_newick, to_newick

__version__ = "0.1.0"

__all__ = [
    "ChangePointState",
    "PriorSpec",
    "ProposalSpec",
    "log_prior",
    "sample_prior",
    "LikelihoodEngine",
    "SequenceData",
    "ChainRecord",
    "PmmhConfig",
    "run_pmmh",
    "SimulationSpec",
    "simulate_dataset",
    "ParticleSystem",
    "TemperSchedule",
    "make_schedule",
    "run_smc",
    "select_particle",
    "JukesCantorModel",
    "Tree",
    "boundary_nodes",
    "parse_newick",
    "to_newick",
    "__version__",
]
