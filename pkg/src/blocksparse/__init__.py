"""Block-sparse recovery over unions of subspaces."""

__version__ = "0.1.0"

from .core import (BlockSparseCoefficients, BlockStructure, Dictionary, PlantedInstance,
                   generate_dictionary, make_rng, plant_signal)
from .errors import BlockSparseError
from .solvers import SolveResult, SolveSpec, solve, solve_many

__all__ = [
    "BlockSparseCoefficients", "BlockStructure", "Dictionary", "PlantedInstance",
    "generate_dictionary", "make_rng", "plant_signal", "BlockSparseError",
    "SolveResult", "SolveSpec", "solve", "solve_many",
]
