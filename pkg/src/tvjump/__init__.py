"""Vectorial total-variation denoising, jump-set estimation and verification tools."""

from .fidelity import Fidelity
from .grid import CubeOutOfDomain, Direction, GridSpec, MatrixField, VectorField
from .innervar import InnerVariation, apply_inner_variation, regularizer_quotient_gap
from .jump import (
    JumpEstimate,
    detect_jump_set,
    edge_profile,
    estimate_jump_function,
    jump_map,
    verify_inclusion,
    verify_main_inequality,
)
from .solver import (
    HuberNorm,
    PowerNorm,
    SolverConfig,
    SolveReport,
    max_principle_check,
    rof_solve,
    taut_string_1d,
    tgv_solve,
)
from .specnorm import SpectralRegularizer
from .synth import SynthSpec, generate

__all__ = [
    "Fidelity",
    "CubeOutOfDomain",
    "Direction",
    "GridSpec",
    "MatrixField",
    "VectorField",
    "InnerVariation",
    "apply_inner_variation",
    "regularizer_quotient_gap",
    "JumpEstimate",
    "detect_jump_set",
    "edge_profile",
    "estimate_jump_function",
    "jump_map",
    "verify_inclusion",
    "verify_main_inequality",
    "HuberNorm",
    "PowerNorm",
    "SolverConfig",
    "SolveReport",
    "max_principle_check",
    "rof_solve",
    "taut_string_1d",
    "tgv_solve",
    "SpectralRegularizer",
    "SynthSpec",
    "generate",
]

__version__ = "0.1.0"
