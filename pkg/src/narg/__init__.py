"""Nonadiabatic renormalization group (NARG) eigensolvers.

Builds low-lying many-body eigenstates of strongly coupled multiscale
systems by absorbing one energy scale at a time: conditional ("adiabatic")
eigenstates at every configuration of the new scale, a superblock stitched
together by global overlap matrices, truncation to the lowest retained
states, and renormalization of the operators later scales couple to.

Applications shipped here: interacting anharmonic bosons and ab initio
quantum chemistry from FCIDUMP integrals, each paired with a brute-force
oracle, plus a leg-tied tensor-network export of the converged state.
"""

from . import boson, core, dvr, letta, numerics, qchem
from .core import (
    BlockState,
    Coupling,
    OpTerm,
    OverlapBlock,
    ScaleSite,
    StepRecord,
    adiabatic_solve,
    geometric_diagnostic,
    initial_block,
    narg_step,
    overlap_dressed,
    renormalize_operators,
    superblock_assemble,
)
from .dvr import DvrBasis, build_uniform_dvr
from .numerics import EigenPairs, eig_hermitian, eig_hermitian_lowest, truncate_low

__version__ = "0.1.0"

__all__ = [
    "BlockState",
    "Coupling",
    "DvrBasis",
    "EigenPairs",
    "OpTerm",
    "OverlapBlock",
    "ScaleSite",
    "StepRecord",
    "adiabatic_solve",
    "boson",
    "build_uniform_dvr",
    "core",
    "dvr",
    "eig_hermitian",
    "eig_hermitian_lowest",
    "geometric_diagnostic",
    "initial_block",
    "letta",
    "narg_step",
    "numerics",
    "overlap_dressed",
    "qchem",
    "renormalize_operators",
    "superblock_assemble",
    "truncate_low",
]
