"""nctlab: a numerical laboratory for twisted spectral triples over
noncommutative tori, built on finite Fourier truncation.

The flat commutative torus is the theta = 0 member of the same family.
"""

from .algebra import (
    AlgebraElement,
    AlgebraParams,
    WeylFactor,
    conformal_weight,
    derivation,
    exp_selfadjoint,
    gen_u,
    gen_v,
    monomial,
    multiply,
    one,
    star,
    trace_phi0,
    zero,
)

__all__ = [
    "AlgebraElement",
    "AlgebraParams",
    "WeylFactor",
    "conformal_weight",
    "derivation",
    "exp_selfadjoint",
    "gen_u",
    "gen_v",
    "monomial",
    "multiply",
    "one",
    "star",
    "trace_phi0",
    "zero",
]

__version__ = "0.1.0"
