"""Simulation and limit theory for sublinear preferential attachment networks."""

from .rules import (
    Affine,
    AttachmentRule,
    Constant,
    PowerLaw,
    Preference,
    Tabulated,
    classify_preference,
    fbar,
    parse_rule,
    phi,
    phi_inverse,
    psi,
    psi_inverse_floor,
    regvar_asymptotics,
    validate,
    varphi,
    varphi_star,
)
from .streams import DEFAULT_SEED, Stream

__all__ = [
    "Affine",
    "AttachmentRule",
    "Constant",
    "DEFAULT_SEED",
    "PowerLaw",
    "Preference",
    "Stream",
    "Tabulated",
    "classify_preference",
    "fbar",
    "parse_rule",
    "phi",
    "phi_inverse",
    "psi",
    "psi_inverse_floor",
    "regvar_asymptotics",
    "validate",
    "varphi",
    "varphi_star",
]
