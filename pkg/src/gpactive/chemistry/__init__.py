"""Equilibrium-chemistry oracles: closed-form salt, mass-action speciation, external simulators."""
from .salt import LOGK_SALT, salt_equilibrium
from .speciation import (
    ChemicalSystem,
    EquilibriumState,
    Reaction,
    SpeciationError,
    load_system,
    speciation_solve,
)
