"""Oracles mapping the unit cube to mineral amounts.

The default physical input ranges below are choices of this package; every
oracle accepts its own :class:`BoundsMap`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..sampling import BoundsMap
from .salt import LOGK_SALT, salt_equilibrium
from .speciation import ChemicalSystem, EquilibriumState, load_system, speciation_solve

SALT_1D_BOUNDS = BoundsMap((0.0,), (10.0,), ("Spa+",))
SALT_1D_TOTAL_B = 6.0
SALT_2D_BOUNDS = BoundsMap((0.0, 0.0), (10.0, 10.0), ("Spa+", "Spb-"))

# C, Ca, Cl, Mg totals (mol/L), pH, inventory of the other mineral (mol)
CARBONATE_BOUNDS = BoundsMap(
    (0.0, 0.0, 0.0, 0.0, 7.0, 0.0),
    (0.01, 0.01, 0.02, 0.01, 10.0, 0.005),
    ("C", "Ca", "Cl", "Mg", "pH", "other_mineral"),
)


@dataclass
class SaltOracle:
    """Salt amount from one (A only) or two (A and B) normalized totals."""

    dim: int = 1
    bounds: BoundsMap | None = None
    total_b: float = SALT_1D_TOTAL_B
    logK: float = LOGK_SALT

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("salt oracle is 1- or 2-dimensional")
        if self.bounds is None:
            self.bounds = SALT_1D_BOUNDS if self.dim == 1 else SALT_2D_BOUNDS
        if self.bounds.dim != self.dim:
            raise ValueError(f"bounds have {self.bounds.dim} dimensions, oracle {self.dim}")

    @property
    def name(self):
        return f"salt_{self.dim}d"

    def physical(self, x):
        return self.bounds.denormalize(np.atleast_1d(np.asarray(x, dtype=float)))

    def __call__(self, x) -> float:
        phys = self.physical(x)
        total_b = self.total_b if self.dim == 1 else phys[1]
        return salt_equilibrium(float(phys[0]), float(total_b), self.logK)

    def onset(self) -> float:
        """Normalized A total at which precipitation starts (1-D only)."""
        if self.dim != 1:
            raise ValueError("onset is defined for the 1-D oracle")
        a = 10.0 ** self.logK / self.total_b
        lo, hi = self.bounds.lo[0], self.bounds.hi[0]
        return (a - lo) / (hi - lo)

    def describe(self) -> dict:
        return {"name": self.name, "bounds": self.bounds.to_dict(), "total_b": self.total_b, "logK": self.logK}


@dataclass
class MineralOracle:
    """Equilibrium amount of ``target`` for normalized (C, Ca, Cl, Mg, pH, other-mineral) inputs."""

    target: str = "Calcite"
    other: str = "Dolomite"
    bounds: BoundsMap = field(default_factory=lambda: CARBONATE_BOUNDS)
    system: ChemicalSystem = field(default_factory=lambda: load_system("calcite_dolomite"))

    def __post_init__(self):
        self.system.mineral(self.target)
        self.system.mineral(self.other)
        if self.bounds.dim != 6:
            raise ValueError("carbonate oracle bounds must be 6-dimensional")

    @property
    def name(self):
        return self.target.lower()

    def solve(self, x) -> EquilibriumState:
        c, ca, cl, mg, ph, other = self.bounds.denormalize(np.asarray(x, dtype=float))
        return speciation_solve(self.system, {"C": c, "Ca": ca, "Cl": cl, "Mg": mg}, pH=ph,
                                minerals={self.other: other, self.target: 0.0})

    def __call__(self, x) -> float:
        return self.solve(x).amount(self.target)

    def describe(self) -> dict:
        return {"name": self.name, "target": self.target, "other": self.other,
                "bounds": self.bounds.to_dict(), "system": self.system.name}


def salt_oracle_1d(x) -> float:
    return SaltOracle(1)(x)


def salt_oracle_2d(x) -> float:
    return SaltOracle(2)(x)


def calcite_oracle(x) -> float:
    return _CALCITE(x)


def dolomite_oracle(x) -> float:
    return _DOLOMITE(x)


_CALCITE = MineralOracle("Calcite", "Dolomite")
_DOLOMITE = MineralOracle("Dolomite", "Calcite")

BUILTIN = ("salt_1d", "salt_2d", "calcite", "dolomite")


def make_oracle(name: str, bounds=None, **options):
    """Build a built-in oracle by name, optionally with custom physical bounds."""
    if isinstance(bounds, dict):
        bounds = BoundsMap(bounds["lo"], bounds["hi"], tuple(bounds.get("names", ())))
    if name == "salt_1d":
        return SaltOracle(1, bounds, **options)
    if name == "salt_2d":
        return SaltOracle(2, bounds, **options)
    if name in ("calcite", "dolomite"):
        target, other = ("Calcite", "Dolomite") if name == "calcite" else ("Dolomite", "Calcite")
        kw = {"bounds": bounds} if bounds is not None else {}
        if "system" in options:
            kw["system"] = load_system(options.pop("system"))
        return MineralOracle(target, other, **kw, **options)
    raise ValueError(f"unknown built-in oracle {name!r}; choose from {BUILTIN}")
