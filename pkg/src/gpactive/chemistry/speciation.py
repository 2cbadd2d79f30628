"""Ideal-solution aqueous speciation with mineral equilibria.

Every secondary species and mineral is written as a dissociation into
components,

    species <=> sum_j nu_j component_j,     log K = sum_j nu_j log a_j - log a_species,

so that ``log10 c_species = sum_j nu_j log10 a_j - log K``. Activities equal
molar concentrations, water has unit activity, and H+ is pinned by the pH.
The solution volume is 1 L, so mineral amounts in mol and concentrations in
mol/L are interchangeable in the mass balances.

Unknowns are the log10 free concentrations of the non-fixed components plus
the amounts of the minerals in the active set. Newton iterations with step
halving drive the mass balances and the active minerals' saturation indices
to zero; an outer loop adds supersaturated minerals and removes minerals
whose amount turns negative.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

LN10 = math.log(10.0)
MAX_LOG_STEP = 2.0


class SpeciationError(RuntimeError):
    def __init__(self, message, residuals=None):
        self.residuals = None if residuals is None else np.asarray(residuals).tolist()
        if residuals is not None:
            message = f"{message}; last residuals {self.residuals}"
        super().__init__(message)


@dataclass(frozen=True)
class Reaction:
    name: str
    stoichiometry: dict
    logK: float

    def __post_init__(self):
        if not math.isfinite(self.logK):
            raise ValueError(f"{self.name}: logK must be finite")
        object.__setattr__(self, "stoichiometry", {k: float(v) for k, v in self.stoichiometry.items()})


@dataclass(frozen=True)
class ChemicalSystem:
    name: str
    components: tuple
    species: tuple = ()
    minerals: tuple = ()
    fixed_activity: dict = field(default_factory=dict)
    ph_component: str | None = None
    elements: dict = field(default_factory=dict)

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "minerals", tuple(self.minerals))
        if len(set(comps)) != len(comps):
            raise ValueError("duplicate component names")
        for r in self.species + self.minerals:
            unknown = set(r.stoichiometry) - set(comps)
            if unknown:
                raise ValueError(f"{r.name} uses undeclared components {sorted(unknown)}")
        for c in list(self.fixed_activity) + [self.ph_component] * (self.ph_component is not None):
            if c not in comps:
                raise ValueError(f"fixed component {c!r} is not declared")
        for el, c in self.elements.items():
            if c not in comps:
                raise ValueError(f"element {el!r} maps to undeclared component {c!r}")

    # -- matrices -------------------------------------------------------
    def _matrix(self, reactions):
        M = np.zeros((len(reactions), len(self.components)))
        for i, r in enumerate(reactions):
            for c, nu in r.stoichiometry.items():
                M[i, self.components.index(c)] = nu
        return M

    @property
    def species_matrix(self):
        return self._matrix(self.species)

    @property
    def mineral_matrix(self):
        return self._matrix(self.minerals)

    @property
    def species_logK(self):
        return np.array([s.logK for s in self.species])

    @property
    def mineral_logK(self):
        return np.array([m.logK for m in self.minerals])

    @property
    def fixed_mask(self):
        fixed = set(self.fixed_activity) | ({self.ph_component} if self.ph_component else set())
        return np.array([c in fixed for c in self.components])

    def mineral(self, name) -> Reaction:
        for m in self.minerals:
            if m.name == name:
                return m
        raise KeyError(f"no mineral named {name!r} in {self.name}")

    # -- io ---------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ChemicalSystem":
        def reactions(key):
            return tuple(Reaction(r["name"], r["stoichiometry"], float(r["logK"])) for r in data.get(key, []))

        return cls(
            name=data.get("name", "system"),
            components=tuple(data["components"]),
            species=reactions("species"),
            minerals=reactions("minerals"),
            fixed_activity={k: float(v) for k, v in data.get("fixed_activity", {}).items()},
            ph_component=data.get("ph_component"),
            elements=dict(data.get("elements", {})),
        )

    def to_dict(self) -> dict:
        def dump(rs):
            return [{"name": r.name, "stoichiometry": r.stoichiometry, "logK": r.logK} for r in rs]

        return {
            "name": self.name, "components": list(self.components),
            "fixed_activity": self.fixed_activity, "ph_component": self.ph_component,
            "elements": self.elements, "species": dump(self.species), "minerals": dump(self.minerals),
        }

    @classmethod
    def from_json(cls, path) -> "ChemicalSystem":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def load_system(name: str) -> ChemicalSystem:
    """Load a bundled system (``"salt"`` or ``"calcite_dolomite"``) or a JSON path."""
    p = Path(name)
    if p.suffix == ".json" and p.exists():
        return ChemicalSystem.from_json(p)
    data = resources.files("gpactive.chemistry").joinpath("data").joinpath(f"{name}.json").read_text()
    return ChemicalSystem.from_dict(json.loads(data))


@dataclass(frozen=True)
class EquilibriumState:
    system: ChemicalSystem
    log_activity: np.ndarray        # per component; -inf for absent components
    species_concentrations: np.ndarray
    mineral_amounts: np.ndarray
    saturation_indices: np.ndarray  # -inf when a constituent is absent
    totals_in: np.ndarray           # per component: dissolved input plus mineral inventory
    iterations: int = 0
    cycles: int = 0

    @property
    def component_concentrations(self) -> np.ndarray:
        return np.where(self.system.fixed_mask, np.nan, 10.0 ** self.log_activity)

    @property
    def concentrations(self) -> dict:
        out = {}
        for c, la in zip(self.system.components, self.log_activity):
            if self.system.fixed_activity.get(c) is None:
                out[c] = float(10.0 ** la)
        for s, v in zip(self.system.species, self.species_concentrations):
            out[s.name] = float(v)
        return out

    def amount(self, mineral: str) -> float:
        names = [m.name for m in self.system.minerals]
        return float(self.mineral_amounts[names.index(mineral)])

    def saturation_index(self, mineral: str) -> float:
        names = [m.name for m in self.system.minerals]
        return float(self.saturation_indices[names.index(mineral)])

    def dissolved_totals(self) -> np.ndarray:
        """Per-component dissolved amount: free plus bound in aqueous species."""
        free = np.where(self.system.fixed_mask, 0.0, 10.0 ** self.log_activity)
        return free + self.system.species_matrix.T @ self.species_concentrations


def _totals_vector(system: ChemicalSystem, totals) -> np.ndarray:
    T = np.zeros(len(system.components))
    if totals is None:
        return T
    if not isinstance(totals, dict):
        totals = dict(zip(system.elements, totals))
    for key, value in totals.items():
        comp = system.elements.get(key, key)
        if comp not in system.components:
            raise KeyError(f"unknown element or component {key!r}")
        value = float(value)
        if not value >= 0 or not math.isfinite(value):
            raise ValueError(f"total of {key} must be finite and >= 0, got {value}")
        T[system.components.index(comp)] += value
    return T


def speciation_solve(system: ChemicalSystem, totals, pH: float | None = None, minerals=None, *,
                     max_newton: int = 200, max_cycles: int = 20, tol: float = 1e-13,
                     si_tol: float = 1e-10) -> EquilibriumState:
    """Equilibrate a solution of the given elemental totals with its minerals.

    ``totals`` maps element (or component) names to mol/L; ``minerals``
    maps mineral names to the initially available amount in mol. Dissolution
    is limited by that inventory; precipitation is not limited.
    """
    nc = len(system.components)
    S = system.species_matrix
    Sm = system.mineral_matrix
    logK_s = system.species_logK
    logK_m = system.mineral_logK
    fixed = system.fixed_mask

    base = np.zeros(nc)
    for c, la in system.fixed_activity.items():
        base[system.components.index(c)] = la
    if system.ph_component is not None:
        if pH is None or not math.isfinite(pH):
            raise ValueError(f"{system.name} requires a finite pH")
        base[system.components.index(system.ph_component)] = -float(pH)

    T = _totals_vector(system, totals)
    n0 = np.zeros(len(system.minerals))
    for name, amount in (minerals or {}).items():
        amount = float(amount)
        if not amount >= 0:
            raise ValueError(f"initial amount of {name} must be >= 0")
        n0[[m.name for m in system.minerals].index(system.mineral(name).name)] = amount
    Ttot = T + Sm.T @ n0

    present = ~fixed & (Ttot > 0)
    absent = ~fixed & ~present
    P = np.flatnonzero(present)
    sp_ok = ~np.any(S[:, absent] != 0, axis=1) if len(S) else np.zeros(0, bool)
    mn_ok = ~np.any(Sm[:, absent] != 0, axis=1) if len(Sm) else np.zeros(0, bool)
    S_ok = S[sp_ok]
    Tp = Ttot[P]

    def log_act(x):
        la = base.copy()
        la[absent] = -np.inf
        la[P] = x
        return la

    def species_conc(la):
        c = np.zeros(len(S))
        if sp_ok.any():
            c[sp_ok] = 10.0 ** (S_ok[:, P] @ la[P] + S_ok[:, fixed] @ la[fixed] - logK_s[sp_ok])
        return c

    def residual(x, n, active):
        la = log_act(x)
        cs = species_conc(la)
        free = 10.0 ** x
        dissolved = free + S[:, P].T @ cs
        bound = Sm[active][:, P].T @ n if len(active) else 0.0
        F = (dissolved + bound - Tp) / Tp
        G = Sm[active] @ np.where(np.isfinite(la), la, 0.0) - logK_m[active] if len(active) else np.zeros(0)
        return np.concatenate([F, G]), la, cs

    def jacobian(x, cs, active):
        k = len(P)
        J = np.zeros((k + len(active), k + len(active)))
        SP = S[:, P]
        J[:k, :k] = LN10 * (np.diag(10.0 ** x) + (SP * cs[:, None]).T @ SP) / Tp[:, None]
        if len(active):
            J[:k, k:] = Sm[active][:, P].T / Tp[:, None]
            J[k:, :k] = Sm[active][:, P]
        return J

    iterations = 0
    stall_tol = 100.0 * tol

    def newton(x, n, active):
        nonlocal iterations
        z = np.concatenate([x, n])
        k = len(P)
        F, la, cs = residual(z[:k], z[k:], active)
        for _ in range(max_newton):
            if np.max(np.abs(F), initial=0.0) < tol:
                return z[:k], z[k:]
            iterations += 1
            J = jacobian(z[:k], cs, active)
            try:
                step = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(J, -F, rcond=None)[0]
            big = np.max(np.abs(step[:k]), initial=0.0)
            if big > MAX_LOG_STEP:
                step *= MAX_LOG_STEP / big
            norm0 = np.linalg.norm(F)
            lam = 1.0
            for _ in range(31):
                trial = z + lam * step
                F_t, la_t, cs_t = residual(trial[:k], trial[k:], active)
                if np.all(np.isfinite(F_t)) and np.linalg.norm(F_t) < norm0:
                    break
                lam *= 0.5
            else:
                # no descent left: rounding floor reached
                if np.max(np.abs(F), initial=0.0) < stall_tol:
                    return z[:k], z[k:]
            z, F, la, cs = trial, F_t, la_t, cs_t
        if np.max(np.abs(F), initial=0.0) < stall_tol:
            return z[:k], z[k:]
        raise SpeciationError(f"Newton iteration did not converge in {max_newton} steps", F)

    active = [i for i in range(len(system.minerals)) if mn_ok[i] and n0[i] > 0]
    x = np.log10(Tp) if len(P) else np.zeros(0)
    n = n0[active].copy()
    amount_tol = 1e-14 * (Tp.max() if len(P) else 1.0)
    for cycle in range(1, max_cycles + 1):
        x, n = newton(x, n, active)
        if len(active) and n.min() < -amount_tol:
            drop = int(np.argmin(n))
            del active[drop]
            n = np.delete(n, drop)
            continue
        la = log_act(x)
        si = np.full(len(system.minerals), -np.inf)
        ok = np.flatnonzero(mn_ok)
        si[ok] = Sm[ok] @ np.where(np.isfinite(la), la, 0.0) - logK_m[ok]
        candidates = [i for i in ok if i not in active and si[i] > si_tol]
        if candidates:
            add = max(candidates, key=lambda i: si[i])
            active.append(add)
            n = np.append(n, 0.0)
            continue
        break
    else:
        raise SpeciationError(f"mineral active set did not settle in {max_cycles} cycles")

    amounts = np.zeros(len(system.minerals))
    amounts[active] = np.maximum(n, 0.0)
    la = log_act(x)
    cs = species_conc(la)
    si = np.full(len(system.minerals), -np.inf)
    ok = np.flatnonzero(mn_ok)
    si[ok] = Sm[ok] @ np.where(np.isfinite(la), la, 0.0) - logK_m[ok]
    return EquilibriumState(system, la, cs, amounts, si, Ttot, iterations, cycle)
