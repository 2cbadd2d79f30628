"""
Calcite and dolomite at equilibrium
===================================

The six-dimensional oracle maps (C, Ca, Cl, Mg totals, pH, inventory of
the competing mineral) to the equilibrium amount of the target mineral.
Here we open up a few solutions and look at what the solver returns.
"""
import numpy as np

from gpactive.chemistry.oracles import MineralOracle

oracle = MineralOracle("Calcite", "Dolomite")
print("inputs:", oracle.bounds.names)

rng = np.random.default_rng(3)
for x in rng.random((4, 6)):
    state = oracle.solve(x)
    conc = state.concentrations
    phys = oracle.bounds.denormalize(x)
    print("\nphysical input:", np.round(phys, 5))
    print(f"  calcite {state.amount('Calcite'):.3e} mol   dolomite {state.amount('Dolomite'):.3e} mol")
    print(f"  SI calcite {state.saturation_index('Calcite'):+.3f}   SI dolomite {state.saturation_index('Dolomite'):+.3f}")
    print(f"  Ca+2 {conc['Ca+2']:.3e}  CO3-2 {conc['CO3-2']:.3e}  HCO3- {conc['HCO3-']:.3e}")

# A slice through magnesium: as Mg rises, dolomite takes the carbonate and
# calcite vanishes at a kink. That kink is what makes the surface hard for a
# stationary GP.
x = np.array([0.8, 0.8, 0.5, 0.0, 0.5, 0.0])
print("\nMg slice (normalized Mg, calcite, dolomite):")
for m in np.linspace(0, 1, 11):
    x[3] = m
    state = oracle.solve(x)
    print(f"  {m:.1f}  {state.amount('Calcite'):.3e}  {state.amount('Dolomite'):.3e}")
