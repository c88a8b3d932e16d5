"""Connection profiles and distances for the equilateral product potential.

Prints the well-to-well distance table from path descent and from the lattice
oracle, the sector openings, and the energy split of each connection profile.
"""
import numpy as np

from tripoint.geodesics import distance_table, lattice_table
from tripoint.heteroclinic import equipartition_residual, solve_connection
from tripoint.junction import solve_angles
from tripoint.potential import build_product_potential, equilateral_wells

pot = build_product_potential(*equilateral_wells())
table = distance_table(pot)
lat = lattice_table(pot, 300)
print("descent sides", np.round(table.sides, 5))
print("lattice sides", np.round(lat.sides, 5))

ang = solve_angles(table)
print("openings (deg)", np.round(np.rad2deg(ang.alpha), 6))

for i, j in ((1, 2), (2, 3), (3, 1)):
    p = solve_connection(pot, i, j)
    pe, ke = p.energy_parts()
    print(f"zeta_{i}{j}: energy {p.energy:.6f}  potential {pe:.6f}  kinetic {ke:.6f}  "
          f"equipartition residual {equipartition_residual(p):.2e}")
