"""Junction angles for an asymmetric well triangle.

The sine law on the distance table predicts the sector openings; the steady
state at eps=0.05 is quantised to the nearest well and the interface rays are
fitted in the annulus 0.2 < r < 0.6.  Takes a few minutes on one core.
"""
import numpy as np

from tripoint.ansatz import build_boundary_map
from tripoint.geodesics import distance_table
from tripoint.junction import solve_angles
from tripoint.limit import measure_junction_angles, quantize_to_wells
from tripoint.potential import build_product_potential
from tripoint.solver import make_grid, solve_steady

pot = build_product_potential((0.0, 1.0), (-1.0, -0.4), (0.8, -0.6))
table = distance_table(pot)
ang = solve_angles(table)
bmap = build_boundary_map(pot, ang)

eps = 0.05
_, f0 = make_grid(256, eps, bmap)
rep, u, _ = solve_steady(f0, pot)
fit = measure_junction_angles(quantize_to_wells(u, pot.wells))

print("sides     ", np.round(table.sides, 4))
print("predicted ", np.round(np.rad2deg(ang.alpha), 2))
print("measured  ", np.round(fit.alpha_deg, 2), "junction at", np.round(fit.junction, 3))
print(f"{rep.iterations} steps, residual {rep.residual:.2e}")
