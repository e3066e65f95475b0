"""Actual versus certified coupled errors on the scaled-down three-beam system.

Beam 1 is reduced by balanced truncation to several orders. For each order
the coupled error norm is compared with two certified bounds: one built
from the measured subsystem error, one from the Hankel tail-sum bound.
The full-size run is ``modred table2``; this mini version takes seconds.

Run: python demos/02_bound_comparison_mini.py
"""

import numpy as np

from modred_bounds import CoupledResponse, FrequencyGrid, build_three_beam_benchmark
from modred_bounds.pipelines import bound_comparison_row

cs = build_three_beam_benchmark(mini=True)
grid = FrequencyGrid(np.logspace(1.5, 4, 200))
resp = CoupledResponse(cs)
print("subsystem orders:", [g.n for g in cs.subsystems])


def fmt(v):
    return "      -   " if v is None else f"{v:10.3e}"


print(f"{'r':>3} {'||E_c||':>10} {'eps_c,a':>10} {'eps_c':>10} {'||E_1||':>10} {'tail bound':>10}")
for r in (38, 36, 32, 28, 20):
    row = bound_comparison_row(cs, r, grid, response=resp)
    print(f"{r:3d} {row.ec_hinf:10.3e} {fmt(row.eps_c_actual)} {fmt(row.eps_c_apriori)} "
          f"{row.eps_q_grid:10.3e} {row.eps_q_apriori:10.3e}")
# '-' marks orders whose subsystem error is too large for any certificate:
# the bound then cannot even guarantee stability of the reduced coupling.
