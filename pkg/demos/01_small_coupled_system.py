"""Bottom-up and top-down error budgets on a small random coupled system.

Two random subsystems are coupled through a static matrix. One of them is
reduced by balanced truncation; its error norm is propagated to a
certified bound on the coupled error, which is then compared with the
actual coupled error. The top-down direction turns a coupled accuracy
requirement back into a subsystem budget.

Run: python demos/01_small_coupled_system.py
"""

import numpy as np

from modred_bounds import (
    CoupledResponse,
    PAPER_SUM,
    STANDARD_TWICE_SUM,
    FrequencyGrid,
    a_priori_bound,
    balanced_truncate,
    bottom_up_freq,
    bottom_up_global,
    random_coupled_system,
    top_down_global,
)
from modred_bounds.interconnect import error_system_Ec, upper_lft_Gc
from modred_bounds.lti import hinf_norm, parallel_diff
from modred_bounds.pipelines import subsystem_error_sigma

cs = random_coupled_system(1, dims=[(8, 2, 2), (4, 1, 2)])
grid = FrequencyGrid.logspace(-2, 3, 300)
resp = CoupledResponse(cs)
print("subsystem orders:", [g.n for g in cs.subsystems])

# reduce subsystem 1 and measure its error
g = cs.subsystems[0]
red = balanced_truncate(g, 5, STANDARD_TWICE_SUM)
eps1 = hinf_norm(parallel_diff(g, red.reduced), method="hamiltonian")[0]
# twice the distinct tail sum is guaranteed; the plain tail sum is not
print(f"subsystem error ||E_1|| = {eps1:.4e}  (twice tail sum {red.a_priori_bound:.4e}, "
      f"plain tail sum {a_priori_bound(red.hankel, 5, PAPER_SUM):.4e})")

# bottom-up: certified bound on the coupled error
bound = bottom_up_global(cs, [eps1, 0.0], grid, response=resp)
cs_hat = cs.replace(0, red.reduced)
actual = hinf_norm(error_system_Ec(cs, cs_hat), method="hamiltonian")[0]
print(f"certified ||E_c|| <= {bound.global_value:.4e}, actual {actual:.4e}")

# the same per frequency, using sigma_max(E_1(iw)) instead of its peak
sig1 = subsystem_error_sigma(g, red.reduced, grid.omegas)
curve = bottom_up_freq(cs, [sig1, np.zeros_like(sig1)], grid, response=resp)
sig_c = np.linalg.norm(CoupledResponse(cs_hat).Gc(grid.omegas) - resp.Gc(grid.omegas), 2, axis=(1, 2))
ok = curve.feasible
print(f"frequency-wise bound holds at {np.sum(sig_c[ok] <= curve.values[ok])}/{ok.sum()} points; "
      f"median tightness {np.median(curve.values[ok] / sig_c[ok]):.2f}")

# top-down: the largest subsystem error that keeps ||E_c|| within 1% of ||G_c||
target = 0.01 * hinf_norm(upper_lft_Gc(cs))[0]
budget = top_down_global(cs, target, [0.0], 0, grid, response=resp)
print(f"top-down budget for subsystem 1 at ||E_c|| <= {target:.3e}: eps_1 = {budget.global_value:.4e}")
for r in range(1, g.n):
    e = hinf_norm(parallel_diff(g, balanced_truncate(g, r).reduced), method="hamiltonian")[0]
    if e <= budget.global_value:
        print(f"smallest balanced truncation order meeting it: r = {r} (||E_1|| = {e:.3e})")
        break
