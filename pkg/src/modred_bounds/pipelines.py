"""End-to-end workflows on a coupled system where subsystem ``q`` is reduced.

* :func:`bound_comparison_row` reduces one subsystem by balanced truncation
  and compares the actual coupled error with the bottom-up bounds obtained
  from the actual subsystem error and from the Hankel tail bound.
* :func:`bottom_up_sweep` gives the per-frequency bottom-up curves for one
  reduced model.
* :func:`top_down_pipeline` turns a coupled accuracy profile into a
  subsystem budget, reduces with a fitted output weight and validates the
  result both a priori and a posteriori.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .budget import BoundResult, bottom_up_freq, bottom_up_global, top_down_freq
from .casegen import epsilon_c_profile
from .interconnect import CoupledResponse, CoupledSystem, check_internal_stability, error_system_Ec
from .lti import (
    ResponseEvaluator,
    _grid_values,
    _sigma_max_stack,
    hinf_norm,
    parallel_diff,
)
from .reduction import (
    STANDARD_TWICE_SUM,
    ReductionResult,
    WeightFit,
    a_priori_bound,
    balanced_truncate,
    fit_rational_weight,
    fw_balanced_truncate,
)

__all__ = [
    "BoundRow",
    "bound_comparison_row",
    "BottomUpSweep",
    "bottom_up_sweep",
    "TopDownOutcome",
    "top_down_pipeline",
    "subsystem_error_sigma",
]


def subsystem_error_sigma(g, g_hat, omegas) -> np.ndarray:
    """``sigma_max(G_hat(i w) - G(i w))`` on a grid."""
    w = np.asarray(omegas, dtype=float)
    return _sigma_max_stack(ResponseEvaluator(g_hat)(w) - ResponseEvaluator(g)(w))


def _ratio(num, den):
    # undefined for an absent bound or an exact (zero-error) reduction
    if num is None or den == 0:
        return None
    return num / den


@dataclass
class BoundRow:
    """Actual and certified coupled errors for one reduction order.

    ``eps_q_grid`` is ``max sigma_max(E_q)`` on the grid and ``eps_q_hinf``
    the full H-infinity norm; ``eps_c_actual`` is the bottom-up bound from
    ``eps_q_grid`` and ``eps_c_apriori`` the one from the Hankel tail bound
    ``eps_q_apriori``. ``None`` marks an infeasible bound.
    """

    order: int
    ec_hinf: float
    ec_peak_omega: float
    eps_q_grid: float
    eps_q_hinf: float
    eps_q_apriori: float
    convention: str
    eps_c_actual: Optional[float]
    eps_c_apriori: Optional[float]
    reduced_stable: bool
    certified_stable: Optional[bool] = None
    results: dict = field(default_factory=dict, repr=False)
    reduction: Optional[ReductionResult] = field(default=None, repr=False)

    @property
    def ratio_actual(self):
        return _ratio(self.eps_c_actual, self.ec_hinf)

    @property
    def ratio_apriori(self):
        return _ratio(self.eps_c_apriori, self.ec_hinf)

    @property
    def ratio_subsystem(self):
        return _ratio(self.eps_q_apriori, self.eps_q_grid)

    def as_dict(self) -> dict:
        return {
            "order": self.order,
            "ec_hinf": self.ec_hinf,
            "eps_c_actual": self.eps_c_actual,
            "eps_c_apriori": self.eps_c_apriori,
            "ratio_actual": self.ratio_actual,
            "ratio_apriori": self.ratio_apriori,
            "ratio_subsystem": self.ratio_subsystem,
            "eps_q_apriori": self.eps_q_apriori,
            "eps_q_grid": self.eps_q_grid,
            "eps_q_hinf": self.eps_q_hinf,
            "convention": self.convention,
            "reduced_stable": self.reduced_stable,
            "certified_stable": self.certified_stable,
        }


def bound_comparison_row(cs: CoupledSystem, order: int, grid, q: int = 0,
                         convention: str = STANDARD_TWICE_SUM, response: CoupledResponse = None,
                         reduction: ReductionResult = None) -> BoundRow:
    """Balanced truncation of subsystem ``q`` to ``order`` and the resulting bounds.

    Levels of the other subsystems are zero (they stay unreduced).
    """
    w = _grid_values(grid)
    resp = CoupledResponse(cs) if response is None else response
    g = cs.subsystems[q]
    red = balanced_truncate(g, order, convention) if reduction is None else reduction
    bound = a_priori_bound(red.hankel, order, convention)
    cs_hat = cs.replace(q, red.reduced)
    ec, ec_w = hinf_norm(error_system_Ec(cs, cs_hat), grid=w)
    e_grid = float(np.max(subsystem_error_sigma(g, red.reduced, w)))
    e_hinf = hinf_norm(parallel_diff(g, red.reduced), grid=w)[0]
    results = {}
    vals = []
    for key, level in (("actual", e_grid), ("apriori", bound)):
        eps = np.zeros(cs.k)
        eps[q] = level
        res = bottom_up_global(cs, eps, w, response=resp)
        results[key] = res
        vals.append(res.global_value)
    certified = None
    if any(v is not None for v in vals):
        certified = bool(check_internal_stability(cs_hat))
    return BoundRow(order, ec, ec_w, e_grid, e_hinf, bound, convention, vals[0], vals[1],
                    bool(check_internal_stability(cs_hat)), certified, results, red)


@dataclass
class BottomUpSweep:
    """Per-frequency bottom-up curves for one reduced subsystem."""

    omegas: np.ndarray
    sigma_eq: np.ndarray
    sigma_ec: np.ndarray
    constant: BoundResult
    shaped: BoundResult
    eps_q: float

    def table(self) -> dict:
        return {
            "omega": self.omegas,
            "sigma_Eq": self.sigma_eq,
            "sigma_Ec": self.sigma_ec,
            "eps_c_from_constant": self.constant.values,
            "eps_c_from_sigma": self.shaped.values,
        }


def bottom_up_sweep(cs: CoupledSystem, reduction: ReductionResult, grid, q: int = 0,
                    eps_q: Optional[float] = None, response: CoupledResponse = None) -> BottomUpSweep:
    """Frequency-wise bounds from a constant level and from ``sigma_max(E_q(i w))``.

    ``eps_q`` defaults to the a priori bound stored in ``reduction``.
    """
    w = _grid_values(grid)
    resp = CoupledResponse(cs) if response is None else response
    g_hat = reduction.reduced
    seq = subsystem_error_sigma(cs.subsystems[q], g_hat, w)
    red_resp = resp.with_subsystem(q, g_hat)
    sec = _sigma_max_stack(red_resp.Gc(w) - resp.Gc(w))
    level = reduction.a_priori_bound if eps_q is None else eps_q
    const = np.zeros((cs.k, w.size))
    const[q] = level
    shaped = np.zeros((cs.k, w.size))
    shaped[q] = seq
    r1 = bottom_up_freq(cs, const, w, response=resp)
    r2 = bottom_up_freq(cs, shaped, w, response=resp)
    return BottomUpSweep(w, seq, sec, r1, r2, float(level))


@dataclass
class TopDownOutcome:
    """All curves of the top-down workflow on one grid."""

    omegas: np.ndarray
    sigma_gc: np.ndarray
    eps_c: np.ndarray
    budget: BoundResult
    weight: WeightFit
    reduction: ReductionResult
    sigma_eq: np.ndarray
    validation: BoundResult
    sigma_ec: np.ndarray
    sigma_gc_hat: np.ndarray

    @property
    def eps_q(self) -> np.ndarray:
        return self.budget.values

    @property
    def budget_met(self) -> bool:
        """``sigma_max(E_q) <= eps_q`` at every grid point."""
        return bool(self.budget.feasible.all() and np.all(self.sigma_eq <= self.eps_q))

    @property
    def spec_met(self) -> bool:
        """``sigma_max(E_c) <= eps_c`` at every grid point."""
        return bool(np.all(self.sigma_ec <= self.eps_c))

    @property
    def validation_met(self) -> bool:
        """The bottom-up bound from the actual ``E_q`` stays within ``eps_c``."""
        v = self.validation
        return bool(v.feasible.all() and np.all(v.values <= self.eps_c * (1 + 1e-6)))

    def table(self) -> dict:
        return {
            "omega": self.omegas,
            "sigma_Gc": self.sigma_gc,
            "eps_c": self.eps_c,
            "eps_q": self.eps_q,
            "sigma_Eq": self.sigma_eq,
            "eps_c_hat": self.validation.values,
            "sigma_Ec": self.sigma_ec,
            "sigma_Gc_hat": self.sigma_gc_hat,
        }


def top_down_pipeline(cs: CoupledSystem, grid, order: int, q: int = 0, beta1: float = 0.1,
                      beta2: float = 5e-7, eps_c=None, weight_order: int = 4, rolloff: int = 8,
                      rolloff_factor: float = 1.0, response: CoupledResponse = None) -> TopDownOutcome:
    """Top-down budget, weighted reduction of subsystem ``q`` and validation.

    1. ``eps_c(w) = max(beta1 * sigma_max(G_c(i w)), beta2)`` unless ``eps_c`` is given;
    2. per-frequency budget ``eps_q(w)`` with the other subsystems exact;
    3. fitted output weight ``|W| >= 1/eps_q`` and Enns truncation to ``order``;
    4. bottom-up bound from ``sigma_max(E_q(i w))``;
    5. the actual ``sigma_max(E_c(i w))``.
    """
    w = _grid_values(grid)
    resp = CoupledResponse(cs) if response is None else response
    gc = resp.Gc(w)
    sgc = _sigma_max_stack(gc)
    spec = epsilon_c_profile(sgc, beta1, beta2) if eps_c is None else np.broadcast_to(
        np.asarray(eps_c, dtype=float), w.shape).copy()
    others = np.zeros((cs.k - 1, w.size))
    budget = top_down_freq(cs, spec, others, q, w, response=resp)
    if not budget.feasible.all():
        raise ValueError("the accuracy profile admits no subsystem budget at some frequencies")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = fit_rational_weight(budget.values, w, order=weight_order, rolloff=rolloff,
                                  rolloff_factor=rolloff_factor)
    red = fw_balanced_truncate(cs.subsystems[q], fit.model, order)
    seq = subsystem_error_sigma(cs.subsystems[q], red.reduced, w)
    prof = np.zeros((cs.k, w.size))
    prof[q] = seq
    validation = bottom_up_freq(cs, prof, w, response=resp)
    gc_hat = resp.with_subsystem(q, red.reduced).Gc(w)
    return TopDownOutcome(w, sgc, spec, budget, fit, red, seq, validation,
                          _sigma_max_stack(gc_hat - gc), _sigma_max_stack(gc_hat))
