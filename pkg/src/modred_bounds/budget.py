"""Bottom-up error bounds and top-down error budgets for coupled systems.

Every solver sweeps a frequency grid and, at each point, solves one scaled
LMI on the nominal system ``N(i w)`` (see :mod:`modred_bounds.mu`). The
subsystem levels ``eps_j`` weight the ``e_b`` columns of ``N``; the
performance level enters as ``1/eps_c`` on the ``u_c`` column, which gives
the same structured singular value as weighting the ``e_c`` rows.

* bottom-up: given ``eps_j``, minimize ``eps_c`` (``gamma = eps_c^-2``, ``d_c = 1``)
* top-down: given ``eps_c`` and ``eps_j`` for ``j != q``, maximize ``eps_q``
  (``gamma = eps_q^2``, ``d_q = 1``)

Blocks with a zero level are removed from the structure before solving.
Global variants take the extreme value over the grid plus refined peak
frequencies of ``N``; a certificate only covers the frequencies evaluated.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .interconnect import (
    CoupledResponse,
    CoupledSystem,
    IllPosedError,
    check_internal_stability,
)
from .lti import FrequencyGrid, LTIError, UnstableSystemError, _grid_values, _sigma_max_stack
from .mu import BlockStructure, LMIResult, ScalingPair, bisect_max_gamma, lmi_max_gamma

__all__ = [
    "WeightProfile",
    "BoundResult",
    "FrequencyPoint",
    "BudgetError",
    "bottom_up_global",
    "bottom_up_freq",
    "top_down_global",
    "top_down_freq",
    "bisect_cross_check",
    "certify_stability",
    "n_peak_frequencies",
    "default_workers",
]

BOTTOM_UP = "bottom_up"
TOP_DOWN = "top_down"


class BudgetError(LTIError):
    """Invalid budget problem (bad levels, missing certificate, ...)."""


def default_workers() -> int:
    """Thread count from ``MODRED_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("MODRED_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class WeightProfile:
    """Subsystem and performance error levels, constant or per grid point.

    ``subsystem_levels`` has shape ``(k,)`` for ``kind='global'`` and
    ``(k, len(grid))`` for ``kind='per_frequency'``. ``performance_level``
    is a scalar or an array over the grid, or ``None`` when unused.
    """

    kind: str
    subsystem_levels: np.ndarray
    performance_level: Optional[object] = None
    grid: Optional[FrequencyGrid] = None

    def __post_init__(self):
        if self.kind not in ("global", "per_frequency"):
            raise BudgetError(f"unknown profile kind {self.kind!r}")
        lev = np.array(self.subsystem_levels, dtype=float)
        if self.kind == "global":
            lev = lev.reshape(-1)
        else:
            if self.grid is None:
                raise BudgetError("per-frequency profiles need a grid")
            lev = np.atleast_2d(lev)
            if lev.shape[1] != len(self.grid):
                raise BudgetError("level arrays must match the grid length")
        if np.any(~np.isfinite(lev)) or np.any(lev < 0):
            raise BudgetError("subsystem levels must be finite and >= 0")
        lev.setflags(write=False)
        object.__setattr__(self, "subsystem_levels", lev)
        perf = self.performance_level
        if perf is not None:
            perf = np.array(perf, dtype=float)
            if perf.ndim and self.grid is not None and perf.size != len(self.grid):
                raise BudgetError("performance level must match the grid length")
            if np.any(~np.isfinite(perf)) or np.any(perf <= 0):
                raise BudgetError("performance level must be positive and finite")
            perf = float(perf) if perf.ndim == 0 else perf
            object.__setattr__(self, "performance_level", perf)

    @property
    def k(self) -> int:
        return self.subsystem_levels.shape[0]

    def levels_at(self, i: Optional[int]) -> np.ndarray:
        if self.kind == "global" or i is None:
            if self.kind == "global":
                return self.subsystem_levels
            return self.subsystem_levels.max(axis=1)
        return self.subsystem_levels[:, i]

    def performance_at(self, i: Optional[int]) -> Optional[float]:
        perf = self.performance_level
        if perf is None or np.ndim(perf) == 0:
            return perf
        if i is None:
            return float(np.min(perf))
        return float(perf[i])


@dataclass
class FrequencyPoint:
    omega: float
    feasible: bool
    value: Optional[float]
    certificate: Optional[ScalingPair]


@dataclass
class BoundResult:
    """Per-frequency solutions and the global aggregate of one solver run."""

    sense: str
    per_frequency: List[FrequencyPoint]
    global_value: Optional[float] = None
    wellposed_stable_certified: bool = False
    solver_stats: dict = field(default_factory=dict)
    extra_points: List[FrequencyPoint] = field(default_factory=list)
    k: int = 0

    @property
    def omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.per_frequency])

    @property
    def feasible(self) -> np.ndarray:
        return np.array([p.feasible for p in self.per_frequency], dtype=bool)

    @property
    def values(self) -> np.ndarray:
        return np.array([np.nan if p.value is None else p.value for p in self.per_frequency])

    @property
    def all_feasible(self) -> bool:
        return all(p.feasible for p in self.per_frequency + self.extra_points)

    def to_csv(self, path=None) -> str:
        """CSV with columns ``omega, feasible, value, d_1..d_k, d_c``; ``-`` marks absent cells."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["omega", "feasible", "value"] + [f"d_{j + 1}" for j in range(self.k)] + ["d_c"])
        for p in self.per_frequency:
            row = [repr(float(p.omega)), "1" if p.feasible else "0",
                   "-" if p.value is None else repr(float(p.value))]
            if p.certificate is None:
                row += ["-"] * (self.k + 1)
            else:
                row += [_fmt(v) for v in getattr(p.certificate, "d_display", p.certificate.d)]
                row += [_fmt(p.certificate.d_c)]
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        def pt(p):
            return {
                "omega": p.omega,
                "feasible": p.feasible,
                "value": p.value,
                "certificate": None if p.certificate is None else p.certificate.to_dict(),
            }

        return {
            "sense": self.sense,
            "k": self.k,
            "global_value": self.global_value,
            "wellposed_stable_certified": self.wellposed_stable_certified,
            "solver_stats": self.solver_stats,
            "per_frequency": [pt(p) for p in self.per_frequency],
            "extra_points": [pt(p) for p in self.extra_points],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if v is None or not np.isfinite(v):
        return "-"
    return repr(float(v))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _require_assumption(cs: CoupledSystem):
    if not cs.certificate.ok:
        raise IllPosedError(cs.certificate.condition_number)
    if not check_internal_stability(cs):
        raise UnstableSystemError("the coupled system is not internally stable")


def n_peak_frequencies(resp: CoupledResponse, omegas, max_peaks: int = 6) -> np.ndarray:
    """Refined local maxima of ``sigma_max`` of the ``N`` blocks inside the grid range."""
    w = np.asarray(omegas, dtype=float)
    if w.size < 3:
        return np.zeros(0)
    K = resp.cs.K
    m_b, p_b = K.m_b, K.p_b
    Ns = resp.N(w)
    blocks = [(slice(0, m_b), slice(0, p_b)), (slice(0, m_b), slice(p_b, None)),
              (slice(m_b, None), slice(0, p_b))]
    out = []
    for rs, cs_ in blocks:
        sub = Ns[:, rs, cs_]
        if sub.size == 0:
            continue
        s = _sigma_max_stack(sub)
        idx = [i for i in range(1, w.size - 1) if s[i] >= s[i - 1] and s[i] >= s[i + 1]]
        idx = sorted(idx, key=lambda i: -s[i])[:max_peaks]

        def f(lw, rs=rs, cs_=cs_):
            return -float(np.linalg.norm(resp.N(np.exp(lw))[0][rs, cs_], 2))

        for i in idx:
            r = minimize_scalar(f, bounds=(np.log(w[i - 1]), np.log(w[i + 1])), method="bounded",
                                options={"xatol": 1e-7})
            out.append(float(np.exp(r.x)))
    out = np.array(sorted(set(out)))
    return out[~np.isin(out, w)]


def _collapse(N, bs: BlockStructure, keep_blocks):
    rsl, csl = bs.row_slices(), bs.col_slices()
    rows = np.concatenate([np.arange(rsl[b].start, rsl[b].stop) for b in keep_blocks]).astype(int)
    cols = np.concatenate([np.arange(csl[b].start, csl[b].stop) for b in keep_blocks]).astype(int)
    blocks = [bs.blocks[b] for b in keep_blocks]
    return N[np.ix_(rows, cols)], BlockStructure(tuple(blocks[:-1]), blocks[-1])


class _Problem:
    """One scaled-LMI instance per frequency for a given solver sense."""

    def __init__(self, cs: CoupledSystem, sense: str, q: Optional[int] = None):
        self.cs = cs
        self.sense = sense
        self.q = q
        K = cs.K
        self.k = cs.k
        self.bs = BlockStructure.for_interconnection(K.input_dims, K.output_dims, K.m_c, K.p_c)
        if self.bs.performance_block is None:
            raise BudgetError("the interconnection has no performance channel")

    def setup(self, eps_j, eps_c=None):
        """Return ``(keep, weights, gamma_block)`` in collapsed block indices, or a trivial outcome."""
        k = self.k
        eps_j = np.asarray(eps_j, dtype=float)
        if self.sense == BOTTOM_UP:
            keep = [j for j in range(k) if eps_j[j] > 0] + [k]
            weights = np.array([eps_j[j] for j in keep[:-1]] + [0.0])
            gblock = len(keep) - 1
        else:
            q = self.q
            keep = [j for j in range(k) if j == q or eps_j[j] > 0] + [k]
            weights = np.array([0.0 if j == q else eps_j[j] for j in keep[:-1]] + [1.0 / eps_c])
            gblock = keep.index(q)
        return keep, weights, gblock

    def solve(self, N, eps_j, eps_c=None, x0=None, method="lmi") -> FrequencyPoint:
        keep, weights, gblock = self.setup(eps_j, eps_c)
        M, bs = _collapse(N, self.bs, keep)
        if x0 is not None:
            x0 = np.asarray(x0)[keep]
            x0 = x0 / x0[gblock]
        if method == "lmi":
            res = lmi_max_gamma(M, bs, weights, gblock, x0=x0)
        else:
            res = bisect_max_gamma(M, bs, weights, gblock)
        return self._to_point(res, keep, gblock)

    def _to_point(self, res: LMIResult, keep, gblock) -> FrequencyPoint:
        if not res.feasible:
            return FrequencyPoint(np.nan, False, None, None)
        g = res.gamma
        if self.sense == BOTTOM_UP:
            value = 0.0 if np.isinf(g) else float(g ** -0.5)
        else:
            value = float(np.sqrt(g))
        vals = np.full(self.k + 1, np.nan)
        vals[keep] = res.scalings.values
        d = tuple(1.0 if not np.isfinite(v) else v for v in vals[: self.k])
        # collapsed blocks carry no scaling; mark them as absent in the certificate
        cert = _Certificate(d, float(vals[self.k]), self.k if self.sense == BOTTOM_UP else self.q,
                            tuple(j for j in range(self.k) if j not in keep))
        return FrequencyPoint(np.nan, True, value, cert)


class _Certificate(ScalingPair):
    """Scaling pair that remembers which subsystem blocks were collapsed."""

    def __init__(self, d, d_c, normalization, collapsed=()):
        super().__init__(d, d_c, normalization)
        object.__setattr__(self, "collapsed", tuple(collapsed))

    @property
    def d_display(self):
        return tuple(np.nan if j in self.collapsed else v for j, v in enumerate(self.d))

    def to_dict(self):
        out = super().to_dict()
        out["d"] = [None if j in self.collapsed else v for j, v in enumerate(self.d)]
        return out


def _sweep(problem: _Problem, resp: CoupledResponse, omegas, level_fn, method="lmi",
           warm_start=True, workers=None) -> List[FrequencyPoint]:
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size == 0:
        return []
    Ns = resp.N(omegas)
    workers = default_workers() if workers is None else max(1, int(workers))

    def one(i, x0=None):
        eps_j, eps_c = level_fn(i)
        pt = problem.solve(Ns[i], eps_j, eps_c, x0=x0, method=method)
        pt.omega = float(omegas[i])
        return pt

    if workers > 1 and not warm_start:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(one, range(omegas.size)))
    out = []
    prev = None
    for i in range(omegas.size):
        pt = one(i, prev if (warm_start and method == "lmi") else None)
        if pt.feasible:
            prev = np.concatenate([pt.certificate.d, [pt.certificate.d_c]])
        out.append(pt)
    return out


def _finish(problem, points, extra, glob, t0, cs, n_candidates=0) -> BoundResult:
    res = BoundResult(problem.sense, points, extra_points=extra, k=problem.k)
    res.solver_stats = {
        "points": len(points),
        "extra_points": len(extra),
        "infeasible_points": int(sum(not p.feasible for p in points + extra)),
        "seconds": time.perf_counter() - t0,
        "grid_caveat": "certified only on the evaluated frequencies",
    }
    if glob and res.all_feasible and points:
        vals = [p.value for p in points + extra]
        res.global_value = float(max(vals) if problem.sense == BOTTOM_UP else min(vals))
        res.wellposed_stable_certified = True
    return res


def _check_levels(eps, name):
    eps = np.asarray(eps, dtype=float)
    if np.any(~np.isfinite(eps)) or np.any(eps < 0):
        raise BudgetError(f"{name} must be finite and >= 0")
    return eps


def _prepare(cs, resp):
    _require_assumption(cs)
    return CoupledResponse(cs) if resp is None else resp


def bottom_up_global(cs: CoupledSystem, eps_j, grid, *, response=None, refine_peaks=True,
                     warm_start=True, workers=None) -> BoundResult:
    """Smallest ``eps_c`` with ``||E_c|| <= eps_c`` for all ``||E_j|| <= eps_j``.

    The per-frequency minimal ``eps_c`` is maximized over the grid (and the
    peak frequencies of ``N`` when ``refine_peaks``). ``global_value`` is
    absent if any evaluated frequency is infeasible.
    """
    t0 = time.perf_counter()
    eps_j = _check_levels(eps_j, "eps_j")
    if eps_j.shape != (cs.k,):
        raise BudgetError(f"need {cs.k} subsystem levels")
    resp = _prepare(cs, response)
    problem = _Problem(cs, BOTTOM_UP)
    w = _grid_values(grid)
    fn = lambda i: (eps_j, None)
    points = _sweep(problem, resp, w, fn, warm_start=warm_start, workers=workers)
    extra = []
    if refine_peaks and np.any(eps_j > 0):
        extra = _sweep(problem, resp, n_peak_frequencies(resp, w), fn, warm_start=False, workers=workers)
    return _finish(problem, points, extra, True, t0, cs)


def bottom_up_freq(cs: CoupledSystem, eps_j_profiles, grid, *, response=None,
                   warm_start=True, workers=None) -> BoundResult:
    """Per-frequency minimal ``eps_c(w)``; infeasible points are reported, not fatal.

    ``eps_j_profiles`` is ``(k, len(grid))`` or ``k`` constants.
    """
    t0 = time.perf_counter()
    w = _grid_values(grid)
    prof = _check_levels(eps_j_profiles, "eps_j profiles")
    if prof.ndim == 1:
        prof = np.repeat(prof[:, None], w.size, axis=1)
    if prof.shape != (cs.k, w.size):
        raise BudgetError(f"profiles must have shape ({cs.k}, {w.size})")
    resp = _prepare(cs, response)
    problem = _Problem(cs, BOTTOM_UP)
    points = _sweep(problem, resp, w, lambda i: (prof[:, i], None),
                    warm_start=warm_start, workers=workers)
    return _finish(problem, points, [], False, t0, cs)


def _top_down_levels(cs, eps_other, q, n=None):
    if not 0 <= q < cs.k:
        raise BudgetError(f"subsystem index {q} out of range")
    eps_other = _check_levels(eps_other, "eps_other")
    if eps_other.shape[0] == cs.k - 1:
        eps_other = np.insert(eps_other, q, 0.0, axis=0)
    if eps_other.shape[0] != cs.k:
        raise BudgetError(f"need {cs.k - 1} levels for the other subsystems")
    if n is not None and eps_other.ndim == 1:
        eps_other = np.repeat(eps_other[:, None], n, axis=1)
    return eps_other


def top_down_global(cs: CoupledSystem, eps_c: float, eps_other, q: int, grid, *,
                    response=None, refine_peaks=True, warm_start=True, workers=None) -> BoundResult:
    """Largest ``eps_q`` keeping ``||E_c|| <= eps_c`` given the other levels.

    ``eps_other`` lists the ``k - 1`` levels of the subsystems ``j != q``
    (a length-``k`` vector is also accepted; its entry ``q`` is ignored).
    """
    t0 = time.perf_counter()
    if not (np.isfinite(eps_c) and eps_c > 0):
        raise BudgetError("eps_c must be positive")
    lev = _top_down_levels(cs, eps_other, q)
    resp = _prepare(cs, response)
    problem = _Problem(cs, TOP_DOWN, q)
    w = _grid_values(grid)
    fn = lambda i: (lev, float(eps_c))
    points = _sweep(problem, resp, w, fn, warm_start=warm_start, workers=workers)
    extra = _sweep(problem, resp, n_peak_frequencies(resp, w), fn, warm_start=False,
                   workers=workers) if refine_peaks else []
    return _finish(problem, points, extra, True, t0, cs)


def top_down_freq(cs: CoupledSystem, eps_c_profile, eps_other_profiles, q: int, grid, *,
                  response=None, warm_start=True, workers=None) -> BoundResult:
    """Per-frequency largest ``eps_q(w)`` for a performance profile ``eps_c(w)``."""
    t0 = time.perf_counter()
    w = _grid_values(grid)
    ec = np.asarray(eps_c_profile, dtype=float)
    if ec.ndim == 0:
        ec = np.full(w.size, float(ec))
    if ec.shape != w.shape or np.any(~np.isfinite(ec)) or np.any(ec <= 0):
        raise BudgetError("eps_c profile must be positive and match the grid")
    lev = _top_down_levels(cs, eps_other_profiles, q, w.size)
    resp = _prepare(cs, response)
    problem = _Problem(cs, TOP_DOWN, q)
    points = _sweep(problem, resp, w, lambda i: (lev[:, i], ec[i]),
                    warm_start=warm_start, workers=workers)
    return _finish(problem, points, [], False, t0, cs)


def bisect_cross_check(cs: CoupledSystem, profile: WeightProfile, grid=None, *, q: Optional[int] = None,
                       response=None, workers=None) -> BoundResult:
    """Reference solution by bisection on the level with a mu upper bound as oracle.

    Bottom-up when ``q`` is ``None``; otherwise top-down for subsystem ``q``
    (the profile's performance level is then the specification).
    """
    t0 = time.perf_counter()
    if grid is None:
        grid = profile.grid
    if grid is None:
        raise BudgetError("a grid is required")
    w = _grid_values(grid)
    if profile.kind == "per_frequency" and profile.subsystem_levels.shape[1] != w.size:
        raise BudgetError("profile and grid lengths differ")
    resp = _prepare(cs, response)
    if q is None:
        problem = _Problem(cs, BOTTOM_UP)
        fn = lambda i: (profile.levels_at(i), None)
    else:
        if profile.performance_level is None:
            raise BudgetError("top-down cross-check needs a performance level")
        problem = _Problem(cs, TOP_DOWN, q)
        fn = lambda i: (np.where(np.arange(cs.k) == q, 0.0, profile.levels_at(i)),
                        profile.performance_at(i))
    points = _sweep(problem, resp, w, fn, method="bisect", warm_start=False, workers=workers)
    extra = []
    if profile.kind == "global":
        extra = _sweep(problem, resp, n_peak_frequencies(resp, w), fn, method="bisect",
                       warm_start=False, workers=workers)
    return _finish(problem, points, extra, profile.kind == "global", t0, cs)


def certify_stability(cs: CoupledSystem, cs_hat: CoupledSystem, bound_result: BoundResult) -> bool:
    """Internal stability of the reduced coupled system backed by a global certificate."""
    if bound_result.global_value is None or not bound_result.wellposed_stable_certified:
        raise BudgetError("no global certificate to check")
    if not cs.K.same_as(cs_hat.K):
        raise BudgetError("systems use different interconnections")
    return bool(check_internal_stability(cs_hat))
