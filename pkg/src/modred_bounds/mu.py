"""Structured singular value upper bounds by D-scaling and the scaled LMI kernel.

The uncertainty is ``diag(Delta_1, ..., Delta_k, Delta_c)`` with full complex
blocks. For a matrix ``M`` that is closed against it, rows of ``M`` are
indexed by the block *input* sizes and columns by the block *output* sizes,
so a block ``Delta_b`` of shape ``(r_b, c_b)`` owns ``c_b`` rows and ``r_b``
columns of ``M``. A scaling ``d_b > 0`` per block gives

    D_row = diag(d_b I_{c_b}),   D_col = diag(d_b I_{r_b}),

and ``mu(M) <= sigma_max(D_row^{-1/2} M D_col^{1/2})`` for every choice.
``sigma_max(D_row^{-1/2} M D_col^{1/2})`` is convex in ``log d``, which all
optimizers here rely on.

Two independent routes solve the weighted problem

    maximize gamma  s.t.  D_row - M W(gamma) D_col W(gamma) M^H > 0,

where every column block carries a fixed scalar weight except one whose
squared weight is ``gamma`` (its scaling is normalized to 1):
:func:`lmi_max_gamma` maximizes the generalized eigenvalue ``gamma*(d)``
directly with a cutting-plane (ellipsoid) method in ``log d``, and
:func:`bisect_max_gamma` bisects on ``gamma`` with :func:`mu_upper_bound`
as the feasibility oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "BlockStructure",
    "ScalingPair",
    "LMIResult",
    "expand_scalings",
    "scaled_sv",
    "mu_upper_bound",
    "mu_lower_bound_sample",
    "lmi_max_gamma",
    "bisect_max_gamma",
    "lmi_matrix",
    "GAMMA_MIN",
    "GAMMA_MAX",
]

GAMMA_MIN = 1e-24
GAMMA_MAX = 1e24
FEAS_MARGIN = 1e-9
# half-width of the search box in log d
LOG_BOX = 46.0


@dataclass(frozen=True)
class BlockStructure:
    """Shapes ``(rows, cols)`` of the subsystem blocks and the performance block."""

    subsystem_blocks: Tuple[Tuple[int, int], ...]
    performance_block: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        blocks = tuple((int(r), int(c)) for r, c in self.subsystem_blocks)
        object.__setattr__(self, "subsystem_blocks", blocks)
        if self.performance_block is not None:
            r, c = self.performance_block
            object.__setattr__(self, "performance_block", (int(r), int(c)))
        for r, c in self.blocks:
            if r < 0 or c < 0:
                raise ValueError("block dimensions must be nonnegative")

    @property
    def blocks(self) -> Tuple[Tuple[int, int], ...]:
        if self.performance_block is None:
            return self.subsystem_blocks
        return self.subsystem_blocks + (self.performance_block,)

    @property
    def row_sizes(self):
        """Row counts of ``M`` per block (block input sizes)."""
        return [c for _, c in self.blocks]

    @property
    def col_sizes(self):
        """Column counts of ``M`` per block (block output sizes)."""
        return [r for r, _ in self.blocks]

    @property
    def shape(self):
        return sum(self.row_sizes), sum(self.col_sizes)

    @property
    def nblocks(self):
        return len(self.blocks)

    def row_index(self):
        return np.repeat(np.arange(self.nblocks), self.row_sizes)

    def col_index(self):
        return np.repeat(np.arange(self.nblocks), self.col_sizes)

    def row_slices(self):
        off = np.concatenate([[0], np.cumsum(self.row_sizes)])
        return [slice(int(a), int(b)) for a, b in zip(off[:-1], off[1:])]

    def col_slices(self):
        off = np.concatenate([[0], np.cumsum(self.col_sizes)])
        return [slice(int(a), int(b)) for a, b in zip(off[:-1], off[1:])]

    def check(self, M):
        if M.shape != self.shape:
            raise ValueError(f"matrix of shape {M.shape} does not match structure {self.shape}")

    @classmethod
    def for_interconnection(cls, input_dims, output_dims, m_c, p_c) -> "BlockStructure":
        perf = (m_c, p_c) if (m_c or p_c) else None
        return cls(tuple(zip(output_dims, input_dims)), perf)


@dataclass(frozen=True)
class ScalingPair:
    """Positive scalings ``d_1..d_k`` and ``d_c``; ``normalization`` indexes the entry fixed to 1."""

    d: Tuple[float, ...]
    d_c: Optional[float] = None
    normalization: Optional[int] = None

    def __post_init__(self):
        d = tuple(float(v) for v in self.d)
        object.__setattr__(self, "d", d)
        vals = list(d) + ([] if self.d_c is None else [float(self.d_c)])
        if any(not (v > 0 and np.isfinite(v)) for v in vals):
            raise ValueError("scalings must be positive and finite")

    @property
    def values(self) -> np.ndarray:
        vals = list(self.d)
        if self.d_c is not None:
            vals.append(float(self.d_c))
        return np.asarray(vals)

    @classmethod
    def from_values(cls, values, bs: BlockStructure, normalization=None) -> "ScalingPair":
        values = np.asarray(values, dtype=float)
        k = len(bs.subsystem_blocks)
        d_c = float(values[k]) if bs.performance_block is not None else None
        return cls(tuple(values[:k]), d_c, normalization)

    def scaled(self, alpha: float) -> "ScalingPair":
        return ScalingPair(tuple(alpha * v for v in self.d),
                           None if self.d_c is None else alpha * self.d_c, None)

    def to_dict(self):
        return {"d": list(self.d), "d_c": self.d_c, "normalization": self.normalization}


def expand_scalings(s: ScalingPair, bs: BlockStructure):
    """Diagonals ``(D_row, D_col)`` as 2-D arrays sized to ``M``'s rows and columns."""
    vals = s.values
    if vals.size != bs.nblocks:
        raise ValueError(f"{vals.size} scalings for {bs.nblocks} blocks")
    return np.diag(np.repeat(vals, bs.row_sizes)), np.diag(np.repeat(vals, bs.col_sizes))


def _sv_from_logd(M, ridx, cidx, x):
    Y = np.exp(-0.5 * x[ridx])[:, None] * M * np.exp(0.5 * x[cidx])[None, :]
    return Y


def scaled_sv(M, s: ScalingPair, bs: BlockStructure) -> float:
    """``sigma_max(D_row^{-1/2} M D_col^{1/2})``."""
    M = np.asarray(M)
    bs.check(M)
    if M.size == 0:
        return 0.0
    x = np.log(s.values)
    Y = _sv_from_logd(M, bs.row_index(), bs.col_index(), x)
    return float(np.linalg.norm(Y, 2))


def _sv_and_grad(M, ridx, cidx, nb, x):
    Y = _sv_from_logd(M, ridx, cidx, x)
    U, s, Vh = np.linalg.svd(Y)
    sig = s[0]
    u = np.abs(U[:, 0]) ** 2
    v = np.abs(Vh[0]) ** 2
    g = 0.5 * sig * (np.bincount(cidx, v, nb) - np.bincount(ridx, u, nb))
    return sig, g


def _ellipsoid(oracle, x0, radius, xtol=1e-9, max_iter=4000, stop_below=-np.inf):
    """Central-cut ellipsoid method.

    ``oracle(x)`` returns ``(value, cut)`` where ``value`` is the objective to
    minimize (``np.inf`` where infeasible) and every better point ``y``
    satisfies ``cut @ (y - x) <= 0``. Returns ``(best_x, best_value)``, early
    once a value below ``stop_below`` is seen.
    """
    n = x0.size
    c = x0.astype(float).copy()
    best_x, best_v = c.copy(), np.inf
    if n == 1:
        lo, hi = c[0] - radius, c[0] + radius
        for _ in range(max_iter):
            v, g = oracle(c)
            if v < best_v:
                best_x, best_v = c.copy(), v
            if v < stop_below:
                break
            if g[0] > 0:
                hi = c[0]
            elif g[0] < 0:
                lo = c[0]
            else:
                break
            if hi - lo < xtol:
                break
            c = np.array([0.5 * (lo + hi)])
        return best_x, best_v
    P = np.eye(n) * radius**2
    lo, hi = x0 - radius, x0 + radius
    for _ in range(max_iter):
        out = (c < lo) | (c > hi)
        if np.any(out):
            # outside the search box: cut back towards it
            i = int(np.argmax(np.maximum(lo - c, c - hi)))
            g = np.zeros(n)
            g[i] = 1.0 if c[i] > hi[i] else -1.0
        else:
            v, g = oracle(c)
            if v < best_v:
                best_x, best_v = c.copy(), v
            if v < stop_below:
                return best_x, best_v
            if not np.any(g):
                break
        Pg = P @ g
        gPg = float(g @ Pg)
        if not gPg > 0:
            break
        gt = Pg / np.sqrt(gPg)
        c = c - gt / (n + 1)
        P = (n * n / (n * n - 1.0)) * (P - (2.0 / (n + 1)) * np.outer(gt, gt))
        P = 0.5 * (P + P.T)
        dg = np.diag(P)
        if np.any(dg <= 0) or np.sqrt(np.max(dg)) < xtol:
            break
    # the optimum lies in the final ellipsoid, so its centre is within xtol of it
    if not np.any((c < lo) | (c > hi)):
        v, _ = oracle(c)
        if v < best_v:
            best_x, best_v = c.copy(), v
    return best_x, best_v


def mu_upper_bound(M, bs: BlockStructure, x0=None, rtol: float = 1e-9, below: float = None):
    """Minimum of the D-scaled largest singular value.

    Returns ``(value, scalings)``; the last block is normalized to 1.
    Convex in ``log d``: 1-D problems use bounded Brent minimization, larger
    ones the ellipsoid method with singular-vector subgradients. The search
    stops at a log-scaling tolerance of ``rtol / 10``. With ``below`` set the
    search returns as soon as a scaling gives a value under ``below``; that
    value is still an upper bound but not the minimum.
    """
    M = np.asarray(M, dtype=complex)
    bs.check(M)
    nb = bs.nblocks
    if M.size == 0:
        return 0.0, ScalingPair.from_values(np.ones(nb), bs, nb - 1)
    ridx, cidx = bs.row_index(), bs.col_index()
    if nb == 1:
        return float(np.linalg.norm(M, 2)), ScalingPair.from_values([1.0], bs, 0)
    nfree = nb - 1

    def full(xf):
        return np.concatenate([xf, [0.0]])

    if x0 is None:
        x0 = np.zeros(nfree)
    else:
        x0 = np.asarray(x0, dtype=float)[:nfree] - np.asarray(x0, dtype=float)[-1]
    # the scaled sigma_max changes by at most a factor exp(||dx||_inf)
    xtol = 0.1 * rtol

    def oracle(xf):
        sig, g = _sv_and_grad(M, ridx, cidx, nb, full(xf))
        return sig, g[:nfree]

    if below is not None:
        xbest, vbest = _ellipsoid(oracle, x0, LOG_BOX, xtol=xtol, stop_below=below)
    elif nfree == 1:
        f = lambda t: float(np.linalg.norm(_sv_from_logd(M, ridx, cidx, full(np.array([t]))), 2))
        res = minimize_scalar(f, bounds=(-LOG_BOX, LOG_BOX), method="bounded",
                              options={"xatol": xtol, "maxiter": 500})
        xbest, vbest = np.array([res.x]), float(res.fun)
        v0 = f(float(x0[0]))
        if v0 < vbest:
            xbest, vbest = x0, v0
    else:
        xbest, vbest = _ellipsoid(oracle, x0, LOG_BOX, xtol=xtol)
    vals = np.exp(full(xbest))
    return float(vbest), ScalingPair.from_values(vals, bs, nb - 1)


def _polish_delta(M, Delta, bs, csl, rsl, steps):
    """Rank-one block updates along the gradient of the dominant eigenvalue of ``M Delta``."""
    best = float(np.max(np.abs(np.linalg.eigvals(M @ Delta))))
    for _ in range(steps):
        lam, V = np.linalg.eig(M @ Delta)
        k = int(np.argmax(np.abs(lam)))
        x = V[:, k]
        lamh, W = np.linalg.eig((M @ Delta).conj().T)
        z = W[:, int(np.argmin(np.abs(lamh - np.conj(lam[k]))))]
        # d lambda / d Delta_b is proportional to (M^H z)_b x_b^H
        g = M.conj().T @ z
        new = np.zeros_like(Delta)
        for (r, c), cs_, rs_ in zip(bs.blocks, csl, rsl):
            if r == 0 or c == 0:
                continue
            a, b = g[cs_], x[rs_]
            na, nb_ = np.linalg.norm(a), np.linalg.norm(b)
            if na == 0 or nb_ == 0:
                new[cs_, rs_] = Delta[cs_, rs_]
            else:
                new[cs_, rs_] = np.outer(a / na, b.conj() / nb_)
        rho = float(np.max(np.abs(np.linalg.eigvals(M @ new))))
        if rho <= best * (1 + 1e-12):
            break
        best, Delta = rho, new
    return best


def mu_lower_bound_sample(M, bs: BlockStructure, samples: int = 1000, seed=0,
                          polish: int = 5, polish_steps: int = 30) -> float:
    """Lower bound ``max rho(M Delta)`` over structured ``Delta`` with unit-norm blocks.

    ``samples`` random blocks (half of them rank one) are drawn; the
    ``polish`` best are then improved by rank-one updates aligned with the
    eigenvalue gradient. Every candidate is admissible, so the result never
    exceeds the structured singular value.
    """
    M = np.asarray(M, dtype=complex)
    bs.check(M)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if M.size == 0 or not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    nr, nc = bs.shape
    csl, rsl = bs.col_slices(), bs.row_slices()
    scored = []
    for _ in range(samples):
        Delta = np.zeros((nc, nr), dtype=complex)
        for (r, c), cs_, rs_ in zip(bs.blocks, csl, rsl):
            if r == 0 or c == 0:
                continue
            X = rng.standard_normal((r, c)) + 1j * rng.standard_normal((r, c))
            # rank-one blocks scaled to unit norm are the extreme points that matter
            if rng.random() < 0.5:
                X = X[:, :1] @ X[:1, :]
            Delta[cs_, rs_] = X / np.linalg.norm(X, 2)
        scored.append((float(np.max(np.abs(np.linalg.eigvals(M @ Delta)))), Delta))
    scored.sort(key=lambda t: -t[0])
    best = scored[0][0]
    for _, Delta in scored[:polish]:
        best = max(best, _polish_delta(M, Delta, bs, csl, rsl, polish_steps))
    return best


@dataclass
class LMIResult:
    """Outcome of a scaled LMI solve at one frequency."""

    feasible: bool
    gamma: Optional[float]
    scalings: Optional[ScalingPair]
    min_eig: Optional[float] = None
    iterations: int = 0
    capped: bool = False


def _weights_matrix(M, bs, weights, gamma_block, gamma):
    w = np.asarray(weights, dtype=float).copy()
    w[gamma_block] = np.sqrt(gamma)
    return M * np.repeat(w, bs.col_sizes)[None, :]


def lmi_matrix(M, bs: BlockStructure, weights, gamma_block: int, d, gamma) -> np.ndarray:
    """``F(d, gamma) = D_row - M W D_col W M^H`` with ``W^2 = gamma`` on ``gamma_block``."""
    M = np.asarray(M, dtype=complex)
    d = np.asarray(d, dtype=float)
    w2 = np.asarray(weights, dtype=float) ** 2
    w2 = w2.copy()
    w2[gamma_block] = gamma
    col = np.repeat(d * w2, bs.col_sizes)
    F = np.diag(np.repeat(d, bs.row_sizes)).astype(complex) - (M * col[None, :]) @ M.conj().T
    return 0.5 * (F + F.conj().T)


def _prepare(M, bs, weights, gamma_block):
    M = np.asarray(M, dtype=complex)
    bs.check(M)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (bs.nblocks,):
        raise ValueError("need one weight per block")
    if np.any(weights < 0) or not np.all(np.isfinite(np.delete(weights, gamma_block))):
        raise ValueError("weights must be nonnegative and finite")
    if not 0 <= gamma_block < bs.nblocks:
        raise ValueError("gamma_block out of range")
    return M, weights


def lmi_max_gamma(M, bs: BlockStructure, weights, gamma_block: int, x0=None,
                  rtol: float = 1e-4, feas_margin: float = FEAS_MARGIN) -> LMIResult:
    """Largest ``gamma`` with ``F(d, gamma) > 0`` for some positive scalings ``d``.

    ``weights[b]`` is the scalar weight on the column block ``b``;
    ``weights[gamma_block]`` is ignored and its squared weight is ``gamma``.
    The scaling of ``gamma_block`` is fixed to 1. For fixed ``d`` the best
    ``gamma`` is the generalized eigenvalue ``1 / sigma_max(L^{-1} M_g)^2``
    with ``A(d) = L L^H``; its superlevel sets are convex in ``log d``, so the
    maximization over ``d`` is done by central cuts whose normals come from
    the scaled largest singular value at the current level. The returned
    ``gamma`` is backed off until
    ``lambda_min(D_row^{-1/2} F D_row^{-1/2}) >= feas_margin``; ``min_eig``
    reports that normalized eigenvalue.
    """
    M, weights = _prepare(M, bs, weights, gamma_block)
    nb = bs.nblocks
    csl = bs.col_slices()
    free = [b for b in range(nb) if b != gamma_block]
    Mg = M[:, csl[gamma_block]]
    # A(d) = D_row(d) - sum_b d_b w_b^2 M_b M_b^H, written per block
    grams = [weights[b] ** 2 * (M[:, csl[b]] @ M[:, csl[b]].conj().T) for b in range(nb)]
    nr = M.shape[0]
    ridx = bs.row_index()

    def A_of(d):
        A = np.diag(d[ridx]).astype(complex)
        for b in free:
            if weights[b] > 0:
                A -= d[b] * grams[b]
        return 0.5 * (A + A.conj().T)

    def gamma_star(d, margin=0.0):
        # work with D_row^{-1/2} F D_row^{-1/2}, whose scale does not depend on d
        s = d[ridx] ** -0.5
        A = s[:, None] * A_of(d) * s[None, :]
        if margin:
            A = A - margin * np.eye(nr)
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            return None, None
        if Mg.shape[1] == 0 or not np.any(Mg):
            return np.inf, None
        sv = np.linalg.svd(np.linalg.solve(L, s[:, None] * Mg), compute_uv=False)
        if sv[0] == 0:
            return np.inf, None
        return 1.0 / sv[0] ** 2, L

    def to_d(xf):
        d = np.ones(nb)
        d[free] = np.exp(xf)
        return d

    cidx = bs.col_index()
    wcol = np.repeat(np.where(np.arange(nb) == gamma_block, 0.0, weights), bs.col_sizes)

    def level_cut(x, gamma):
        # subgradient of sigma_max(D_row^{-1/2} M W(gamma) D_col^{1/2}); its
        # sublevel set {< 1} is the convex feasible region for this gamma
        wc = wcol.copy()
        wc[cidx == gamma_block] = np.sqrt(gamma)
        _, g = _sv_and_grad(M * wc[None, :], ridx, cidx, nb, x)
        return g[free]

    def oracle(xf):
        d = to_d(xf)
        x = np.log(d)
        # certify with the margin during the search, so a boundary optimum stays certifiable
        g, _ = gamma_star(d, margin=feas_margin)
        if g is None:
            return np.inf, level_cut(x, 0.0)
        if np.isinf(g):
            return -g, np.zeros(len(free))
        return -g, level_cut(x, g)

    nfree = len(free)
    if x0 is None:
        xstart = np.zeros(nfree)
    else:
        xs = np.log(np.asarray(x0, dtype=float))
        xstart = (xs - xs[gamma_block])[free]
    if nfree == 0:
        xbest, val = np.zeros(0), oracle(np.zeros(0))[0]
        iters = 1
    else:
        # log gamma* moves by at most 2 ||dx||_inf, so this meets rtol on gamma
        xtol = 0.25 * rtol
        xbest, val = _ellipsoid(oracle, xstart, LOG_BOX, xtol=xtol)
        # warm start may sit outside the box centre; retry from the origin if it failed
        if val == np.inf and np.any(xstart != 0):
            xbest, val = _ellipsoid(oracle, np.zeros(nfree), LOG_BOX, xtol=xtol)
        iters = 0
    if val == np.inf:
        return LMIResult(False, None, None)
    d = to_d(xbest)
    # a doubled margin keeps the reported min_eig above feas_margin despite roundoff
    g_cert, aux = gamma_star(d, margin=2.0 * feas_margin)
    if g_cert is None or g_cert <= GAMMA_MIN:
        return LMIResult(False, None, None)
    s = d[ridx] ** -0.5
    if np.isinf(g_cert):
        # the gamma block does not enter F at all
        F = lmi_matrix(M, bs, weights, gamma_block, d, 0.0)
        lmin = float(np.linalg.eigvalsh(s[:, None] * F * s[None, :])[0])
        return LMIResult(True, np.inf, ScalingPair.from_values(d, bs, gamma_block), lmin, iters)
    g_cert = min(g_cert, GAMMA_MAX)
    F = lmi_matrix(M, bs, weights, gamma_block, d, g_cert)
    lmin = float(np.linalg.eigvalsh(s[:, None] * F * s[None, :])[0])
    return LMIResult(True, float(g_cert), ScalingPair.from_values(d, bs, gamma_block),
                     lmin, iters, g_cert >= GAMMA_MAX)


def bisect_max_gamma(M, bs: BlockStructure, weights, gamma_block: int,
                     rtol: float = 1e-4, max_iter: int = 80,
                     gamma_lo: float = GAMMA_MIN, gamma_hi: float = GAMMA_MAX) -> LMIResult:
    """Same problem as :func:`lmi_max_gamma`, by bisection on ``log gamma``.

    Feasibility of a level is decided by ``mu_upper_bound(M W(gamma)) < 1``.
    """
    M, weights = _prepare(M, bs, weights, gamma_block)
    if not np.any(M[:, bs.col_slices()[gamma_block]]):
        val, s = mu_upper_bound(_weights_matrix(M, bs, weights, gamma_block, 0.0), bs)
        if val >= 1.0:
            return LMIResult(False, None, None)
        vals = s.values / s.values[gamma_block]
        return LMIResult(True, np.inf, ScalingPair.from_values(vals, bs, gamma_block))

    last = [None]

    def feasible(g):
        # only the sign of mu - 1 matters; start from the last certifying scalings
        x0 = None if last[0] is None else np.log(last[0].values)
        val, s = mu_upper_bound(_weights_matrix(M, bs, weights, gamma_block, g), bs,
                                x0=x0, rtol=0.1 * rtol, below=1.0)
        if val < 1.0:
            last[0] = s
        return val < 1.0, s

    ok, s_lo = feasible(gamma_lo)
    if not ok:
        return LMIResult(False, None, None)
    ok_hi, s_hi = feasible(gamma_hi)
    if ok_hi:
        return LMIResult(True, gamma_hi, s_hi, capped=True)
    lo, hi = np.log(gamma_lo), np.log(gamma_hi)
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        ok, s = feasible(np.exp(mid))
        if ok:
            lo, s_lo = mid, s
        else:
            hi = mid
        if hi - lo < np.log1p(rtol) * 0.5:
            break
    vals = s_lo.values / s_lo.values[gamma_block]
    return LMIResult(True, float(np.exp(lo)), ScalingPair.from_values(vals, bs, gamma_block),
                     iterations=it)
