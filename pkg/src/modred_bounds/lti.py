"""Continuous-time LTI state-space models and the numerical substrate on top of them.

Everything in the package is carried as a :class:`StateSpaceModel`; static
gains are models with zero states. Frequency responses over many frequencies
go through :class:`ResponseEvaluator`, which factors ``A`` once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

__all__ = [
    "StateSpaceModel",
    "FrequencyGrid",
    "ResponseEvaluator",
    "LTIError",
    "NumericalError",
    "SingularResponseError",
    "UnstableSystemError",
    "freq_response",
    "is_stable",
    "stability_margin",
    "lyapunov_solve",
    "lyapunov_residual",
    "gramians",
    "hankel_singular_values",
    "hinf_norm",
    "hinf_norm_hamiltonian",
    "parallel_diff",
    "static_gain",
    "pole_frequencies",
]

# relative margin used by is_stable
TOL_STAB = 1e-9
# relative residual accepted from the Lyapunov solver
LYAP_RTOL = 1e-8


class LTIError(ValueError):
    """Base class for errors raised by the LTI routines."""


class SingularResponseError(LTIError):
    """Raised when ``i*omega`` is (numerically) an eigenvalue of ``A``."""

    def __init__(self, omega, eigenvalue):
        self.omega = omega
        self.eigenvalue = eigenvalue
        super().__init__(
            f"resolvent is singular at omega={omega!r}: eigenvalue {eigenvalue!r} "
            "lies on the imaginary axis"
        )


class NumericalError(LTIError):
    """A computation finished but failed its accuracy check."""


class UnstableSystemError(LTIError):
    """Raised when an operation requires a Hurwitz ``A``."""


def _as_matrix(x, rows=None, cols=None, name="matrix"):
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(rows or 0, cols or 0)
    if a.ndim != 2:
        raise LTIError(f"{name} must be two-dimensional, got shape {a.shape}")
    if a.size == 0 and rows is not None and cols is not None:
        a = a.reshape(rows, cols)
    return a


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Real state-space realization ``x' = Ax + Bu, y = Cx + Du``.

    ``n = 0`` is allowed and describes the static gain ``D``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _as_matrix(self.D, name="D")
        p, m = D.shape
        A = np.array(self.A, dtype=float)
        n = 0 if A.size == 0 else A.shape[0]
        A = _as_matrix(A, n, n, "A")
        B = _as_matrix(self.B, n, m, "B")
        C = _as_matrix(self.C, p, n, "C")
        if A.shape != (n, n) or B.shape != (n, m) or C.shape != (p, n):
            raise LTIError(
                f"inconsistent dimensions A{A.shape} B{B.shape} C{C.shape} D{D.shape}"
            )
        for name, mat in zip("ABCD", (A, B, C, D)):
            if not np.all(np.isfinite(mat)):
                raise LTIError(f"{name} has non-finite entries")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def shape(self):
        """(outputs, inputs)"""
        return self.D.shape

    def __repr__(self):
        return f"StateSpaceModel(n={self.n}, m={self.m}, p={self.p})"

    def transform(self, T, Tinv=None) -> "StateSpaceModel":
        """State coordinate change ``x = T z``."""
        T = np.asarray(T, dtype=float)
        if Tinv is None:
            Tinv = np.linalg.inv(T)
        return StateSpaceModel(Tinv @ self.A @ T, Tinv @ self.B, self.C @ T, self.D)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateSpaceModel":
        n, m, p = int(d["n"]), int(d["m"]), int(d["p"])
        sys = cls(
            np.array(d["A"], dtype=float).reshape(n, n),
            np.array(d["B"], dtype=float).reshape(n, m),
            np.array(d["C"], dtype=float).reshape(p, n),
            np.array(d["D"], dtype=float).reshape(p, m),
        )
        return sys

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "StateSpaceModel":
        return cls.from_dict(json.loads(text))


def static_gain(D) -> StateSpaceModel:
    """Zero-state model with feedthrough ``D``."""
    D = _as_matrix(D, name="D")
    p, m = D.shape
    return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D)


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Strictly increasing positive frequencies in rad/s."""

    omegas: np.ndarray

    def __post_init__(self):
        w = np.array(self.omegas, dtype=float).ravel()
        if w.size == 0:
            raise LTIError("frequency grid is empty")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise LTIError("frequency grid must contain positive finite values")
        if np.any(np.diff(w) <= 0):
            raise LTIError("frequency grid must be strictly increasing")
        w.setflags(write=False)
        object.__setattr__(self, "omegas", w)

    @classmethod
    def logspace(cls, lo_exp: float, hi_exp: float, points: int) -> "FrequencyGrid":
        return cls(np.logspace(lo_exp, hi_exp, int(points)))

    def __len__(self):
        return self.omegas.size

    def __iter__(self):
        return iter(self.omegas)


def _grid_values(grid) -> np.ndarray:
    if isinstance(grid, FrequencyGrid):
        return grid.omegas
    return np.atleast_1d(np.asarray(grid, dtype=float))


class ResponseEvaluator:
    """Evaluates ``G(i w) = C (i w I - A)^{-1} B + D`` over many frequencies.

    ``A`` is factored once. A diagonalizable ``A`` with a well-conditioned
    eigenvector matrix uses the modal form, which costs ``O(n p m)`` per
    frequency; otherwise the complex Schur form is used and each frequency is a
    triangular solve.
    """

    def __init__(self, sys: StateSpaceModel, cond_limit: float = 1e8):
        self.sys = sys
        self.mode = "static"
        if sys.n == 0:
            self.eigs = np.zeros(0, dtype=complex)
            return
        A = sys.A
        self.scale = max(1.0, np.abs(A).max())
        w, V = scipy.linalg.eig(A)
        self.eigs = w
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(V)
        if np.isfinite(cond) and cond < cond_limit:
            self.mode = "modal"
            self._CV = sys.C @ V
            self._VB = np.linalg.solve(V, sys.B)
        else:
            self.mode = "schur"
            T, Z = scipy.linalg.schur(A.astype(complex), output="complex")
            self._T = T
            self._CZ = sys.C @ Z
            self._ZB = Z.conj().T @ sys.B
            self.eigs = np.diag(T).copy()

    def _check(self, omega):
        if self.eigs.size == 0:
            return
        dist = np.abs(1j * omega - self.eigs)
        k = int(np.argmin(dist))
        if dist[k] <= 1e-13 * max(1.0, abs(omega), abs(self.eigs[k])):
            raise SingularResponseError(omega, self.eigs[k])

    def __call__(self, omegas) -> np.ndarray:
        """Responses stacked as an array of shape ``(len(omegas), p, m)``."""
        w = np.atleast_1d(np.asarray(omegas, dtype=float))
        sys = self.sys
        out = np.empty((w.size, sys.p, sys.m), dtype=complex)
        out[:] = sys.D
        if self.mode == "static":
            return out
        for om in w:
            self._check(om)
        if self.mode == "modal":
            chunk = max(1, int(4e6 // max(1, self.eigs.size * sys.m)))
            for s in range(0, w.size, chunk):
                ws = w[s : s + chunk]
                res = 1.0 / (1j * ws[:, None] - self.eigs[None, :])
                out[s : s + chunk] += np.einsum(
                    "pk,wk,km->wpm", self._CV, res, self._VB, optimize=True
                )
        else:
            n = sys.n
            eye = np.eye(n)
            for i, om in enumerate(w):
                x = scipy.linalg.solve_triangular(1j * om * eye - self._T, self._ZB)
                out[i] += self._CZ @ x
        return out

    def sigma_max(self, omegas) -> np.ndarray:
        G = self(omegas)
        return _sigma_max_stack(G)


def _sigma_max_stack(G: np.ndarray) -> np.ndarray:
    if G.shape[1] == 0 or G.shape[2] == 0:
        return np.zeros(G.shape[0])
    if G.shape[1] == 1 or G.shape[2] == 1:
        return np.sqrt(np.sum(np.abs(G) ** 2, axis=(1, 2)))
    return np.linalg.svd(G, compute_uv=False)[:, 0]


def freq_response(sys: StateSpaceModel, omega):
    """Frequency response at ``omega`` (scalar -> ``(p, m)``, array -> stacked).

    Raises :class:`SingularResponseError` when ``i*omega`` is an eigenvalue
    of ``A``.
    """
    scalar = np.ndim(omega) == 0
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(w < 0):
        raise LTIError("omega must be nonnegative")
    if sys.n == 0:
        G = np.broadcast_to(sys.D.astype(complex), (w.size, sys.p, sys.m)).copy()
    elif w.size <= 4 and sys.n <= 400:
        eigs = np.linalg.eigvals(sys.A)
        G = np.empty((w.size, sys.p, sys.m), dtype=complex)
        for i, om in enumerate(w):
            dist = np.abs(1j * om - eigs)
            k = int(np.argmin(dist))
            if dist[k] <= 1e-13 * max(1.0, om, abs(eigs[k])):
                raise SingularResponseError(om, eigs[k])
            G[i] = sys.C @ np.linalg.solve(1j * om * np.eye(sys.n) - sys.A, sys.B) + sys.D
    else:
        G = ResponseEvaluator(sys)(w)
    return G[0] if scalar else G


def stability_margin(sys: StateSpaceModel) -> float:
    """Largest real part of the eigenvalues of ``A`` (``-inf`` for static gains)."""
    if sys.n == 0:
        return -np.inf
    try:
        eigs = scipy.linalg.eigvals(sys.A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise LTIError(f"eigenvalue computation failed: {exc}") from exc
    return float(eigs.real.max())


def is_stable(sys: StateSpaceModel) -> bool:
    """True iff every eigenvalue of ``A`` has real part below ``-tol``.

    ``tol = 1e-9 * max(1, spectral radius)``; eigenvalues in ``(-tol, 0]``
    count as unstable.
    """
    if sys.n == 0:
        return True
    try:
        eigs = scipy.linalg.eigvals(sys.A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise LTIError(f"eigenvalue computation failed: {exc}") from exc
    tol = TOL_STAB * max(1.0, np.abs(eigs).max())
    return bool(np.all(eigs.real < -tol))


def _require_stable(sys: StateSpaceModel, what="system"):
    if not is_stable(sys):
        raise UnstableSystemError(f"{what} is not asymptotically stable")


def lyapunov_solve(A, Q) -> np.ndarray:
    """Solve ``A X + X A^T + Q = 0`` for stable ``A``.

    Bartels-Stewart on the real Schur form (LAPACK ``trsyl`` through scipy).
    The relative residual ``||A X + X A^T + Q|| / (2 ||A|| ||X|| + ||Q||)``
    (Frobenius norms) is checked against ``1e-8``.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    if Q.shape != (n, n):
        raise LTIError(f"Q must be {n}x{n}, got {Q.shape}")
    eigs = scipy.linalg.eigvals(A)
    if np.any(eigs.real >= -TOL_STAB * max(1.0, np.abs(eigs).max())):
        raise UnstableSystemError("Lyapunov equation requires a stable A")
    Qs = 0.5 * (Q + Q.T)
    X = scipy.linalg.solve_continuous_lyapunov(A, -Qs)
    X = 0.5 * (X + X.T)
    res = lyapunov_residual(A, X, Qs)
    if res > LYAP_RTOL:
        raise NumericalError(f"relative Lyapunov residual {res:.3e} exceeds tolerance")
    return X


def lyapunov_residual(A, X, Q) -> float:
    """Relative residual of ``A X + X A^T + Q = 0``."""
    num = np.linalg.norm(A @ X + X @ A.T + Q)
    den = 2 * np.linalg.norm(A) * np.linalg.norm(X) + np.linalg.norm(Q)
    return float(num / den) if den > 0 else 0.0


def gramians(sys: StateSpaceModel):
    """Controllability and observability Gramians ``(P, Q)``."""
    if sys.n == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    _require_stable(sys)
    P = lyapunov_solve(sys.A, sys.B @ sys.B.T)
    Q = lyapunov_solve(sys.A.T, sys.C.T @ sys.C)
    return P, Q


def _psd_factor(X: np.ndarray) -> np.ndarray:
    """Square factor ``L`` with ``L L^T = X`` for a symmetric PSD ``X``.

    Cholesky is tried first since it keeps relative accuracy on graded
    Gramians; rank deficient inputs fall back to a clipped eigen-factor.
    """
    d = np.sqrt(np.clip(np.diag(X), 0, None))
    d[d == 0] = 1.0
    Xs = X / d[:, None] / d[None, :]
    try:
        L = np.linalg.cholesky(Xs)
        return d[:, None] * L
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(Xs)
    w = np.clip(w, 0, None)
    return d[:, None] * (V * np.sqrt(w))


def hankel_singular_values(sys: StateSpaceModel) -> np.ndarray:
    """Hankel singular values, nonincreasing and nonnegative.

    Values much below ``sqrt(eps) * sigma_1`` are at the noise floor of the
    Gramian solves and may be returned as zero.
    """
    if sys.n == 0:
        return np.zeros(0)
    P, Q = gramians(sys)
    Lp = _psd_factor(P)
    Lq = _psd_factor(Q)
    s = np.linalg.svd(Lq.T @ Lp, compute_uv=False)
    return np.clip(np.sort(s)[::-1], 0, None)


def pole_frequencies(sys: StateSpaceModel, eigs=None) -> np.ndarray:
    """Candidate peak frequencies: imaginary parts and moduli of the poles."""
    if eigs is None:
        eigs = scipy.linalg.eigvals(sys.A) if sys.n else np.zeros(0)
    cand = np.concatenate([np.abs(eigs.imag), np.abs(eigs)])
    cand = cand[cand > 0]
    return np.unique(cand)


def _default_grid(eigs: np.ndarray, points: int = 400) -> np.ndarray:
    mags = np.abs(eigs)
    mags = mags[mags > 0]
    if mags.size:
        lo = np.log10(mags.min()) - 2
        hi = np.log10(mags.max()) + 2
    else:
        lo, hi = -2.0, 2.0
    base = np.logspace(lo, hi, points)
    return np.unique(np.concatenate([base, pole_frequencies(None, eigs)]))


def _refine_peak(fun, omegas, values, n_peaks=8, rtol=1e-4):
    """Polish the largest local maxima of ``fun`` on a sorted grid."""
    best_val = float(values.max())
    best_w = float(omegas[int(values.argmax())])
    if omegas.size < 2:
        return best_val, best_w
    interior = np.r_[False, (values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:]), False]
    interior[0] = values[0] >= values[1]
    interior[-1] = values[-1] >= values[-2]
    idx = np.flatnonzero(interior)
    idx = idx[np.argsort(values[idx])[::-1][:n_peaks]]
    for i in idx:
        lo = omegas[max(i - 1, 0)]
        hi = omegas[min(i + 1, omegas.size - 1)]
        if lo == hi:
            continue
        res = minimize_scalar(
            lambda lw: -fun(np.exp(lw)),
            bounds=(np.log(lo), np.log(hi)),
            method="bounded",
            options={"xatol": 1e-6 * max(1.0, abs(np.log(hi)))},
        )
        val = -float(res.fun)
        if val > best_val:
            best_val, best_w = val, float(np.exp(res.x))
    return best_val, best_w


def hinf_norm(sys: StateSpaceModel, grid=None, method: str = "grid", evaluator=None):
    """H-infinity norm of a stable model.

    Returns ``(value, omega_peak)``. The default ``grid`` method samples the
    supplied grid merged with the pole frequencies of the model, refines the
    largest local maxima, and compares against ``omega -> 0`` and
    ``omega -> inf`` (reported as ``0.0`` and ``np.inf``). ``method =
    "hamiltonian"`` runs the two-step Hamiltonian eigenvalue iteration
    instead (intended for ``n <= 600``).
    """
    if sys.n == 0:
        return float(np.linalg.norm(sys.D, 2)) if sys.D.size else 0.0, np.inf
    _require_stable(sys)
    if method == "hamiltonian":
        return hinf_norm_hamiltonian(sys)
    if method != "grid":
        raise LTIError(f"unknown method {method!r}")
    ev = evaluator if evaluator is not None else ResponseEvaluator(sys)
    eigs = ev.eigs
    if grid is None:
        w = _default_grid(eigs)
    else:
        w = np.unique(np.concatenate([_grid_values(grid), pole_frequencies(None, eigs)]))
    vals = ev.sigma_max(w)
    fun = lambda om: float(ev.sigma_max([om])[0])
    best, w_peak = _refine_peak(fun, w, vals)
    dc = float(np.linalg.norm(sys.D - sys.C @ np.linalg.solve(sys.A, sys.B), 2))
    hf = float(np.linalg.norm(sys.D, 2)) if sys.D.size else 0.0
    if dc > best:
        best, w_peak = dc, 0.0
    if hf > best:
        best, w_peak = hf, np.inf
    return best, w_peak


def hinf_norm_hamiltonian(sys: StateSpaceModel, rtol: float = 1e-8, max_iter: int = 60):
    """H-infinity norm via imaginary-axis eigenvalues of the Hamiltonian.

    Two-step iteration: at level ``gamma`` the imaginary eigenvalues mark the
    frequency intervals where ``sigma_max > gamma``; the level is raised to
    the largest singular value at the interval midpoints.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    n = sys.n
    if n == 0:
        return float(np.linalg.norm(D, 2)), np.inf
    _require_stable(sys)
    eigs = np.linalg.eigvals(A)
    cand = np.concatenate([[0.0], pole_frequencies(None, eigs)])
    vals = [np.linalg.norm(freq_response(sys, om), 2) for om in cand]
    k = int(np.argmax(vals))
    glb, w_peak = float(vals[k]), float(cand[k])
    sd = float(np.linalg.norm(D, 2)) if D.size else 0.0
    if sd > glb:
        glb, w_peak = sd, np.inf
    for _ in range(max_iter):
        gam = (1 + 2 * rtol) * glb
        R = gam**2 * np.eye(sys.m) - D.T @ D
        S = gam**2 * np.eye(sys.p) - D @ D.T
        Ri = np.linalg.inv(R)
        Ah = A + B @ Ri @ D.T @ C
        H = np.block(
            [
                [Ah, B @ Ri @ B.T],
                [-(gam**2) * C.T @ np.linalg.solve(S, C), -Ah.T],
            ]
        )
        lam = np.linalg.eigvals(H)
        scale = max(1.0, np.abs(lam).max())
        imag = np.sort(lam[(np.abs(lam.real) < 1e-8 * scale) & (lam.imag >= 0)].imag)
        if imag.size % 2:
            # odd count: the first interval where sigma_max > gamma starts at omega = 0
            imag = np.concatenate([[0.0], imag])
        if imag.size < 2:
            break
        mids = 0.5 * (imag[:-1] + imag[1:])
        mv = [np.linalg.norm(freq_response(sys, om), 2) for om in mids]
        j = int(np.argmax(mv))
        if mv[j] <= glb * (1 + rtol):
            break
        glb, w_peak = float(mv[j]), float(mids[j])
    return glb, w_peak


def parallel_diff(g: StateSpaceModel, ghat: StateSpaceModel) -> StateSpaceModel:
    """Realization of ``ghat - g`` with stacked states ``(x_g, x_ghat)``."""
    if g.shape != ghat.shape:
        raise LTIError(f"dimension mismatch: {g.shape} vs {ghat.shape}")
    A = scipy.linalg.block_diag(g.A, ghat.A) if (g.n + ghat.n) else np.zeros((0, 0))
    B = np.vstack([g.B, ghat.B])
    C = np.hstack([-g.C, ghat.C])
    return StateSpaceModel(A, B, C, ghat.D - g.D)
