"""Static interconnections of LTI subsystems.

The subsystems ``G_1 .. G_k`` are collected in ``G_b = diag(G_j)`` and
closed through a constant matrix

    [u_b; y_c] = [[K11, K12], [K21, K22]] [y_b; u_c].

Besides state-space realizations of ``G_c`` and of the nominal
error-propagation system ``N``, this module provides frequency-domain
evaluation straight from the subsystem responses, which is what the bound
solvers use on dense grids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence

import numpy as np
import scipy.linalg

from .lti import (
    LTIError,
    ResponseEvaluator,
    StateSpaceModel,
    is_stable,
    parallel_diff,
)

__all__ = [
    "InterconnectionMatrix",
    "CoupledSystem",
    "WellposednessCertificate",
    "IllPosedError",
    "blkdiag_assemble",
    "check_wellposed",
    "check_internal_stability",
    "upper_lft_Gc",
    "nominal_N",
    "error_system_Ec",
    "CoupledResponse",
    "gc_from_gb",
    "n_from_gb",
    "load_coupled_system",
    "save_coupled_system",
]

WELLPOSED_RTOL = 1e-10


class IllPosedError(LTIError):
    """``I - K11 D_b`` is (numerically) singular."""

    def __init__(self, condition_number):
        self.condition_number = condition_number
        super().__init__(
            f"interconnection is ill-posed: cond(I - K11 D_b) = {condition_number:.3e}"
        )


@dataclass(frozen=True, eq=False)
class InterconnectionMatrix:
    """Partitioned static interconnection ``K``.

    ``input_dims[j] = m_j`` and ``output_dims[j] = p_j`` are the subsystem
    input and output sizes.
    """

    K11: np.ndarray
    K12: np.ndarray
    K21: np.ndarray
    K22: np.ndarray
    input_dims: tuple
    output_dims: tuple

    def __post_init__(self):
        mdims = tuple(int(v) for v in self.input_dims)
        pdims = tuple(int(v) for v in self.output_dims)
        if len(mdims) != len(pdims):
            raise LTIError("input_dims and output_dims must have equal length")
        m_b, p_b = sum(mdims), sum(pdims)
        K11 = np.array(self.K11, dtype=float).reshape(m_b, p_b)
        K12 = np.array(self.K12, dtype=float)
        K21 = np.array(self.K21, dtype=float)
        m_c = K12.shape[1] if K12.ndim == 2 else 0
        p_c = K21.shape[0] if K21.ndim == 2 else 0
        K12 = K12.reshape(m_b, m_c)
        K21 = K21.reshape(p_c, p_b)
        K22 = np.array(self.K22, dtype=float).reshape(p_c, m_c)
        for name, mat in (("K11", K11), ("K12", K12), ("K21", K21), ("K22", K22)):
            if not np.all(np.isfinite(mat)):
                raise LTIError(f"{name} has non-finite entries")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        object.__setattr__(self, "input_dims", mdims)
        object.__setattr__(self, "output_dims", pdims)

    @classmethod
    def from_full(cls, K, input_dims, output_dims) -> "InterconnectionMatrix":
        """Split a full ``(m_b + p_c) x (p_b + m_c)`` matrix into its blocks."""
        K = np.asarray(K, dtype=float)
        m_b, p_b = sum(input_dims), sum(output_dims)
        if K.ndim != 2 or K.shape[0] < m_b or K.shape[1] < p_b:
            raise LTIError(f"K of shape {K.shape} does not fit m_b={m_b}, p_b={p_b}")
        return cls(
            K[:m_b, :p_b], K[:m_b, p_b:], K[m_b:, :p_b], K[m_b:, p_b:],
            tuple(input_dims), tuple(output_dims),
        )

    @property
    def full(self) -> np.ndarray:
        return np.block([[self.K11, self.K12], [self.K21, self.K22]])

    @property
    def k(self) -> int:
        return len(self.input_dims)

    @property
    def m_b(self) -> int:
        return self.K11.shape[0]

    @property
    def p_b(self) -> int:
        return self.K11.shape[1]

    @property
    def m_c(self) -> int:
        return self.K12.shape[1]

    @property
    def p_c(self) -> int:
        return self.K21.shape[0]

    def same_as(self, other: "InterconnectionMatrix") -> bool:
        return (
            self.input_dims == other.input_dims
            and self.output_dims == other.output_dims
            and self.full.shape == other.full.shape
            and np.array_equal(self.full, other.full)
        )


@dataclass(frozen=True)
class WellposednessCertificate:
    ok: bool
    condition_number: float
    sigma_min: float


def blkdiag_assemble(models: Sequence[StateSpaceModel]) -> StateSpaceModel:
    """Block-diagonal stacking ``diag(G_1, ..., G_k)``."""
    models = list(models)
    if not models:
        raise LTIError("need at least one model")
    n = sum(g.n for g in models)
    A = scipy.linalg.block_diag(*[g.A for g in models]) if n else np.zeros((0, 0))
    B = scipy.linalg.block_diag(*[g.B for g in models])
    C = scipy.linalg.block_diag(*[g.C for g in models])
    D = scipy.linalg.block_diag(*[g.D for g in models])
    m = sum(g.m for g in models)
    p = sum(g.p for g in models)
    return StateSpaceModel(A.reshape(n, n), B.reshape(n, m), C.reshape(p, n), D.reshape(p, m))


@dataclass(frozen=True, eq=False)
class CoupledSystem:
    """Subsystem models together with their interconnection matrix."""

    subsystems: tuple
    K: InterconnectionMatrix

    def __post_init__(self):
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        if len(subs) != self.K.k:
            raise LTIError(f"{len(subs)} subsystems but K describes {self.K.k}")
        for j, (g, mj, pj) in enumerate(zip(subs, self.K.input_dims, self.K.output_dims)):
            if (g.p, g.m) != (pj, mj):
                raise LTIError(
                    f"subsystem {j} has (p, m) = {(g.p, g.m)}, K expects {(pj, mj)}"
                )

    @property
    def k(self) -> int:
        return len(self.subsystems)

    @cached_property
    def Gb(self) -> StateSpaceModel:
        return blkdiag_assemble(self.subsystems)

    @cached_property
    def certificate(self) -> WellposednessCertificate:
        return check_wellposed(self)

    def replace(self, j: int, model: StateSpaceModel) -> "CoupledSystem":
        """Copy with subsystem ``j`` (0-based) replaced."""
        subs = list(self.subsystems)
        subs[j] = model
        return CoupledSystem(tuple(subs), self.K)

    def state_offsets(self) -> List[int]:
        return list(np.cumsum([0] + [g.n for g in self.subsystems]))


def check_wellposed(cs: CoupledSystem) -> WellposednessCertificate:
    """Invertibility test of ``I - K11 D_b`` (static ``K``)."""
    K11 = cs.K.K11
    Db = cs.Gb.D
    m_b = K11.shape[0]
    if m_b == 0:
        return WellposednessCertificate(True, 1.0, 1.0)
    s = np.linalg.svd(np.eye(m_b) - K11 @ Db, compute_uv=False)
    smax, smin = float(s[0]), float(s[-1])
    ok = smin > WELLPOSED_RTOL * smax
    cond = smax / smin if smin > 0 else np.inf
    return WellposednessCertificate(bool(ok), float(cond), smin)


def _loop_factors(cs: CoupledSystem):
    cert = cs.certificate
    if not cert.ok:
        raise IllPosedError(cert.condition_number)
    K11 = cs.K.K11
    Db = cs.Gb.D
    S = np.linalg.inv(np.eye(Db.shape[0]) - Db @ K11)   # (I - D K11)^-1
    Sk = np.linalg.inv(np.eye(K11.shape[0]) - K11 @ Db)  # (I - K11 D)^-1
    return S, Sk


def upper_lft_Gc(cs: CoupledSystem) -> StateSpaceModel:
    """Realization of ``G_c = K21 G_b (I - K11 G_b)^-1 K12 + K22``."""
    S, Sk = _loop_factors(cs)
    Gb, K = cs.Gb, cs.K
    A = Gb.A + Gb.B @ K.K11 @ S @ Gb.C
    B = Gb.B @ Sk @ K.K12
    C = K.K21 @ S @ Gb.C
    D = K.K22 + K.K21 @ S @ Gb.D @ K.K12
    return StateSpaceModel(A, B, C, D)


def nominal_N(cs: CoupledSystem) -> StateSpaceModel:
    """Realization of the nominal system ``N`` from ``(e_b, u_c)`` to ``(u_b_hat, e_c)``.

    ``N22`` must vanish identically while ``N12`` and ``N21`` share the
    closed-loop dynamics, so two copies of the closed-loop state are used:
    one carrying the perturbed inputs ``u_b_hat`` and one carrying the
    output deviation that produces ``e_c``.
    """
    S, Sk = _loop_factors(cs)
    Gb, K = cs.Gb, cs.K
    n = Gb.n
    A1 = Gb.A + Gb.B @ K.K11 @ S @ Gb.C
    Be = Gb.B @ K.K11 @ S
    Bu = Gb.B @ Sk @ K.K12
    A = scipy.linalg.block_diag(A1, A1) if n else np.zeros((0, 0))
    B = np.block([[Be, Bu], [Be, np.zeros((n, K.m_c))]])
    C = np.block(
        [
            [K.K11 @ S @ Gb.C, np.zeros((K.m_b, n))],
            [np.zeros((K.p_c, n)), K.K21 @ S @ Gb.C],
        ]
    )
    D = np.block([[K.K11 @ S, Sk @ K.K12], [K.K21 @ S, np.zeros((K.p_c, K.m_c))]])
    return StateSpaceModel(A, B, C, D)


def check_internal_stability(cs: CoupledSystem) -> bool:
    """Assumption check: well-posed and closed-loop ``A`` Hurwitz."""
    cert = cs.certificate
    if not cert.ok:
        raise IllPosedError(cert.condition_number)
    return is_stable(upper_lft_Gc(cs))


def error_system_Ec(cs: CoupledSystem, cs_hat: CoupledSystem) -> StateSpaceModel:
    """Realization of ``E_c = G_c_hat - G_c`` (states of both systems)."""
    if not cs.K.same_as(cs_hat.K):
        raise LTIError("coupled systems must share the interconnection matrix")
    return parallel_diff(upper_lft_Gc(cs), upper_lft_Gc(cs_hat))


def gc_from_gb(Gb: np.ndarray, K: InterconnectionMatrix) -> np.ndarray:
    """``K21 G_b (I - K11 G_b)^-1 K12 + K22`` for a stack of ``G_b`` values."""
    Gb = np.asarray(Gb)
    eye = np.eye(K.m_b)
    X = np.linalg.solve(eye - K.K11 @ Gb, np.broadcast_to(K.K12, Gb.shape[:-2] + K.K12.shape))
    return K.K21 @ Gb @ X + K.K22


def n_from_gb(Gb: np.ndarray, K: InterconnectionMatrix) -> np.ndarray:
    """Stack of ``N(i w)`` from a stack of ``G_b(i w)`` (shape ``(..., m_b+p_c, p_b+m_c)``)."""
    Gb = np.asarray(Gb)
    lead = Gb.shape[:-2]
    m_b, p_b, m_c, p_c = K.m_b, K.p_b, K.m_c, K.p_c
    # (I - G K11)^-1 on the right: solve the transposed system
    R = np.linalg.inv(np.eye(p_b) - Gb @ K.K11)
    N11 = K.K11 @ R
    N21 = K.K21 @ R
    N12 = np.linalg.solve(np.eye(m_b) - K.K11 @ Gb, np.broadcast_to(K.K12, lead + K.K12.shape))
    N = np.zeros(lead + (m_b + p_c, p_b + m_c), dtype=complex)
    N[..., :m_b, :p_b] = N11
    N[..., :m_b, p_b:] = N12
    N[..., m_b:, :p_b] = N21
    return N


class CoupledResponse:
    """Frequency-domain evaluation of a coupled system from subsystem responses."""

    def __init__(self, cs: CoupledSystem, evaluators=None):
        self.cs = cs
        if evaluators is None:
            evaluators = [ResponseEvaluator(g) for g in cs.subsystems]
        self.evaluators = list(evaluators)

    def with_subsystem(self, j: int, model: StateSpaceModel) -> "CoupledResponse":
        evs = list(self.evaluators)
        evs[j] = ResponseEvaluator(model)
        return CoupledResponse(self.cs.replace(j, model), evs)

    def subsystem(self, j: int, omegas) -> np.ndarray:
        return self.evaluators[j](omegas)

    def Gb(self, omegas) -> np.ndarray:
        w = np.atleast_1d(np.asarray(omegas, dtype=float))
        K = self.cs.K
        out = np.zeros((w.size, K.p_b, K.m_b), dtype=complex)
        r = c = 0
        for ev, pj, mj in zip(self.evaluators, K.output_dims, K.input_dims):
            out[:, r : r + pj, c : c + mj] = ev(w)
            r += pj
            c += mj
        return out

    def Gc(self, omegas) -> np.ndarray:
        return gc_from_gb(self.Gb(omegas), self.cs.K)

    def N(self, omegas) -> np.ndarray:
        return n_from_gb(self.Gb(omegas), self.cs.K)


def save_coupled_system(cs: CoupledSystem, path=None, metadata=None) -> dict:
    """Coupled-system JSON document (written to ``path`` when given)."""
    doc = {
        "subsystems": [g.to_dict() for g in cs.subsystems],
        "K": cs.K.full.tolist(),
        "input_dims": list(cs.K.input_dims),
        "output_dims": list(cs.K.output_dims),
        "m_c": cs.K.m_c,
        "p_c": cs.K.p_c,
    }
    if metadata:
        doc["metadata"] = metadata
    if path is not None:
        with open(path, "w") as fh:
            json.dump(doc, fh)
    return doc


def load_coupled_system(source, base_dir=None) -> CoupledSystem:
    """Read a coupled-system description.

    ``source`` is a path or an already parsed dict. Subsystems are inline
    model objects or paths (relative to the description file) of
    model JSON files.
    """
    import os

    if isinstance(source, dict):
        doc = source
    else:
        with open(source) as fh:
            doc = json.load(fh)
        base_dir = base_dir or os.path.dirname(os.path.abspath(source))
    subs = []
    for entry in doc["subsystems"]:
        if isinstance(entry, str):
            path = entry if os.path.isabs(entry) else os.path.join(base_dir or ".", entry)
            with open(path) as fh:
                entry = json.load(fh)
        subs.append(StateSpaceModel.from_dict(entry))
    input_dims = doc.get("input_dims") or [g.m for g in subs]
    output_dims = doc.get("output_dims") or [g.p for g in subs]
    K = InterconnectionMatrix.from_full(np.array(doc["K"], dtype=float), input_dims, output_dims)
    if "m_c" in doc and K.m_c != int(doc["m_c"]):
        raise LTIError("K column count does not match m_c")
    if "p_c" in doc and K.p_c != int(doc["p_c"]):
        raise LTIError("K row count does not match p_c")
    return CoupledSystem(tuple(subs), K)
