"""Test cases: the three-beam structural benchmark and random coupled systems.

Beams are Euler-Bernoulli finite element models (two-node elements, cubic
Hermite shape functions, consistent mass) turned into state-space models in
modal coordinates with uniform modal damping. Nodes are numbered left to
right and each node carries ``[translation, rotation]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import scipy.linalg

from .interconnect import (
    CoupledSystem,
    InterconnectionMatrix,
    check_internal_stability,
    check_wellposed,
)
from .lti import LTIError, StateSpaceModel

__all__ = [
    "BeamSpec",
    "beam_element_matrices",
    "beam_fe_matrices",
    "free_dof_index",
    "modal_damped_statespace",
    "beam_statespace",
    "three_beam_specs",
    "three_beam_K",
    "build_three_beam_benchmark",
    "epsilon_c_profile",
    "random_coupled_system",
    "random_stable_model",
    "BENCHMARK_GRID",
    "SPRING_TRANSLATIONAL",
    "SPRING_ROTATIONAL",
]

SPRING_TRANSLATIONAL = 4e4  # N/m
SPRING_ROTATIONAL = 4e2  # Nm/rad
# 1000 log-spaced points on [10^1.5, 10^4] rad/s
BENCHMARK_GRID = (1.5, 4.0, 1000)

_KINDS = {"translation": 0, "t": 0, "rotation": 1, "r": 1}


@dataclass(frozen=True)
class BeamSpec:
    cross_section_area: float
    second_area_moment: float
    youngs_modulus: float
    density: float
    modal_damping_ratio: float
    length: float
    n_elements: int
    boundary: str = "cantilever_left"  # cantilever_left | cantilever_right | free_free
    input_dofs: Tuple[Tuple[int, str], ...] = ()
    output_dofs: Tuple[Tuple[int, str], ...] = ()

    def __post_init__(self):
        for name in ("cross_section_area", "second_area_moment", "youngs_modulus",
                     "density", "length"):
            if not getattr(self, name) > 0:
                raise LTIError(f"{name} must be positive")
        if not 0 < self.modal_damping_ratio < 1:
            raise LTIError("modal damping ratio must lie in (0, 1)")
        if int(self.n_elements) < 1:
            raise LTIError("need at least one element")
        if self.boundary not in ("cantilever_left", "cantilever_right", "free_free"):
            raise LTIError(f"unknown boundary {self.boundary!r}")
        fixed = self.clamped_node
        for node, kind in tuple(self.input_dofs) + tuple(self.output_dofs):
            if kind not in _KINDS:
                raise LTIError(f"unknown dof kind {kind!r}")
            if not 0 <= node <= self.n_elements:
                raise LTIError(f"node {node} outside beam with {self.n_elements} elements")
            if node == fixed:
                raise LTIError(f"node {node} is clamped")

    @property
    def clamped_node(self):
        if self.boundary == "cantilever_left":
            return 0
        if self.boundary == "cantilever_right":
            return self.n_elements
        return None

    @property
    def EI(self):
        return self.youngs_modulus * self.second_area_moment

    @property
    def rhoA(self):
        return self.density * self.cross_section_area


def beam_element_matrices(EI, rhoA, le):
    """Stiffness and consistent mass of one element, dofs ``[w1, th1, w2, th2]``."""
    k = EI / le**3 * np.array(
        [
            [12, 6 * le, -12, 6 * le],
            [6 * le, 4 * le**2, -6 * le, 2 * le**2],
            [-12, -6 * le, 12, -6 * le],
            [6 * le, 2 * le**2, -6 * le, 4 * le**2],
        ]
    )
    m = rhoA * le / 420 * np.array(
        [
            [156, 22 * le, 54, -13 * le],
            [22 * le, 4 * le**2, 13 * le, -3 * le**2],
            [54, 13 * le, 156, -22 * le],
            [-13 * le, -3 * le**2, -22 * le, 4 * le**2],
        ]
    )
    return k, m


def _free_dofs(spec: BeamSpec) -> np.ndarray:
    ndof = 2 * (spec.n_elements + 1)
    keep = np.ones(ndof, dtype=bool)
    node = spec.clamped_node
    if node is not None:
        keep[2 * node : 2 * node + 2] = False
    return np.flatnonzero(keep)


def free_dof_index(spec: BeamSpec, node: int, kind: str) -> int:
    """Position of a nodal dof among the free dofs."""
    glob = 2 * node + _KINDS[kind]
    free = _free_dofs(spec)
    pos = np.searchsorted(free, glob)
    if pos >= free.size or free[pos] != glob:
        raise LTIError(f"dof ({node}, {kind}) is constrained")
    return int(pos)


def beam_fe_matrices(spec: BeamSpec):
    """Assembled ``(M, K)`` over the free dofs."""
    ne = int(spec.n_elements)
    le = spec.length / ne
    ke, me = beam_element_matrices(spec.EI, spec.rhoA, le)
    ndof = 2 * (ne + 1)
    K = np.zeros((ndof, ndof))
    M = np.zeros((ndof, ndof))
    for e in range(ne):
        sl = slice(2 * e, 2 * e + 4)
        K[sl, sl] += ke
        M[sl, sl] += me
    free = _free_dofs(spec)
    return M[np.ix_(free, free)], K[np.ix_(free, free)]


def modal_damped_statespace(M, K, zeta, input_dofs, output_dofs) -> StateSpaceModel:
    """Modal state-space model with uniform modal damping ``zeta``.

    States are ordered per mode as ``(w_i q_i, dq_i/dt)``, so ``A`` is block
    diagonal with blocks ``[[0, w_i], [-w_i, -2 zeta w_i]]``; the scaling by
    ``w_i`` keeps the blocks balanced across the spectrum. Rigid-body modes
    use ``(q_i, dq_i/dt)`` and stay undamped. Inputs are forces
    (or moments) on ``input_dofs``; outputs are displacements (or rotations)
    at ``output_dofs``.
    """
    M = np.asarray(M, dtype=float)
    K = np.asarray(K, dtype=float)
    if not 0 < zeta < 1:
        raise LTIError("zeta must lie in (0, 1)")
    try:
        lam, Phi = scipy.linalg.eigh(K, M)
    except np.linalg.LinAlgError as exc:
        raise LTIError(f"generalized eigenproblem failed: {exc}") from exc
    # rigid-body modes: as many as the nullity of K, which sit at the bottom
    sk = np.linalg.svd(K, compute_uv=False)
    n_rigid = int(np.sum(sk <= 1e-11 * sk[0])) if sk.size else 0
    lam = lam.copy()
    lam[:n_rigid] = 0.0
    lam = np.clip(lam, 0.0, None)
    omega = np.sqrt(lam)
    nd = M.shape[0]
    Fin = np.zeros((nd, len(input_dofs)))
    Fin[list(input_dofs), np.arange(len(input_dofs))] = 1.0
    Cout = np.zeros((len(output_dofs), nd))
    Cout[np.arange(len(output_dofs)), list(output_dofs)] = 1.0
    Bm = Phi.T @ Fin
    Cm = Cout @ Phi
    n = 2 * nd
    A = np.zeros((n, n))
    B = np.zeros((n, Fin.shape[1]))
    C = np.zeros((Cout.shape[0], n))
    for i in range(nd):
        w = omega[i]
        j = 2 * i
        if w > 0:
            A[j, j + 1] = w
            A[j + 1, j] = -w
            C[:, j] = Cm[:, i] / w
        else:
            A[j, j + 1] = 1.0
            C[:, j] = Cm[:, i]
        A[j + 1, j + 1] = -2.0 * zeta * w
        B[j + 1] = Bm[i]
    return StateSpaceModel(A, B, C, np.zeros((C.shape[0], B.shape[1])))


def beam_statespace(spec: BeamSpec) -> StateSpaceModel:
    M, K = beam_fe_matrices(spec)
    ins = [free_dof_index(spec, n, k) for n, k in spec.input_dofs]
    outs = [free_dof_index(spec, n, k) for n, k in spec.output_dofs]
    return modal_damped_statespace(M, K, spec.modal_damping_ratio, ins, outs)


def three_beam_specs(elements=(100, 40, 60)) -> List[BeamSpec]:
    """Beam 1 (cantilever, tip right) - beam 2 (free-free) - beam 3 (cantilever, tip left)."""
    n1, n2, n3 = (int(e) for e in elements)
    if n2 % 2 or n3 % 2:
        raise LTIError("beams 2 and 3 need an even element count (mid node)")
    common = dict(
        cross_section_area=1e-5,
        second_area_moment=1e-9,
        youngs_modulus=2e11,
        density=8e3,
        modal_damping_ratio=0.06,
    )
    beam1 = BeamSpec(
        length=1.0, n_elements=n1, boundary="cantilever_left",
        input_dofs=((n1, "t"), (n1, "r")),
        output_dofs=((n1, "t"), (n1, "r")),
        **common,
    )
    beam2 = BeamSpec(
        length=0.4, n_elements=n2, boundary="free_free",
        input_dofs=((0, "t"), (0, "r"), (n2 // 2, "t"), (n2, "t"), (n2, "r")),
        output_dofs=((0, "t"), (0, "r"), (n2, "t"), (n2, "r")),
        **common,
    )
    beam3 = BeamSpec(
        length=0.6, n_elements=n3, boundary="cantilever_right",
        input_dofs=((0, "t"), (0, "r")),
        output_dofs=((0, "t"), (0, "r"), (n3 // 2, "t")),
        **common,
    )
    return [beam1, beam2, beam3]


def three_beam_K(kt=SPRING_TRANSLATIONAL, kr=SPRING_ROTATIONAL) -> np.ndarray:
    """The 10x10 interconnection matrix of the three-beam benchmark.

    Rows: u1 (t, r), u2 (left t, left r, mid force, right t, right r),
    u3 (t, r), y_c. Columns: y1 (t, r), y2 (left t, left r, right t, right r),
    y3 (t, r, mid), u_c.
    """
    K = np.zeros((10, 10))
    # spring 1 between beam-1 tip and beam-2 left end
    K[0, 0], K[0, 2] = -kt, kt
    K[1, 1], K[1, 3] = -kr, kr
    K[2, 0], K[2, 2] = kt, -kt
    K[3, 1], K[3, 3] = kr, -kr
    # external force at the middle of beam 2
    K[4, 9] = 1.0
    # spring 2 between beam-2 right end and beam-3 tip
    K[5, 4], K[5, 6] = -kt, kt
    K[6, 5], K[6, 7] = -kr, kr
    K[7, 4], K[7, 6] = kt, -kt
    K[8, 5], K[8, 7] = kr, -kr
    # measured displacement at the middle of beam 3
    K[9, 8] = 1.0
    return K


def build_three_beam_benchmark(mini: bool = False, check: bool = True) -> CoupledSystem:
    """Three-beam benchmark; ``mini`` uses 10/4/6 elements instead of 100/40/60."""
    elements = (10, 4, 6) if mini else (100, 40, 60)
    subs = tuple(beam_statespace(s) for s in three_beam_specs(elements))
    K = InterconnectionMatrix.from_full(three_beam_K(), (2, 5, 2), (2, 4, 3))
    cs = CoupledSystem(subs, K)
    if check:
        if not check_wellposed(cs).ok or not check_internal_stability(cs):
            raise LTIError("benchmark violates the well-posedness/stability assumption")
    return cs


def epsilon_c_profile(gc_sigma, beta1=0.1, beta2=5e-7) -> np.ndarray:
    """``max(beta1 * sigma_max(G_c(i w)), beta2)`` elementwise."""
    if not (beta1 > 0 and beta2 > 0):
        raise LTIError("beta1 and beta2 must be positive")
    return np.maximum(beta1 * np.asarray(gc_sigma, dtype=float), beta2)


def random_stable_model(rng, n, m, p, feedthrough=True) -> StateSpaceModel:
    """Random stable model with eigenvalues in the open left half-plane."""
    if n == 0:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)),
                               rng.standard_normal((p, m)) if feedthrough else np.zeros((p, m)))
    # real Schur-like construction: random orthogonal similarity of a stable quasi-triangular
    T = np.triu(rng.standard_normal((n, n)) * 0.5, 1)
    diag = -rng.uniform(0.1, 3.0, n)
    i = 0
    while i < n - 1:
        if rng.random() < 0.5:
            w = rng.uniform(0.5, 5.0)
            T[i, i] = T[i + 1, i + 1] = diag[i]
            T[i, i + 1] = w
            T[i + 1, i] = -w
            i += 2
        else:
            T[i, i] = diag[i]
            i += 1
    if i == n - 1:
        T[i, i] = diag[i]
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Q @ T @ Q.T
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = rng.standard_normal((p, m)) * 0.3 if feedthrough else np.zeros((p, m))
    return StateSpaceModel(A, B, C, D)


def random_coupled_system(seed, k=2, dims=None, coupling_scale=1.0, max_tries=60) -> CoupledSystem:
    """Random stable, well-posed coupled system (deterministic per ``seed``).

    ``dims`` is a list of ``(n_j, m_j, p_j)``; the external channels are one
    input and one output. ``K11`` is scaled down until the interconnection is
    well-posed and internally stable; ``coupling_scale = 0`` gives ``K11 = 0``.
    """
    rng = np.random.default_rng(seed)
    if dims is None:
        dims = [(int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(1, 3)))
                for _ in range(k)]
    dims = [tuple(int(v) for v in d) for d in dims]
    if any(d[0] > 10 for d in dims):
        raise LTIError("random systems are limited to 10 states per subsystem")
    subs = tuple(random_stable_model(rng, n, m, p) for n, m, p in dims)
    mdims = tuple(d[1] for d in dims)
    pdims = tuple(d[2] for d in dims)
    m_b, p_b = sum(mdims), sum(pdims)
    K11 = rng.standard_normal((m_b, p_b))
    # no self-loops, subsystems only talk to each other
    r = c = 0
    for mj, pj in zip(mdims, pdims):
        K11[r : r + mj, c : c + pj] = 0.0
        r += mj
        c += pj
    K12 = rng.standard_normal((m_b, 1))
    K21 = rng.standard_normal((1, p_b))
    K22 = np.zeros((1, 1))
    scale = float(coupling_scale)
    for _ in range(max_tries):
        K = InterconnectionMatrix(scale * K11, K12, K21, K22, mdims, pdims)
        cs = CoupledSystem(subs, K)
        if check_wellposed(cs).ok and check_internal_stability(cs):
            return cs
        scale *= 0.7
    K = InterconnectionMatrix(0.0 * K11, K12, K21, K22, mdims, pdims)
    return CoupledSystem(subs, K)
