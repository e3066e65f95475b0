"""Balanced truncation, its a priori error bound, and output-weighted (Enns) truncation."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths

from .lti import (
    LTIError,
    NumericalError,
    StateSpaceModel,
    UnstableSystemError,
    _grid_values,
    _psd_factor,
    gramians,
    is_stable,
    lyapunov_solve,
    static_gain,
)

__all__ = [
    "ReductionResult",
    "WeightFit",
    "PAPER_SUM",
    "STANDARD_TWICE_SUM",
    "a_priori_bound",
    "balanced_truncate",
    "fw_balanced_truncate",
    "fit_rational_weight",
    "weight_magnitude",
]

PAPER_SUM = "paper_sum"
STANDARD_TWICE_SUM = "standard_twice_sum"
_CONVENTIONS = (PAPER_SUM, STANDARD_TWICE_SUM)
# relative gap below which neighbouring Hankel values count as equal
TIE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class ReductionResult:
    """Reduced model plus the Hankel data it was derived from.

    For frequency-weighted truncation ``hankel`` holds the weighted Hankel
    values and ``a_priori_bound`` is ``None``.
    """

    reduced: StateSpaceModel
    hankel: np.ndarray
    a_priori_bound: Optional[float]
    convention: Optional[str]
    tie: bool = False
    method: str = "bt"

    @property
    def order(self) -> int:
        return self.reduced.n

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "order": self.order,
            "reduced": self.reduced.to_dict(),
            "hankel": [float(v) for v in self.hankel],
            "a_priori_bound": self.a_priori_bound,
            "convention": self.convention,
            "tie": self.tie,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ReductionResult":
        return cls(
            StateSpaceModel.from_dict(d["reduced"]),
            np.asarray(d["hankel"], dtype=float),
            d.get("a_priori_bound"),
            d.get("convention"),
            bool(d.get("tie", False)),
            d.get("method", "bt"),
        )


def a_priori_bound(hankel, r: int, convention: str = PAPER_SUM) -> float:
    """Tail-sum error bound for truncation to order ``r``.

    ``paper_sum`` is the plain sum of the discarded values;
    ``standard_twice_sum`` is twice the sum of the distinct discarded values,
    which is the guaranteed bound of balanced truncation.
    """
    if convention not in _CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    s = np.asarray(hankel, dtype=float)
    if r < 0 or r > s.size:
        raise ValueError(f"order {r} outside [0, {s.size}]")
    tail = s[r:]
    if tail.size == 0:
        return 0.0
    if convention == PAPER_SUM:
        return float(tail.sum())
    distinct = [tail[0]]
    for v in tail[1:]:
        if abs(distinct[-1] - v) > TIE_RTOL * max(abs(distinct[-1]), 1e-300):
            distinct.append(v)
    return float(2.0 * np.sum(distinct))


def _square_root_truncate(sys: StateSpaceModel, P, Q, r):
    Lp = _psd_factor(P)
    Lq = _psd_factor(Q)
    U, s, Vt = np.linalg.svd(Lq.T @ Lp)
    if r == 0:
        return static_gain(sys.D), s
    sr = s[:r]
    if sr[-1] <= 0:
        raise NumericalError(f"Hankel value {r} is zero; cannot balance to order {r}")
    isq = 1.0 / np.sqrt(sr)
    T = Lp @ Vt[:r].T * isq
    Ti = (isq[:, None] * U[:, :r].T) @ Lq.T
    red = StateSpaceModel(Ti @ sys.A @ T, Ti @ sys.B, sys.C @ T, sys.D)
    return red, s


def _tie_at(s, r):
    if 0 < r < s.size:
        return bool(abs(s[r - 1] - s[r]) <= TIE_RTOL * max(s[r - 1], 1e-300))
    return False


def balanced_truncate(sys: StateSpaceModel, r: int, convention: str = PAPER_SUM) -> ReductionResult:
    """Square-root balanced truncation to order ``r``.

    ``r = n`` returns the model unchanged (the trivial similarity).
    """
    if convention not in _CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if not 0 <= r <= sys.n:
        raise LTIError(f"order {r} outside [0, {sys.n}]")
    if not is_stable(sys):
        raise UnstableSystemError("balanced truncation requires a stable model")
    P, Q = gramians(sys)
    if r == sys.n:
        Lp, Lq = _psd_factor(P), _psd_factor(Q)
        s = np.linalg.svd(Lq.T @ Lp, compute_uv=False)
        red = sys
    else:
        red, s = _square_root_truncate(sys, P, Q, r)
    s = np.clip(s, 0, None)
    return ReductionResult(red, s, a_priori_bound(s, r, convention), convention,
                           _tie_at(s, r), "bt")


def _broadcast_weight(weight: StateSpaceModel, p: int) -> StateSpaceModel:
    if weight.p == p and weight.m == p:
        return weight
    if weight.p == 1 and weight.m == 1:
        eye = np.eye(p)
        return StateSpaceModel(
            np.kron(eye, weight.A),
            np.kron(eye, weight.B),
            np.kron(eye, weight.C),
            np.kron(eye, weight.D),
        )
    raise LTIError(f"weight of shape {weight.shape} does not match {p} outputs")


def fw_balanced_truncate(sys: StateSpaceModel, output_weight: StateSpaceModel, r: int) -> ReductionResult:
    """Enns' frequency-weighted balanced truncation with an output weight.

    The controllability Gramian is that of ``sys``; the observability
    Gramian is the ``sys`` block of the observability Gramian of the cascade
    ``W * sys``. A scalar weight is applied to every output channel.
    """
    if not 0 <= r <= sys.n:
        raise LTIError(f"order {r} outside [0, {sys.n}]")
    if not is_stable(sys):
        raise UnstableSystemError("weighted truncation requires a stable model")
    if not is_stable(output_weight):
        raise UnstableSystemError("the weight must be stable")
    W = _broadcast_weight(output_weight, sys.p)
    n, nw = sys.n, W.n
    A_aug = np.block([[sys.A, np.zeros((n, nw))], [W.B @ sys.C, W.A]])
    C_aug = np.hstack([W.D @ sys.C, W.C])
    # a constant factor on the weight scales Q only; keep it near unit size
    scale = np.linalg.norm(C_aug)
    if scale > 0:
        C_aug = C_aug / scale
    P = lyapunov_solve(sys.A, sys.B @ sys.B.T)
    Q_aug = lyapunov_solve(A_aug.T, C_aug.T @ C_aug)
    Q = Q_aug[:n, :n]
    Q = 0.5 * (Q + Q.T)
    if r == n:
        s = np.linalg.svd(_psd_factor(Q).T @ _psd_factor(P), compute_uv=False)
        red = sys
    else:
        red, s = _square_root_truncate(sys, P, Q, r)
    # undo the normalization of C_aug (Q scales with its square)
    s = np.clip(s, 0, None) * (scale if scale > 0 else 1.0)
    return ReductionResult(red, s, None, None, _tie_at(s, r), "fwbt")


@dataclass(frozen=True, eq=False)
class WeightFit:
    """Scalar weight ``w(s)`` with ``|w(i w)| >= 1/eps(w)`` on the grid.

    ``w(s) = gain * prod (s + z_i)/(s + p_i) * prod R_k(s) * B(s)`` where the
    ``R_k`` are resonant sections ``(w0, zeta_zero, zeta_pole)`` and ``B`` is
    an optional Butterworth roll-off of order ``rolloff`` and cutoff
    ``cutoff``. ``max_log_error`` is the largest natural-log magnitude misfit
    of the least-squares fit (before the gain is lifted); ``kappa`` is the
    largest ``1 / (|w| eps)`` on the grid after lifting; ``warning`` flags a
    poor fit.
    """

    model: StateSpaceModel
    max_log_error: float
    kappa: float
    warning: bool
    zeros: np.ndarray
    poles: np.ndarray
    gain: float
    resonances: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    rolloff: int = 0
    cutoff: float = np.inf

    def magnitude(self, omegas) -> np.ndarray:
        return weight_magnitude(self.gain, self.zeros, self.poles, omegas, self.resonances,
                                self.rolloff, self.cutoff)


def _resonance_logmag(w, w0, zz, zp):
    re = w0 * w0 - w * w
    return 0.5 * np.log(re**2 + (2 * zz * w0 * w) ** 2) - 0.5 * np.log(re**2 + (2 * zp * w0 * w) ** 2)


def _butter_logmag(w, order, cutoff):
    if order == 0:
        return np.zeros_like(w)
    return -0.5 * np.log1p((w / cutoff) ** (2 * order))


def weight_magnitude(gain, zeros, poles, omegas, resonances=(), rolloff=0, cutoff=np.inf) -> np.ndarray:
    """``|w(i w)|`` for the factored weight described in :class:`WeightFit`."""
    w = np.asarray(omegas, dtype=float)
    mag = np.full(w.shape, float(gain))
    for z in zeros:
        mag = mag * np.hypot(w, z)
    for p in poles:
        mag = mag / np.hypot(w, p)
    for w0, zz, zp in np.reshape(resonances, (-1, 3)):
        mag = mag * np.exp(_resonance_logmag(w, w0, zz, zp))
    return mag * np.exp(_butter_logmag(w, rolloff, cutoff))


def _cascade(sys: StateSpaceModel, sec: StateSpaceModel) -> StateSpaceModel:
    """``sec * sys`` for single-channel models."""
    n = sys.n + sec.n
    A = np.zeros((n, n))
    A[: sys.n, : sys.n] = sys.A
    A[sys.n :, : sys.n] = sec.B @ sys.C
    A[sys.n :, sys.n :] = sec.A
    B = np.vstack([sys.B, sec.B @ sys.D])
    C = np.hstack([sec.D @ sys.C, sec.C])
    return StateSpaceModel(A, B, C, sec.D @ sys.D)


def _weight_to_ss(gain, zeros, poles, resonances=(), rolloff=0, cutoff=np.inf) -> StateSpaceModel:
    """State-space cascade of the factored weight; every section is scaled to unit size."""
    sys = static_gain([[gain]])
    for z, p in zip(zeros, poles):
        # (s + z)/(s + p) = 1 + (z - p)/(s + p)
        sys = _cascade(sys, StateSpaceModel([[-p]], [[1.0]], [[z - p]], [[1.0]]))
    for w0, zz, zp in np.reshape(resonances, (-1, 3)):
        # (s^2 + 2 zz w0 s + w0^2)/(s^2 + 2 zp w0 s + w0^2) = 1 + 2 (zz - zp) w0 s / (...)
        sec = StateSpaceModel([[0.0, w0], [-w0, -2 * zp * w0]], [[0.0], [1.0]],
                              [[0.0, 2 * (zz - zp) * w0]], [[1.0]])
        sys = _cascade(sys, sec)
    if rolloff:
        a = float(cutoff)
        for j in range(rolloff // 2):
            zeta = np.sin(np.pi * (2 * j + 1) / (2 * rolloff))
            # a^2 / (s^2 + 2 zeta a s + a^2)
            sec = StateSpaceModel([[0.0, a], [-a, -2 * zeta * a]], [[0.0], [a]], [[1.0, 0.0]], [[0.0]])
            sys = _cascade(sys, sec)
        if rolloff % 2:
            sys = _cascade(sys, StateSpaceModel([[-a]], [[a]], [[1.0]], [[0.0]]))
    return sys


def _notch_seeds(target, lw, max_resonances):
    """Initial ``(log w0, log zeta_z, log zeta_p)`` at prominent peaks of ``-log eps``."""
    if max_resonances <= 0:
        return np.zeros((0, 3))
    pk, props = find_peaks(target, prominence=np.log(2.0))
    if pk.size == 0:
        return np.zeros((0, 3))
    order = np.argsort(-props["prominences"])[:max_resonances]
    pk, prom = pk[order], props["prominences"][order]
    widths = peak_widths(target, pk, rel_height=0.5)[0]
    dlw = float(np.mean(np.diff(lw)))
    zp = np.clip(np.sinh(widths * dlw) / 2, 1e-4, 1.0)
    zz = np.clip(zp * np.exp(prom), 1e-4, 10.0)
    return np.column_stack([lw[pk], np.log(zz), np.log(zp)])


def fit_rational_weight(profile, grid, order: int = 4, resonances="auto", max_resonances: int = 12,
                        rolloff: int = 0, rolloff_factor: float = 1.0,
                        under_weight: float = 4.0, warn_log_error: float = np.log(2.0)) -> WeightFit:
    """Fit a stable minimum-phase scalar weight with ``|w(i w)| ~ 1/profile(w)``.

    The weight is a gain times ``order`` real sections ``(s + z)/(s + p)``
    and second-order sections seeded at the prominent dips of the profile
    (``resonances='auto'``, at most ``max_resonances``; an integer caps the
    count, 0 disables them). The log-magnitude misfit is fitted by least
    squares, with points where the weight falls short of ``1/profile``
    counted ``under_weight`` times.

    ``rolloff > 0`` appends a Butterworth low-pass of that order with cutoff
    ``rolloff_factor * max(grid)`` and keeps the fitted sections below the
    cutoff, so the weight decays above the grid instead of extrapolating
    the profile. The gain is finally lifted so that ``|w| >= 1/profile`` at
    every grid point.
    """
    eps = np.asarray(profile, dtype=float).ravel()
    w = _grid_values(grid)
    if eps.shape != w.shape:
        raise ValueError("profile and grid lengths differ")
    if np.any(~np.isfinite(eps)) or np.any(eps <= 0):
        raise ValueError("profile must be strictly positive and finite")
    if rolloff < 0 or order < 0:
        raise ValueError("order and rolloff must be nonnegative")
    target = -np.log(eps)
    cutoff = float(rolloff_factor * w.max()) if rolloff else np.inf
    roll = _butter_logmag(w, rolloff, cutoff)
    if (np.ptp(target) <= 1e-12 and not rolloff) or (order == 0 and resonances in (0, None)):
        g = float(np.exp(np.max(target - roll)))
        mag = g * np.exp(roll)
        kappa = float(np.max(1.0 / (mag * eps)))
        err = float(np.max(np.abs(np.log(mag) - target)))
        model = _weight_to_ss(g, (), (), (), rolloff, cutoff)
        return WeightFit(model, err, kappa, err > warn_log_error, np.zeros(0), np.zeros(0), g,
                         rolloff=rolloff, cutoff=cutoff)
    lw = np.log(w)
    nres_max = max_resonances if resonances == "auto" else int(resonances or 0)
    seeds = _notch_seeds(target, lw, nres_max) if w.size >= 3 else np.zeros((0, 3))
    nres = seeds.shape[0]
    lo = lw.min() - np.log(1e3)
    hi = np.log(cutoff) if rolloff else lw.max() + np.log(1e3)
    init = np.linspace(lw.min(), min(lw.max(), hi), order + 2)[1:-1]
    w2 = w[:, None] ** 2

    def unpack(theta):
        res = np.exp(theta[2 * order + 1 :].reshape(-1, 3))
        return theta[0], np.exp(theta[1 : order + 1]), np.exp(theta[order + 1 : 2 * order + 1]), res

    def logmag(theta):
        lg, z, p, res = unpack(theta)
        val = roll + lg + np.sum(0.5 * np.log(w2 + z[None, :] ** 2), axis=1) \
            - np.sum(0.5 * np.log(w2 + p[None, :] ** 2), axis=1)
        for w0, zz, zp in res:
            val = val + _resonance_logmag(w, w0, zz, zp)
        return val

    def resid(theta):
        r = logmag(theta) - target
        return np.where(r < 0, under_weight * r, r)

    def jac(theta):
        lg, z, p, res = unpack(theta)
        J = np.empty((w.size, theta.size))
        J[:, 0] = 1.0
        J[:, 1 : order + 1] = z**2 / (w2 + z**2)
        J[:, order + 1 : 2 * order + 1] = -(p**2) / (w2 + p**2)
        for i, (w0, zz, zp) in enumerate(res):
            re = w0 * w0 - w * w
            qz = re**2 + (2 * zz * w0 * w) ** 2
            qp = re**2 + (2 * zp * w0 * w) ** 2
            c = 2 * order + 1 + 3 * i
            J[:, c] = w0 * ((2 * w0 * re + 4 * zz**2 * w0 * w * w) / qz
                            - (2 * w0 * re + 4 * zp**2 * w0 * w * w) / qp)
            J[:, c + 1] = (2 * zz * w0 * w) ** 2 / qz
            J[:, c + 2] = -((2 * zp * w0 * w) ** 2) / qp
        r = logmag(theta) - target
        return np.where((r < 0)[:, None], under_weight * J, J)

    theta0 = np.concatenate([[0.0], init, init, seeds.ravel()])
    res_lb = np.tile([lw.min(), np.log(1e-5), np.log(1e-5)], nres)
    res_ub = np.tile([lw.max(), np.log(1e2), np.log(1e2)], nres)
    lb = np.concatenate([[-np.inf], np.full(2 * order, lo), res_lb])
    ub = np.concatenate([[np.inf], np.full(2 * order, hi), res_ub])
    theta0 = np.clip(theta0, lb + 1e-9, ub - 1e-9)
    theta0[0] = np.mean(target - (logmag(theta0) - theta0[0]))
    sol = least_squares(resid, theta0, jac=jac, bounds=(lb, ub), method="trf", x_scale="jac")
    lg, z, p, res = unpack(sol.x)
    err = float(np.max(np.abs(logmag(sol.x) - target)))
    keep = np.abs(z - p) > 1e-6 * np.maximum(z, p)
    z, p = z[keep], p[keep]
    res = res[np.abs(res[:, 1] - res[:, 2]) > 1e-6 * np.maximum(res[:, 1], res[:, 2])]
    mag = weight_magnitude(np.exp(lg), z, p, w, res, rolloff, cutoff)
    lift = float(np.max(1.0 / (mag * eps)))
    gain = float(np.exp(lg) * lift)
    kappa = float(np.max(1.0 / (mag * lift * eps)))
    idx = np.argsort(p)
    z, p = z[idx], p[idx]
    res = res[np.argsort(res[:, 0])]
    model = _weight_to_ss(gain, z, p, res, rolloff, cutoff)
    bad = err > warn_log_error
    if bad:
        warnings.warn(f"weight fit misfit {err:.3f} (log magnitude) exceeds threshold",
                      RuntimeWarning, stacklevel=2)
    return WeightFit(model, err, kappa, bad, z, p, gain, res, rolloff, cutoff)
