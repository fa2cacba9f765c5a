"""Split covariance intersection filter.

The state covariance is carried as an independent part ``p_ind`` and a
dependent part ``p_dep`` whose cross-correlation with incoming measurements
is unknown. During an update the dependent parts of both sources are
inflated by ``1/omega`` and ``1/(1 - omega)`` before a Kalman-form fusion;
``omega`` minimises the trace of the fused covariance.

With both dependent parts equal to zero the update is exactly a Kalman
update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import wrap_angle
from .motion_model import Control, evolve_vec, jacobian_control, jacobian_state

OMEGA_LO = 1e-3
OMEGA_HI = 1.0 - 1e-3
OMEGA_TOL = 1e-4
MAX_INNOVATION_CONDITION = 1e12
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_I3 = np.eye(3)


class SingularInnovation(np.linalg.LinAlgError):
    """Innovation covariance too ill-conditioned to invert."""


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def floor_psd(m: np.ndarray) -> np.ndarray:
    """Symmetrize and clamp negative eigenvalues to zero."""
    m = symmetrize(m)
    w, v = np.linalg.eigh(m)
    if w[0] >= 0.0:
        return m
    w = np.clip(w, 0.0, None)
    return symmetrize((v * w) @ v.T)


def _is_zero(m: np.ndarray) -> bool:
    return not np.any(np.abs(m) > 1e-15)


@dataclass(frozen=True)
class SplitState:
    """Pose estimate with a split covariance.

    ``mean`` is the array ``[x, y, theta]``; ``epoch`` is the integer time
    index the estimate refers to.
    """

    mean: np.ndarray
    p_ind: np.ndarray
    p_dep: np.ndarray
    epoch: int = 0

    @property
    def cov(self) -> np.ndarray:
        return self.p_ind + self.p_dep

    @classmethod
    def from_independent(cls, mean, cov, epoch: int = 0) -> SplitState:
        cov = np.asarray(cov, dtype=float)
        return cls(np.asarray(mean, dtype=float).copy(), cov.copy(), np.zeros_like(cov), epoch)


@dataclass(frozen=True)
class SplitNoise:
    r_ind: np.ndarray
    r_dep: np.ndarray

    @classmethod
    def split(cls, r: np.ndarray, dependent_share: float) -> SplitNoise:
        r = np.asarray(r, dtype=float)
        if dependent_share <= 0.0:
            return cls(r, np.zeros_like(r))
        return cls((1.0 - dependent_share) * r, dependent_share * r)

    @property
    def total(self) -> np.ndarray:
        return self.r_ind + self.r_dep


def predict(
    state: SplitState, u: Control, q: np.ndarray, p_pre_ind: np.ndarray
) -> SplitState:
    gx = jacobian_state(state.mean, u)
    gu = jacobian_control(state.mean, u)
    p_ind = gx @ state.p_ind @ gx.T + gu @ q @ gu.T + p_pre_ind
    p_dep = gx @ state.p_dep @ gx.T
    return SplitState(
        evolve_vec(state.mean, u), symmetrize(p_ind), symmetrize(p_dep), state.epoch + 1
    )


def _inflate(dep: np.ndarray, ind: np.ndarray, weight: float) -> np.ndarray:
    # dep / weight, with 0/0 read as 0 at the interval ends
    if _is_zero(dep):
        return ind
    return dep / weight + ind


def fused_trace(
    p_ind: np.ndarray, p_dep: np.ndarray, noise: SplitNoise, h: np.ndarray, omega: float
) -> float:
    """Trace of the fused covariance for a given ``omega``."""
    p1 = _inflate(p_dep, p_ind, omega)
    p2 = _inflate(noise.r_dep, noise.r_ind, 1.0 - omega)
    a = h @ p1
    s = a @ h.T + p2
    return float(np.trace(p1) - np.sum(np.linalg.solve(s, a) * a))


def optimize_omega(
    p_ind: np.ndarray,
    p_dep: np.ndarray,
    noise: SplitNoise,
    h: np.ndarray,
    tol: float = OMEGA_TOL,
) -> float:
    """Golden-section search for the trace-minimising ``omega``.

    Degenerate cases are resolved without searching: with no dependent
    mass on the measurement side the state side should not be inflated
    (``omega = 1``), and symmetrically ``omega = 0`` when only the
    measurement carries dependent mass.
    """
    if _is_zero(noise.r_dep):
        return 1.0
    if _is_zero(p_dep):
        return 0.0

    # products that do not depend on omega, hoisted out of the search
    hd, hi_ = h @ p_dep, h @ p_ind
    sdd, sii = hd @ h.T, hi_ @ h.T + noise.r_ind
    rd = noise.r_dep
    trd, tri = float(np.trace(p_dep)), float(np.trace(p_ind))
    solve = np.linalg.solve

    def f(w: float) -> float:
        a = hd / w + hi_
        s = sdd / w + sii + rd / (1.0 - w)
        return trd / w + tri - float(np.sum(solve(s, a) * a))

    lo, hi = OMEGA_LO, OMEGA_HI
    f_lo, f_mid, f_hi = f(lo), f(0.5), f(hi)
    flat = 1e-12 * (1.0 + abs(f_mid))
    if abs(f_lo - f_mid) <= flat and abs(f_hi - f_mid) <= flat:
        # convex and level at both ends and the middle: constant, any omega will do
        return 0.5
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = f(d)
    best_w, best_f = (c, fc) if fc <= fd else (d, fd)
    for w, fw in ((OMEGA_LO, f_lo), (OMEGA_HI, f_hi)):
        if fw < best_f:
            best_w, best_f = w, fw
    return best_w


def _angle_rows(h: np.ndarray) -> list[int]:
    return [i for i in range(h.shape[0]) if h[i, 0] == 0.0 and h[i, 1] == 0.0 and h[i, 2] == 1.0]


def update_split(
    state: SplitState,
    z: np.ndarray,
    h: np.ndarray,
    noise: SplitNoise,
    omega: float | None = None,
    angle_rows: list[int] | None = None,
) -> SplitState:
    """Fuse a (possibly partial) linear measurement ``z ~ h @ x``.

    ``omega`` defaults to :func:`optimize_omega`. Rows of the innovation that
    observe the heading are wrapped; by default these are the rows of ``h``
    equal to ``[0, 0, 1]``.

    Raises
    ------
    SingularInnovation
        If the innovation covariance has condition number above 1e12.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if omega is None:
        omega = optimize_omega(state.p_ind, state.p_dep, noise, h)
    p1 = _inflate(state.p_dep, state.p_ind, omega)
    p2 = _inflate(noise.r_dep, noise.r_ind, 1.0 - omega)

    s = h @ p1 @ h.T + p2
    if np.linalg.cond(s) > MAX_INNOVATION_CONDITION:
        raise SingularInnovation("innovation covariance is not invertible")
    k = np.linalg.solve(s, h @ p1).T  # p1 h^T s^-1, s and p1 symmetric

    nu = z - h @ state.mean
    for i in _angle_rows(h) if angle_rows is None else angle_rows:
        nu[i] = wrap_angle(nu[i])
    mean = state.mean + k @ nu
    mean[2] = wrap_angle(mean[2])

    ikh = _I3 - k @ h
    p = symmetrize(ikh @ p1)
    p_ind = symmetrize(ikh @ state.p_ind @ ikh.T + k @ noise.r_ind @ k.T)
    p_dep = floor_psd(p - p_ind)
    return replace(state, mean=mean, p_ind=p_ind, p_dep=p_dep)
