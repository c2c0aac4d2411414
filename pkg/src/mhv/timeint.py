"""Time integrators: explicit Runge-Kutta, Adams-Bashforth, and SBDF IMEX.

All steppers advance a semi-discrete system dc/dt = E(c, t) + A c with a
user-supplied explicit callback E and an optional constant sparse implicit
operator A.  Explicit schemes fold A into the right-hand side; the SBDF
schemes treat A with a cached sparse direct factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class BlowUpError(RuntimeError):
    """Raised when a step produces non-finite values."""

    def __init__(self, step: int, t: float):
        super().__init__(f"solution blew up at step {step} (t = {t:.6g})")
        self.step = step
        self.t = t


@dataclass(frozen=True)
class SemiDiscreteSystem:
    """dc/dt = E(c, t) + A c, with A constant (possibly absent)."""

    explicit: Callable[[np.ndarray, float], np.ndarray]
    implicit: sp.spmatrix | None = None

    def full_rhs(self, c: np.ndarray, t: float) -> np.ndarray:
        out = self.explicit(c, t)
        if self.implicit is not None:
            out = out + self.implicit @ c
        return out


# ---------------------------------------------------------------------------
# explicit Runge-Kutta


def rk_step(rhs: Callable, c: np.ndarray, t: float, dt: float,
            s: int) -> np.ndarray:
    """One step of the classical explicit s-stage RK method, s in 1..4.

    For linear problems the amplification factor is the degree-s Taylor
    polynomial of e^z (forward Euler, midpoint, Kutta's third-order method,
    and classical RK4).
    """
    if s == 1:
        out = c + dt * rhs(c, t)
    elif s == 2:
        k1 = rhs(c, t)
        out = c + dt * rhs(c + 0.5 * dt * k1, t + 0.5 * dt)
    elif s == 3:
        k1 = rhs(c, t)
        k2 = rhs(c + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(c - dt * k1 + 2.0 * dt * k2, t + dt)
        out = c + dt * (k1 + 4.0 * k2 + k3) / 6.0
    elif s == 4:
        k1 = rhs(c, t)
        k2 = rhs(c + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(c + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(c + dt * k3, t + dt)
        out = c + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    else:
        raise ValueError("stage count s must be in 1..4")
    return out


# ---------------------------------------------------------------------------
# Adams-Bashforth

AB_COEFFS = {
    1: np.array([1.0]),
    2: np.array([3.0, -1.0]) / 2.0,
    3: np.array([23.0, -16.0, 5.0]) / 12.0,
    4: np.array([55.0, -59.0, 37.0, -9.0]) / 24.0,
}


def ab_step(c: np.ndarray, rhs_history: list, dt: float, s: int) -> np.ndarray:
    """One Adams-Bashforth step of order s from RHS history [f^n, f^{n-1}, ...]."""
    if s not in AB_COEFFS:
        raise ValueError("Adams-Bashforth order must be in 1..4")
    if len(rhs_history) < s:
        raise ValueError(f"AB{s} needs {s} history entries, "
                         f"got {len(rhs_history)}")
    acc = c.copy()
    for coeff, f in zip(AB_COEFFS[s], rhs_history):
        acc += dt * coeff * f
    return acc


# ---------------------------------------------------------------------------
# SBDF (IMEX multistep)

# (1/dt) sum_j a_j c^{n+1-j} = sum_j b_j E^{n-j} + A c^{n+1}
SBDF_ALPHA = {
    1: np.array([1.0, -1.0]),
    2: np.array([3.0, -4.0, 1.0]) / 2.0,
    3: np.array([11.0, -18.0, 9.0, -2.0]) / 6.0,
    4: np.array([25.0, -48.0, 36.0, -16.0, 3.0]) / 12.0,
}
SBDF_BETA = {
    1: np.array([1.0]),
    2: np.array([2.0, -1.0]),
    3: np.array([3.0, -3.0, 1.0]),
    4: np.array([4.0, -6.0, 4.0, -1.0]),
}


class SBDFSolver:
    """SBDF stepping with the implicit factorization cached at fixed dt."""

    def __init__(self, system: SemiDiscreteSystem, dt: float, order: int):
        if order not in (1, 2, 3, 4):
            raise ValueError("SBDF order must be in 1..4")
        self.system = system
        self.dt = dt
        self.order = order
        self._factors = {}

    def _solve(self, order: int, rhs: np.ndarray) -> np.ndarray:
        a0 = SBDF_ALPHA[order][0]
        if self.system.implicit is None:
            return rhs * (self.dt / a0)
        if order not in self._factors:
            n = self.system.implicit.shape[0]
            K = (a0 / self.dt) * sp.identity(n) - self.system.implicit
            try:
                self._factors[order] = spla.splu(K.tocsc())
            except RuntimeError as exc:
                raise RuntimeError(
                    f"SBDF{order} implicit factorization failed "
                    f"(dt = {self.dt:.3g}): {exc}") from exc
        out = self._factors[order].solve(rhs)
        return out

    def step(self, c_history: list, rhs_history: list, t: float,
             order: int | None = None) -> np.ndarray:
        """Advance using [c^n, c^{n-1}, ...] and [E^n, E^{n-1}, ...]."""
        if order is None:
            order = self.order
        alpha, beta = SBDF_ALPHA[order], SBDF_BETA[order]
        if len(c_history) < order or len(rhs_history) < order:
            raise ValueError(f"SBDF{order} needs {order} history entries")
        rhs = np.zeros_like(c_history[0])
        for j in range(order):
            rhs -= (alpha[j + 1] / self.dt) * c_history[j]
            rhs += beta[j] * rhs_history[j]
        return self._solve(order, rhs)


def _priming_substeps(system: SemiDiscreteSystem, dt: float,
                      cap: int = 200_000) -> int:
    """RK4 substeps per priming interval keeping the implicit modes stable.

    The substep size targets dt_sub * ||A|| <= 2.5 (inside RK4's real-axis
    stability interval), with the exact 1-norm standing in for the spectral
    radius and a safety margin for the explicit part.
    """
    if system.implicit is None:
        return 4
    norm = float(np.max(np.abs(system.implicit).sum(axis=0)))
    m = int(np.ceil(dt * norm / 2.5)) + 1
    return min(max(m, 4), cap)


# ---------------------------------------------------------------------------
# driver

_EXPLICIT = {"rk1": 1, "rk2": 2, "rk3": 3, "rk4": 4}

# extent of the stability region along the negative real axis, |dt*lambda|
# for which the scheme damps a real negative eigenvalue lambda
_REAL_AXIS_EXTENT = {
    "rk1": 2.0, "rk2": 2.0, "rk3": 2.5127, "rk4": 2.7853,
    "ab1": 2.0, "ab2": 1.0, "ab3": 6.0 / 11.0, "ab4": 0.3,
}


def real_axis_limit(method: str) -> float | None:
    """Negative-real-axis stability extent of an explicit method.

    Returns None for the IMEX (SBDF) schemes, whose implicit part is
    unconditionally stable on the negative real axis.
    """
    method = method.lower()
    if method in _IMEX:
        return None
    if method not in _REAL_AXIS_EXTENT:
        raise ValueError(f"unknown method {method!r}")
    return _REAL_AXIS_EXTENT[method]
_MULTISTEP = {"ab1": 1, "ab2": 2, "ab3": 3, "ab4": 4}
_IMEX = {"sbdf1": 1, "sbdf2": 2, "sbdf3": 3, "sbdf4": 4}

METHODS = tuple(_EXPLICIT) + tuple(_MULTISTEP) + tuple(_IMEX)


def _check_finite(c: np.ndarray, step: int, t: float):
    if not np.all(np.isfinite(c)):
        raise BlowUpError(step, t)


def integrate(system: SemiDiscreteSystem, c0: np.ndarray, dt: float,
              n_steps: int, method: str = "rk4", t0: float = 0.0,
              callback: Callable | None = None) -> np.ndarray:
    """Advance c0 over n_steps of size dt; returns the final state.

    ``method`` is one of rk1..rk4, ab1..ab4, sbdf1..sbdf4.  Multistep
    history is primed over the first order-1 intervals with RK4 — sub-stepped
    against the stiffness of the implicit operator for SBDF — so the start
    values carry the full order of the scheme.  ``callback`` (if given)
    receives (step_index, t, c) after every accepted step.
    """
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    c = np.asarray(c0, dtype=float).copy()
    t = t0
    if method in _EXPLICIT:
        s = _EXPLICIT[method]
        for i in range(n_steps):
            c = rk_step(system.full_rhs, c, t, dt, s)
            t = t0 + (i + 1) * dt
            _check_finite(c, i, t)
            if callback is not None:
                callback(i, t, c)
        return c

    if method in _MULTISTEP:
        s = _MULTISTEP[method]
        history = [system.full_rhs(c, t)]
        for i in range(n_steps):
            if i < s - 1:
                c = rk_step(system.full_rhs, c, t, dt, 4)
            else:
                c = ab_step(c, history, dt, s)
            t = t0 + (i + 1) * dt
            _check_finite(c, i, t)
            if callback is not None:
                callback(i, t, c)
            history.insert(0, system.full_rhs(c, t))
            del history[s:]
        return c

    order = _IMEX[method]
    solver = SBDFSolver(system, dt, order)
    substeps = _priming_substeps(system, dt) if order > 1 else 1
    c_hist = [c]
    e_hist = [system.explicit(c, t)]
    for i in range(n_steps):
        if i < order - 1:
            # prime multistep history at full accuracy: RK4 with substeps
            # small enough to keep the stiff implicit modes stable
            hsub = dt / substeps
            for j in range(substeps):
                c = rk_step(system.full_rhs, c, t + j * hsub, hsub, 4)
        else:
            c = solver.step(c_hist, e_hist, t, order=order)
        t = t0 + (i + 1) * dt
        _check_finite(c, i, t)
        if callback is not None:
            callback(i, t, c)
        c_hist.insert(0, c)
        e_hist.insert(0, system.explicit(c, t))
        del c_hist[order:], e_hist[order:]
    return c
