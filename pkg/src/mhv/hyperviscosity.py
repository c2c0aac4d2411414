"""Automatic hyperviscosity stabilization.

Spurious growth in the discretized surface-gradient components is modeled by
an analytic surrogate term tau * k^q acting on plane waves.  Estimating tau
(most-unstable real part), the growth exponents q, and the plane-wave
response of the discrete surface Laplacian yields a closed-form damping
coefficient gamma1 for the operator gamma1 * Laplacian^gamma2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import NodeSet
from .rbffd import gamma2_for_stencil  # noqa: F401  (re-exported selector)

DENSE_EIG_LIMIT = 3000


@dataclass(frozen=True)
class GrowthModel:
    """Spurious-growth data for the three gradient components."""

    tau: np.ndarray  # (3,) real parts of most-unstable eigenvalues
    q: np.ndarray  # (3,) growth exponents (0 where tau <= 0)
    k_hat: float  # wavenumber 2/h

    @property
    def active(self) -> np.ndarray:
        """Mask of components with genuine spurious growth."""
        return self.tau > 0.0


@dataclass(frozen=True)
class EtaStats:
    """Plane-wave response ratios of the discrete surface Laplacian."""

    eta_bar: float  # mean |Re eta| for exponent gamma2
    omega_bar: float  # same with exponent 1
    eta: np.ndarray  # per-node eta samples (complex), kept for diagnostics
    gamma2: int
    k_hat: float

    @property
    def eta_min(self) -> float:
        return float(np.abs(np.real(self.eta)).min())

    @property
    def eta_max(self) -> float:
        return float(np.abs(np.real(self.eta)).max())

    def eta_stat(self, which: str = "mean") -> float:
        """The eta statistic entering gamma1: 'mean' (default), 'min' or 'max'."""
        return {"mean": self.eta_bar, "min": self.eta_min,
                "max": self.eta_max}[which]


@dataclass(frozen=True)
class HypCoeffs:
    gamma1: float
    gamma2: int

    def __post_init__(self):
        # damping certificate: gamma1 * (-1)^gamma2 must not amplify
        assert self.gamma1 * (-1.0) ** self.gamma2 <= 0.0


def spurious_real_parts(G: sp.spmatrix, tol: float = 1e-3) -> float:
    """Real part of the eigenvalue of G with the largest real part.

    Small matrices are handled by a dense eigendecomposition; larger ones by
    an implicitly-restarted Arnoldi iteration at loose tolerance, doubling
    the tolerance on non-convergence (error once it exceeds 0.5).
    """
    n = G.shape[0]
    if n != G.shape[1]:
        raise ValueError("matrix must be square")
    if n <= DENSE_EIG_LIMIT:
        return float(np.max(np.real(sla.eigvals(np.asarray(G.todense())))))
    # a one-vector "LR" iteration can lock onto an interior eigenvalue;
    # asking for a small block makes the rightmost one reliably present
    k = min(6, n - 2)
    while tol <= 0.5:
        try:
            vals = spla.eigs(G.tocsc(), k=k, which="LR", tol=tol,
                             return_eigenvectors=False, maxiter=n * 20)
            return float(np.max(np.real(vals)))
        except (spla.ArpackNoConvergence, spla.ArpackError):
            tol *= 2.0
    raise RuntimeError(
        "Arnoldi estimation of the most-unstable eigenvalue failed to "
        "converge even at tolerance 0.5")


def operator_radius(L: sp.spmatrix, gamma2: int, tol: float = 1e-3) -> float:
    """Spectral radius of L^gamma2, computed as |lambda|_max(L) ** gamma2.

    Dense below DENSE_EIG_LIMIT, otherwise a largest-magnitude Arnoldi
    iteration with tolerance doubling on non-convergence.
    """
    n = L.shape[0]
    if n <= DENSE_EIG_LIMIT:
        lam = float(np.max(np.abs(sla.eigvals(np.asarray(L.todense())))))
        return lam ** gamma2
    while tol <= 0.5:
        try:
            vals = spla.eigs(L.tocsc(), k=1, which="LM", tol=tol,
                             return_eigenvectors=False, maxiter=n * 20)
            return float(np.abs(vals[0])) ** gamma2
        except (spla.ArpackNoConvergence, spla.ArpackError):
            tol *= 2.0
    raise RuntimeError(
        "Arnoldi estimation of the spectral radius failed to converge "
        "even at tolerance 0.5")


def plane_wave(points: np.ndarray, k_hat: float) -> np.ndarray:
    """exp(i k . x) with k = k_hat * (1, 1, 1)."""
    return np.exp(1j * k_hat * points.sum(axis=1))


def growth_exponents(G: tuple, nodes: NodeSet, tau: np.ndarray,
                     k_hat: float) -> GrowthModel:
    """Exponents q_c matching the surrogate tau_c * k^q_c to the observed
    plane-wave misfit of each gradient component.

    Components with tau_c <= 0 carry no spurious growth and get q_c = 0.
    """
    f = plane_wave(nodes.points, k_hat)
    normf = np.linalg.norm(f)
    n = nodes.normals
    kvec = k_hat * np.ones(3)
    ndotk = n @ kvec
    q = np.zeros(3)
    for c in range(3):
        if tau[c] <= 0.0:
            continue
        g_c = 1j * (kvec[c] - ndotk * n[:, c]) * f  # (P i k)_c f
        misfit = np.linalg.norm(g_c - G[c] @ f)
        denom = tau[c] * normf
        if denom == 0.0:
            raise ZeroDivisionError("tau * ||f|| vanished in exponent estimate")
        with np.errstate(divide="ignore"):  # exact operator: misfit 0, q -inf
            q[c] = (np.log(misfit) - np.log(denom)) / np.log(k_hat)
    return GrowthModel(tau=np.asarray(tau, dtype=float), q=q, k_hat=k_hat)


def eta_stats(L: sp.spmatrix, gamma2: int, nodes: NodeSet,
              k_hat: float) -> EtaStats:
    """Ratios mapping the discrete surface (hyper)Laplacian's plane-wave
    action to the Euclidean eigenvalue (-1)^g (3 k^2)^g."""
    f = plane_wave(nodes.points, k_hat)
    lf = f.copy()
    eta = None
    omega = None
    for power in range(1, max(gamma2, 1) + 1):
        lf = L @ lf
        ratio = lf / ((-1.0) ** power * (3.0 * k_hat**2) ** power * f)
        if power == 1:
            omega = ratio
        if power == gamma2:
            eta = ratio
    if eta is None:  # gamma2 == 0: identity operator
        eta = f / f
    return EtaStats(eta_bar=float(np.mean(np.abs(np.real(eta)))),
                    omega_bar=float(np.mean(np.abs(np.real(omega)))),
                    eta=eta, gamma2=gamma2, k_hat=k_hat)


def gamma1(u_norm: float, growth: GrowthModel, eta_bar: float, h: float,
           gamma2: int, divergence_free: bool = True) -> float:
    """Closed-form hyperviscosity coefficient.

    gamma1 = (-1)^(1-g) 3^(-g) ||u|| / eta_bar
             * sum_c tau_c 2^(q_c - 2g) h^(2g - q_c)
    over components with tau_c > 0, doubled for divergent velocity fields.
    Returns 0 when no component grows spuriously.
    """
    if eta_bar <= 0.0:
        raise ValueError("eta_bar must be positive")
    active = growth.active
    if not np.any(active):
        return 0.0
    total = np.sum(growth.tau[active]
                   * 2.0 ** (growth.q[active] - 2 * gamma2)
                   * h ** (2 * gamma2 - growth.q[active]))
    g1 = (-1.0) ** (1 - gamma2) * 3.0 ** (-gamma2) * u_norm / eta_bar * total
    if not divergence_free:
        g1 *= 2.0
    return float(g1)


def model_diffusion_bound(growth: GrowthModel, omega_bar: float, h: float,
                          u_norm: float) -> float:
    """Least model diffusion that cancels the spurious growth (magnitude).

    nu_min = ||u|| / (3 omega_bar) * sum_c tau_c 2^(q_c - 2) h^(2 - q_c)
    over components with tau_c > 0; zero when none grow.
    """
    if omega_bar <= 0.0:
        raise ValueError("omega_bar must be positive")
    active = growth.active
    if not np.any(active):
        return 0.0
    total = np.sum(growth.tau[active] * 2.0 ** (growth.q[active] - 2)
                   * h ** (2 - growth.q[active]))
    return float(u_norm / (3.0 * omega_bar) * total)


@dataclass(frozen=True)
class StabilizationReport:
    """Everything the automatic pipeline decided, for diagnostics/CSV."""

    growth: GrowthModel
    stats: EtaStats
    coeffs: HypCoeffs
    h: float
    u_norm: float
    eta_statistic: str
    gamma1_uncapped: float | None = None

    @property
    def capped(self) -> bool:
        return (self.gamma1_uncapped is not None
                and self.gamma1_uncapped != self.coeffs.gamma1)


# fraction of the integrator's real-axis stability extent budgeted to the
# hyperviscosity term when a time step is supplied to stabilize()
CAP_SAFETY = 0.8

# safety factor on the least damping that cancels the spurious growth at
# the spectral edge of L; the minimum that still stabilizes sits near a
# third of the unit value u_norm * tau_max / rho
EDGE_MARGIN = 10.0


def stabilize(matrices, nodes: NodeSet, u_norm: float,
              divergence_free: bool = True, h: float | None = None,
              gamma2: int | None = None, eta_statistic: str = "mean",
              dt: float | None = None,
              real_axis_extent: float | None = None) -> StabilizationReport:
    """Run the full estimation pipeline on assembled matrices.

    ``h`` defaults to the average spacing h_bar; ``gamma2`` to the planned
    exponent.  ``eta_statistic`` selects which statistic of eta(x) enters
    gamma1 ('mean' is the safe default).

    When ``dt`` and ``real_axis_extent`` (the explicit integrator's stability
    extent along the negative real axis) are both given, |gamma1| is bounded
    by two run-time limits computed from the assembled operators:

    * CAP_SAFETY * real_axis_extent / (dt * rho(L^gamma2)) -- on quasi-normal
      operators the closed-form coefficient can otherwise push the damped
      eigenvalues past the stability region of an explicit scheme, turning
      the cure into the blow-up;
    * EDGE_MARGIN * u_norm * tau_max / rho(L^gamma2) -- just enough damping
      at the spectral edge, with a wide safety factor, so that well-resolved
      solution content is not smeared by damping it never needed.
    """
    if h is None:
        h = nodes.h_bar
    if gamma2 is None:
        gamma2 = matrices.params.gamma2
    k_hat = 2.0 / h
    if u_norm == 0.0:
        growth = GrowthModel(tau=np.zeros(3), q=np.zeros(3), k_hat=k_hat)
        stats = eta_stats(matrices.L, gamma2, nodes, k_hat)
        return StabilizationReport(growth, stats, HypCoeffs(0.0, gamma2),
                                   h, u_norm, eta_statistic)
    tau = np.array([spurious_real_parts(Gc) for Gc in matrices.G])
    growth = growth_exponents(matrices.G, nodes, tau, k_hat)
    stats = eta_stats(matrices.L, gamma2, nodes, k_hat)
    g1 = gamma1(u_norm, growth, stats.eta_stat(eta_statistic), h, gamma2,
                divergence_free)
    g1_raw = g1
    if dt is not None and real_axis_extent is not None and g1 != 0.0:
        rho = operator_radius(matrices.L, gamma2)
        bound = CAP_SAFETY * real_axis_extent / (dt * rho)
        tau_max = float(np.max(growth.tau[growth.active]))
        if tau_max > 0.0:
            # the spurious modes sit at the spectral edge of L, where a mode
            # damped at rate |gamma1| rho(L^gamma2) only needs to beat the
            # growth rate ||u|| tau_max; anything far beyond that damps
            # well-resolved solution content without buying stability
            edge = EDGE_MARGIN * u_norm * tau_max / rho
            bound = min(bound, edge)
        if abs(g1) > bound:
            g1 = float(np.sign(g1) * bound)
    return StabilizationReport(growth, stats, HypCoeffs(g1, gamma2), h,
                               u_norm, eta_statistic, gamma1_uncapped=g1_raw)
