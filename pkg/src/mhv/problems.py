"""Test problems: velocity fields, initial conditions, manufactured
solutions with analytic forcing, and two reaction-diffusion applications.

All fields are tangential to their surfaces by construction, so the
advective derivative u . grad_M c of a smooth ambient extension of c equals
u . grad c; the manufactured forcings below exploit this with hard-coded
ambient gradients.  Forcings never include the artificial damping term, so
convergence tests measure its (vanishing) footprint honestly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import NodeSet, Surface, TORUS_R, TORUS_r
from .timeint import SemiDiscreteSystem

SQRT_35_2PI = np.sqrt(35.0 / (2.0 * np.pi))


# ---------------------------------------------------------------------------
# velocity fields


@dataclass(frozen=True)
class VelocityField:
    """A tangential velocity field u(x, t) on a surface."""

    u: Callable[[np.ndarray, float], np.ndarray]
    divergence_free: bool
    u_max: float  # max pointwise |u| over the surface at t = 0
    period: float | None = None  # time after which tracers return (if any)

    def __call__(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.u(np.atleast_2d(points), t)


def sphere_solid_body(alpha: float = np.pi / 2.0) -> VelocityField:
    """Solid-body rotation on the unit sphere, axis tilted by ``alpha``.

    In the (longitude, latitude) frame the components are
    u = sin(theta) sin(lambda) sin(alpha) - cos(theta) cos(alpha) and
    v = cos(lambda) sin(alpha); converted through the orthonormal frame
    (lambda_hat, theta_hat) these collapse to the global Cartesian form
    (y cos(alpha) - z sin(alpha), -x cos(alpha), x sin(alpha)), a rigid
    rotation about the axis (0, sin(alpha), cos(alpha)).  The default
    alpha = pi/2 carries tracers over the poles with period 2*pi.
    """
    ca, sa = np.cos(alpha), np.sin(alpha)

    def u(points: np.ndarray, t: float) -> np.ndarray:
        x, y, z = points.T
        return np.stack([y * ca - z * sa, -x * ca, x * sa], axis=1)

    return VelocityField(u=u, divergence_free=True, u_max=1.0,
                         period=2.0 * np.pi)


def sphere_deformational(T: float = 5.0) -> VelocityField:
    """Time-dependent deformational flow with background rotation.

    Frame components (lam' = lam - 2*pi*t/T):
        u = (10/T) cos(pi t/T) sin^2(lam') sin(2 theta) + (2 pi/T) cos(theta)
        v = (10/T) cos(pi t/T) sin(2 lam') cos(theta)
    The deformation reverses about t = T/2, so tracers return to their
    initial positions at t = T.
    """

    def u(points: np.ndarray, t: float) -> np.ndarray:
        x, y, z = points.T
        lam = np.arctan2(y, x)
        cos_th = np.hypot(x, y)  # cos(latitude) >= 0
        sin_th = z
        lamp = lam - 2.0 * np.pi * t / T
        amp = 10.0 / T * np.cos(np.pi * t / T)
        uu = (amp * np.sin(lamp) ** 2 * 2.0 * sin_th * cos_th
              + 2.0 * np.pi / T * cos_th)
        vv = amp * np.sin(2.0 * lamp) * cos_th
        # frame vectors; both components vanish at the poles (cos_th -> 0),
        # where lam_hat/theta_hat are undefined, so zero the field there
        safe = cos_th > 1e-14
        inv = np.where(safe, 1.0 / np.where(safe, cos_th, 1.0), 0.0)
        cl, sl = x * inv, y * inv
        lam_hat = np.stack([-sl, cl, np.zeros_like(x)], axis=1)
        th_hat = np.stack([-sin_th * cl, -sin_th * sl, cos_th], axis=1)
        out = uu[:, None] * lam_hat + vv[:, None] * th_hat
        out[~safe] = 0.0
        return out

    # max speed at t=0 over the sphere, computed once on a dense (lam, th) grid
    lam = np.linspace(-np.pi, np.pi, 721)
    th = np.linspace(-np.pi / 2, np.pi / 2, 361)
    L, TH = np.meshgrid(lam, th)
    uu = 10.0 / T * np.sin(L) ** 2 * np.sin(2 * TH) + 2 * np.pi / T * np.cos(TH)
    vv = 10.0 / T * np.sin(2 * L) * np.cos(TH)
    u_max = float(np.sqrt(uu**2 + vv**2).max())
    return VelocityField(u=u, divergence_free=True, u_max=u_max, period=T)


def torus_knot_field() -> VelocityField:
    """Steady field advecting tracers around a (3, 2) knot on the torus.

    With rho = sqrt(x^2 + y^2) and the torus angles phi (major, traversed
    three times) and psi (minor, twice), the parametric components
        u = rho1 cos(3 phi) - 3 rho2 sin(3 phi),
        v = rho1 sin(3 phi) + 3 rho2 cos(3 phi),
        w = -(2/3) cos(2 (phi - theta)),
    with rho1 = -(2/3) sin(2 (phi - theta)) and
    rho2 = 1 - (1/3) cos(2 (phi - theta)), reduce — using
    cos(2(phi - theta)) = -3(rho - 1) and sin(2(phi - theta)) = 3 z on the
    torus R = 1, r = 1/3 — to the global Cartesian form
        u = (-2 z x / rho - 3 y, -2 z y / rho + 3 x, 2 (rho - 1)),
    which is exactly tangential.  Tracers return at T = 2 pi; the maximum
    speed sqrt(4/9 + 9 (4/3)^2) ~= 4.06 occurs on the outer equator.
    """

    def u(points: np.ndarray, t: float) -> np.ndarray:
        x, y, z = points.T
        rho = np.hypot(x, y)
        return np.stack([
            -2.0 * z * x / rho - 3.0 * y,
            -2.0 * z * y / rho + 3.0 * x,
            2.0 * (rho - 1.0),
        ], axis=1)

    u_max = float(np.sqrt(4.0 / 9.0 + 9.0 * (TORUS_R + TORUS_r) ** 2))
    return VelocityField(u=u, divergence_free=True, u_max=u_max,
                         period=2.0 * np.pi)


def streamfunction_field(surface: Surface, scale: float = 1.0,
                         normals: np.ndarray | None = None) -> VelocityField:
    """Surface-incompressible field u = n x grad(psi) with
    grad(psi) = -10 cos(pi t / 2) (1, 0, 0)^T, optionally scaled.

    For analytic surfaces the normal is evaluated on the fly; for point
    clouds pass the per-node ``normals`` (the evaluator then requires the
    query points to coincide with those nodes).
    """
    if not surface.is_analytic and normals is None:
        raise ValueError("point-cloud surfaces need explicit normals")

    def u(points: np.ndarray, t: float) -> np.ndarray:
        n = surface.normal(points) if surface.is_analytic else normals
        if len(n) != len(points):
            raise ValueError("points must match the stored normals")
        gpsi = np.array([-10.0 * np.cos(np.pi * t / 2.0), 0.0, 0.0])
        return scale * np.cross(n, gpsi[None, :])

    # |n x (g, 0, 0)| = |g| sqrt(1 - nx^2) <= 10 |scale|
    return VelocityField(u=u, divergence_free=True, u_max=10.0 * abs(scale),
                         period=None)


# ---------------------------------------------------------------------------
# initial conditions


def cosine_bell_sphere(points: np.ndarray) -> np.ndarray:
    """C^1 cosine bell of geodesic radius 1/3 centered at (1, 0, 0)."""
    points = np.atleast_2d(points)
    r = np.arccos(np.clip(points[:, 0], -1.0, 1.0))
    R_b = 1.0 / 3.0
    return np.where(r < R_b, 0.5 * (1.0 + np.cos(np.pi * r / R_b)), 0.0)


SPHERE_GAUSS_P1 = np.array([np.sqrt(3.0) / 2.0, 0.5, 0.0])
SPHERE_GAUSS_P2 = np.array([np.sqrt(3.0) / 2.0, -0.5, 0.0])


def gaussians_sphere(points: np.ndarray) -> np.ndarray:
    """Two smooth Gaussian bells, 0.95 (e^{-5 r1^2} + e^{-5 r2^2})."""
    points = np.atleast_2d(points)
    r1 = np.sum((points - SPHERE_GAUSS_P1) ** 2, axis=1)
    r2 = np.sum((points - SPHERE_GAUSS_P2) ** 2, axis=1)
    return 0.95 * (np.exp(-5.0 * r1) + np.exp(-5.0 * r2))


TORUS_BELL_P1 = np.array([TORUS_R + TORUS_r, 0.0, 0.0])
TORUS_BELL_P2 = -TORUS_BELL_P1


def cosine_bells_torus(points: np.ndarray) -> np.ndarray:
    """0.1 + 0.9 (q1 + q2): two C^1 bells of radius 0.5 at +/-(4/3, 0, 0)."""
    points = np.atleast_2d(points)

    def bell(p):
        r = np.linalg.norm(points - p, axis=1)
        return np.where(r < 0.5, 0.5 * (1.0 + np.cos(2.0 * np.pi * r)), 0.0)

    return 0.1 + 0.9 * (bell(TORUS_BELL_P1) + bell(TORUS_BELL_P2))


def gaussians_torus(points: np.ndarray, a: float = 20.0) -> np.ndarray:
    """Two smooth bells e^{-a [(x -/+ 4/3)^2 + y^2] - 1.5 a z^2}.

    The exponent groups the y^2 term with the damped x-offset term; this
    keeps both bells localized around +/-(4/3, 0, 0).
    """
    points = np.atleast_2d(points)
    x, y, z = points.T
    zterm = 1.5 * a * z**2
    return (np.exp(-a * ((x - (TORUS_R + TORUS_r)) ** 2 + y**2) - zterm)
            + np.exp(-a * ((x + (TORUS_R + TORUS_r)) ** 2 + y**2) - zterm))


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True)
class ManufacturedProblem:
    """Exact solution, analytic forcing and the pieces they are built from.

    ``forcing`` is dc/dt + u . grad_M c - nu * Lap_M c in closed form; the
    artificial damping term is deliberately excluded so that simulations
    measure its residual footprint.  At times where sin(t) = 0 the exact
    solution is identically 1.
    """

    velocity: VelocityField
    nu: float
    peclet: float
    exact: Callable[[np.ndarray, float], np.ndarray]
    surface_laplacian: Callable[[np.ndarray, float], np.ndarray]
    advective: Callable[[np.ndarray, float], np.ndarray]  # u . grad_M c
    time_derivative: Callable[[np.ndarray, float], np.ndarray]

    def forcing(self, points: np.ndarray, t: float) -> np.ndarray:
        return (self.time_derivative(points, t) + self.advective(points, t)
                - self.nu * self.surface_laplacian(points, t))


def _resolve_nu(nu: float | None, peclet: float | None,
                u_max: float) -> tuple[float, float]:
    """nu and Peclet tied by Pe = u_max * L / nu with unit length scale."""
    if nu is None and peclet is None:
        peclet = 1.0
    if nu is None:
        nu = u_max / peclet
    elif peclet is None:
        peclet = u_max / nu
    return float(nu), float(peclet)


def sphere_manufactured(nu: float | None = None,
                        peclet: float | None = None) -> ManufacturedProblem:
    """c = 1 + (3/4) sqrt(35/(2 pi)) (x^2 - 3 y^2) x z sin(t) on the sphere.

    The spatial factor is the degree-4 spherical harmonic Y_4^3, so
    Lap_S2 c = -20 (c - 1) exactly.  The advecting field is solid-body
    rotation over the poles (alpha = pi/2), i.e. u = (-z, 0, x).
    """
    A = 0.75 * SQRT_35_2PI
    velocity = sphere_solid_body(np.pi / 2.0)
    nu, peclet = _resolve_nu(nu, peclet, velocity.u_max)

    def harmonic(points):
        x, y, z = np.atleast_2d(points).T
        return A * (x**2 - 3.0 * y**2) * x * z

    def exact(points, t):
        return 1.0 + harmonic(points) * np.sin(t)

    def time_derivative(points, t):
        return harmonic(points) * np.cos(t)

    def surface_laplacian(points, t):
        return -20.0 * harmonic(points) * np.sin(t)

    def advective(points, t):
        # u . grad c with u = (-z, 0, x) and the polynomial extension of c;
        # tangential u makes this the surface advective derivative
        x, y, z = np.atleast_2d(points).T
        gx = A * (3.0 * x**2 - 3.0 * y**2) * z
        gz = A * (x**2 - 3.0 * y**2) * x
        return (-z * gx + x * gz) * np.sin(t)

    return ManufacturedProblem(velocity=velocity, nu=nu, peclet=peclet,
                               exact=exact,
                               surface_laplacian=surface_laplacian,
                               advective=advective,
                               time_derivative=time_derivative)


def torus_manufactured(nu: float | None = None,
                       peclet: float | None = None) -> ManufacturedProblem:
    """c = 1 + (1/8) x (x^4 - 10 x^2 y^2 + 5 x y^4 ...) on the torus.

    Solution: c(x, y, z, t) = 1 + (1/8) p(x, y) (x^2 + y^2 - 60 z^2) sin(t)
    with p = x (x^4 - 10 x^2 y^2 + 5 y^4) = Re((x + i y)^5).  Its surface
    Laplacian on the torus (R = 1, r = 1/3) collapses, with
    rho = sqrt(x^2 + y^2), to the closed form
        (-3 / (8 rho^2)) p (10248 rho^4 - 34335 rho^3 + 41359 rho^2
                            - 21320 rho + 4000) sin(t),
    verified symbolically in parametric coordinates.  The advecting field is
    the (3, 2)-knot field normalized to unit maximum speed, so the advective
    time-step restriction matches the unit-speed convention of the
    convergence driver.
    """
    base = torus_knot_field()
    scale = 1.0 / base.u_max
    velocity = VelocityField(
        u=lambda points, t: scale * base.u(points, t),
        divergence_free=base.divergence_free, u_max=1.0,
        period=None if base.period is None else base.period / scale)
    nu, peclet = _resolve_nu(nu, peclet, velocity.u_max)

    def parts(points):
        x, y, z = np.atleast_2d(points).T
        p = x * (x**4 - 10.0 * x**2 * y**2 + 5.0 * y**4)
        q = x**2 + y**2 - 60.0 * z**2
        return x, y, z, p, q

    def exact(points, t):
        _, _, _, p, q = parts(points)
        return 1.0 + 0.125 * p * q * np.sin(t)

    def time_derivative(points, t):
        _, _, _, p, q = parts(points)
        return 0.125 * p * q * np.cos(t)

    def surface_laplacian(points, t):
        x, y, _, p, _ = parts(points)
        rho = np.hypot(x, y)
        poly = (10248.0 * rho**4 - 34335.0 * rho**3 + 41359.0 * rho**2
                - 21320.0 * rho + 4000.0)
        return -3.0 / (8.0 * rho**2) * p * poly * np.sin(t)

    def advective(points, t):
        x, y, z, p, q = parts(points)
        # ambient gradient of the polynomial extension of (c - 1) / sin(t)
        px = 5.0 * x**4 - 30.0 * x**2 * y**2 + 5.0 * y**4
        py = -20.0 * x**3 * y + 20.0 * x * y**3
        gx = 0.125 * (px * q + 2.0 * x * p)
        gy = 0.125 * (py * q + 2.0 * y * p)
        gz = 0.125 * p * (-120.0 * z)
        u = velocity(points, t)
        return (u[:, 0] * gx + u[:, 1] * gy + u[:, 2] * gz) * np.sin(t)

    return ManufacturedProblem(velocity=velocity, nu=nu, peclet=peclet,
                               exact=exact,
                               surface_laplacian=surface_laplacian,
                               advective=advective,
                               time_derivative=time_derivative)


# ---------------------------------------------------------------------------
# reaction-diffusion applications


@dataclass(frozen=True)
class ReactionSystem:
    """An advection-diffusion-reaction system split for IMEX stepping.

    ``make_explicit(matrices, nodes)`` returns the nonlinear callback
    (advection and reactions, plus any explicitly-stepped diffusion term);
    ``make_implicit(matrices, hyp)`` returns the constant sparse operator
    (linear diffusion and the damping term).  For multi-species systems the
    state vector stacks the species: c = [c_1; c_2].
    """

    name: str
    n_species: int
    diffusivities: tuple[float, ...]
    velocity: VelocityField
    params: dict[str, float]
    make_explicit: Callable
    make_implicit: Callable
    make_ic: Callable[[NodeSet, int], np.ndarray]

    def semi_discrete(self, matrices, nodes: NodeSet,
                      hyp) -> SemiDiscreteSystem:
        return SemiDiscreteSystem(
            explicit=self.make_explicit(matrices, nodes),
            implicit=self.make_implicit(matrices, hyp))

    def initial_condition(self, nodes: NodeSet, seed: int = 0) -> np.ndarray:
        return self.make_ic(nodes, seed)


def _divergence_of(matrices, flux: np.ndarray) -> np.ndarray:
    """G^x f_x + G^y f_y + G^z f_z for a stacked (N, 3) flux."""
    Gx, Gy, Gz = matrices.G
    return Gx @ flux[:, 0] + Gy @ flux[:, 1] + Gz @ flux[:, 2]


def cahn_hilliard_system(nu: float = 0.5, beta: float = 0.02,
                         velocity_scale: float = 1.0) -> ReactionSystem:
    """Advective Cahn-Hilliard: dc/dt + div_M(c u) = nu Lap_M c^3
    - nu Lap_M c - nu beta Lap_M^2 c + damping.

    The advection and the nonlinear nu Lap_M c^3 terms are stepped
    explicitly; the linear -nu Lap_M c - nu beta B c + gamma1 H c terms are
    stepped implicitly, with the bilaplacian approximated as B = L^2.  The
    velocity is the surface curl of the oscillating streamfunction, which is
    surface-incompressible, so c = +/-1 are equilibria of the reaction part.
    """
    params = {"nu": nu, "beta": beta, "velocity_scale": velocity_scale}

    def make_explicit(matrices, nodes: NodeSet):
        L = matrices.L
        vel = streamfunction_field(nodes.surface, velocity_scale,
                                   normals=nodes.normals)

        def rhs(c, t):
            flux = c[:, None] * vel(nodes.points, t)
            return -_divergence_of(matrices, flux) + nu * (L @ (c**3))

        return rhs

    def make_implicit(matrices, hyp):
        L = matrices.L
        out = -nu * L - nu * beta * (L @ L)
        if hyp is not None and hyp.gamma1 != 0.0:
            out = out + hyp.gamma1 * matrices.hyperviscosity_matrix(hyp.gamma2)
        return out.tocsr()

    def make_ic(nodes: NodeSet, seed: int):
        rng = np.random.default_rng(seed)
        return rng.uniform(-0.1, 0.1, nodes.n_nodes)

    # diffusivity of the linearized implicit part (coefficient of Lap c)
    return ReactionSystem(name="cahn-hilliard", n_species=1,
                          diffusivities=(nu,), velocity=None, params=params,
                          make_explicit=make_explicit,
                          make_implicit=make_implicit, make_ic=make_ic)


TURING_DEFAULTS = {"delta1": 0.0011, "delta2": 0.0021, "tau1": 0.02,
                   "tau2": 0.2, "alpha": 0.899, "beta": -0.91,
                   "eta1": -0.899, "velocity_scale": 0.1}


def turing_reactions(c1: np.ndarray, c2: np.ndarray,
                     p: dict) -> tuple[np.ndarray, np.ndarray]:
    """Reaction terms of the two-species spot-forming system.

    r1 = alpha c1 (1 - tau1 c2^2) + c2 (1 - tau2 c1)
    r2 = beta c2 (1 + (alpha tau1 / beta) c1 c2) + c1 (eta1 + tau2 c2)
    Every term carries a field factor, so (0, 0) is an equilibrium; the
    Jacobian there is [[alpha, 1], [eta1, beta]].
    """
    a, b = p["alpha"], p["beta"]
    t1, t2 = p["tau1"], p["tau2"]
    r1 = a * c1 * (1.0 - t1 * c2**2) + c2 * (1.0 - t2 * c1)
    r2 = b * c2 * (1.0 + (a * t1 / b) * c1 * c2) + c1 * (p["eta1"] + t2 * c2)
    return r1, r2


def turing_system(**overrides) -> ReactionSystem:
    """Coupled Turing system with advection by w = 0.1 u.

    Advection and reactions are explicit; diffusion and damping implicit.
    Default parameters promote spot formation in the absence of advection.
    Unknown override keys are rejected.
    """
    params = dict(TURING_DEFAULTS)
    unknown = set(overrides) - set(params)
    if unknown:
        raise ValueError(f"unknown Turing parameters: {sorted(unknown)}")
    params.update(overrides)
    d1, d2 = params["delta1"], params["delta2"]

    def make_explicit(matrices, nodes: NodeSet):
        scale = params["velocity_scale"]
        vel = (streamfunction_field(nodes.surface, scale,
                                    normals=nodes.normals)
               if scale != 0.0 else None)
        N = matrices.n_nodes

        def rhs(c, t):
            c1, c2 = c[:N], c[N:]
            r1, r2 = turing_reactions(c1, c2, params)
            if vel is not None:
                w = vel(nodes.points, t)
                r1 = r1 - _divergence_of(matrices, c1[:, None] * w)
                r2 = r2 - _divergence_of(matrices, c2[:, None] * w)
            return np.concatenate([r1, r2])

        return rhs

    def make_implicit(matrices, hyp):
        L = matrices.L
        damp = (hyp.gamma1 * matrices.hyperviscosity_matrix(hyp.gamma2)
                if hyp is not None and hyp.gamma1 != 0.0 else None)
        blocks = []
        for d in (d1, d2):
            blk = d * L
            if damp is not None:
                blk = blk + damp
            blocks.append(blk)
        return sp.block_diag(blocks, format="csr")

    def make_ic(nodes: NodeSet, seed: int):
        rng = np.random.default_rng(seed)
        return rng.uniform(-0.5, 0.5, 2 * nodes.n_nodes)

    return ReactionSystem(name="turing", n_species=2,
                          diffusivities=(d1, d2), velocity=None,
                          params=params, make_explicit=make_explicit,
                          make_implicit=make_implicit, make_ic=make_ic)


# ---------------------------------------------------------------------------
# utilities


def error_norms(numeric: np.ndarray,
                exact: np.ndarray) -> tuple[float, float]:
    """Relative l2 and max-norm errors (absolute when the exact norm is 0)."""
    numeric = np.asarray(numeric, dtype=float)
    exact = np.asarray(exact, dtype=float)
    diff = numeric - exact
    n2, ninf = np.linalg.norm(exact), np.abs(exact).max(initial=0.0)
    e2 = np.linalg.norm(diff) / (n2 if n2 > 0.0 else 1.0)
    einf = np.abs(diff).max(initial=0.0) / (ninf if ninf > 0.0 else 1.0)
    return float(e2), float(einf)


def advection_dt(n_nodes: int, u_max: float = 1.0) -> float:
    """Courant-0.3 step for pure advection: 0.3 / (u_max sqrt(N))."""
    return 0.3 / (u_max * np.sqrt(n_nodes))


def advection_diffusion_dt(n_nodes: int, xi: int) -> float:
    """min(0.3 N^{-1/2}, N^{-xi/8}): Courant 0.3 or temporal error below
    the spatial error of an order-xi discretization under SBDF4."""
    return float(min(0.3 * n_nodes ** -0.5, n_nodes ** (-xi / 8.0)))
