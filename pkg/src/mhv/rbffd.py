"""Overlapped RBF-FD weights for projected surface gradients.

Per stencil, polyharmonic-spline interpolants augmented with the adapted
polynomial basis yield weights for the three components of the surface
gradient at every stencil point via one saddle-point solve.  Columns of the
local weight blocks scatter into rows of the global sparse matrices G^x,
G^y, G^z; the surface Laplacian L is built by iterating the gradient, and
the hyperviscosity operator is the sparse power H = L^gamma2.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, floor, log

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .geometry import NodeSet, StencilSet, build_stencils
from .polybasis import PolyBasis, loi_adapt

ADVECTION = "advection"
MIXED = "mixed"


class WeightSolveError(RuntimeError):
    """Raised when a stencil's saddle system cannot be factorized."""


@dataclass(frozen=True)
class DiscParams:
    """Resolved discretization parameters for a target order xi."""

    xi: int  # target order of approximation
    pde_kind: str  # ADVECTION or MIXED
    smooth: bool
    ell: int  # polynomial degree
    m: int  # PHS exponent (odd)
    M: int  # full polynomial space dimension
    n: int  # stencil size
    delta: float  # overlap parameter
    tau_loi: float  # LOI conditioning tolerance
    gamma2: int  # hyperviscosity exponent


def plan(xi: int, pde_kind: str, smooth: bool = True) -> DiscParams:
    """Select all discretization parameters from the target order alone."""
    if xi < 2 or xi > 8:
        raise ValueError("target order xi must be in [2, 8]")
    if pde_kind not in (ADVECTION, MIXED):
        raise ValueError(f"pde_kind must be 'advection' or 'mixed', got {pde_kind!r}")
    theta = 1 if pde_kind == ADVECTION else 2
    ell = xi + theta - 1
    m = 2 * ell + 1
    M = comb(ell + 3, 3)
    n = 2 * M + 1 if pde_kind == ADVECTION else 2 * M + floor(log(2 * M))
    if ell <= 4:
        delta = 0.7
    elif ell <= 6:
        delta = 0.5
    else:
        delta = 0.4
    if pde_kind == MIXED:
        tau_loi = 1e-3 if ell <= 4 else 1e-4
    else:
        tau_loi = 0.05 if ell < 4 else (1e-3 if ell <= 5 else 1e-4)
    gamma2 = gamma2_for_stencil(n, smooth)
    return DiscParams(xi=xi, pde_kind=pde_kind, smooth=smooth, ell=ell, m=m,
                      M=M, n=n, delta=delta, tau_loi=tau_loi, gamma2=gamma2)


def gamma2_for_stencil(n: int, smooth: bool) -> int:
    """Hyperviscosity exponent: floor(ln n) for smooth solutions, else 2."""
    if n < 3:
        raise ValueError("stencil size too small")
    return floor(log(n)) if smooth else 2


# ---------------------------------------------------------------------------
# local systems


def phs_surface_gradient_rhs(points: np.ndarray, normals: np.ndarray,
                             m: int, basis: PolyBasis):
    """Right-hand blocks of the saddle system for all three components.

    Returns (B_A, B_H), both laid out with evaluation points as columns to
    match the unknown weight columns: B_A[c][i, k] holds (P(x_k) grad
    ||x - x_i||^m)_c at x = x_k, and B_H[c][i, k] holds (P(x_k) grad h_i)_c
    at x_k, shape (M, n).  The PHS gradient is m ||x - x_j||^(m-2) (x - x_j),
    which vanishes at x = x_j for odd m >= 3.
    """
    if m < 3 or m % 2 == 0:
        raise ValueError("PHS exponent m must be odd and >= 3")
    n = len(points)
    diff = points[:, None, :] - points[None, :, :]  # (n, n, 3)
    r = np.linalg.norm(diff, axis=2)
    grad_phs = m * r[:, :, None] ** (m - 2) * diff  # finite at r=0 for m>=3
    # project onto the tangent plane at the evaluation point x_i; entry
    # (i, j) is then the surface gradient at x_i of the PHS centered at x_j,
    # so the transpose puts evaluation points in columns
    ndotg = np.einsum("ic,ijc->ij", normals, grad_phs)
    proj = grad_phs - ndotg[:, :, None] * normals[:, None, :]
    B_A = np.stack([proj[:, :, c].T for c in range(3)])  # (3, n, n)

    gh = basis.grad(points)  # (3, n, M)
    ndotgh = np.einsum("ic,cim->im", normals, gh)  # (n, M)
    B_H = np.stack([
        (gh[c] - normals[:, c, None] * ndotgh).T  # (M, n)
        for c in range(3)
    ])
    return B_A, B_H


@dataclass(frozen=True)
class LocalWeightBlock:
    """Weights of one stencil for all three gradient components.

    ``grad[c]`` is the full n x n weight block for component c (columns are
    evaluation nodes, in stencil-member order); ``laplacian`` is the r x n
    block of iterated-Laplacian weights for the retained nodes.
    """

    stencil: int
    grad: np.ndarray  # (3, n, n)
    laplacian: np.ndarray  # (r, n)


def local_weights(points: np.ndarray, normals: np.ndarray, m: int,
                  basis: PolyBasis, retained_local: np.ndarray,
                  stencil_index: int = 0) -> LocalWeightBlock:
    """Solve the saddle system once and extract gradient/Laplacian weights."""
    n, M = len(points), basis.size
    A = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2) ** m
    H1 = basis.eval(points)
    B_A, B_H = phs_surface_gradient_rhs(points, normals, m, basis)

    K = np.zeros((n + M, n + M))
    K[:n, :n] = A
    K[:n, n:] = H1
    K[n:, :n] = H1.T
    rhs = np.concatenate([
        np.concatenate([B_A[c], B_H[c]], axis=0) for c in range(3)
    ], axis=1)  # (n+M, 3n)
    try:
        lu, piv = sla.lu_factor(K)
        sol = sla.lu_solve((lu, piv), rhs)
    except (sla.LinAlgError, ValueError) as exc:
        raise WeightSolveError(
            f"saddle system singular on stencil {stencil_index}; "
            "consider lowering tau_loi") from exc
    if not np.all(np.isfinite(sol)):
        raise WeightSolveError(
            f"saddle solve produced non-finite weights on stencil "
            f"{stencil_index}; consider lowering tau_loi")
    grad = np.stack([sol[:n, c * n:(c + 1) * n] for c in range(3)])
    # iterated surface Laplacian: rows for retained nodes only
    lap = sum((grad[c] @ grad[c][:, retained_local]).T for c in range(3))
    return LocalWeightBlock(stencil=stencil_index, grad=grad, laplacian=lap)


# ---------------------------------------------------------------------------
# global assembly


@dataclass(frozen=True)
class DiffMatrices:
    """Global sparse differentiation matrices with shared sparsity."""

    params: DiscParams
    stencils: StencilSet
    Gx: sp.csr_matrix
    Gy: sp.csr_matrix
    Gz: sp.csr_matrix
    L: sp.csr_matrix

    @property
    def n_nodes(self) -> int:
        return self.L.shape[0]

    @property
    def G(self) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        return self.Gx, self.Gy, self.Gz

    def hyperviscosity_matrix(self, gamma2: int | None = None) -> sp.csr_matrix:
        """H = L^gamma2 by repeated sparse multiplication (identity if 0)."""
        if gamma2 is None:
            gamma2 = self.params.gamma2
        return matrix_power(self.L, gamma2)

    def apply_hyperviscosity(self, c: np.ndarray,
                             gamma2: int | None = None) -> np.ndarray:
        """L^gamma2 @ c without forming the matrix power."""
        if gamma2 is None:
            gamma2 = self.params.gamma2
        out = c
        for _ in range(gamma2):
            out = self.L @ out
        return out


def matrix_power(L: sp.spmatrix, gamma2: int) -> sp.csr_matrix:
    if gamma2 < 0:
        raise ValueError("gamma2 must be nonnegative")
    out = sp.identity(L.shape[0], format="csr")
    for _ in range(gamma2):
        out = (out @ L).tocsr()
    return out


def _check_exactness(block: LocalWeightBlock, points, normals, basis,
                     retained_local, stencil_index, tol=1e-8):
    """Weights must reproduce analytic projected gradients of the basis."""
    H1 = basis.eval(points)
    gh = basis.grad(points)
    ndotgh = np.einsum("ic,cim->im", normals, gh)
    for c in range(3):
        exact = (gh[c] - normals[:, c, None] * ndotgh)[retained_local]  # (r, M)
        got = block.grad[c][:, retained_local].T @ H1  # (r, M)
        scale = max(np.abs(exact).max(), 1.0)
        if np.abs(got - exact).max() > tol * scale:
            raise WeightSolveError(
                f"polynomial exactness violated on stencil {stencil_index}: "
                f"error {np.abs(got - exact).max():.3e}")


def assemble(nodes: NodeSet, params: DiscParams,
             stencils: StencilSet | None = None,
             check_exactness: bool = False) -> DiffMatrices:
    """Build the global G^x, G^y, G^z and L for a node set."""
    if stencils is None:
        stencils = build_stencils(nodes, params.n, params.delta)
    N = nodes.n_nodes
    n = params.n

    nnz = N * n
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    gvals = np.empty((3, nnz))
    lvals = np.empty(nnz)
    pos = 0
    for k in range(stencils.n_stencils):
        mem = stencils.members[k]
        ret = stencils.retained_local[k]
        pts = nodes.points[mem]
        nrm = nodes.normals[mem]
        basis = loi_adapt(pts, params.ell, params.tau_loi)
        block = local_weights(pts, nrm, params.m, basis, ret, stencil_index=k)
        if check_exactness:
            _check_exactness(block, pts, nrm, basis, ret, k)
        r = len(ret)
        span = slice(pos, pos + r * n)
        rows[span] = np.repeat(mem[ret], n)
        cols[span] = np.tile(mem, r)
        for c in range(3):
            gvals[c, span] = block.grad[c][:, ret].T.ravel()
        lvals[span] = block.laplacian.ravel()
        pos += r * n
    assert pos == nnz, "partition invariant violated: some node unassigned"

    def build(vals):
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(N, N))
        out = mat.tocsr()
        # every row written exactly once: nnz may only shrink via exact
        # duplicate coordinates, which the partition invariant forbids
        assert out.nnz == nnz or np.all(np.diff(out.indptr) == n)
        return out

    return DiffMatrices(params=params, stencils=stencils,
                        Gx=build(gvals[0]), Gy=build(gvals[1]),
                        Gz=build(gvals[2]), L=build(lvals))
