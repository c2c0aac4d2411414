"""Tensor-product Chebyshev polynomial bases on stencil bounding boxes.

The total-degree basis can be numerically rank-deficient when evaluated on
stencils that lie on (an approximate) algebraic surface.  ``loi_adapt``
replaces it with a recombined basis whose point-evaluation matrix is full
column rank to a prescribed conditioning tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial import chebyshev as C


def total_degree_indices(degree: int) -> np.ndarray:
    """Multi-indices (ix, iy, iz) with ix+iy+iz <= degree, graded order."""
    out = []
    for total in range(degree + 1):
        for ix in range(total, -1, -1):
            for iy in range(total - ix, -1, -1):
                out.append((ix, iy, total - ix - iy))
    return np.array(out, dtype=np.int64)


def bounding_box(points: np.ndarray, pad_frac: float = 1e-8) -> np.ndarray:
    """Per-axis [lo, hi] box around points; degenerate axes are widened.

    A zero-extent axis gets a symmetric pad of ``pad_frac`` times the largest
    extent (or 1 if all extents vanish, e.g. a single point).
    """
    points = np.atleast_2d(points)
    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = hi - lo
    scale = extent.max() if extent.max() > 0 else 1.0
    pad = 0.5 * pad_frac * scale
    degenerate = extent < pad_frac * scale
    lo = np.where(degenerate, lo - pad, lo)
    hi = np.where(degenerate, hi + pad, hi)
    return np.stack([lo, hi])


@lru_cache(maxsize=None)
def _cheb_tables(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient matrices mapping T_j to its first/second derivatives."""
    eye = np.eye(degree + 1)
    d1 = np.zeros((degree + 1, degree + 1))
    d2 = np.zeros((degree + 1, degree + 1))
    for j in range(degree + 1):
        cd = C.chebder(eye[:, j])
        d1[: len(cd), j] = cd
        cdd = C.chebder(cd) if len(cd) else np.zeros(1)
        d2[: len(cdd), j] = cdd
    return d1, d2


@dataclass(frozen=True)
class PolyBasis:
    """A polynomial basis of total degree <= ``degree`` on a bounding box.

    Each of the M basis functions is a linear combination (rows of
    ``coeffs``) of tensor-product Chebyshev polynomials T_ix(X)T_iy(Y)T_iz(Z)
    whose arguments are local coordinates: points are shifted by ``center``,
    rotated by ``rot`` (columns are the local axes), then affinely mapped
    from ``box`` to [-1, 1]^3.  Total degree is invariant under this affine
    change of variables.
    """

    degree: int
    box: np.ndarray  # (2, 3): rows lo, hi, in local coordinates
    indices: np.ndarray  # (M0, 3) tensor multi-indices
    coeffs: np.ndarray  # (M, M0)
    center: np.ndarray = None  # (3,)
    rot: np.ndarray = None  # (3, 3) orthogonal

    def __post_init__(self):
        if self.center is None:
            object.__setattr__(self, "center", np.zeros(3))
        if self.rot is None:
            object.__setattr__(self, "rot", np.eye(3))

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def _local(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.center) @ self.rot

    def _mapped(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.box
        scale = 2.0 / (hi - lo)
        return (self._local(points) - lo) * scale - 1.0, scale

    def _tensor_values(self, points: np.ndarray, dx=0, dy=0, dz=0) -> np.ndarray:
        """Raw tensor-product (derivative) values, shape (npts, M0)."""
        points = np.atleast_2d(points)
        mapped, scale = self._mapped(points)
        d1, d2 = _cheb_tables(self.degree)
        vander = [C.chebvander(mapped[:, a], self.degree) for a in range(3)]
        cols = []
        for a, order in enumerate((dx, dy, dz)):
            if order == 0:
                cols.append(vander[a])
            elif order == 1:
                cols.append(vander[a] @ d1 * scale[a])
            elif order == 2:
                cols.append(vander[a] @ d2 * scale[a] ** 2)
            else:
                raise ValueError("only derivatives up to order 2 are supported")
        ix, iy, iz = self.indices.T
        return cols[0][:, ix] * cols[1][:, iy] * cols[2][:, iz]

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Basis values; shape (npts, M)."""
        return self._tensor_values(points) @ self.coeffs.T

    def grad(self, points: np.ndarray) -> np.ndarray:
        """Cartesian gradients; shape (3, npts, M)."""
        glocal = [
            self._tensor_values(points, *(int(a == b) for b in range(3)))
            @ self.coeffs.T
            for a in range(3)
        ]
        # chain rule through the rotation: d/dx_a = sum_b rot[a,b] d/dy_b
        return np.stack([
            sum(self.rot[a, b] * glocal[b] for b in range(3))
            for a in range(3)
        ])

    def second_derivs(self, points: np.ndarray) -> np.ndarray:
        """Pure second derivatives (d^2/dx^2, d^2/dy^2, d^2/dz^2); (3, npts, M)."""
        hlocal = {}
        for b in range(3):
            for c in range(b, 3):
                o = tuple(int(b == i) + int(c == i) for i in range(3))
                hlocal[b, c] = self._tensor_values(points, *o) @ self.coeffs.T
        return np.stack([
            sum(self.rot[a, b] * self.rot[a, c]
                * hlocal[min(b, c), max(b, c)]
                for b in range(3) for c in range(3))
            for a in range(3)
        ])


def total_degree_basis(box: np.ndarray, degree: int,
                       center: np.ndarray | None = None,
                       rot: np.ndarray | None = None) -> PolyBasis:
    """All C(degree+3, 3) tensor-Chebyshev products of total degree <= degree."""
    indices = total_degree_indices(degree)
    assert len(indices) == comb(degree + 3, 3)
    return PolyBasis(degree=degree, box=np.asarray(box, dtype=float),
                     indices=indices, coeffs=np.eye(len(indices)),
                     center=center, rot=rot)


def principal_axes(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centroid and orthogonal principal directions (descending variance).

    For points sampled from a surface patch the last column is the axis of
    least spread, i.e. an approximate patch normal; expressing polynomials
    in these coordinates keeps the thin direction from polluting the
    conditioning of the basis.
    """
    points = np.atleast_2d(points)
    center = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - center, full_matrices=False)
    rot = vt.T
    if np.linalg.det(rot) < 0:
        rot = rot.copy()
        rot[:, 2] = -rot[:, 2]
    return center, rot


def loi_adapt(points: np.ndarray, degree: int, tau: float) -> PolyBasis:
    """Adapt the total-degree basis to be numerically unisolvent on ``points``.

    Points sampled from an algebraic surface render some polynomial
    combinations (multiples of the surface's defining polynomial) numerically
    zero at every node, so the total-degree evaluation matrix loses rank.
    Working degree by degree, each block of tensor-Chebyshev candidates is
    orthogonalized against the span of the basis accepted so far; a
    rank-revealing SVD of the residual block then discards directions whose
    singular value falls below ``tau`` times the block's largest.  Processing
    by increasing degree guarantees low-degree polynomials (constants in
    particular) survive intact — only the within-degree combinations that
    vanish on the point set are removed.

    The retained basis functions are normalized so their point-evaluation
    matrix has orthonormal columns (conditioning ratio sigma_min/sigma_max
    is 1 > tau), and their polynomial coefficients stay moderate because no
    direction is ever divided by a near-zero singular value.
    """
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must lie in (0, 1)")
    points = np.atleast_2d(points)
    npts = len(points)
    if npts < 1:
        raise ValueError("need at least one point")
    center, rot = principal_axes(points)
    box = bounding_box((points - center) @ rot)
    base = total_degree_basis(box, degree, center=center, rot=rot)
    phi = base.eval(points)  # graded columns: degree-d block is contiguous
    totals = base.indices.sum(axis=1)

    coeff_rows = []  # rows in the tensor-product coordinate system
    Q = np.empty((npts, 0))  # orthonormal point-evaluation vectors
    C = np.empty((0, phi.shape[1]))  # their coefficient rows
    for d in range(degree + 1):
        blk = np.flatnonzero(totals == d)
        B = phi[:, blk]
        Cblk = np.zeros((len(blk), phi.shape[1]))
        Cblk[np.arange(len(blk)), blk] = 1.0
        # orthogonalize against accepted span (twice, for stability)
        for _ in range(2):
            proj = Q.T @ B
            B = B - Q @ proj
            Cblk = Cblk - proj.T @ C
        U, s, Vt = np.linalg.svd(B, full_matrices=False)
        if s[0] <= 1e-12 * np.sqrt(npts):
            continue
        keep = s > tau * s[0]
        newQ = U[:, keep]
        newC = (Vt[keep] / s[keep, None]) @ Cblk
        Q = np.concatenate([Q, newQ], axis=1)
        C = np.concatenate([C, newC], axis=0)
        coeff_rows.append(newC)
    coeffs = np.concatenate(coeff_rows, axis=0)
    return PolyBasis(degree=degree, box=box, indices=base.indices,
                     coeffs=coeffs, center=center, rot=rot)
