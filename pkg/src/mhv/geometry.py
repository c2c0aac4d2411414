"""Surfaces, node sets, spacing statistics, and overlapped stencils.

Nodes live on co-dimension-1 surfaces embedded in R^3 and are described only
by their coordinates and unit outward normals.  Everything downstream (weight
generation, stabilization, time stepping) consumes the types defined here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

TORUS_R = 1.0
TORUS_r = 1.0 / 3.0


class Surface:
    """An analytic surface (unit sphere or torus) or a raw point cloud.

    For analytic kinds the normal and implicit residual are evaluated from
    closed forms; for point clouds the normals are stored per node and there
    is no implicit description.
    """

    SPHERE = "unit-sphere"
    TORUS = "torus"
    POINT_CLOUD = "point-cloud"

    def __init__(self, kind: str):
        if kind not in (self.SPHERE, self.TORUS, self.POINT_CLOUD):
            raise ValueError(f"unknown surface kind: {kind!r}")
        self.kind = kind

    def __repr__(self):
        return f"Surface({self.kind!r})"

    @property
    def is_analytic(self) -> bool:
        return self.kind != self.POINT_CLOUD

    def normal(self, points: np.ndarray) -> np.ndarray:
        """Unit outward normal at the given points (analytic kinds only)."""
        points = np.atleast_2d(points)
        if self.kind == self.SPHERE:
            return points / np.linalg.norm(points, axis=1, keepdims=True)
        if self.kind == self.TORUS:
            x, y, z = points.T
            rho = np.hypot(x, y)
            # gradient of ((rho - R)^2 + z^2 - r^2), normalized
            gx = (rho - TORUS_R) * x / rho
            gy = (rho - TORUS_R) * y / rho
            g = np.stack([gx, gy, z], axis=1)
            return g / np.linalg.norm(g, axis=1, keepdims=True)
        raise ValueError("point clouds carry per-node normals; use NodeSet.normals")

    def implicit_residual(self, points: np.ndarray) -> np.ndarray:
        """Residual of the implicit surface equation at each point."""
        points = np.atleast_2d(points)
        if self.kind == self.SPHERE:
            return np.einsum("ij,ij->i", points, points) - 1.0
        if self.kind == self.TORUS:
            x, y, z = points.T
            return (np.hypot(x, y) - TORUS_R) ** 2 + z**2 - TORUS_r**2
        raise ValueError("point clouds have no implicit equation")

    def tangents(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Two independent analytic unit tangent vectors at each point."""
        points = np.atleast_2d(points)
        if self.kind == self.SPHERE:
            t1 = np.stack([-points[:, 1], points[:, 0],
                           np.zeros(len(points))], axis=1)
            bad = np.linalg.norm(t1, axis=1) < 1e-8
            t1[bad] = [1.0, 0.0, 0.0]
            t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
            n = self.normal(points)
            t2 = np.cross(n, t1)
            t2 /= np.linalg.norm(t2, axis=1, keepdims=True)
            return t1, t2
        if self.kind == self.TORUS:
            x, y, z = points.T
            rho = np.hypot(x, y)
            cphi, sphi = x / rho, y / rho
            spsi, cpsi = z / TORUS_r, (rho - TORUS_R) / TORUS_r
            t1 = np.stack([-sphi, cphi, np.zeros_like(x)], axis=1)
            t2 = np.stack([-spsi * cphi, -spsi * sphi, cpsi], axis=1)
            t2 /= np.linalg.norm(t2, axis=1, keepdims=True)
            return t1, t2
        raise ValueError("no analytic tangents for point clouds")


@dataclass(frozen=True)
class NodeSet:
    """Scattered nodes on a surface with unit normals and spacing statistics."""

    surface: Surface
    points: np.ndarray  # (N, 3)
    normals: np.ndarray  # (N, 3), unit length
    h_bar: float  # 1/sqrt(N)
    h_q: float  # separation radius: min pairwise distance
    h_rho: float  # fill-distance proxy: max nearest-neighbor distance

    def __post_init__(self):
        self.points.setflags(write=False)
        self.normals.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    @classmethod
    def from_points(cls, surface: Surface, points: np.ndarray,
                    normals: np.ndarray) -> "NodeSet":
        points = np.ascontiguousarray(points, dtype=float)
        normals = np.ascontiguousarray(normals, dtype=float)
        if points.shape != normals.shape or points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("points and normals must both be (N, 3)")
        h_bar, h_q, h_rho = spacing_measures(points)
        return cls(surface, points, normals, h_bar, h_q, h_rho)

    def spacing(self, measure: str = "h_bar") -> float:
        """Node-spacing value by name ('h_bar', 'h_q' or 'h_rho')."""
        try:
            return {"h_bar": self.h_bar, "h_q": self.h_q,
                    "h_rho": self.h_rho}[measure]
        except KeyError:
            raise ValueError(f"unknown spacing measure {measure!r}") from None


def spacing_measures(points: np.ndarray) -> tuple[float, float, float]:
    """Return (h_bar, h_q, h_rho) for a set of points.

    h_bar = N^(-1/2); h_q is the minimal pairwise distance; h_rho is the
    maximum nearest-neighbor distance (an empty-ball proxy for the fill
    distance).
    """
    n = len(points)
    if n < 2:
        raise ValueError("need at least two points for spacing statistics")
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=2)
    nn = dist[:, 1]
    return 1.0 / np.sqrt(n), float(nn.min()), float(nn.max())


# ---------------------------------------------------------------------------
# node generation


_ICOSA_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def _icosahedron_vertices() -> np.ndarray:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    return v / np.linalg.norm(v[0])


def generate_icosahedral_sphere(level: int) -> NodeSet:
    """Icosahedral nodes on the unit sphere: N = 10 * 4^level + 2."""
    if level < 0 or level > 7:
        raise ValueError("subdivision level must be in [0, 7]")
    verts = list(_icosahedron_vertices())
    faces = _ICOSA_FACES.tolist()
    for _ in range(level):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    points = np.array(verts)
    surface = Surface(Surface.SPHERE)
    return NodeSet.from_points(surface, points, points.copy())


def generate_staggered_torus(n_target: int) -> NodeSet:
    """Quasi-uniform staggered nodes on the torus (R=1, r=1/3).

    Rows of constant minor angle carry node counts proportional to the local
    circumference, with every other row offset by half a cell in the major
    angle.  The realized node count may differ from ``n_target`` by < 2%.
    """
    if n_target < 100:
        raise ValueError("n_target must be at least 100")
    area = 4.0 * np.pi**2 * TORUS_R * TORUS_r

    def build(s: float) -> np.ndarray:
        n_rows = max(3, int(round(2.0 * np.pi * TORUS_r / s)))
        psi = 2.0 * np.pi * np.arange(n_rows) / n_rows
        pts = []
        for i, p in enumerate(psi):
            rho = TORUS_R + TORUS_r * np.cos(p)
            m = max(3, int(round(2.0 * np.pi * rho / s)))
            phi = 2.0 * np.pi * (np.arange(m) + 0.5 * (i % 2)) / m
            pts.append(np.stack([rho * np.cos(phi), rho * np.sin(phi),
                                 np.full(m, TORUS_r * np.sin(p))], axis=1))
        return np.concatenate(pts)

    s = np.sqrt(area / n_target)
    best = None
    for _ in range(8):
        points = build(s)
        if best is None or abs(len(points) - n_target) < abs(len(best) - n_target):
            best = points
        if abs(len(points) - n_target) / n_target < 0.005:
            break
        s *= np.sqrt(len(points) / n_target)
    points = best
    surface = Surface(Surface.TORUS)
    return NodeSet.from_points(surface, points, surface.normal(points))


# ---------------------------------------------------------------------------
# point-cloud files


def load_point_cloud(path) -> NodeSet:
    """Read a node file: `x y z nx ny nz` per line, `#` comments allowed.

    Normals are rescaled to unit length (with a warning if they were not
    already unit).  Non-finite values and missing normals are hard errors
    naming the offending line.
    """
    points, normals = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 6:
                raise ValueError(
                    f"{path}:{lineno}: expected 6 columns `x y z nx ny nz`, "
                    f"got {len(parts)} (normals are required)")
            try:
                vals = [float(p) for p in parts[:6]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
            if not all(np.isfinite(vals)):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            points.append(vals[:3])
            normals.append(vals[3:])
    if not points:
        raise ValueError(f"{path}: no nodes found")
    points = np.array(points)
    normals = np.array(normals)
    lengths = np.linalg.norm(normals, axis=1)
    if np.any(lengths == 0.0):
        bad = int(np.argmax(lengths == 0.0))
        raise ValueError(f"{path}: zero-length normal at node {bad}")
    if np.any(np.abs(lengths - 1.0) > 1e-8):
        warnings.warn(f"{path}: normals rescaled to unit length")
    normals = normals / lengths[:, None]
    return NodeSet.from_points(Surface(Surface.POINT_CLOUD), points, normals)


def save_point_cloud(path, nodes: NodeSet) -> None:
    """Write a node file readable by :func:`load_point_cloud`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# x y z nx ny nz\n")
        for p, n in zip(nodes.points, nodes.normals):
            fh.write(" ".join(f"{v:.17g}" for v in (*p, *n)) + "\n")


# ---------------------------------------------------------------------------
# stencils


@dataclass(frozen=True)
class StencilSet:
    """Overlapped stencils covering every node exactly once.

    ``members[k]`` are the global indices of stencil k sorted by distance
    from the center (center first); ``retained_local[k]`` indexes into
    ``members[k]`` and selects the evaluation nodes this stencil owns.
    ``owner[j]`` maps global node j to its owning stencil.
    """

    delta: float
    centers: np.ndarray  # (K,) global index of each stencil center
    members: list  # K arrays of shape (n,)
    rho: np.ndarray  # (K,) retention radii
    retained_local: list  # K arrays of local indices into members[k]
    owner: np.ndarray  # (N,) stencil index owning each node
    owner_slot: np.ndarray  # (N,) position of the node in its owner's retained list

    @property
    def n_stencils(self) -> int:
        return len(self.centers)

    def retained_global(self, k: int) -> np.ndarray:
        return self.members[k][self.retained_local[k]]


def nearest_neighbors(points: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """All-node n-nearest-neighbor query, ties broken by lower global index."""
    tree = cKDTree(points)
    dist, idx = tree.query(points, k=n)
    if n == 1:
        dist, idx = dist[:, None], idx[:, None]
    # enforce deterministic (distance, index) ordering within each row
    order = np.lexsort((idx, dist), axis=1)
    rows = np.arange(len(points))[:, None]
    return dist[rows, order], idx[rows, order]


def build_stencils(nodes: NodeSet, n: int, delta: float) -> StencilSet:
    """Greedy overlapped-stencil construction.

    Sweeping nodes in ascending index order, any node not yet claimed by a
    previous stencil seeds a stencil of its n-1 nearest neighbors and claims
    all unclaimed members within the retention radius
    rho = (1 - delta) * (max member distance).
    """
    N = nodes.n_nodes
    if n > N:
        raise ValueError(f"stencil size n={n} exceeds node count N={N}")
    if not (0.0 < delta <= 1.0):
        raise ValueError("overlap parameter delta must be in (0, 1]")
    dist, idx = nearest_neighbors(nodes.points, n)

    claimed = np.zeros(N, dtype=bool)
    owner = np.full(N, -1, dtype=np.int64)
    owner_slot = np.full(N, -1, dtype=np.int64)
    centers, members, rhos, retained = [], [], [], []
    for k in range(N):
        if claimed[k]:
            continue
        mem = idx[k]
        rho = (1.0 - delta) * dist[k, -1]
        keep_mask = (~claimed[mem]) & (dist[k] <= rho)
        keep_mask[0] = True  # the center always belongs to its own stencil
        keep = np.flatnonzero(keep_mask)
        gkeep = mem[keep]
        claimed[gkeep] = True
        owner[gkeep] = len(centers)
        owner_slot[gkeep] = np.arange(len(keep))
        centers.append(k)
        members.append(mem)
        rhos.append(rho)
        retained.append(keep)
    return StencilSet(delta=delta, centers=np.array(centers, dtype=np.int64),
                      members=members, rho=np.array(rhos),
                      retained_local=retained, owner=owner,
                      owner_slot=owner_slot)
