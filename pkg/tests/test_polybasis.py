import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from math import comb

from mhv import polybasis as pbasis


def random_surface_stencil(seed, npts=40, degree=4):
    """Points on a small sphere patch, the degenerate case LOI must handle."""
    rng = np.random.default_rng(seed)
    center = rng.normal(size=3)
    center /= np.linalg.norm(center)
    pts = center + 0.15 * rng.normal(size=(npts, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts


class TestIndicesAndBox:
    def test_total_degree_count(self):
        for d in range(6):
            idx = pbasis.total_degree_indices(d)
            assert len(idx) == comb(d + 3, 3)
            assert idx.sum(axis=1).max() == d
            # graded: totals are non-decreasing
            assert np.all(np.diff(idx.sum(axis=1)) >= 0)

    def test_bounding_box_pads_degenerate_axes(self):
        pts = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 0.0]])
        box = pbasis.bounding_box(pts)
        lo, hi = box
        assert np.all(hi > lo)  # z axis padded despite zero extent


class TestPolyBasisCalculus:
    def _basis(self, rotated=True):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(60, 3))
        if rotated:
            center, rot = pbasis.principal_axes(pts)
        else:
            center, rot = None, None
        box = pbasis.bounding_box(pts if rot is None
                                  else (pts - center) @ rot)
        return pbasis.total_degree_basis(box, 4, center=center, rot=rot), pts

    @pytest.mark.parametrize("rotated", [False, True])
    def test_grad_matches_finite_differences(self, rotated):
        basis, pts = self._basis(rotated)
        x = pts[:5]
        g = basis.grad(x)
        h = 1e-6
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fd = (basis.eval(x + e) - basis.eval(x - e)) / (2 * h)
            assert np.abs(g[a] - fd).max() < 1e-7

    @pytest.mark.parametrize("rotated", [False, True])
    def test_second_derivs_match_finite_differences(self, rotated):
        basis, pts = self._basis(rotated)
        x = pts[:5]
        s = basis.second_derivs(x)
        h = 1e-4
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fd = (basis.eval(x + e) - 2 * basis.eval(x)
                  + basis.eval(x - e)) / h**2
            assert np.abs(s[a] - fd).max() < 1e-5

    def test_rotation_preserves_polynomial_span(self):
        # the same function expanded in rotated and axis-aligned bases must
        # evaluate identically when fitted on enough points
        rng = np.random.default_rng(7)
        pts = rng.uniform(-1, 1, size=(80, 3))

        def target(p):
            return 1.0 + p[:, 0] - 2 * p[:, 1] * p[:, 2] + p[:, 0] ** 3

        for rotated in (False, True):
            if rotated:
                center, rot = pbasis.principal_axes(pts)
                box = pbasis.bounding_box((pts - center) @ rot)
                basis = pbasis.total_degree_basis(box, 3, center, rot)
            else:
                basis = pbasis.total_degree_basis(pbasis.bounding_box(pts), 3)
            A = basis.eval(pts)
            coef, *_ = np.linalg.lstsq(A, target(pts), rcond=None)
            q = rng.uniform(-1, 1, size=(20, 3))
            assert np.abs(basis.eval(q) @ coef - target(q)).max() < 1e-9


class TestPrincipalAxes:
    def test_orthogonal_and_right_handed(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(50, 3)) * [3.0, 1.0, 0.1]
        center, rot = pbasis.principal_axes(pts)
        assert np.allclose(rot.T @ rot, np.eye(3), atol=1e-12)
        assert np.linalg.det(rot) == pytest.approx(1.0)

    def test_least_variance_axis_is_surface_normal(self):
        pts = random_surface_stencil(5)
        center, rot = pbasis.principal_axes(pts)
        approx_n = rot[:, 2]
        true_n = center / np.linalg.norm(center)
        assert abs(abs(approx_n @ true_n) - 1.0) < 0.05


class TestLoiAdapt:
    def test_generic_points_keep_full_dimension(self):
        rng = np.random.default_rng(11)
        pts = rng.uniform(-1, 1, size=(60, 3))
        basis = pbasis.loi_adapt(pts, 4, 1e-3)
        assert basis.size == comb(4 + 3, 3)

    @pytest.mark.parametrize("degree", [2, 3, 4, 5])
    def test_sphere_stencil_drops_surface_multiples(self, degree):
        # polynomials vanishing on the unit sphere are multiples of
        # (x^2+y^2+z^2-1); there are C(degree+1, 3) of them up to `degree`
        pts = random_surface_stencil(2, npts=80, degree=degree)
        basis = pbasis.loi_adapt(pts, degree, 1e-3)
        expected = comb(degree + 3, 3) - comb(degree + 1, 3)
        assert basis.size == expected

    def test_evaluation_matrix_has_orthonormal_columns(self):
        pts = random_surface_stencil(4, npts=60)
        basis = pbasis.loi_adapt(pts, 4, 1e-3)
        A = basis.eval(pts)
        gram = A.T @ A
        assert np.abs(gram - np.eye(basis.size)).max() < 1e-10

    def test_constants_and_linears_in_span(self):
        # low-degree polynomials survive adaptation exactly: fit them
        pts = random_surface_stencil(9, npts=50)
        basis = pbasis.loi_adapt(pts, 4, 1e-3)
        A = basis.eval(pts)
        for target in (np.ones(len(pts)), pts[:, 0], pts[:, 1] - 2 * pts[:, 2]):
            coef, *_ = np.linalg.lstsq(A, target, rcond=None)
            assert np.abs(A @ coef - target).max() < 1e-10

    def test_gradients_consistent_after_adaptation(self):
        pts = random_surface_stencil(6, npts=50)
        basis = pbasis.loi_adapt(pts, 3, 1e-3)
        x = pts[:4]
        g = basis.grad(x)
        h = 1e-6
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fd = (basis.eval(x + e) - basis.eval(x - e)) / (2 * h)
            assert np.abs(g[a] - fd).max() < 1e-6

    def test_invalid_tau(self):
        pts = random_surface_stencil(0)
        for tau in (0.0, 1.0, -0.5):
            with pytest.raises(ValueError):
                pbasis.loi_adapt(pts, 3, tau)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 5000), degree=st.integers(1, 4))
    def test_size_never_exceeds_rank_bound(self, seed, degree):
        pts = random_surface_stencil(seed, npts=45)
        basis = pbasis.loi_adapt(pts, degree, 1e-3)
        assert 1 <= basis.size <= min(len(pts), comb(degree + 3, 3))
        # conditioning guarantee: singular values of the evaluation matrix
        s = np.linalg.svd(basis.eval(pts), compute_uv=False)
        assert s[-1] / s[0] > 1e-6
