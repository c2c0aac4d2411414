import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhv import geometry as geo


class TestSurface:
    def test_sphere_normals_and_residual(self):
        rng = np.random.default_rng(0)
        p = rng.normal(size=(200, 3))
        p /= np.linalg.norm(p, axis=1, keepdims=True)
        s = geo.Surface(geo.Surface.SPHERE)
        assert np.allclose(s.normal(p), p)
        assert np.abs(s.implicit_residual(p)).max() < 1e-12

    def test_torus_normals_unit_and_orthogonal_to_tangents(self):
        nodes = geo.generate_staggered_torus(500)
        s = nodes.surface
        n = s.normal(nodes.points)
        assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
        t1, t2 = s.tangents(nodes.points)
        assert np.abs(np.einsum("ij,ij->i", n, t1)).max() < 1e-12
        assert np.abs(np.einsum("ij,ij->i", n, t2)).max() < 1e-12
        assert np.abs(s.implicit_residual(nodes.points)).max() < 1e-12

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            geo.Surface("klein-bottle")


class TestNodeGeneration:
    @pytest.mark.parametrize("level,count", [(0, 12), (1, 42), (3, 642),
                                             (4, 2562)])
    def test_icosahedral_counts(self, level, count):
        nodes = geo.generate_icosahedral_sphere(level)
        assert nodes.n_nodes == count
        assert np.allclose(np.linalg.norm(nodes.points, axis=1), 1.0)

    def test_icosahedral_no_duplicates(self):
        nodes = geo.generate_icosahedral_sphere(3)
        assert nodes.h_q > 0.5 * nodes.h_rho  # quasi-uniform

    @pytest.mark.parametrize("target", [500, 2400])
    def test_staggered_torus_size_and_surface(self, target):
        nodes = geo.generate_staggered_torus(target)
        assert abs(nodes.n_nodes - target) / target < 0.02
        s = geo.Surface(geo.Surface.TORUS)
        assert np.abs(s.implicit_residual(nodes.points)).max() < 1e-12

    def test_spacing_measures(self):
        nodes = geo.generate_staggered_torus(2400)
        assert nodes.h_bar == pytest.approx(1.0 / np.sqrt(nodes.n_nodes))
        assert 0.0 < nodes.h_q <= nodes.h_rho
        # paper-scale sanity for this node set
        assert nodes.h_bar == pytest.approx(0.0204, abs=5e-4)


class TestPointCloudIO:
    def test_round_trip(self, tmp_path):
        nodes = geo.generate_staggered_torus(300)
        path = tmp_path / "nodes.txt"
        geo.save_point_cloud(path, nodes)
        loaded = geo.load_point_cloud(path)
        assert np.allclose(loaded.points, nodes.points)
        assert np.allclose(loaded.normals, nodes.normals)
        assert loaded.surface.kind == geo.Surface.POINT_CLOUD

    def test_missing_normals_is_error(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1.0 0.0 0.0\n")
        with pytest.raises(ValueError, match="normals are required"):
            geo.load_point_cloud(path)

    def test_non_finite_is_error(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 0 0 nan 0 1\n")
        with pytest.raises(ValueError, match="non-finite"):
            geo.load_point_cloud(path)

    def test_normals_rescaled_with_warning(self, tmp_path):
        path = tmp_path / "n.txt"
        path.write_text("1 0 0 2 0 0\n0 1 0 0 3 0\n")
        with pytest.warns(UserWarning, match="rescaled"):
            loaded = geo.load_point_cloud(path)
        assert np.allclose(np.linalg.norm(loaded.normals, axis=1), 1.0)


class TestStencils:
    def _nodes(self, n=600):
        return geo.generate_staggered_torus(n)

    def test_partition_covers_every_node_once(self):
        nodes = self._nodes()
        st_ = geo.build_stencils(nodes, 31, 0.7)
        seen = np.zeros(nodes.n_nodes, dtype=int)
        for k in range(st_.n_stencils):
            seen[st_.retained_global(k)] += 1
        assert np.all(seen == 1)
        assert np.all(st_.owner >= 0)

    def test_members_sorted_by_distance_center_first(self):
        nodes = self._nodes()
        st_ = geo.build_stencils(nodes, 31, 0.7)
        for k in range(0, st_.n_stencils, 7):
            mem = st_.members[k]
            assert mem[0] == st_.centers[k]
            d = np.linalg.norm(nodes.points[mem]
                               - nodes.points[st_.centers[k]], axis=1)
            assert np.all(np.diff(d) >= -1e-15)

    def test_delta_one_retains_only_center(self):
        nodes = self._nodes()
        st_ = geo.build_stencils(nodes, 31, 1.0)
        assert st_.n_stencils == nodes.n_nodes
        for k in range(st_.n_stencils):
            assert np.array_equal(st_.retained_local[k], [0])

    def test_retention_radius_definition(self):
        nodes = self._nodes()
        delta = 0.6
        st_ = geo.build_stencils(nodes, 31, delta)
        k = 0
        mem = st_.members[k]
        d = np.linalg.norm(nodes.points[mem] - nodes.points[mem[0]], axis=1)
        assert st_.rho[k] == pytest.approx((1 - delta) * d.max())
        # all retained nodes lie within the retention radius
        dd = d[st_.retained_local[k]]
        assert dd.max() <= st_.rho[k] + 1e-15

    def test_invalid_parameters(self):
        nodes = self._nodes(300)
        with pytest.raises(ValueError):
            geo.build_stencils(nodes, nodes.n_nodes + 1, 0.7)
        with pytest.raises(ValueError):
            geo.build_stencils(nodes, 11, 0.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000),
           npts=st.integers(40, 120),
           delta=st.floats(0.1, 1.0))
    def test_partition_property_random_clouds(self, seed, npts, delta):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(npts, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        pts = np.unique(np.round(pts, 12), axis=0)
        normals = pts.copy()
        nodes = geo.NodeSet.from_points(geo.Surface(geo.Surface.POINT_CLOUD),
                                        pts, normals)
        st_ = geo.build_stencils(nodes, min(15, len(pts)), delta)
        seen = np.zeros(nodes.n_nodes, dtype=int)
        for k in range(st_.n_stencils):
            seen[st_.retained_global(k)] += 1
        assert np.all(seen == 1)
