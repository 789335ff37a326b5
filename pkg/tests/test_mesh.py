import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshgen import annulus_mesh, msh_text, rect_mesh, rect_msh_text, single_triangle_mesh
from viscofrac.errors import LipMeshError, MshParseError
from viscofrac.mesh import BaseMesh, build_lip_mesh, load_msh, shortest_path_distances


@pytest.fixture
def square_msh(tmp_path):
    path = tmp_path / "square.msh"
    path.write_text(rect_msh_text(1, 1, 1.0, 1.0))
    return path


class TestLoadMsh:
    def test_single_right_triangle(self, tmp_path):
        path = tmp_path / "tri.msh"
        path.write_text(msh_text([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)]))
        mesh = load_msh(path)
        assert mesh.n_elements == 1
        assert mesh.element_area[0] == pytest.approx(0.5)
        assert np.allclose(mesh.shape_grads[0], [(-1, -1), (1, 0), (0, 1)])

    def test_unit_square(self, square_msh):
        mesh = load_msh(square_msh)
        assert mesh.n_elements == 2
        assert mesh.element_area.sum() == pytest.approx(1.0)
        for name in ("left", "right", "bottom", "top"):
            assert name in mesh.node_sets
            assert len(mesh.node_sets[name]) == 2

    def test_quad_element_rejected(self, tmp_path):
        text = "\n".join(
            [
                "$MeshFormat",
                "2.2 0 8",
                "$EndMeshFormat",
                "$Nodes",
                "4",
                "1 0 0 0",
                "2 1 0 0",
                "3 1 1 0",
                "4 0 1 0",
                "$EndNodes",
                "$Elements",
                "1",
                "1 3 2 0 0 1 2 3 4",
                "$EndElements",
            ]
        )
        path = tmp_path / "quad.msh"
        path.write_text(text)
        with pytest.raises(MshParseError, match="unsupported element type"):
            load_msh(path)

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "v4.msh"
        path.write_text("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n")
        with pytest.raises(MshParseError, match="unsupported MSH version"):
            load_msh(path)

    def test_degenerate_triangle(self, tmp_path):
        path = tmp_path / "degen.msh"
        path.write_text(msh_text([(0, 0), (1, 0), (2, 0), (0, 1)], [(0, 1, 2), (0, 1, 3)]))
        with pytest.raises(MshParseError, match="degenerate"):
            load_msh(path)
        # the error names the line of the offending element
        with pytest.raises(MshParseError, match=r":\d+:"):
            load_msh(path)

    def test_shape_grads_sum_to_zero(self, square_msh):
        mesh = load_msh(square_msh)
        assert np.allclose(mesh.shape_grads.sum(axis=1), 0.0, atol=1e-14)


class TestBaseMesh:
    def test_node_set_validation(self):
        with pytest.raises(ValueError, match="invalid node"):
            BaseMesh(
                np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                np.array([[0, 1, 2]]),
                {"bad": np.array([7])},
            )

    def test_orientation_enforced(self):
        mesh = BaseMesh(
            np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 2, 1]])
        )
        assert mesh.element_area[0] == pytest.approx(0.5)

    def test_contains_points(self):
        mesh = rect_mesh(4, 4, 1.0, 1.0)
        pts = np.array([[0.5, 0.5], [1.5, 0.5], [-0.1, 0.2], [0.99, 0.99]])
        assert list(mesh.contains_points(pts)) == [True, False, False, True]


class TestLipMesh:
    def test_four_triangle_square(self):
        # 4 base triangles around the center of a 2x1 split -> 4 lip vertices
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
        tris = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
        mesh = BaseMesh(nodes, tris)
        lip = build_lip_mesh(mesh)
        assert lip.n_vertices == 4
        assert len(lip.triangles) >= 2
        assert np.allclose(lip.vertices, mesh.centroids())

    def test_too_few_elements(self):
        with pytest.raises(LipMeshError):
            build_lip_mesh(single_triangle_mesh())

    def test_collinear_centroids_rejected(self):
        # strip of 2 elements + 1 whose centroids are exactly collinear: the
        # centroid triangulation degenerates and construction must fail
        nodes = np.array(
            [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (0.5, 1.0), (1.5, 1.0), (2.5, 1.0)]
        )
        tris = np.array([(0, 1, 4), (1, 2, 5), (2, 3, 6)])
        with pytest.raises(LipMeshError):
            build_lip_mesh(BaseMesh(nodes, tris))

    def test_annulus_respects_hole(self):
        mesh = annulus_mesh(n_theta=20, n_r=2, r0=1.0, r1=2.0)
        lip = build_lip_mesh(mesh)
        pts = lip.vertices
        for tri in lip.triangles:
            centroid = pts[tri].mean(axis=0)
            assert mesh.contains_points(centroid[None])[0]
        # no lip edge may cross the hole: chord midpoints stay in the domain
        mids = 0.5 * (pts[lip.edges[:, 0]] + pts[lip.edges[:, 1]])
        assert mesh.contains_points(mids).all()

    def test_grad_op_kills_constants(self):
        lip = build_lip_mesh(rect_mesh(5, 4, 2.0, 1.0))
        const = np.ones(lip.n_vertices) * 0.37
        grads = np.einsum("tkj,tj->tk", lip.grad_op, const[lip.triangles])
        assert np.allclose(grads, 0.0, atol=1e-12)

    def test_edge_lengths_euclidean(self):
        lip = build_lip_mesh(rect_mesh(4, 3, 2.0, 1.5))
        d = lip.vertices[lip.edges[:, 1]] - lip.vertices[lip.edges[:, 0]]
        assert np.allclose(lip.edge_lengths, np.hypot(d[:, 0], d[:, 1]), atol=1e-14)


def _floyd_warshall(lip):
    n = lip.n_vertices
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for (a, b), ln in zip(lip.edges, lip.edge_lengths):
        dist[a, b] = min(dist[a, b], ln)
        dist[b, a] = min(dist[b, a], ln)
    for k in range(n):
        dist = np.minimum(dist, dist[:, k, None] + dist[None, k, :])
    return dist


class TestShortestPaths:
    def test_source_is_zero(self):
        lip = build_lip_mesh(rect_mesh(4, 4, 1.0, 1.0))
        d = shortest_path_distances(lip, [3])
        assert d[3] == 0.0
        assert np.all(d >= 0.0)

    def test_line_graph(self):
        from meshgen import make_chain_lip

        lip = make_chain_lip([0.0, 1.0, 2.0])
        assert np.allclose(shortest_path_distances(lip, [0]), [0.0, 1.0, 2.0])

    def test_matches_floyd_warshall(self):
        lip = build_lip_mesh(rect_mesh(5, 5, 2.0, 2.0))  # 50 vertices
        dist = _floyd_warshall(lip)
        for src in (0, 7, 23):
            d = shortest_path_distances(lip, [src])
            assert np.allclose(d, dist[src], atol=1e-12)

    def test_multi_source(self):
        lip = build_lip_mesh(rect_mesh(5, 5, 2.0, 2.0))
        dist = _floyd_warshall(lip)
        d = shortest_path_distances(lip, [0, 24])
        assert np.allclose(d, np.minimum(dist[0], dist[24]), atol=1e-12)

    def test_empty_sources_rejected(self):
        lip = build_lip_mesh(rect_mesh(3, 3, 1.0, 1.0))
        with pytest.raises(ValueError):
            shortest_path_distances(lip, [])

    def test_disconnected_vertex_inf(self):
        from viscofrac.mesh import LipMesh

        lip = LipMesh(
            np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]]),
            np.zeros((0, 3)),
            np.array([[0, 1]]),
            np.array([1.0]),
            np.zeros((0, 2, 3)),
        )
        d = shortest_path_distances(lip, [0])
        assert d[2] == np.inf

    @given(st.integers(min_value=0, max_value=29), st.integers(min_value=0, max_value=29))
    @settings(max_examples=30, deadline=None)
    def test_triangle_inequality_and_euclid_lower_bound(self, a, b):
        lip = build_lip_mesh(rect_mesh(5, 3, 2.0, 1.0))  # 30 vertices
        da = shortest_path_distances(lip, [a])
        db = shortest_path_distances(lip, [b])
        # dist(a,c) <= dist(a,b) + dist(b,c)
        assert np.all(da <= da[b] + db + 1e-12)
        # graph distance dominates the Euclidean distance
        euclid = np.hypot(*(lip.vertices - lip.vertices[a]).T)
        assert np.all(da >= euclid - 1e-12)
