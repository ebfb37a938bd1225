import numpy as np
import pytest

from hypkob import (BoundaryGraph, BoundaryMap, ConfigError, ImageOffBoundary,
                    boundary_geodesic, d_H, lipschitz_details,
                    lipschitz_estimate)


@pytest.fixture(scope="module")
def iso_graph(ball, structure):
    return BoundaryGraph.build(ball, structure, n_nodes=200, k_neighbors=8,
                               anisotropy=1.0, seed=3)


def test_unit_anisotropy_weights_are_chords(iso_graph):
    ii, jj, horiz, trans = iso_graph.edge_components()
    chords = np.linalg.norm(iso_graph.nodes[ii] - iso_graph.nodes[jj], axis=1)
    assert np.allclose(np.sqrt(horiz**2 + trans**2), chords, atol=1e-12)
    w = np.asarray(iso_graph.adjacency[ii, jj]).ravel()
    assert np.allclose(w, chords, atol=1e-12)


def test_weights_monotone_in_anisotropy(ball, structure, iso_graph):
    g8 = BoundaryGraph.build(ball, structure, n_nodes=200, k_neighbors=8,
                             anisotropy=8.0, seed=3)
    assert np.array_equal(g8.nodes, iso_graph.nodes)
    ii, jj, _, _ = iso_graph.edge_components()
    w1 = np.asarray(iso_graph.adjacency[ii, jj]).ravel()
    w8 = np.asarray(g8.adjacency[ii, jj]).ravel()
    chords = np.linalg.norm(g8.nodes[ii] - g8.nodes[jj], axis=1)
    assert np.all(w8 >= w1 - 1e-12)
    assert np.all(w8 >= chords - 1e-12)
    i, j = int(ii[0]), int(jj[-1])
    assert g8.distance_nodes(i, j) >= iso_graph.distance_nodes(i, j) - 1e-12


def test_anisotropy_below_one_rejected(ball, structure):
    with pytest.raises(ConfigError):
        BoundaryGraph.build(ball, structure, n_nodes=64, k_neighbors=6,
                            anisotropy=0.5, seed=0)


def test_distance_dominates_straight_chord(graph):
    rng = np.random.default_rng(8)
    m = graph.nodes.shape[0]
    for _ in range(20):
        i, j = rng.integers(0, m, size=2)
        lo = np.linalg.norm(graph.nodes[i] - graph.nodes[j])
        assert graph.distance_nodes(int(i), int(j)) >= lo - 1e-12


def test_geodesic_matches_distance(graph):
    p = np.array([1.0, 0.0, 0.0, 0.0])
    q = np.array([0.0, 0.0, 1.0, 0.0])
    nodes, total = graph.geodesic(p, q)
    assert total == graph.distance(p, q)
    assert d_H(graph, p, q) == total
    poly = boundary_geodesic(graph, p, q)
    assert np.array_equal(poly, nodes)
    i, j = graph.snap(np.stack([p, q]))
    assert np.array_equal(nodes[0], graph.nodes[int(i)])
    assert np.array_equal(nodes[-1], graph.nodes[int(j)])
    # summed edge weights reproduce the Dijkstra total
    steps = [float(graph.adjacency[a, b]) for a, b in
             zip(graph.snap(nodes[:-1]), graph.snap(nodes[1:]))]
    assert abs(sum(steps) - total) < 1e-10


def test_distance_symmetry_and_identity(graph):
    p = graph.nodes[17]
    q = graph.nodes[311]
    assert graph.distance(p, p) == 0.0
    assert abs(graph.distance(p, q) - graph.distance(q, p)) < 1e-9


def test_local_distance_resolves_small_scales(graph):
    base = np.array([1.0, 0.0, 0.0, 0.0])
    th = 0.01
    near = np.array([np.cos(th), np.sin(th), 0.0, 0.0])
    dloc = graph.distance_local(base, near)
    assert dloc > 0.0
    direct = float(graph.chord_cost(base[None], near[None])[0])
    assert dloc <= direct + 1e-12
    batch = graph.distance_local_batch(base[None], near[None])
    assert batch.shape == (1,)
    assert abs(batch[0] - graph.distance_local(base, near, k=6)) < 1e-9


def test_save_load_round_trip(graph, tmp_path):
    path = str(tmp_path / "graph.npz")
    graph.save(path)
    back = BoundaryGraph.load(path, graph.domain, graph.structure)
    assert np.array_equal(back.nodes, graph.nodes)
    assert back.params == graph.params
    assert back.distance_nodes(3, 77) == graph.distance_nodes(3, 77)


def test_refinement_increments_level(ball, structure):
    g = BoundaryGraph.build(ball, structure, n_nodes=100, k_neighbors=8,
                            anisotropy=8.0, seed=1)
    assert g.params.get("refinement_level", 0) == 0
    g2 = g.refine()
    assert g2.params["refinement_level"] == 1
    assert g2.nodes.shape[0] == 2 * g.nodes.shape[0]
    assert g2.params["anisotropy"] == g.params["anisotropy"]


def test_antipodal_distance_stabilizes(ball, structure):
    p = np.array([1.0, 0.0, 0.0, 0.0])
    g = BoundaryGraph.build(ball, structure, n_nodes=300, k_neighbors=10,
                            anisotropy=8.0, seed=2)
    d1 = g.distance(p, -p)
    d2 = g.refine().distance(p, -p)
    assert np.isfinite(d1) and d1 >= 2.0 - 1e-9
    assert abs(d2 - d1) / d1 < 0.25


def test_selection_strategies_build(ball, structure):
    for sel in ("halton", "curvature"):
        g = BoundaryGraph.build(ball, structure, n_nodes=80, k_neighbors=8,
                                anisotropy=4.0, seed=0, selection=sel)
        assert g.nodes.shape == (80, 4)
    with pytest.raises(ConfigError):
        BoundaryGraph.build(ball, structure, n_nodes=80, k_neighbors=8,
                            anisotropy=4.0, seed=0, selection="nope")


def test_lipschitz_identity_is_one(graph):
    ident = BoundaryMap(lambda X: X, name="identity")
    rep = lipschitz_details(graph, graph, ident, n_pairs=512, seed=0)
    assert rep.ratio == 1.0
    assert rep.n_pairs > 0
    assert lipschitz_estimate(graph, graph, ident, n_pairs=512, seed=0) == 1.0


def test_lipschitz_rotation_near_one(graph):
    c, s = np.cos(0.7), np.sin(0.7)
    R = np.array([[c, -s, 0, 0], [s, c, 0, 0],
                  [0, 0, c, -s], [0, 0, s, c]])
    rot = BoundaryMap(lambda X: X @ R.T, name="rotation")
    ratio = lipschitz_estimate(graph, graph, rot, n_pairs=1024, seed=1)
    assert 0.5 < ratio < 2.0


def test_lipschitz_constant_map_collapses(graph):
    target = graph.nodes[0]
    const = BoundaryMap(lambda X: np.broadcast_to(target, X.shape).copy(),
                        name="constant")
    ratio = lipschitz_estimate(graph, graph, const, n_pairs=256, seed=0)
    assert ratio == 0.0


def test_off_boundary_image_rejected(graph):
    shrink = BoundaryMap(lambda X: 0.8 * X, name="shrink")
    with pytest.raises(ImageOffBoundary):
        lipschitz_details(graph, graph, shrink, n_pairs=64, seed=0)
