import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgecert.graph import (
    Graph,
    ParseError,
    SbmConfig,
    StructVector,
    from_struct_vector,
    khop_subgraph,
    load_graph,
    normalized_adjacency,
    pair_slot,
    sbm_generate,
    slot_pair,
    to_struct_vector,
)


def make_graph(n, edges, f_dim=2, labels=None):
    return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2),
                 np.zeros((n, f_dim)), labels)


# ---------------------------------------------------------------- data model


def test_graph_rejects_self_loops():
    with pytest.raises(ValueError):
        make_graph(3, [[1, 1]])


def test_graph_rejects_duplicates():
    with pytest.raises(ValueError):
        make_graph(3, [[0, 1], [0, 1]])


def test_graph_rejects_out_of_range():
    with pytest.raises(ValueError):
        make_graph(3, [[0, 5]])


def test_graph_sorts_edges():
    g = make_graph(4, [[2, 3], [0, 1], [0, 3]])
    assert g.edges.tolist() == [[0, 1], [0, 3], [2, 3]]


def test_graph_feature_row_mismatch():
    with pytest.raises(ValueError):
        Graph(3, np.zeros((0, 2), dtype=np.int64), np.zeros((2, 4)))


def test_graph_label_length_mismatch():
    with pytest.raises(ValueError):
        make_graph(3, [], labels=np.array([0, 1]))


# ---------------------------------------------------------------- load_graph


def write(path, lines):
    path.write_text("\n".join(lines) + "\n")


def test_load_graph_canonicalizes_and_reports(tmp_path):
    write(tmp_path / "e.txt", ["0 1", "1 0", "2 2"])
    write(tmp_path / "x.txt", ["0 1.0 2.0", "1 0.5 0.5", "2 0.0 1.0"])
    g, report = load_graph(tmp_path / "e.txt", tmp_path / "x.txt")
    assert g.n_nodes == 3
    assert g.edges.tolist() == [[0, 1]]
    assert report.n_duplicate_edges == 1
    assert report.n_self_loops == 1


def test_load_graph_empty_edge_file(tmp_path):
    write(tmp_path / "e.txt", ["# no edges"])
    write(tmp_path / "x.txt", ["0 1.0", "1 2.0"])
    g, report = load_graph(tmp_path / "e.txt", tmp_path / "x.txt")
    assert g.n_nodes == 2
    assert g.n_edges == 0
    assert report == report.__class__()


def test_load_graph_out_of_range_edge(tmp_path):
    write(tmp_path / "e.txt", ["0 5"])
    write(tmp_path / "x.txt", ["0 1.0", "1 2.0", "2 3.0"])
    with pytest.raises(ValueError, match="out of range"):
        load_graph(tmp_path / "e.txt", tmp_path / "x.txt")


def test_load_graph_malformed_line_number(tmp_path):
    write(tmp_path / "e.txt", ["0 1", "zap"])
    write(tmp_path / "x.txt", ["0 1.0", "1 2.0"])
    with pytest.raises(ParseError, match=":2:"):
        load_graph(tmp_path / "e.txt", tmp_path / "x.txt")


def test_load_graph_missing_feature_row(tmp_path):
    write(tmp_path / "e.txt", ["0 1"])
    write(tmp_path / "x.txt", ["0 1.0", "2 2.0"])
    with pytest.raises(ValueError, match="missing feature rows"):
        load_graph(tmp_path / "e.txt", tmp_path / "x.txt")


def test_load_graph_labels_and_scientific_notation(tmp_path):
    write(tmp_path / "e.txt", ["0 1"])
    write(tmp_path / "x.txt", ["0 1e-3 2.5E2", "1 -1e1 0.0"])
    write(tmp_path / "y.txt", ["0 1", "1 0"])
    g, _ = load_graph(tmp_path / "e.txt", tmp_path / "x.txt", tmp_path / "y.txt")
    assert g.features[0, 0] == 1e-3
    assert g.features[0, 1] == 250.0
    assert g.labels.tolist() == [1, 0]


def test_load_graph_incomplete_labels(tmp_path):
    write(tmp_path / "e.txt", ["0 1"])
    write(tmp_path / "x.txt", ["0 1.0", "1 2.0"])
    write(tmp_path / "y.txt", ["0 1"])
    with pytest.raises(ValueError, match="without labels"):
        load_graph(tmp_path / "e.txt", tmp_path / "x.txt", tmp_path / "y.txt")


# ------------------------------------------------------------------ sbm


def sbm_cfg(**kw):
    base = dict(
        blocks=2,
        nodes_per_block=4,
        p_in=1.0,
        p_out=0.0,
        feature_centers=np.array([[1.0, 1.0], [-1.0, -1.0]]),
        feature_noise_sd=0.0,
        seed=0,
    )
    base.update(kw)
    return SbmConfig(**base)


def test_sbm_two_disjoint_cliques():
    g = sbm_generate(sbm_cfg())
    assert g.n_nodes == 8
    assert g.n_edges == 12  # 2 * C(4,2)
    assert all((u < 4) == (v < 4) for u, v in g.edges.tolist())
    assert g.labels.tolist() == [0] * 4 + [1] * 4


def test_sbm_edgeless():
    g = sbm_generate(sbm_cfg(p_in=0.0, p_out=0.0))
    assert g.n_edges == 0


def test_sbm_edge_count_within_3_sigma():
    # binomial oracle: mean = 2*C(50,2)*0.2 + 2500*0.01 = 515
    cfg = sbm_cfg(nodes_per_block=50, p_in=0.2, p_out=0.01, seed=42)
    g = sbm_generate(cfg)
    mean = 2 * (50 * 49 // 2) * 0.2 + 50 * 50 * 0.01
    var = 2 * (50 * 49 // 2) * 0.2 * 0.8 + 50 * 50 * 0.01 * 0.99
    assert abs(g.n_edges - mean) <= 3 * np.sqrt(var)


def test_sbm_deterministic():
    cfg = sbm_cfg(nodes_per_block=20, p_in=0.3, p_out=0.05, feature_noise_sd=0.5, seed=9)
    assert sbm_generate(cfg) == sbm_generate(cfg)


def test_sbm_config_validates_probabilities():
    with pytest.raises(ValueError):
        sbm_cfg(p_in=0.1, p_out=0.5)


# ------------------------------------------------------- normalized adjacency


def test_adjacency_isolated_node():
    g = make_graph(1, [])
    A = normalized_adjacency(g).toarray()
    assert np.allclose(A, [[1.0]])


def test_adjacency_single_edge():
    g = make_graph(2, [[0, 1]])
    A = normalized_adjacency(g).toarray()
    assert np.allclose(A, [[0.5, 0.5], [0.5, 0.5]])


def test_adjacency_symmetric_entries_bounded():
    g = sbm_generate(sbm_cfg(nodes_per_block=15, p_in=0.4, p_out=0.1, seed=3))
    A = normalized_adjacency(g).toarray()
    assert np.allclose(A, A.T)
    assert A.min() >= 0.0 and A.max() <= 1.0
    row_sums = A.sum(axis=1)
    assert np.all(row_sums <= np.sqrt(g.degrees() + 1) + 1e-12)


def test_adjacency_permutation_equivariant():
    g = make_graph(4, [[0, 1], [1, 2], [2, 3]])
    perm = np.array([2, 0, 3, 1])  # new id of old node i is perm[i]
    edges = np.sort(perm[g.edges], axis=1)
    gp = Graph(4, edges, g.features[np.argsort(perm)])
    A = normalized_adjacency(g).toarray()
    Ap = normalized_adjacency(gp).toarray()
    assert np.allclose(Ap[np.ix_(perm, perm)], A)


# ------------------------------------------------------------------- khop


def test_khop_path_one_hop():
    g = make_graph(3, [[0, 1], [1, 2]])
    sub = khop_subgraph(g, 0, 1)
    assert sub.graph.n_nodes == 2
    assert sub.graph.edges.tolist() == [[0, 1]]
    assert sub.node_map == {0: 0, 1: 1}
    assert sub.center == 0


def test_khop_zero_hops():
    g = make_graph(3, [[0, 1], [1, 2]])
    sub = khop_subgraph(g, 1, 0)
    assert sub.graph.n_nodes == 1
    assert sub.graph.n_edges == 0
    assert sub.center == 0


def test_khop_clique():
    g = make_graph(4, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
    sub = khop_subgraph(g, 2, 1)
    assert sub.graph.n_nodes == 4
    assert sub.graph.n_edges == 6


def _bfs_oracle(g, center, k):
    dist = {center: 0}
    frontier = [center]
    nbrs = g.neighbor_sets()
    for level in range(1, k + 1):
        nxt = []
        for u in frontier:
            for v in nbrs[u]:
                if v not in dist:
                    dist[v] = level
                    nxt.append(v)
        frontier = nxt
    return set(dist)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3))
def test_khop_matches_bfs_oracle(seed, k):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 25))
    cfg = sbm_cfg(blocks=1, nodes_per_block=n, p_in=0.2,
                  feature_centers=np.zeros((1, 2)), seed=seed)
    g = sbm_generate(cfg)
    center = int(rng.integers(n))
    sub = khop_subgraph(g, center, k)
    assert set(sub.node_map) == _bfs_oracle(g, center, k)


# -------------------------------------------------------------- struct vector


def test_slot_formula_by_hand():
    g = make_graph(3, [[0, 1], [1, 2]])
    v = to_struct_vector(g)
    assert v.universe == 3
    assert v.present.tolist() == [0, 2]


def test_struct_vector_edgeless():
    v = to_struct_vector(make_graph(4, []))
    assert v.universe == 6
    assert v.present.size == 0


def test_from_struct_vector_triangle():
    v = StructVector(3, np.array([0, 1, 2]))
    g = from_struct_vector(v, 3, np.zeros((3, 2)))
    assert g.edges.tolist() == [[0, 1], [0, 2], [1, 2]]


def test_from_struct_vector_universe_mismatch():
    with pytest.raises(ValueError, match="universe"):
        from_struct_vector(StructVector(3, np.array([0])), 4, np.zeros((4, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30))
def test_slot_encoding_is_bijection(n):
    uu, vv = np.triu_indices(n, k=1)
    slots = pair_slot(uu, vv, n)
    assert sorted(slots.tolist()) == list(range(n * (n - 1) // 2))
    du, dv = slot_pair(slots, n)
    assert np.array_equal(du, uu)
    assert np.array_equal(dv, vv)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_struct_vector_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 50))
    uu, vv = np.triu_indices(n, k=1)
    keep = rng.random(uu.size) < 0.3
    g = Graph(n, np.column_stack([uu[keep], vv[keep]]), rng.standard_normal((n, 3)))
    v = to_struct_vector(g)
    assert from_struct_vector(v, n, g.features) == g


def test_struct_vector_validates_slots():
    with pytest.raises(ValueError):
        StructVector(3, np.array([0, 0]))
    with pytest.raises(ValueError):
        StructVector(3, np.array([3]))
