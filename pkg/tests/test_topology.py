import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import graphbrackets.topology as topo
from graphbrackets.topology import (Cochain, ComplexError, apply_d, apply_d_transpose, build_complex,
                                    complete_graph, curl1, curl1_t, cycle_graph, div0, grad0,
                                    hodge_decompose, laplacian0, load_graph, ring_lattice, save_graph)

from conftest import random_graph


def test_triangle_graph_counts():
    cx = complete_graph(3)
    assert (cx.n_nodes, cx.n_edges, cx.n_triangles) == (3, 3, 1)
    assert cx.edges.tolist() == [[0, 1], [0, 2], [1, 2]]
    assert cx.triangles.tolist() == [[0, 1, 2]]


def test_toy_graph_incidence(toy_graph):
    cx = toy_graph
    # (4, 1) is stored canonically as (1, 4)
    assert cx.edges.tolist() == [[0, 1], [1, 2], [1, 3], [1, 4], [3, 4], [4, 5]]
    expected_d0 = np.array([
        [-1, 1, 0, 0, 0, 0],
        [0, -1, 1, 0, 0, 0],
        [0, -1, 0, 1, 0, 0],
        [0, -1, 0, 0, 1, 0],
        [0, 0, 0, -1, 1, 0],
        [0, 0, 0, 0, -1, 1],
    ])
    np.testing.assert_array_equal(cx.d0.toarray(), expected_d0)
    assert cx.triangles.tolist() == [[1, 3, 4]]
    # p_13 + p_34 - p_14
    np.testing.assert_array_equal(cx.d1.toarray(), [[0, 0, 1, -1, 1, 0]])


def test_toy_graph_with_flipped_edge_orientation(toy_graph):
    # orienting edge {1,4} as 4 -> 1 negates its d0 row and its d1 column
    s = np.diag([1, 1, 1, -1, 1, 1])
    d0_flip = s @ toy_graph.d0.toarray()
    d1_flip = toy_graph.d1.toarray() @ s
    np.testing.assert_array_equal(d1_flip, [[0, 0, 1, 1, 1, 0]])
    np.testing.assert_array_equal(d0_flip[3], [0, 1, 0, 0, -1, 0])
    assert not (d1_flip @ d0_flip).any()


def test_d0_of_constant_and_d1_of_gradient_vanish(toy_graph):
    q = np.ones((6, 2))
    assert not np.asarray(grad0(toy_graph, q)).any()
    np.testing.assert_array_equal((toy_graph.d1 @ toy_graph.d0).toarray(), 0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 14), seed=st.integers(0, 10_000), prob=st.floats(0.1, 0.9))
def test_exactness_integer(n, seed, prob):
    cx = topo.erdos_renyi(n, prob, np.random.default_rng(seed))
    assert (cx.d1 @ cx.d0).nnz == 0 or not (cx.d1 @ cx.d0).toarray().any()


def test_self_loop_rejected():
    with pytest.raises(ComplexError, match=r"\(2, 2\)"):
        build_complex(3, [(0, 1), (2, 2)])


def test_out_of_range_rejected():
    with pytest.raises(ComplexError, match=r"\(0, 7\)"):
        build_complex(3, [(0, 7)])


def test_duplicate_edges_collapse():
    cx = build_complex(3, [(0, 1), (1, 0), (0, 1), (1, 2)])
    assert cx.n_edges == 2


def test_cochain_degree_checks(toy_graph):
    with pytest.raises(ValueError, match="rows"):
        apply_d(toy_graph, Cochain(0, np.ones(5)))
    with pytest.raises(ValueError):
        apply_d(toy_graph, Cochain(2, np.ones(1)))
    with pytest.raises(ValueError):
        apply_d_transpose(toy_graph, Cochain(0, np.ones(6)))
    with pytest.raises(ValueError):
        Cochain(3, np.ones(2))


def test_apply_d_matches_sparse(toy_graph, rng):
    q = rng.standard_normal((6, 3))
    out = apply_d(toy_graph, Cochain(0, q))
    assert out.degree == 1
    np.testing.assert_allclose(out.values, toy_graph.d0 @ q)
    back = apply_d_transpose(toy_graph, out)
    np.testing.assert_allclose(back.values, laplacian0(toy_graph) @ q)


@pytest.mark.parametrize("limit", [0, 10_000])
def test_gather_scatter_match_incidence(monkeypatch, rng, limit):
    monkeypatch.setattr(topo, "DENSE_EDGE_LIMIT", limit)
    cx = random_graph(rng, 10, 20, need_triangle=True)
    q = rng.standard_normal((cx.n_nodes, 2))
    p = rng.standard_normal((cx.n_edges, 2))
    r = rng.standard_normal((cx.n_triangles, 2))
    d0 = cx.d0.toarray()
    d1 = cx.d1.toarray()
    np.testing.assert_allclose(grad0(cx, q), d0 @ q, atol=1e-13)
    np.testing.assert_allclose(div0(cx, p), d0.T @ p, atol=1e-13)
    np.testing.assert_allclose(curl1(cx, p), d1 @ p, atol=1e-13)
    np.testing.assert_allclose(curl1_t(cx, r), d1.T @ r, atol=1e-13)


def test_graph_laplacian_is_degree_minus_adjacency(rng):
    cx = random_graph(rng)
    L = laplacian0(cx).toarray()
    np.testing.assert_array_equal(L, np.diag(cx.degrees()) - cx.adjacency().toarray())


def test_hodge_decomposition(rng):
    cx = ring_lattice(12, 2)
    p = rng.standard_normal((cx.n_edges, 2))
    ex, harm, co = hodge_decompose(cx, Cochain(1, p))
    np.testing.assert_allclose(ex.values + harm.values + co.values, p, atol=1e-12)
    assert abs(np.sum(ex.values * co.values)) < 1e-10
    assert abs(np.sum(ex.values * harm.values)) < 1e-10
    assert np.abs(cx.d0.T @ harm.values).max() < 1e-10
    assert np.abs(cx.d1 @ harm.values).max() < 1e-10
    assert np.abs(cx.d1 @ ex.values).max() < 1e-10


def test_cycle_has_one_dimensional_harmonic_space():
    cx = cycle_graph(7)
    loop = np.ones((7, 1))
    loop[cx.edge_index()[(0, 6)]] = -1  # runs against the cycle direction
    ex, harm, co = hodge_decompose(cx, Cochain(1, loop))
    np.testing.assert_allclose(harm.values, loop, atol=1e-12)
    assert cx.n_triangles == 0 and np.abs(co.values).max() == 0


@pytest.mark.parametrize("suffix", [".json", ".txt"])
def test_graph_roundtrip(tmp_path, toy_graph, suffix):
    path = tmp_path / f"g{suffix}"
    save_graph(toy_graph, path)
    back = load_graph(path)
    assert back.edges.tolist() == toy_graph.edges.tolist()
    assert back.n_triangles == 1


def test_load_graph_comments(tmp_path):
    path = tmp_path / "g.edges"
    path.write_text("# header\n0 1\n1 2  # trailing\n\n2 0\n")
    assert load_graph(path).n_triangles == 1
    json_path = tmp_path / "g.json"
    json_path.write_text(json.dumps({"n": 4, "edges": [[0, 1]]}))
    assert load_graph(json_path).n_nodes == 4
