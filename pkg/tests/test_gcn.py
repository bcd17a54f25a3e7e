import numpy as np
import pytest

from rgp.gcn import GcnParams, gcn_embed, gcn_layer, init_gcn_params
from rgp.graphbuild import PatchGraph, normalized_adjacency
from rgp.numcore import ShapeError, Tensor, backward, mul, sum_all, zero_grad

from oracles import finite_diff_grad, relative_error


def make_graph(rng, n=6, d=4, label=0):
    possible = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = [e for e in possible if rng.random() < 0.4]
    return PatchGraph(
        features=rng.normal(0, 1, (n, d)),
        coords=np.zeros((n, 2), dtype=np.int32),
        edges=edges,
        adjacency_norm=normalized_adjacency(edges, n),
        label=label,
        id="t",
    )


def test_isolated_node_identity_weights():
    h = Tensor([[2.0, 3.0]])
    out = gcn_layer(h, Tensor([[1.0]]), Tensor(np.eye(2)), apply_nonlin=True)
    np.testing.assert_array_equal(out.data, h.data)


def test_two_node_hand_product():
    a_hat = Tensor([[0.5, 0.5], [0.5, 0.5]])
    h = Tensor([[2.0], [0.0]])
    w = Tensor([[1.0]])
    out = gcn_layer(h, a_hat, w, apply_nonlin=True)
    np.testing.assert_array_equal(out.data, [[1.0], [1.0]])


def test_relu_kills_negative_preactivation(rng):
    h = Tensor(np.abs(rng.normal(0, 1, (3, 2))))
    w = Tensor(-np.abs(rng.normal(0, 1, (2, 2))))
    a_hat = Tensor(normalized_adjacency([(0, 1), (1, 2)], 3))
    out = gcn_layer(h, a_hat, w, apply_nonlin=True)
    np.testing.assert_array_equal(out.data, np.zeros((3, 2)))


def test_zero_weights_give_zero_embeddings(rng):
    graph = make_graph(rng)
    params = GcnParams(
        layer_weights=[Tensor(np.zeros((4, 5))), Tensor(np.zeros((5, 3)))], dims=(4, 5, 3)
    )
    out = gcn_embed(Tensor(graph.features), Tensor(graph.adjacency_norm), params)
    np.testing.assert_array_equal(out.data, np.zeros((6, 3)))


def test_single_layer_config_equals_gcn_layer(rng):
    graph = make_graph(rng)
    w = Tensor(rng.normal(0, 1, (4, 3)))
    params = GcnParams(layer_weights=[w], dims=(4, 3))
    stacked = gcn_embed(Tensor(graph.features), Tensor(graph.adjacency_norm), params)
    single = gcn_layer(
        Tensor(graph.features), Tensor(graph.adjacency_norm), w, apply_nonlin=False
    )
    np.testing.assert_array_equal(stacked.data, single.data)


def test_final_layer_is_linear(rng):
    # outputs may be negative, which ReLU would forbid
    graph = make_graph(rng)
    params = init_gcn_params(np.random.default_rng(0), (4, 8, 8))
    out = gcn_embed(Tensor(graph.features), Tensor(graph.adjacency_norm), params)
    assert np.any(out.data < 0.0)


def test_permutation_equivariance(rng):
    for seed in range(10):
        r = np.random.default_rng(seed)
        graph = make_graph(r, n=7, d=4)
        params = init_gcn_params(r, (4, 6, 5))
        out = gcn_embed(Tensor(graph.features), Tensor(graph.adjacency_norm), params).data
        p = r.permutation(7)
        permuted = gcn_embed(
            Tensor(graph.features[p]),
            Tensor(graph.adjacency_norm[np.ix_(p, p)]),
            params,
        ).data
        assert np.max(np.abs(permuted - out[p])) < 1e-9


def test_duplicate_edges_do_not_change_forward(rng):
    graph = make_graph(rng)
    dup = graph.edges + graph.edges[:2]
    a_dup = normalized_adjacency(dup, graph.n_nodes)
    params = init_gcn_params(np.random.default_rng(1), (4, 6, 5))
    a = gcn_embed(Tensor(graph.features), Tensor(graph.adjacency_norm), params).data
    b = gcn_embed(Tensor(graph.features), Tensor(a_dup), params).data
    np.testing.assert_array_equal(a, b)


def test_gradients_match_finite_differences(rng):
    graph = make_graph(rng, n=5, d=3)
    params = init_gcn_params(np.random.default_rng(2), (3, 4, 4))
    weight = Tensor(rng.normal(0, 1, (5, 4)))

    def loss_fn():
        out = gcn_embed(Tensor(graph.features), Tensor(graph.adjacency_norm), params)
        return sum_all(mul(out, weight))

    tensors = list(params.named().values())
    zero_grad(tensors)
    backward(loss_fn())
    for t in tensors:
        _, fd = finite_diff_grad(lambda: loss_fn().item(), t)
        assert relative_error(t.grad.ravel(), fd) < 1e-4


def test_width_mismatch_rejected(rng):
    graph = make_graph(rng, d=4)
    params = init_gcn_params(np.random.default_rng(0), (5, 6, 6))
    with pytest.raises(ShapeError, match="width"):
        gcn_embed(Tensor(graph.features), Tensor(graph.adjacency_norm), params)


def test_init_is_seeded_and_bounded():
    a = init_gcn_params(np.random.default_rng(7), (4, 8))
    b = init_gcn_params(np.random.default_rng(7), (4, 8))
    np.testing.assert_array_equal(a.layer_weights[0].data, b.layer_weights[0].data)
    limit = np.sqrt(6.0 / 12.0)
    assert np.all(np.abs(a.layer_weights[0].data) <= limit)
    assert list(a.named()) == ["gcn.0.w"]
