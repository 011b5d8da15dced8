import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdtm.acceptance import fd_gradient_check, node_kind_graphs, sg_example
from gdtm.graph import COST, Graph, Mat
from gdtm.simplex import QUARTER, SimplexLoss, dir_deriv, random_point, vertex


def scalar_graph(build):
    g = Graph()
    x = g.parameter("x")
    g.set_output(build(g, x))
    return g


def test_values():
    assert scalar_graph(lambda g, x: g.relu(x)).eval({"x": -1.0}) == 0
    assert scalar_graph(lambda g, x: g.sqrt(x)).eval({"x": 4.0}) == 2
    assert scalar_graph(lambda g, x: g.reciprocal(x)).eval({"x": 0.0}) == 0


def test_stop_gradient_is_value_transparent():
    a = scalar_graph(lambda g, x: g.product(g.relu(x), g.stop_gradient(g.sqrt(x))))
    b = scalar_graph(lambda g, x: g.product(g.relu(x), g.sqrt(x)))
    for v in (0.3, 2.0, 7.5):
        assert a.eval({"x": v}) == b.eval({"x": v})


def test_sg_product_rule():
    assert sg_example() == 3.0


def test_barrier_blocks_gradient():
    g = scalar_graph(lambda g, x: g.sqnorm(g.barrier(lambda v: np.round(v), [x])))
    assert g.eval({"x": 2.4}) == 4.0
    assert g.backward({"x": 2.4})["x"] == 0


def test_fd_agreement_on_every_node_kind():
    kinds = {name for name, _, _ in node_kind_graphs()}
    assert kinds >= {"linear", "relu", "sqrt", "reciprocal", "product", "sqnorm", "cutoff", "primary"}
    assert fd_gradient_check() == []


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_jvp_matches_backward(a):
    a = np.array(a)
    for name, g, shape in node_kind_graphs():
        if name in ("relu", "cutoff") and np.min(np.abs(np.subtract.outer(a, [-2, 0, 0.5, 3]))) < 1e-9:
            continue
        grad = g.backward({"a": a})["a"]
        jv = g.jvp({"a": a}, {"a": np.eye(3)})
        assert np.allclose(jv, grad, rtol=1e-12, atol=1e-12), name


def test_cutoff_right_slope_and_jump():
    g = scalar_graph(lambda g, x: g.cutoff(x, [0.0, 0.0], [0.0, 1.0]))
    assert g.eval({"x": -1e-300}) == 0 and g.eval({"x": 0.0}) == 1
    g = scalar_graph(lambda g, x: g.cutoff(x, [1.0, 2.0], [0.0, 1.0]))
    assert g.backward({"x": 1.0})["x"] == 1.0
    assert g.backward({"x": 2.0})["x"] == 0.0
    assert g.eval({"x": 1.5}) == 0.5


def test_broadcast_product_gradients():
    g = Graph()
    a = g.parameter("a")
    b = g.parameter("b")
    g.set_output(g.sqnorm(g.product(a, b)))
    av, bv = np.array([1.0, -2.0]), np.arange(6.0).reshape(3, 2)
    gr = g.backward({"a": av, "b": bv})
    assert np.allclose(gr["a"], 2 * np.sum(av * bv * bv, axis=0))
    assert np.allclose(gr["b"], 2 * av * bv * av)
    jv = g.jvp({"a": av, "b": bv}, {"a": np.eye(2)})
    assert np.allclose(jv, gr["a"])


def test_linear_mixes_matrix_and_elementwise_terms():
    g = Graph()
    a = g.parameter("a")
    r = g.parameter("r")
    emb = np.zeros((6, 3))
    emb[[0, 2, 4], [0, 1, 2]] = 1
    g.set_output(g.sqnorm(g.linear([(np.array([0.0, 1.0]), a), (Mat(emb), r)], shape=(3, 2))))
    av, rv = np.ones((3, 2)), np.array([1.0, 2.0, 3.0])
    assert g.eval({"a": av, "r": rv}) == 3 + 1 + 4 + 9
    assert np.allclose(g.backward({"a": av, "r": rv})["r"], 2 * rv)


def test_simplex_node_directional_derivative():
    m = 6
    rng = np.random.default_rng(0)
    loss = SimplexLoss(m).add_profiles([0, 1, 0], [2, 3, 4], rng.normal(size=3)).add_hats([0], QUARTER, 2.0)
    g = Graph()
    s = g.parameter("s")
    g.set_output(g.simplex_loss(s, lambda _: loss, QUARTER))
    x = vertex(0, m)
    for _ in range(10):
        y = random_point(m, rng)
        got = g.dir_deriv_block({"s": x}, "s", y - x)
        assert abs(got - dir_deriv(loss, x, y, QUARTER)) < 1e-12
        h = 1e-9
        fd = (loss(x + h * (y - x)) - loss(x)) / h
        assert abs(got - fd) < 1e-6
    # chain rule through a smooth head: d sqrt(2 l) = dl / sqrt(2 l)
    g2 = Graph()
    s = g2.parameter("s")
    lv = g2.simplex_loss(s, lambda _: loss, QUARTER)
    g2.set_output(g2.sqrt(g2.linear([(2.0, lv)], bias=10.0)))
    y = random_point(m, rng)
    base = np.sqrt(2 * loss(x) + 10)
    assert abs(g2.dir_deriv_block({"s": x}, "s", y - x) - dir_deriv(loss, x, y, QUARTER) / base) < 1e-12


def test_registry_and_depth():
    g = Graph()
    g.parameter("s")
    with pytest.raises(ValueError):
        g.parameter("s")
    x = g.input("x")
    y = g.sqrt(g.relu(g.linear([(2.0, x)])))
    g.set_output(g.stop_gradient(g.product(y, x)))
    assert g.depth() == 3
    assert g.depth(cost={"product": 5}) == 7
    assert COST["simplex_loss"] == 3
    text = g.dump()
    assert "relu" in text and "stop_gradient" in text and len(text.splitlines()) == len(g.nodes)
