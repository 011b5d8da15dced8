import numpy as np
import pytest

from gdtm import external
from gdtm.acceptance import external_run
from gdtm.machine import CORPUS, corpus_machine, corpus_tau, make_initial, triple_states
from gdtm.simplex import QUARTER, edge_point, vertex


def test_constants():
    p = external.choose_constants(2)
    assert (p.b, p.c) == (17, 4947)
    assert p.halting_ceiling == 4664 and p.nonhalting_ceiling == 9577
    assert external.choose_constants(2, separation=False).b == 9
    assert external.choose_constants(3).b == 25
    bad = external.ExternalLossParams(16, 1.0, 16 ** 3 + 32, 2).failures()
    assert [b.split(":")[0] for b in bad] == ["halting-separation"]


def test_vertex_index_roundtrip():
    vs = external.VertexSet(("a", "b", "c"), 2)
    for v in range(len(vs)):
        assert vs.index(*vs.label(v)) == v
    assert vs.index("b", (1, -1)) == 1 * 4 + 2


def test_operators():
    tm = triple_states(corpus_machine("copy"))
    loss = external.build_loss(tm, external.choose_constants(2))
    ops = loss.ops
    H = np.zeros((6, 2))
    H[2, 0] = H[3, 1] = 1
    for v in range(len(loss.vs)):
        q, t = loss.vs.label(v)
        assert tuple(ops.read[:, v]) == t
        SH = ops.shift(vertex(v, len(loss.vs)), H)
        for j in range(2):
            assert np.argmax(SH[:, j]) == np.argmax(H[:, j]) + ops.moves[v, j]


def test_profile_values_on_edges():
    tm = triple_states(corpus_machine("copy"))
    loss = external.build_loss(tm, external.choose_constants(2))
    n = len(loss.vs)
    q, t = "M/0", (1, -1)
    v = loss.vs.index(q, t)
    q2 = tm.transition(q, t)[0]
    b = loss.params.b
    for t2 in loss.vs.symbols:
        w = loss.vs.index(q2, t2)
        same = sum(x == y for x, y in zip(t, t2))
        om = -(b ** 3 + b * same)
        assert abs(loss.ell_s(edge_point(v, w, QUARTER, n)) - om) < 1e-9
        assert abs(loss.ell_s(edge_point(v, w, 0.75, n)) - om / 2) < 1e-9


def test_untripled_machine_rejected():
    with pytest.raises(external.BackStepError):
        external.build_loss(corpus_machine("increment"), external.choose_constants(2))


@pytest.mark.parametrize("name", CORPUS)
def test_trace_equals_simulator(name):
    tm = corpus_machine(name)
    for p in tm.examples:
        loss, tr, ref = external_run(tm, p)
        confs = [external.as_configuration(loss, st) for st in tr.states]
        assert confs == list(ref.configs)
        assert len(tr.states) - 1 == ref.step_count
        par = loss.params
        for st, val in zip(tr.states[:-1], tr.losses[:-1]):
            assert par.nonhalting_floor <= val <= par.nonhalting_ceiling
            assert val > par.halting_ceiling
        assert tr.losses[-1] <= par.halting_ceiling
        for st in tr.states:
            assert external.is_integral(st.T) and external.is_integral(st.H)
            ro = list(tm.read_only)
            assert np.array_equal(st.T[:, ro], tr.states[0].T[:, ro])


def test_gd_step_formulas():
    tm = corpus_machine("copy")
    loss, tr, _ = external_run(tm, tm.examples[1])
    for a, b in zip(tr.states, tr.states[1:]):
        q, t = loss.vs.label(a.vertex)
        q2, write, move = loss.tm.transition(q, t)
        assert loss.vs.label(b.vertex)[0] == q2
        for i in range(tm.d):
            h = a.heads[i]
            expect = a.T[:, i].copy()
            if i not in tm.read_only:
                expect[h] = write[i]
            assert np.array_equal(b.T[:, i], expect)
            assert b.heads[i] == h + move[i]
        assert loss.vs.label(b.vertex)[1] == tuple(int(b.T[b.heads[i], i]) for i in range(tm.d))


def test_s_update_argmin_two_ways():
    tm = corpus_machine("increment")
    loss, tr, _ = external_run(tm, tm.examples[0])
    n = len(loss.vs)
    for st in tr.states[:-1]:
        v = st.vertex
        scores = loss.s_scores(v, st.T, st.H)
        brute = []
        for u in range(n):
            x = (1 - QUARTER) * vertex(v, n) + QUARTER * vertex(u, n)
            # quadratic term evaluated with its stop-gradient target frozen at s = e_v
            a = loss.read_target(vertex(v, n), st.T, st.H)
            r = a - loss.ops.read @ x
            brute.append(loss.ell_s(x) + 2 * loss.params.b ** 2 * loss.params.gamma * r @ r)
        brute = np.array(brute)
        assert np.argmin(brute) == np.argmin(scores)


def test_both_proof_cases_exercised():
    hits = {"match": 0, "mismatch": 0}
    for name in CORPUS:
        tm = corpus_machine(name)
        for p in tm.examples:
            loss, _, _ = external_run(tm, p)
            for k in hits:
                hits[k] += loss.cases[k]
    assert hits["match"] > 0 and hits["mismatch"] > 0


def test_no_halt_error():
    tm = corpus_machine("copy")
    tt = triple_states(tm)
    loss = external.build_loss(tt, external.choose_constants(2))
    p = tm.examples[2]
    st = external.initial_state(loss, make_initial(tt, p, corpus_tau(tm, p)))
    with pytest.raises(external.NoHaltError, match="no halt within 3"):
        external.trace(loss, st, max_iters=3)


def test_dimension_formula():
    tm = corpus_machine("copy")
    assert external.trainable_dimension(tm, 10, 1, 2) == 3 * 3 * 4 + 2 * 2 * 10 + 2
