import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdtm.machine import (BLANK, CORPUS, Configuration, HaltedError, MachineError, TapeBoundError,
                          TuringMachine, all_symbols, back_steps, corpus_machine, corpus_tau,
                          dump_machine, frame, load_machine, make_initial, machine_from_dict,
                          machine_to_dict, project_state, read_payload, run, step, triple_states,
                          unframe)

KT = {"copy": [3, 5, 7], "increment": [4, 5, 6, 2], "mark_copy": [3, 7, 5]}


def walker(d=2, accept_initial=False):
    """Identity writes, all heads move right, halts on reading blank on tape 0."""
    delta = {}
    for t in all_symbols(d):
        delta[("A", t)] = ("H" if t[0] == BLANK else "A", t, (1,) * d)
    return TuringMachine(("A", "H"), "H" if accept_initial else "A", frozenset({"H"}), d,
                         frozenset({0}), delta)


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_step_counts(name):
    tm = corpus_machine(name)
    got = [run(tm, make_initial(tm, p, corpus_tau(tm, p)), 1000).step_count for p in tm.examples]
    assert got == KT[name]
    assert len(tm.states) <= 8


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_runs_stay_interior_and_keep_ro(name):
    tm = corpus_machine(name)
    for p in tm.examples:
        tr = run(tm, make_initial(tm, p, corpus_tau(tm, p)), 1000)
        assert tr.halted
        for c in tr.configs:
            assert all(1 <= h <= c.tau - 2 for h in c.heads)
            for i in tm.read_only:
                assert np.array_equal(c.tapes[:, i], tr.configs[0].tapes[:, i])


def test_copy_first_step():
    tm = corpus_machine("copy")
    c0 = make_initial(tm, (1, 1), 6)
    c1 = step(tm, c0)
    assert c1.heads == (2, 2)
    assert c1.tapes[1, 1] == 1


def test_identity_writer_moves_heads_only():
    tm = walker()
    tapes = np.full((6, 2), BLANK, dtype=np.int8)
    tapes[1:3, 0] = 1
    c = Configuration("A", tapes, (1, 1))
    c1 = step(tm, c)
    assert np.array_equal(c1.tapes, c.tapes)
    assert c1.heads == (2, 2)


def test_step_errors():
    tm = walker()
    with pytest.raises(HaltedError):
        step(tm, Configuration("H", np.full((4, 2), BLANK), (1, 1)))
    tapes = np.full((4, 2), 1, dtype=np.int8)
    with pytest.raises(TapeBoundError):
        step(tm, Configuration("A", tapes, (2, 2)))


def test_run_edge_cases():
    tm = walker()
    c0 = make_initial(tm, [1, 1], 6)
    tr = run(tm, c0, 0)
    assert len(tr.configs) == 1 and not tr.halted
    done = walker(accept_initial=True)
    tr = run(done, make_initial(done, [1, 1], 6), 10)
    assert tr.step_count == 0 and tr.halted


def test_make_initial():
    tm = walker()
    c = make_initial(tm, [], 5)
    assert np.all(c.tapes == BLANK) and c.heads == (1, 1)
    c = make_initial(tm, [1, 0], 5)
    assert c.tapes[1, 0] == 1 and c.tapes[2, 0] == -1
    with pytest.raises(ValueError):
        make_initial(tm, [1, 0, 1, 1], 5)


@given(st.lists(st.integers(0, 1), max_size=20))
def test_payload_roundtrip(bits):
    tm = walker()
    c = make_initial(tm, bits, len(bits) + 2)
    assert read_payload(c, 0, len(bits)) == bits
    assert unframe(frame(bits)) == bits


@pytest.mark.parametrize("name", CORPUS)
def test_tripling(name):
    tm = corpus_machine(name)
    tt = triple_states(tm)
    assert len(tt.states) == 3 * len(tm.states)
    assert back_steps(tm) and not back_steps(tt)
    for p in tm.examples:
        tau = corpus_tau(tm, p)
        a = run(tm, make_initial(tm, p, tau), 1000)
        b = run(tt, make_initial(tt, p, tau), 1000)
        assert [project_state(q) for q in b.states] == a.states
        assert [int(q.rsplit("/", 1)[1]) for q in b.states] == [k % 3 for k in range(len(b.states))]
        assert [c.tapes.tobytes() for c in a.configs] == [c.tapes.tobytes() for c in b.configs]


def test_run_is_deterministic():
    tm = corpus_machine("increment")
    p = tm.examples[0]
    c0 = make_initial(tm, p, corpus_tau(tm, p))
    assert run(tm, c0, 100).to_jsonl() == run(tm, c0, 100).to_jsonl()


def test_validation_errors():
    spec = machine_to_dict(walker())
    bad = dict(spec, delta=spec["delta"][:-1])
    with pytest.raises(MachineError, match="undefined"):
        machine_from_dict(bad)
    ro_write = json.loads(json.dumps(spec))
    ro_write["delta"][0]["write"] = [-v for v in ro_write["delta"][0]["read"]]
    with pytest.raises(MachineError, match="writes to read-only"):
        machine_from_dict(ro_write)
    with pytest.raises(MachineError, match="missing"):
        machine_from_dict({"states": ["a"]})


def test_json_roundtrip(tmp_path):
    tm = corpus_machine("mark_copy")
    dump_machine(tm, tmp_path / "m.json")
    back = load_machine(tmp_path / "m.json")
    assert back.delta == tm.delta and back.examples == tm.examples
    assert back.output_tape == tm.output_tape


def test_trace_jsonl_lines():
    tm = corpus_machine("copy")
    tr = run(tm, make_initial(tm, (1, 1), 6), 100)
    rows = [json.loads(r) for r in tr.to_jsonl().splitlines()]
    assert [r["step"] for r in rows] == [0, 1, 2, 3]
    assert rows[-1]["state"] == "H"
