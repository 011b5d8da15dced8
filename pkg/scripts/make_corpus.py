"""Regenerate the demo machines in src/gdtm/corpus/.

Inputs on the read-only tape 0 are framed bit strings [1, b0, 1, b1, ...]:
odd cells hold a marker so the machine can detect the end of the payload.
"""

import itertools
from pathlib import Path

from gdtm.machine import TuringMachine, dump_machine

OUT = Path(__file__).resolve().parents[1] / "src" / "gdtm" / "corpus"


def table(states, d, rule):
    delta = {}
    for q in states:
        for t in itertools.product((-1, 1), repeat=d):
            delta[(q, t)] = rule(q, t)
    return delta


def copy_machine():
    # M sits on a marker, D on a data bit; tape 1 receives a verbatim copy
    def rule(q, t):
        ro = t[0]
        if q == "M":
            return ("D" if ro == 1 else "H"), (ro, ro), (1, 1)
        return "M", (ro, ro), (1, 1)
    return TuringMachine(
        states=("M", "D", "H"), initial="M", accepting=frozenset({"H"}),
        tapes=2, read_only=frozenset({0}), delta=table(("M", "D"), 2, rule),
        name="copy", output_tape=1,
        examples=((1, 1), (1, 0, 1, 1), (1, 1, 1, 0, 1, 1)),
        meta={"tape_margin": 4, "description": "copy the framed input to tape 1"},
    )


def increment_machine():
    # LSB-first binary increment; c/n = carry pending or not
    def rule(q, t):
        ro, out = t
        if q in ("Mc", "Mn"):
            carry = q == "Mc"
            if ro == 1:
                return ("Dc" if carry else "Dn"), (ro, 1), (1, 1)
            if carry:
                return "E", (ro, 1), (1, 1)
            return "H", (ro, out), (1, 1)
        if q == "Dc":
            return ("Mc", (ro, -1), (1, 1)) if ro == 1 else ("Mn", (ro, 1), (1, 1))
        if q == "Dn":
            return "Mn", (ro, ro), (1, 1)
        return "H", (ro, 1), (1, 1)  # E: emit the final carry bit
    states = ("Mc", "Dc", "Mn", "Dn", "E", "H")
    return TuringMachine(
        states=states, initial="Mc", accepting=frozenset({"H"}),
        tapes=2, read_only=frozenset({0}), delta=table(states[:-1], 2, rule),
        name="increment", output_tape=1,
        examples=((1, 1), (1, 0, 1, 1), (1, 1, 1, 1), ()),
        meta={"tape_margin": 6,
              "description": "framed LSB-first binary increment onto tape 1"},
    )


def mark_copy_machine():
    # tape 2 copies the input, tape 1 marks data cells where the bit changes
    def rule(q, t):
        ro, mark, _ = t
        prev = 1 if q.endswith("1") else -1
        if q.startswith("M"):
            if ro == 1:
                return f"D_p{q[-1]}", (ro, mark, 1), (1, 1, 1)
            return "H", (ro, mark, -1), (1, 1, 1)
        new = "1" if ro == 1 else "0"
        return f"M_p{new}", (ro, 1 if ro != prev else -1, ro), (1, 1, 1)
    states = ("M_p0", "D_p0", "M_p1", "D_p1", "H")
    return TuringMachine(
        states=states, initial="M_p0", accepting=frozenset({"H"}),
        tapes=3, read_only=frozenset({0}), delta=table(states[:-1], 3, rule),
        name="mark_copy", output_tape=2,
        examples=((1, 1), (1, 1, 1, 0, 1, 1), (1, 0, 1, 0)),
        meta={"tape_margin": 4,
              "description": "copy input to tape 2 and mark bit changes on tape 1"},
    )


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for tm in (copy_machine(), increment_machine(), mark_copy_machine()):
        dump_machine(tm, OUT / f"{tm.name}.json")
        print("wrote", OUT / f"{tm.name}.json")
