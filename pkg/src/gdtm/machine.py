"""Two-symbol, multi-tape Turing machines and their reference simulator.

Symbols are +1 / -1 with -1 as the blank. Tape indices are 0-based and
heads start at cell 1, so cells 0 and tau-1 act as guards that a run
must never touch.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

BLANK = -1

Symbols = tuple[int, ...]


class MachineError(ValueError):
    """Malformed machine description."""


class TapeBoundError(RuntimeError):
    """A head would leave the admitted tape window."""


class HaltedError(RuntimeError):
    """Step requested on an accepting configuration."""


def all_symbols(d: int) -> list[Symbols]:
    return [tuple(t) for t in itertools.product((-1, 1), repeat=d)]


@dataclass(frozen=True)
class TuringMachine:
    states: tuple[str, ...]
    initial: str
    accepting: frozenset[str]
    tapes: int
    read_only: frozenset[int]
    # (q, t) -> (q', write, move); only needed for non-accepting q
    delta: dict[tuple[str, Symbols], tuple[str, Symbols, Symbols]]
    name: str = "tm"
    output_tape: int | None = None
    examples: tuple[tuple[int, ...], ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.tapes < 1:
            raise MachineError("need at least one tape")
        if len(set(self.states)) != len(self.states):
            raise MachineError("duplicate state ids")
        known = set(self.states)
        if self.initial not in known:
            raise MachineError(f"initial state {self.initial!r} not declared")
        if not self.accepting <= known:
            raise MachineError(f"unknown accepting states {sorted(self.accepting - known)}")
        if any(not 0 <= i < self.tapes for i in self.read_only):
            raise MachineError("read_only index out of range")
        for q in self.states:
            if q in self.accepting:
                continue
            for t in all_symbols(self.tapes):
                if (q, t) not in self.delta:
                    raise MachineError(f"delta undefined at ({q!r}, {list(t)})")
        for (q, t), (q2, w, mv) in self.delta.items():
            if q2 not in known:
                raise MachineError(f"transition from {q!r} to unknown state {q2!r}")
            if len(w) != self.tapes or len(mv) != self.tapes:
                raise MachineError(f"arity mismatch at ({q!r}, {list(t)})")
            if any(s not in (-1, 1) for s in w) or any(m not in (-1, 1) for m in mv):
                raise MachineError(f"symbols and moves must be +-1 at ({q!r}, {list(t)})")
            for i in self.read_only:
                if w[i] != t[i]:
                    raise MachineError(
                        f"transition ({q!r}, {list(t)}) writes to read-only tape {i}")

    @property
    def d(self) -> int:
        return self.tapes

    def transition(self, q: str, t: Symbols) -> tuple[str, Symbols, Symbols]:
        return self.delta[(q, tuple(int(s) for s in t))]

    def state_index(self, q: str) -> int:
        return self.states.index(q)


@dataclass(frozen=True)
class Configuration:
    q: str
    tapes: np.ndarray  # (tau, d) int8
    heads: tuple[int, ...]

    def __post_init__(self):
        arr = np.array(self.tapes, dtype=np.int8)
        arr.setflags(write=False)
        object.__setattr__(self, "tapes", arr)
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))

    @property
    def tau(self) -> int:
        return self.tapes.shape[0]

    def read(self) -> Symbols:
        return tuple(int(self.tapes[h, i]) for i, h in enumerate(self.heads))

    def key(self) -> tuple:
        return (self.q, self.tapes.tobytes(), self.heads)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def to_json(self) -> dict:
        return {"state": self.q, "heads": list(self.heads),
                "tapes": self.tapes.T.tolist()}


@dataclass(frozen=True)
class ExecutionTrace:
    configs: tuple[Configuration, ...]
    halted: bool
    step_count: int

    @property
    def states(self) -> list[str]:
        return [c.q for c in self.configs]

    @property
    def final(self) -> Configuration:
        return self.configs[-1]

    def to_jsonl(self) -> str:
        return "".join(json.dumps({"step": k, **c.to_json()}) + "\n"
                       for k, c in enumerate(self.configs))


def step(tm: TuringMachine, c: Configuration) -> Configuration:
    if c.q in tm.accepting:
        raise HaltedError(f"state {c.q!r} is accepting")
    t = c.read()
    q2, write, move = tm.transition(c.q, t)
    tapes = c.tapes.copy()
    heads = []
    for i, h in enumerate(c.heads):
        tapes[h, i] = write[i]
        nh = h + move[i]
        if not 1 <= nh <= c.tau - 2:
            raise TapeBoundError(f"head {i} would move to cell {nh} (tau={c.tau})")
        heads.append(nh)
    return Configuration(q2, tapes, tuple(heads))


def run(tm: TuringMachine, c0: Configuration, max_steps: int) -> ExecutionTrace:
    configs = [c0]
    while configs[-1].q not in tm.accepting and len(configs) - 1 < max_steps:
        configs.append(step(tm, configs[-1]))
    halted = configs[-1].q in tm.accepting
    return ExecutionTrace(tuple(configs), halted, len(configs) - 1)


def make_initial(tm: TuringMachine, payload: Sequence[int], tau: int) -> Configuration:
    """Configuration with ``payload`` (bits 0/1) on the first read-only tape."""
    payload = [int(b) for b in payload]
    if len(payload) + 2 > tau:
        raise ValueError(f"payload of length {len(payload)} does not fit tau={tau}")
    if any(b not in (0, 1) for b in payload):
        raise ValueError("payload must consist of bits 0/1")
    tapes = np.full((tau, tm.d), BLANK, dtype=np.int8)
    if payload:
        if not tm.read_only:
            raise ValueError("machine has no read-only tape for the payload")
        ro = min(tm.read_only)
        tapes[1:1 + len(payload), ro] = [1 if b else -1 for b in payload]
    return Configuration(tm.initial, tapes, (1,) * tm.d)


def read_payload(c: Configuration, tape: int, length: int) -> list[int]:
    return [1 if s > 0 else 0 for s in c.tapes[1:1 + length, tape]]


def frame(bits: Iterable[int]) -> list[int]:
    """Interleave a marker 1 before every bit: [1, b0, 1, b1, ...]."""
    out = []
    for b in bits:
        out += [1, int(b)]
    return out


def unframe(cells: Sequence[int]) -> list[int]:
    cells = list(cells)
    if len(cells) % 2 or any(m != 1 for m in cells[0::2]):
        raise ValueError("cells are not a framed bit string")
    return cells[1::2]


def _split(state: str) -> tuple[str, int]:
    base, _, r = state.rpartition("/")
    return base, int(r)


def triple_states(tm: TuringMachine) -> TuringMachine:
    """Attach a step counter mod 3 to every state, ruling out back-steps."""
    states = tuple(f"{q}/{r}" for q in tm.states for r in range(3))
    delta = {}
    for (q, t), (q2, w, mv) in tm.delta.items():
        for r in range(3):
            delta[(f"{q}/{r}", t)] = (f"{q2}/{(r + 1) % 3}", w, mv)
    return TuringMachine(
        states=states,
        initial=f"{tm.initial}/0",
        accepting=frozenset(f"{q}/{r}" for q in tm.accepting for r in range(3)),
        tapes=tm.tapes,
        read_only=tm.read_only,
        delta=delta,
        name=f"{tm.name}-tripled",
        output_tape=tm.output_tape,
        examples=tm.examples,
        meta={**tm.meta, "tripled_from": tm.name},
    )


def project_state(state: str) -> str:
    return _split(state)[0]


def vertex_edges(tm: TuringMachine) -> Iterator[tuple[tuple[str, Symbols], tuple[str, Symbols]]]:
    """Edges of the (state, head-symbols) graph: any t' after q' = delta_1(q, t)."""
    for (q, t), (q2, _, _) in tm.delta.items():
        for t2 in all_symbols(tm.d):
            yield (q, t), (q2, t2)


def back_steps(tm: TuringMachine) -> list[tuple]:
    """All vertex pairs (v, w) with both v->w and w->v legal (v != w, or self loops)."""
    edges = set(vertex_edges(tm))
    bad = []
    for v, w in edges:
        if v == w or ((w, v) in edges and v < w):
            bad.append((v, w))
    return sorted(bad)


def has_back_step(tm: TuringMachine) -> bool:
    return bool(back_steps(tm))


# -- JSON ------------------------------------------------------------------

def machine_from_dict(spec: dict) -> TuringMachine:
    try:
        d = int(spec["tapes"])
        delta = {}
        for e in spec["delta"]:
            key = (str(e["from"]), tuple(int(s) for s in e["read"]))
            if key in delta:
                raise MachineError(f"duplicate transition for {key}")
            delta[key] = (str(e["to"]), tuple(int(s) for s in e["write"]),
                          tuple(int(s) for s in e["move"]))
            if len(key[1]) != d:
                raise MachineError(f"read arity mismatch at {key}")
        return TuringMachine(
            states=tuple(str(s) for s in spec["states"]),
            initial=str(spec["initial"]),
            accepting=frozenset(str(s) for s in spec["accepting"]),
            tapes=d,
            read_only=frozenset(int(i) for i in spec.get("read_only", [])),
            delta=delta,
            name=spec.get("name", "tm"),
            output_tape=spec.get("output_tape"),
            examples=tuple(tuple(int(b) for b in x) for x in spec.get("examples", [])),
            meta={k: v for k, v in spec.items()
                  if k not in {"states", "initial", "accepting", "tapes",
                               "read_only", "delta", "name", "output_tape", "examples"}},
        )
    except KeyError as exc:
        raise MachineError(f"missing field {exc.args[0]!r}") from None


def machine_to_dict(tm: TuringMachine) -> dict:
    out = {
        "name": tm.name,
        "states": list(tm.states),
        "initial": tm.initial,
        "accepting": sorted(tm.accepting),
        "tapes": tm.tapes,
        "read_only": sorted(tm.read_only),
        "output_tape": tm.output_tape,
        "examples": [list(x) for x in tm.examples],
        **tm.meta,
    }
    out["delta"] = [
        {"from": q, "read": list(t), "to": q2, "write": list(w), "move": list(mv)}
        for (q, t), (q2, w, mv) in sorted(tm.delta.items())
    ]
    return out


def load_machine(path: str | Path) -> TuringMachine:
    with open(path) as fh:
        return machine_from_dict(json.load(fh))


def dump_machine(tm: TuringMachine, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(machine_to_dict(tm), fh, indent=1)
        fh.write("\n")


CORPUS_DIR = Path(__file__).parent / "corpus"
CORPUS = ("copy", "increment", "mark_copy")


def corpus_machine(name: str) -> TuringMachine:
    return load_machine(CORPUS_DIR / f"{name}.json")


def corpus_tau(tm: TuringMachine, payload: Sequence[int]) -> int:
    return len(payload) + int(tm.meta.get("tape_margin", 4))
