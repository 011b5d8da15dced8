"""Tracer with finite control + head symbols on the simplex and tapes in (T, H).

Vertices are pairs (q, t) of a tripled state and the d symbols under the
heads. T holds the tape contents (tau x d), H one-hot head indicators.
The loss couples them through three stop-gradient least-squares terms; with
gamma = 1 every quantity is a small integer, so traces are compared exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .machine import (Configuration, TuringMachine, all_symbols, back_steps,
                      project_state)
from .simplex import QUARTER, SimplexLoss, argmin_ties, vertex


class ConstructionError(RuntimeError):
    """An iterate left the set of encoded machine states."""


class BackStepError(ValueError):
    """Both (v, w) and (w, v) are legal steps; the profile loss is ill-defined."""


class NoHaltError(RuntimeError):
    pass


@dataclass(frozen=True)
class VertexSet:
    states: tuple[str, ...]
    d: int

    @property
    def symbols(self) -> list[tuple[int, ...]]:
        return all_symbols(self.d)

    def __len__(self):
        return len(self.states) << self.d

    def index(self, q: str, t: Sequence[int]) -> int:
        ti = 0
        for s in t:
            ti = 2 * ti + (1 if s > 0 else 0)
        return (self.states.index(q) << self.d) + ti

    def label(self, v: int) -> tuple[str, tuple[int, ...]]:
        q = self.states[v >> self.d]
        ti = v & ((1 << self.d) - 1)
        return q, tuple(1 if (ti >> (self.d - 1 - i)) & 1 else -1 for i in range(self.d))


@dataclass(frozen=True)
class TapeOperators:
    read: np.ndarray    # d x |V|, e_{q,t} -> t
    write: np.ndarray   # d x |V|, e_{q,t} -> delta_2(q, t)
    moves: np.ndarray   # |V| x d, delta_3(q, t); zero on accepting vertices

    def shift(self, x: np.ndarray, H: np.ndarray) -> np.ndarray:
        """S(x) H: head indicators moved by delta_3, linear in x, zero fill."""
        x = np.asarray(x, dtype=float)
        plus = x @ (self.moves == 1)
        minus = x @ (self.moves == -1)
        stay = x @ (self.moves == 0)
        out = stay * H
        out[1:] += plus * H[:-1]
        out[:-1] += minus * H[1:]
        return out


def tape_operators(tm: TuringMachine, vs: VertexSet) -> TapeOperators:
    n, d = len(vs), vs.d
    read = np.zeros((d, n))
    write = np.zeros((d, n))
    moves = np.zeros((n, d), dtype=np.int64)
    for v in range(n):
        q, t = vs.label(v)
        read[:, v] = t
        if q in tm.accepting:
            write[:, v] = t
        else:
            _, w, mv = tm.transition(q, t)
            write[:, v] = w
            moves[v] = mv
    return TapeOperators(read, write, moves)


@dataclass(frozen=True)
class ExternalLossParams:
    b: float
    gamma: float
    c: float
    d: int

    @property
    def halting_ceiling(self) -> float:
        """Largest loss a halting state can have."""
        b, d, g = self.b, self.d, self.gamma
        return self.c + (8 * b * b * d + 3 * d - b ** 3) * g

    @property
    def nonhalting_floor(self) -> float:
        return self.c

    @property
    def nonhalting_ceiling(self) -> float:
        b, d, g = self.b, self.d, self.gamma
        return self.c + (8 * b * b * d + 3 * d) * g

    def failures(self, separation: bool = True) -> list[str]:
        b, d, g = self.b, self.d, self.gamma
        out = []
        if not b ** 3 >= 0.5 * (b ** 3 + d * b):
            out.append("successor-preference: b^3 >= (b^3 + d b)/2")
        if not 0.5 * b ** 3 - d * b >= 2 * d * b * b:
            out.append("gap-dominance: b^3/2 - d b >= 2 d b^2")
        if not b * b > b:
            out.append("read-dominance: b^2 > b")
        if separation and not 8 * b * b * d + 3 * d < b ** 3:
            out.append("halting-separation: 8 b^2 d + 3 d < b^3")
        if not g > 0:
            out.append("gamma must be positive")
        if not self.c >= (b ** 3 + d * b) * g:
            out.append("nonnegativity: c >= (b^3 + d b) gamma")
        return out

    def validate(self, separation: bool = True) -> "ExternalLossParams":
        bad = self.failures(separation)
        if bad:
            raise ValueError("constant check failed: " + "; ".join(bad))
        return self


def choose_constants(d: int, gamma: float = 1.0, separation: bool = True) -> ExternalLossParams:
    b = 2
    while ExternalLossParams(b, gamma, (b ** 3 + d * b) * gamma, d).failures(separation):
        b += 1
    return ExternalLossParams(b, gamma, (b ** 3 + d * b) * gamma, d)


@dataclass
class MachineState:
    s: np.ndarray
    T: np.ndarray
    H: np.ndarray

    def copy(self) -> "MachineState":
        return MachineState(self.s.copy(), self.T.copy(), self.H.copy())

    @property
    def vertex(self) -> int:
        hit = np.flatnonzero(self.s == 1.0)
        if len(hit) != 1 or np.count_nonzero(self.s) != 1:
            raise ConstructionError(f"s is not a vertex: {self.s}")
        return int(hit[0])

    @property
    def heads(self) -> tuple[int, ...]:
        return tuple(int(np.argmax(self.H[:, j])) for j in range(self.H.shape[1]))

    def to_json(self, vs: VertexSet) -> dict:
        q, t = vs.label(self.vertex)
        return {"state": q, "symbols": list(t), "heads": list(self.heads),
                "tapes": self.T.T.astype(int).tolist()}


@dataclass
class TapeLoss:
    tm: TuringMachine
    vs: VertexSet
    ops: TapeOperators
    params: ExternalLossParams
    ell_s: SimplexLoss
    cases: dict = field(default_factory=lambda: {"match": 0, "mismatch": 0})

    @property
    def writable(self) -> np.ndarray:
        return np.array([i not in self.tm.read_only for i in range(self.vs.d)])

    def parts(self, x, T, H) -> dict:
        g, b = self.params.gamma, self.params.b
        SH = self.ops.shift(x, H)
        r_write = np.einsum("ij,ij->j", T, H) - self.ops.write @ x
        r_read = np.einsum("ij,ij->j", T, SH) - self.ops.read @ x
        return {
            "c": self.params.c,
            "simplex": float(self.ell_s(x)),
            "write": 0.5 * g * float(r_write @ r_write),
            "read": 0.5 * 4 * b * b * g * float(r_read @ r_read),
            "move": 0.5 * g * float(np.sum((SH - H) ** 2)),
        }

    def value(self, x, T, H) -> float:
        p = self.parts(x, T, H)
        return p["c"] + p["simplex"] + p["write"] + p["read"] + p["move"]

    __call__ = value

    def grad_T(self, x, T, H) -> np.ndarray:
        r = np.einsum("ij,ij->j", T, H) - self.ops.write @ x
        return self.params.gamma * H * (r * self.writable)

    def grad_H(self, x, T, H) -> np.ndarray:
        return -self.params.gamma * (self.ops.shift(x, H) - H)

    def read_target(self, x, T, H) -> np.ndarray:
        return np.einsum("ij,ij->j", T, self.ops.shift(x, H))

    def s_scores(self, v: int, T, H) -> np.ndarray:
        """Directional-derivative scores (times mu) toward every vertex."""
        b, g = self.params.b, self.params.gamma
        a = self.read_target(vertex(v, len(self.vs)), T, H)
        A = self.ops.read
        return self.ell_s.corner_values(v, QUARTER) + 4 * b * b * g * QUARTER * ((A[:, v] - a) @ A)


def build_loss(tm: TuringMachine, params: ExternalLossParams) -> TapeLoss:
    """ell = c + ell_S + write + read + move terms."""
    if params.d != tm.d:
        raise ValueError(f"params built for d={params.d}, machine has d={tm.d}")
    bad = back_steps(tm)
    if bad:
        v, w = bad[0]
        raise BackStepError(f"back-step between {v} and {w} ({len(bad)} pairs); triple the states")
    vs = VertexSet(tm.states, tm.d)
    ops = tape_operators(tm, vs)
    b, g = params.b, params.gamma
    n = len(vs)
    ell = SimplexLoss(n)
    acc = [v for v in range(n) if vs.label(v)[0] in tm.accepting]
    ell.add_hats(np.array(acc, dtype=np.int64), QUARTER, -b ** 3 * g)
    ev, ew, om = [], [], []
    for v in range(n):
        q, t = vs.label(v)
        if q in tm.accepting:
            continue
        q2 = tm.transition(q, t)[0]
        for t2 in vs.symbols:
            same = sum(1 for i in range(tm.d) if t2[i] == t[i])
            ev.append(v)
            ew.append(vs.index(q2, t2))
            om.append(-(b ** 3 + b * same) * g)
    ell.add_profiles(np.array(ev, dtype=np.int64), np.array(ew, dtype=np.int64), np.array(om))
    return TapeLoss(tm, vs, ops, params, ell)


def initial_state(loss: TapeLoss, c: Configuration) -> MachineState:
    tau, d = c.tapes.shape
    H = np.zeros((tau, d))
    H[list(c.heads), range(d)] = 1.0
    s = vertex(loss.vs.index(c.q, c.read()), len(loss.vs))
    return MachineState(s, c.tapes.astype(float), H)


def check_state(loss: TapeLoss, st: MachineState) -> None:
    v = st.vertex
    cols = st.H.sum(axis=0)
    if not (np.all(np.isin(st.H, (0.0, 1.0))) and np.all(cols == 1.0)):
        raise ConstructionError(f"H is not one-hot per tape:\n{st.H}")
    if not np.all(np.isin(st.T, (-1.0, 1.0))):
        raise ConstructionError(f"T has entries outside {{-1, +1}}:\n{st.T}")
    t = loss.vs.label(v)[1]
    if tuple(np.einsum("ij,ij->j", st.T, st.H).astype(int)) != t:
        raise ConstructionError(f"vertex symbols {t} disagree with the tape under the heads")


def gd_step(loss: TapeLoss, st: MachineState, validate: bool = True) -> MachineState:
    v = st.vertex
    if loss.vs.label(v)[0] in loss.tm.accepting:
        raise ConstructionError("gradient step requested at a halting vertex")
    x = st.s
    a = loss.read_target(x, st.T, st.H)
    t = loss.ops.read[:, v]
    loss.cases["match"] += int(np.sum(a == t))
    loss.cases["mismatch"] += int(np.sum(a != t))
    w = argmin_ties(loss.s_scores(v, st.T, st.H), v)
    g = loss.params.gamma
    new = MachineState(x + (vertex(w, len(x)) - x),
                       st.T - loss.grad_T(x, st.T, st.H) / g,
                       st.H - loss.grad_H(x, st.T, st.H) / g)
    if validate:
        check_state(loss, new)
    return new


@dataclass(frozen=True)
class ExternalTrace:
    states: tuple[MachineState, ...]
    losses: tuple[float, ...]
    halted: bool

    def to_jsonl(self, vs: VertexSet) -> str:
        return "".join(json.dumps({"step": k, "loss": l, **s.to_json(vs)}) + "\n"
                       for k, (s, l) in enumerate(zip(self.states, self.losses)))


def trace(loss: TapeLoss, st: MachineState, max_iters: int = 10_000) -> ExternalTrace:
    """Step until the loss falls to the halting ceiling."""
    ceiling = loss.params.halting_ceiling
    states, losses = [st], [loss.value(st.s, st.T, st.H)]
    while losses[-1] > ceiling:
        if len(states) > max_iters:
            raise NoHaltError(f"no halt within {max_iters}")
        st = gd_step(loss, st)
        states.append(st)
        losses.append(loss.value(st.s, st.T, st.H))
    return ExternalTrace(tuple(states), tuple(losses), True)


def as_configuration(loss: TapeLoss, st: MachineState) -> Configuration:
    q, _ = loss.vs.label(st.vertex)
    return Configuration(project_state(q), st.T.astype(np.int8), st.heads)


def trainable_dimension(tm: TuringMachine, tau: int, n: int = 0, m: int = 0) -> int:
    """|Q_tripled| 2^d + 2 d tau + n m for an untripled machine ``tm``."""
    return 3 * len(tm.states) * 2 ** tm.d + 2 * tm.d * tau + n * m


def is_integral(x: np.ndarray) -> bool:
    return bool(np.all(np.asarray(x) == np.round(x))) and all(
        math.isfinite(float(v)) for v in np.ravel(x))
