"""Tracer with the whole machine configuration encoded in the simplex vertex."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .machine import Configuration, TapeBoundError, TuringMachine, step
from .simplex import HALF, SimplexLoss, argmin_ties, line_search, vertex


class GraphError(RuntimeError):
    pass


class TraceError(RuntimeError):
    pass


@dataclass(frozen=True)
class StateGraph:
    configs: tuple[Configuration, ...]
    succ: np.ndarray        # successor index or -1 (halted / leaves tape / outside V)
    k: np.ndarray           # steps to halt, capped at K
    K: int
    starts: tuple[int, ...]  # vertex index of each input
    accepting: np.ndarray   # bool mask

    @property
    def m(self) -> int:
        return len(self.configs)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(v, int(w)) for v, w in enumerate(self.succ) if w >= 0]

    def index(self, c: Configuration) -> int:
        return self._lookup()[c]

    def _lookup(self):
        cache = self.__dict__.get("_index")
        if cache is None:
            cache = {c: i for i, c in enumerate(self.configs)}
            object.__setattr__(self, "_index", cache)
        return cache


def _successor(tm: TuringMachine, c: Configuration) -> Configuration | None:
    if c.q in tm.accepting:
        return None
    try:
        return step(tm, c)
    except TapeBoundError:
        return None


def _steps_to_halt(succ: np.ndarray, accepting: np.ndarray, K: int) -> np.ndarray:
    k = np.where(accepting, 0, K)
    has = succ >= 0
    for _ in range(K):
        nxt = np.where(has, np.minimum(K, 1 + k[np.where(has, succ, 0)]), K)
        nxt = np.where(accepting, 0, nxt)
        if np.array_equal(nxt, k):
            break
        k = nxt
    return k


def build_graph(tm: TuringMachine, tau: int, inputs: Sequence[Configuration],
                mode: str = "reachable", horizon: int | None = None,
                min_vertices: int = 0) -> StateGraph:
    """Vertices are configurations; edges are single machine steps.

    ``reachable`` collects the forward orbits of ``inputs`` in order, so the
    first input sits at vertex 0. ``full`` enumerates every configuration with
    tape length tau. Padding vertices (isolated, never halting) are appended
    when fewer than ``min_vertices`` exist.
    """
    if mode not in ("reachable", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "reachable":
        K = horizon
        if K is None:
            K = 1 + max((_orbit_len(tm, c, limit=10**6) for c in inputs), default=0)
        configs, seen = [], {}
        for c0 in inputs:
            c, n = c0, 0
            while c is not None and c not in seen:
                seen[c] = len(configs)
                configs.append(c)
                c = _successor(tm, c)
                n += 1
                if n > K:
                    raise GraphError(f"input starting in {c0.q!r} does not halt within {K} steps")
            if c is None and configs[-1].q not in tm.accepting:
                raise GraphError(f"input starting in {c0.q!r} leaves the tape window")
    else:
        d = tm.d
        configs = [Configuration(q, np.array(bits, dtype=np.int8).reshape(tau, d), heads)
                   for q in tm.states
                   for bits in itertools.product((-1, 1), repeat=tau * d)
                   for heads in itertools.product(range(tau), repeat=d)]
        seen = {c: i for i, c in enumerate(configs)}
        K = horizon if horizon is not None else 1 + max(
            (_orbit_len(tm, c, limit=len(configs)) for c in inputs), default=len(configs))
    pad = max(0, min_vertices - len(configs))
    n = len(configs)
    succ = np.full(n + pad, -1, dtype=np.int64)
    for i, c in enumerate(configs):
        if mode == "full" and not all(0 < h < tau - 1 for h in c.heads):
            continue
        s = _successor(tm, c)
        if s is not None and s in seen:
            succ[i] = seen[s]
    accepting = np.array([c.q in tm.accepting for c in configs] + [False] * pad)
    if pad:
        blank = np.full((tau, tm.d), -1, dtype=np.int8)
        configs = configs + [Configuration(f"<pad{j}>", blank, (0,) * tm.d) for j in range(pad)]
    k = _steps_to_halt(succ, accepting, K)
    starts = tuple(seen[c] for c in inputs)
    for c, s in zip(inputs, starts):
        if k[s] >= K:
            raise GraphError(f"input starting in {c.q!r} does not halt within {K - 1} steps")
    return StateGraph(tuple(configs), succ, k, K, starts, accepting)


def _orbit_len(tm: TuringMachine, c: Configuration, limit: int) -> int:
    n = 0
    while c.q not in tm.accepting:
        c = _successor(tm, c)
        n += 1
        if c is None or n > limit:
            raise GraphError("input does not halt inside the tape window")
    return n


@dataclass(frozen=True)
class WeightAssignment:
    graph: StateGraph
    ladder: np.ndarray
    omega_v: np.ndarray
    edge_v: np.ndarray
    edge_w: np.ndarray
    omega_e: np.ndarray

    @property
    def B(self) -> float:
        return float(self.ladder[-1])

    def omega_vw(self, v: int, w: int) -> float:
        g = self.graph
        if g.succ[v] == w or g.succ[w] == v:
            return 0.5 * (self.ladder[g.k[v]] + self.ladder[g.k[w]])
        return self.B


def default_ladder(K: int) -> np.ndarray:
    return 1.0 + np.arange(K + 1, dtype=float)


def assign_weights(g: StateGraph, ladder: Sequence[float] | None = None) -> WeightAssignment:
    W = default_ladder(g.K) if ladder is None else np.asarray(ladder, dtype=float)
    if len(W) != g.K + 1:
        raise ValueError(f"ladder needs K+1 = {g.K + 1} entries, got {len(W)}")
    if np.any(np.diff(W) <= 0):
        raise ValueError("ladder must be strictly increasing")
    ev = np.array([v for v, _ in g.edges], dtype=np.int64)
    ew = np.array([w for _, w in g.edges], dtype=np.int64)
    oe = 0.5 * (W[g.k[ev]] + W[g.k[ew]]) if len(ev) else np.zeros(0)
    wa = WeightAssignment(g, W, W[g.k], ev, ew, oe)
    problems = check_weights(wa)
    if problems:
        raise ValueError("weight conditions violated: " + "; ".join(problems[:5]))
    return wa


def check_weights(wa: WeightAssignment) -> list[str]:
    """Edge-weight conditions on every edge leaving a halting vertex."""
    g, out = wa.graph, []
    live = g.k < g.K
    B = wa.B
    for v, w, o in zip(wa.edge_v, wa.edge_w, wa.omega_e):
        if not live[v]:
            continue
        if not wa.omega_v[v] > o > wa.omega_v[w]:
            out.append(f"omega_v > omega_vw > omega_w fails on ({v},{w})")
        if not o < B:
            out.append(f"edge ({v},{w}) not below B")
        if wa.omega_vw(w, v) != o:
            out.append(f"asymmetric weight on ({v},{w})")
        nxt = g.succ[w]
        if nxt >= 0 and not o > wa.omega_vw(w, int(nxt)):
            out.append(f"consecutive edges ({v},{w}),({w},{nxt}) not decreasing")
    return out


def build_loss(wa: WeightAssignment) -> SimplexLoss:
    """sum_v omega_v hat_v + sum over unordered pairs omega_vw bump_vw."""
    m = wa.graph.m
    if m < 3:
        raise ValueError("the simplex loss needs at least 3 vertices")
    loss = SimplexLoss(m)
    loss.add_hats(np.arange(m), HALF, wa.omega_v)
    loss.add_all_pair_bumps(wa.B)
    if len(wa.edge_v):
        loss.add_edge_bumps(wa.edge_v, wa.edge_w, wa.omega_e - wa.B)
    return loss


@dataclass(frozen=True)
class InternalTrace:
    vertices: tuple[int, ...]
    losses: tuple[float, ...]
    fixed_point: bool

    def to_jsonl(self) -> str:
        return "".join(json.dumps({"step": k, "vertex": v, "loss": l}) + "\n"
                       for k, (v, l) in enumerate(zip(self.vertices, self.losses)))


def trace(loss: SimplexLoss, v0: int, rule: str = "unit", max_iters: int = 10_000) -> InternalTrace:
    """Frank-Wolfe iterations x <- x + alpha (e_w - x) from vertex v0.

    Stops at the first fixed point (argmin direction is the current vertex).
    """
    if rule not in ("unit", "line_search"):
        raise ValueError(f"unknown step rule {rule!r}")
    m = loss.m
    v = v0
    verts, losses = [v0], [float(loss(vertex(v0, m)))]
    for _ in range(max_iters):
        w = argmin_ties(loss.corner_values(v, HALF), v)
        if w == v:
            return InternalTrace(tuple(verts), tuple(losses), True)
        x, y = vertex(v, m), vertex(w, m)
        alpha = 1.0 if rule == "unit" else line_search(loss, x, y)
        nx = x + alpha * (y - x)
        hit = np.flatnonzero(np.abs(nx - 1.0) < 1e-12)
        if len(hit) != 1 or np.abs(nx).sum() > 1.0 + 1e-12:
            raise TraceError(f"iterate left the vertex set at step {len(verts)}: "
                             f"alpha={alpha}, direction {v}->{w}")
        v = int(hit[0])
        verts.append(v)
        losses.append(float(loss(nx)))
    return InternalTrace(tuple(verts), tuple(losses), False)
