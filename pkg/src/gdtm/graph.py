"""A small computation graph with stop-gradient edges.

Values are numpy arrays. Reverse mode gives gradients for the parameter
blocks; a batched forward mode gives one-sided directional derivatives,
which is what the simplex block needs because the loss on it has kinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

# layer cost of each node kind for depth accounting
COST = {
    "input": 0, "parameter": 0, "constant": 0, "linear": 0, "stop_gradient": 0,
    "barrier": 0, "primary": 0,
    "relu": 1, "sqrt": 1, "reciprocal": 1, "product": 1, "sqnorm": 1, "cutoff": 1,
    # one ReLU layer of basis functions, a layer for the corner terms, the weighted sum
    "simplex_loss": 3,
}
SEVERED = {"stop_gradient", "barrier"}


@dataclass(frozen=True)
class Mat:
    """Matrix coefficient of a linear node (acts on the flattened child)."""
    m: np.ndarray


@dataclass
class Node:
    id: int
    kind: str
    children: tuple[int, ...]
    attrs: dict = field(default_factory=dict)
    label: str = ""


class Graph:
    def __init__(self):
        self.nodes: list[Node] = []
        self.blocks: dict[str, int] = {}
        self.inputs: dict[str, int] = {}
        self.output: int | None = None

    # -- construction ------------------------------------------------------

    def _add(self, kind, children=(), label="", **attrs) -> int:
        for c in children:
            if not 0 <= c < len(self.nodes):
                raise ValueError(f"unknown child node {c}")
        n = Node(len(self.nodes), kind, tuple(children), attrs, label)
        self.nodes.append(n)
        return n.id

    def input(self, name: str) -> int:
        if name in self.inputs:
            raise ValueError(f"input {name!r} declared twice")
        self.inputs[name] = self._add("input", label=name, name=name)
        return self.inputs[name]

    def parameter(self, block: str) -> int:
        if block in self.blocks:
            raise ValueError(f"parameter block {block!r} registered twice")
        self.blocks[block] = self._add("parameter", label=block, name=block)
        return self.blocks[block]

    def constant(self, value, label="") -> int:
        return self._add("constant", label=label, value=np.asarray(value, dtype=float))

    def linear(self, terms: Sequence[tuple[Any, int]], bias=0.0, shape=None, label="") -> int:
        """bias + sum_i coef_i * child_i.

        Array coefficients broadcast elementwise; a ``Mat`` is applied to the
        flattened child and the sum is reshaped to ``shape``.
        """
        coefs = [c if isinstance(c, Mat) else np.asarray(c, dtype=float) for c, _ in terms]
        return self._add("linear", [i for _, i in terms], label=label, coefs=coefs,
                         bias=np.asarray(bias, dtype=float), shape=shape)

    def add(self, a, b, label=""):
        return self.linear([(1.0, a), (1.0, b)], label=label)

    def sub(self, a, b, label=""):
        return self.linear([(1.0, a), (-1.0, b)], label=label)

    def scale(self, c, a, label=""):
        return self.linear([(c, a)], label=label)

    def relu(self, a, label=""):
        return self._add("relu", [a], label=label)

    def sqrt(self, a, label=""):
        return self._add("sqrt", [a], label=label)

    def reciprocal(self, a, label=""):
        return self._add("reciprocal", [a], label=label)

    def product(self, a, b, label=""):
        return self._add("product", [a, b], label=label)

    def sqnorm(self, a, label=""):
        return self._add("sqnorm", [a], label=label)

    def cutoff(self, a, knots, values, label=""):
        knots = np.asarray(knots, dtype=float)
        if np.any(np.diff(knots) < 0) or len(knots) != len(values) or len(knots) < 1:
            raise ValueError("cutoff knots must be sorted and match the values")
        return self._add("cutoff", [a], label=label, knots=knots,
                         values=np.asarray(values, dtype=float))

    def stop_gradient(self, a, label=""):
        return self._add("stop_gradient", [a], label=label)

    def barrier(self, fn: Callable, children: Sequence[int], label=""):
        """Value fn(*children); never differentiated (quantize / dequantize)."""
        return self._add("barrier", children, label=label, fn=fn)

    def primary(self, net, theta: int, x: int, label="primary"):
        return self._add("primary", [theta, x], label=label, net=net)

    def simplex_loss(self, s: int, provider: Callable, mu: float,
                     context: int | None = None, label="ell_S"):
        """provider(context_value) -> SimplexLoss, evaluated at s."""
        kids = [s] if context is None else [s, context]
        return self._add("simplex_loss", kids, label=label, provider=provider, mu=mu)

    def set_output(self, node: int):
        self.output = node

    # -- evaluation --------------------------------------------------------

    def evaluate(self, feed: dict[str, Any]) -> list[np.ndarray]:
        """Values of all nodes; ``feed`` maps input names and block labels to arrays."""
        vals: list[np.ndarray] = []
        for n in self.nodes:
            vals.append(self._forward(n, vals, feed))
        return vals

    def eval(self, feed: dict[str, Any], node: int | None = None) -> np.ndarray:
        return self.evaluate(feed)[self.output if node is None else node]

    def _forward(self, n: Node, vals, feed):
        k, a = n.kind, n.attrs
        ch = [vals[c] for c in n.children]
        if k in ("input", "parameter"):
            if a["name"] not in feed:
                raise KeyError(f"no value fed for {a['name']!r}")
            return np.asarray(feed[a["name"]], dtype=float)
        if k == "constant":
            return a["value"]
        if k == "linear":
            out = a["bias"]
            shp = a["shape"]
            for c, v in zip(a["coefs"], ch):
                if isinstance(c, Mat):
                    t = c.m @ v.ravel()
                    out = out + (t.reshape(shp) if shp is not None else t)
                else:
                    out = out + c * v
            return out.reshape(shp) if shp is not None else out
        if k == "relu":
            return np.maximum(0.0, ch[0])
        if k == "sqrt":
            if np.any(ch[0] < 0):
                raise ValueError(f"sqrt of negative value at node {n.id} ({n.label})")
            return np.sqrt(ch[0])
        if k == "reciprocal":
            x = ch[0]
            return np.where(x == 0, 0.0, 1.0 / np.where(x == 0, 1.0, x))
        if k == "product":
            return ch[0] * ch[1]
        if k == "sqnorm":
            return np.asarray(np.sum(ch[0] ** 2))
        if k == "cutoff":
            return _cutoff(ch[0], a["knots"], a["values"])[0]
        if k == "stop_gradient":
            return ch[0]
        if k == "barrier":
            return np.asarray(a["fn"](*ch), dtype=float)
        if k == "primary":
            return np.asarray(a["net"](ch[0], ch[1]), dtype=float)
        if k == "simplex_loss":
            loss = a["provider"](ch[1] if len(ch) > 1 else None)
            return np.asarray(loss(ch[0]))
        raise ValueError(f"unknown node kind {k!r}")

    # -- reverse mode ------------------------------------------------------

    def backward(self, feed, cotangent=None, node=None, vals=None) -> dict[str, np.ndarray]:
        """Gradients of <cotangent, node value> for every parameter block."""
        vals = self.evaluate(feed) if vals is None else vals
        bar = self.cotangents(feed, cotangent, node, vals)
        return {blk: bar.get(i, np.zeros_like(vals[i])) for blk, i in self.blocks.items()}

    def cotangents(self, feed, cotangent=None, node=None, vals=None) -> dict[int, np.ndarray]:
        """Cotangent arriving at every node; severed nodes keep theirs but pass nothing on."""
        node = self.output if node is None else node
        vals = self.evaluate(feed) if vals is None else vals
        bar: dict[int, np.ndarray] = {node: np.ones_like(vals[node]) if cotangent is None
                                      else np.asarray(cotangent, dtype=float)}
        for n in reversed(self.nodes[:node + 1]):
            g = bar.get(n.id)
            if g is None or n.kind in SEVERED or n.kind == "parameter":
                continue
            for c, gc in zip(n.children, self._vjp(n, g, vals)):
                if gc is not None:
                    bar[c] = bar[c] + gc if c in bar else gc
        return bar

    def grad(self, block: str, feed, cotangent=None, node=None) -> np.ndarray:
        return self.backward(feed, cotangent, node)[block]

    def _vjp(self, n: Node, g, vals):
        k, a = n.kind, n.attrs
        ch = [vals[c] for c in n.children]
        if k == "linear":
            out = []
            for c, v in zip(a["coefs"], ch):
                if isinstance(c, Mat):
                    out.append((c.m.T @ np.ravel(g)).reshape(v.shape))
                else:
                    out.append(_unbroadcast(c * g, v.shape))
            return out
        if k == "relu":
            return [g * (ch[0] >= 0)]
        if k == "sqrt":
            return [g * 0.5 / np.sqrt(ch[0])]
        if k == "reciprocal":
            x = ch[0]
            return [g * np.where(x == 0, 0.0, -1.0 / np.where(x == 0, 1.0, x) ** 2)]
        if k == "product":
            return [_unbroadcast(g * ch[1], ch[0].shape), _unbroadcast(g * ch[0], ch[1].shape)]
        if k == "sqnorm":
            return [2.0 * g * ch[0]]
        if k == "cutoff":
            return [g * _cutoff(ch[0], a["knots"], a["values"])[1]]
        if k == "primary":
            return [a["net"].vjp(ch[0], ch[1], g), None]
        if k == "simplex_loss":
            loss = a["provider"](ch[1] if len(ch) > 1 else None)
            return [g * corner_gradient(loss, ch[0], a["mu"])] + [None] * (len(ch) - 1)
        return [None] * len(ch)

    # -- forward mode ------------------------------------------------------

    def jvp(self, feed, tangents: dict[str, np.ndarray], node=None, vals=None) -> np.ndarray:
        """Batched one-sided directional derivatives.

        ``tangents[block]`` has shape (batch, *block_shape). Kinks are
        resolved with right derivatives, except simplex-loss nodes, which
        use the exact corner difference (l(s + mu ds) - l(s)) / mu.
        """
        node = self.output if node is None else node
        vals = self.evaluate(feed) if vals is None else vals
        batch = next(iter(tangents.values())).shape[0]
        dots: list[np.ndarray | None] = [None] * len(self.nodes)
        for n in self.nodes[:node + 1]:
            if n.kind == "parameter":
                t = tangents.get(n.attrs["name"])
                dots[n.id] = None if t is None else np.asarray(t, dtype=float)
                continue
            cd = [dots[c] for c in n.children]
            if n.kind in SEVERED or all(d is None for d in cd):
                continue
            dots[n.id] = self._jvp(n, cd, vals, batch)
        res = dots[node]
        return np.zeros((batch,) + np.shape(vals[node])) if res is None else res

    def _jvp(self, n: Node, cd, vals, batch):
        k, a = n.kind, n.attrs
        ch = [vals[c] for c in n.children]
        if k == "linear":
            out, full = 0.0, (batch,) + vals[n.id].shape
            for c, d in zip(a["coefs"], cd):
                if d is None:
                    continue
                if isinstance(c, Mat):
                    out = out + (d.reshape(batch, -1) @ c.m.T).reshape(full)
                else:
                    out = out + c * d
            return np.broadcast_to(out, full).copy()
        if k == "relu":
            return cd[0] * (ch[0] > 0) + np.maximum(cd[0], 0) * (ch[0] == 0)
        if k == "sqrt":
            return cd[0] * 0.5 / np.sqrt(ch[0])
        if k == "reciprocal":
            x = ch[0]
            return cd[0] * np.where(x == 0, 0.0, -1.0 / np.where(x == 0, 1.0, x) ** 2)
        if k == "product":
            nd = np.ndim(vals[n.id])
            out = 0.0
            if cd[0] is not None:
                out = out + _lift(cd[0], nd) * ch[1]
            if cd[1] is not None:
                out = out + ch[0] * _lift(cd[1], nd)
            return out
        if k == "sqnorm":
            return 2.0 * np.sum((cd[0] * ch[0]).reshape(batch, -1), axis=1)
        if k == "cutoff":
            return cd[0] * _cutoff(ch[0], a["knots"], a["values"])[1]
        if k == "primary":
            if cd[1] is not None:
                raise NotImplementedError("directional derivative through the primary input")
            return np.stack([a["net"].jvp(ch[0], ch[1], d) for d in cd[0]])
        if k == "simplex_loss":
            if len(cd) > 1 and cd[1] is not None:
                raise NotImplementedError("tangent through the simplex-loss context")
            loss = a["provider"](ch[1] if len(ch) > 1 else None)
            return simplex_jvp(loss, ch[0], cd[0], a["mu"])
        raise ValueError(f"no forward rule for {k!r}")

    def dir_deriv_block(self, feed, block: str, direction, node=None) -> float:
        d = np.asarray(direction, dtype=float)[None]
        return float(np.squeeze(self.jvp(feed, {block: d}, node)))

    # -- accounting --------------------------------------------------------

    def depth(self, node=None, cost=None) -> int:
        cost = COST if cost is None else {**COST, **cost}
        node = self.output if node is None else node
        dep = []
        for n in self.nodes[:node + 1]:
            below = max((dep[c] for c in n.children), default=0)
            dep.append(below + cost[n.kind])
        return dep[node]

    def count(self, kind: str) -> int:
        return sum(n.kind == kind for n in self.nodes)

    def dump(self) -> str:
        lines = []
        for n in self.nodes:
            extra = ""
            if n.kind == "cutoff":
                extra = f" knots={n.attrs['knots'].tolist()} values={n.attrs['values'].tolist()}"
            elif n.kind == "simplex_loss":
                extra = f" mu={n.attrs['mu']}"
            kids = ",".join(map(str, n.children))
            lines.append(f"{n.id:4d} {n.kind:<14s} [{kids}]{' ' + n.label if n.label else ''}{extra}")
        return "\n".join(lines) + "\n"


def _cutoff(x, knots, values):
    """Piecewise-linear interpolation, constant outside; value and right slope."""
    x = np.asarray(x, dtype=float)
    idx = np.searchsorted(knots, x, side="right") - 1
    n = len(knots)
    inner = (idx >= 0) & (idx < n - 1)
    i = np.clip(idx, 0, max(n - 2, 0))
    if n == 1:
        return np.full_like(x, values[0]), np.zeros_like(x)
    k0, k1 = knots[i], knots[i + 1]
    v0, v1 = values[i], values[i + 1]
    span = np.where(k1 > k0, k1 - k0, 1.0)
    slope = np.where(inner & (k1 > k0), (v1 - v0) / span, 0.0)
    val = np.where(idx < 0, values[0],
                   np.where(idx >= n - 1, values[-1], v0 + slope * (x - k0)))
    return val, slope


def _lift(d, ndim):
    # align a batched tangent (batch, *shape) with numpy broadcasting to ndim dims
    pad = ndim - (d.ndim - 1)
    return d.reshape((d.shape[0],) + (1,) * pad + d.shape[1:]) if pad > 0 else d


def _unbroadcast(g, shape):
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _vertex_of(s) -> int | None:
    hit = np.flatnonzero(s == 1.0)
    if len(hit) == 1 and np.count_nonzero(s) == 1:
        return int(hit[0])
    return None


def corner_gradient(loss, s, mu) -> np.ndarray:
    """A vector g with <g, e_u - e_v> equal to the one-sided derivative, g_v = 0."""
    v = _vertex_of(s)
    if v is None:
        raise ValueError("simplex-loss gradients are only defined at vertices")
    vals = loss.corner_values(v, mu)
    return (vals - vals[v]) / mu


def simplex_jvp(loss, s, ds, mu) -> np.ndarray:
    v = _vertex_of(s)
    out = np.empty(len(ds))
    if v is not None:
        # fast path: directions e_u - e_v
        vals = None
        for i, d in enumerate(ds):
            u = _vertex_of(d + s)
            if u is not None:
                if vals is None:
                    vals = loss.corner_values(v, mu)
                out[i] = (vals[u] - vals[v]) / mu
            else:
                out[i] = (loss(s + mu * d) - loss(s)) / mu
        return out
    base = loss(s)
    for i, d in enumerate(ds):
        out[i] = (loss(s + mu * d) - base) / mu
    return out
