"""The extended network: primary model, machine branch and two switches.

    out = s_init(s_net(f_theta(x), f_TM), z)
    f_TM = sqrt(2 ell_TM(s, T, H)) * f_perp(sg(z))

Inputs x and the label buffer z reach the machine only through a
quantization barrier on the read-only tape; theta is dequantized from the
output tape. Training is Frank-Wolfe on s and plain gradient steps on
(T, H, z). The first step copies y into z, the next k_t steps run the
machine, and the last one flips s_net to the primary model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import external, internal
from .codec import FloatCodec
from .graph import Graph, Mat
from .machine import BLANK, Configuration, TuringMachine, frame, run, triple_states
from .simplex import HALF, QUARTER, argmin_ties, vertex


class ConfigError(ValueError):
    pass


# -- primary networks --------------------------------------------------------

@dataclass(frozen=True)
class ConstantNet:
    """f_theta(x) = theta for every sample."""
    m: int

    @property
    def p(self) -> int:
        return self.m

    def __call__(self, theta, x):
        return np.tile(np.asarray(theta, dtype=float), (np.shape(x)[0], 1))

    def vjp(self, theta, x, g):
        return np.asarray(g).sum(axis=0)

    def jvp(self, theta, x, dtheta):
        return self(dtheta, x)


@dataclass(frozen=True)
class LinearNet:
    """f_theta(x) = x theta with theta reshaped to M x m."""
    M: int
    m: int

    @property
    def p(self) -> int:
        return self.M * self.m

    def __call__(self, theta, x):
        return np.asarray(x) @ np.reshape(theta, (self.M, self.m))

    def vjp(self, theta, x, g):
        return (np.asarray(x).T @ g).ravel()

    def jvp(self, theta, x, dtheta):
        return self(dtheta, x)


# -- switches and the orthogonal direction (plain numpy versions) -----------

def psi(t, eps):
    return np.interp(t, [eps / 3, 2 * eps / 3], [1.0, 0.0])


def phi(t, b_lo, b_hi, delta):
    return np.interp(t, [2 * b_lo + delta, 2 * b_hi - delta], [0.0, 1.0])


def s_init(u, z, eps):
    p = psi(np.sum(np.asarray(z) ** 2), eps)
    return (1 - p) * np.asarray(u) + p * np.asarray(z)


def s_net(f, u, b_lo, b_hi, delta):
    p = phi(np.sum(np.asarray(u) ** 2), b_lo, b_hi, delta)
    return (1 - p) * np.asarray(f) + p * np.asarray(u)


def f_perp(z) -> np.ndarray:
    """Unit vector orthogonal to z, built from e_0 (or e_1 if z is near e_0)."""
    z = np.ravel(np.asarray(z, dtype=float))
    if z.size < 2:
        raise ValueError("f_perp needs dimension >= 2")
    nz = z @ z
    if nz == 0:
        return vertex(0, z.size)
    ref = 0 if z[0] ** 2 <= 0.75 * nz else 1
    y = vertex(ref, z.size) - (z[ref] / nz) * z
    return y / np.linalg.norm(y)


def f_perp_graph(g: Graph, zflat: int, n: int) -> int:
    """Seven layers; the reciprocal returns 0 at 0 so z = 0 maps to e_0."""
    e0, e1 = vertex(0, n), vertex(1, n)
    nz = g.sqnorm(zflat, "|z|^2")                                   # 1
    av = g.linear([(Mat(e0[None]), zflat)], shape=(), label="z_0")
    aw = g.linear([(Mat(e1[None]), zflat)], shape=(), label="z_1")
    qv = g.product(av, av)                                          # 1
    qw = g.product(aw, aw)                                          # 1
    r = g.reciprocal(nz, "1/|z|^2")                                 # 2
    use_v = g.cutoff(g.linear([(0.75, nz), (-1.0, qv)]), [0.0, 0.0], [0.0, 1.0])  # 2
    ref = g.linear([(1.0, g.product(use_v, g.constant(e0 - e1)))], bias=e1)      # 3
    aref = g.add(aw, g.product(use_v, g.sub(av, aw)))               # 3
    qref = g.add(qw, g.product(use_v, g.sub(qv, qw)))               # 3
    rz = g.product(r, zflat)                                        # 3
    ybar = g.sub(ref, g.product(aref, rz))                          # 4
    ny = g.linear([(-1.0, g.product(qref, r))], bias=1.0)           # 4
    inv = g.reciprocal(g.sqrt(ny))                                  # 6
    return g.product(inv, ybar, "f_perp")                          # 7


# -- configuration ---------------------------------------------------------

@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    eps: float | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if self.x.shape[0] != self.y.shape[0]:
            raise ConfigError("x and y need the same number of samples")
        ny = float(np.sum(self.y ** 2))
        if self.eps is None:
            self.eps = ny
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if ny < self.eps:
            raise ConfigError(f"labels-size violation: |y|^2 = {ny} < eps = {self.eps}")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def M(self):
        return self.x.shape[1]

    @property
    def m(self):
        return self.y.shape[1]


@dataclass(frozen=True)
class SwitchParams:
    eps: float
    b_lo: float
    b_hi: float
    delta: float
    b_stop: float

    @classmethod
    def between(cls, ceiling: float, floor: float, eps: float) -> "SwitchParams":
        gap = floor - ceiling
        return cls(eps, ceiling + gap / 3, ceiling + 2 * gap / 3, gap / 12, eps / 4)

    def failures(self, ceiling: float, floor: float, strict_top: bool) -> list[str]:
        out = []
        top_ok = self.b_hi < floor if strict_top else self.b_hi <= floor
        if not (ceiling < self.b_lo < self.b_hi and top_ok):
            out.append(f"switch chain {ceiling} < B_lo={self.b_lo} < B_hi={self.b_hi} "
                       f"{'<' if strict_top else '<='} {floor} violated")
        if not (self.delta > 0 and 2 * self.b_lo + self.delta < 2 * self.b_hi - self.delta):
            out.append("cutoff margin needs 2 B_lo + delta < 2 B_hi - delta")
        if not 0 <= self.b_stop < self.eps / 2:
            out.append(f"B_stop={self.b_stop} must lie in [0, eps/2)")
        return out


@dataclass
class StepRecord:
    step: int
    loss: float
    psi: float
    phi: float
    vertex: int
    heads: tuple[int, ...]
    tape: str
    z_is_y: bool

    def to_json(self):
        return {"step": self.step, "loss": self.loss, "psi": self.psi, "phi": self.phi,
                "vertex": self.vertex, "heads": list(self.heads), "output_tape": self.tape,
                "z_is_y": self.z_is_y}


@dataclass
class TrainReport:
    records: list[StepRecord]
    states: list[dict]
    steps: int
    k_t: int
    output: np.ndarray
    reference: np.ndarray
    y: np.ndarray

    @property
    def steps_ok(self) -> bool:
        return self.steps == self.k_t + 1

    @property
    def output_ok(self) -> bool:
        return bool(np.array_equal(self.output, self.reference))

    @property
    def init_flips(self) -> list[int]:
        return _flips([r.psi for r in self.records])

    @property
    def net_flips(self) -> list[int]:
        return _flips([r.phi for r in self.records])

    def summary(self) -> str:
        return (f"steps = k_t+1: {str(self.steps_ok).lower()}; "
                f"F == f_TM(x,y)(x): {str(self.output_ok).lower()}")

    def to_json(self) -> dict:
        return {"steps": self.steps, "k_t": self.k_t,
                "steps_equal_k_t_plus_1": self.steps_ok,
                "output_equals_reference": self.output_ok,
                "output": self.output.tolist(), "reference": self.reference.tolist(),
                "s_init_flips": self.init_flips, "s_net_flips": self.net_flips,
                "records": [r.to_json() for r in self.records]}


def _flips(vals):
    return [k for k in range(1, len(vals)) if vals[k] != vals[k - 1]]


# -- assembly ----------------------------------------------------------------

@dataclass
class ExtendedNetwork:
    graph: Graph
    construction: str
    tm: TuringMachine            # machine actually traced (tripled for external)
    primary: Any
    codec: FloatCodec
    switches: SwitchParams
    tau: int
    shape: tuple[int, int, int]  # n, M, m
    nodes: dict[str, int]
    init: dict[str, np.ndarray]
    tape_loss: external.TapeLoss | None = None
    lr: dict[str, float] = field(default_factory=dict)
    mu: float = QUARTER
    orbit: Callable | None = None

    # feeds
    def feed(self, params: dict, x, y=None) -> dict:
        f = {"x": np.asarray(x, dtype=float), **params}
        f["y"] = np.zeros((self.shape[0], self.shape[2])) if y is None else y
        return f

    def forward(self, params: dict, x) -> np.ndarray:
        return self.graph.eval(self.feed(params, x), self.nodes["out"])

    def loss(self, params: dict, x, y) -> float:
        return float(self.graph.eval(self.feed(params, x, y), self.nodes["loss"]))

    def trainable_dimension(self) -> int:
        return int(sum(np.size(v) for v in self.init.values()))

    def depth(self) -> int:
        return self.graph.depth(self.nodes["out"])

    def ro_cells(self, x, z) -> np.ndarray:
        bits = self.codec.encode_array(x) + self.codec.encode_array(z)
        col = np.full(self.tau, float(BLANK))
        cells = frame(bits)
        col[1:1 + len(cells)] = [1.0 if b else -1.0 for b in cells]
        return col

    def theta_from_tape(self, out_col) -> np.ndarray:
        n, M, _ = self.shape
        w = self.codec.word
        data = [1 if out_col[2 + 2 * j] > 0 else 0
                for j in range((len(out_col) - 3) // 2)]
        start = n * M * w
        return self.codec.decode_array(data[start:start + self.primary.p * w], self.primary.p)

    def switch_values(self, params, x):
        vals = self.graph.evaluate(self.feed(params, x))
        return float(vals[self.nodes["psi"]]), float(vals[self.nodes["phi"]])

    def machine_view(self, params, x) -> tuple[int, tuple[int, ...], np.ndarray]:
        """(vertex, heads, output tape column) at the given parameters."""
        v = internal_vertex(params["s"])
        if self.construction == "external":
            T = self.graph.eval(self.feed(params, x), self.nodes["T_eff"])
            H = params["H"]
            heads = tuple(int(np.argmax(H[:, j])) for j in range(H.shape[1]))
            return v, heads, T[:, self.tm.output_tape]
        ro = self.graph.eval(self.feed(params, x), self.nodes["ro"])
        conf = self.orbit(ro).configs[v]
        return v, conf.heads, conf.tapes[:, self.tm.output_tape].astype(float)

    def train(self, data: Dataset, max_iters: int = 100_000) -> TrainReport:
        if (data.n, data.M, data.m) != self.shape:
            raise ConfigError(f"dataset shape {(data.n, data.M, data.m)} != network {self.shape}")
        ref_theta, k_t = reference_theta(self, data)
        reference = np.asarray(self.primary(ref_theta, data.x), dtype=float)
        params = {k: v.copy() for k, v in self.init.items()}
        g = self.graph
        loss0 = self.loss(params, data.x, data.y)
        if loss0 <= self.switches.b_stop:
            raise ConfigError("stopping rule fires before the first step")
        records = [self._record(0, loss0, params, data)]
        states = [{k: v.copy() for k, v in params.items()}]
        for k in range(1, max_iters + 1):
            feed = self.feed(params, data.x, data.y)
            vals = g.evaluate(feed)
            grads = g.backward(feed, node=self.nodes["loss"], vals=vals)
            s = params["s"]
            v = internal_vertex(s)
            dirs = np.eye(len(s)) - s
            scores = g.jvp(feed, {"s": dirs}, node=self.nodes["loss"], vals=vals)
            w = argmin_ties(scores, v)
            new = {"s": vertex(w, len(s))}
            for blk in params:
                if blk != "s":
                    new[blk] = params[blk] - self.lr[blk] * grads[blk]
            params = new
            loss = self.loss(params, data.x, data.y)
            records.append(self._record(k, loss, params, data))
            states.append({kk: vv.copy() for kk, vv in params.items()})
            if loss <= self.switches.b_stop:
                out = self.forward(params, data.x)
                return TrainReport(records, states, k, k_t, out, reference, data.y)
        raise RuntimeError(f"no halt within {max_iters}")

    def _record(self, k, loss, params, data) -> StepRecord:
        p, f = self.switch_values(params, data.x)
        v, heads, col = self.machine_view(params, data.x)
        tape = "".join("1" if c > 0 else "0" for c in np.asarray(col)[1:-1])
        return StepRecord(k, loss, p, f, v, heads, tape,
                          bool(np.array_equal(params["z"], data.y)))


def internal_vertex(s) -> int:
    hit = np.flatnonzero(np.asarray(s) == 1.0)
    if len(hit) != 1 or np.count_nonzero(s) != 1:
        raise external.ConstructionError(f"s is not a vertex: {s}")
    return int(hit[0])


def reference_theta(net: ExtendedNetwork, data: Dataset) -> tuple[np.ndarray, int]:
    """Run the plain simulator on the encoded data: (TM(x, y), k_t)."""
    tm = net.tm
    tapes = np.full((net.tau, tm.d), BLANK, dtype=np.int8)
    tapes[:, min(tm.read_only)] = net.ro_cells(data.x, data.y).astype(np.int8)
    c0 = Configuration(tm.initial, tapes, (1,) * tm.d)
    tr = run(tm, c0, max_steps=100 * net.tau + 100)
    if not tr.halted:
        raise ConfigError("machine does not halt on the encoded data")
    col = tr.final.tapes[:, tm.output_tape].astype(float)
    return net.theta_from_tape(col), tr.step_count


def assemble(primary, tm: TuringMachine, construction: str, data: Dataset,
             codec: FloatCodec | None = None, params: external.ExternalLossParams | None = None,
             switches: SwitchParams | None = None, tau: int | None = None,
             margin: int = 4) -> ExtendedNetwork:
    """Wire the extended network for ``data``'s shape and check all constants."""
    codec = codec or FloatCodec()
    if construction not in ("internal", "external"):
        raise ConfigError(f"unknown construction {construction!r}")
    if not tm.read_only or tm.output_tape is None:
        raise ConfigError("machine needs a read-only input tape and a declared output tape")
    if tm.output_tape in tm.read_only:
        raise ConfigError("output tape must be writable")
    n, M, m = data.n, data.M, data.m
    if n * m < 2:
        raise ConfigError("f_perp needs n*m >= 2")
    for arr in (data.x, data.y):
        bad = [v for v in np.ravel(arr) if not codec.representable(float(v))]
        if bad:
            raise ConfigError(f"value {bad[0]} is not representable by the codec")
    payload = 2 * codec.word * (n * M + n * m)
    tau = tau or payload + margin
    if payload + 3 > tau:
        raise ConfigError(f"tau={tau} too small for a framed payload of {payload} cells")
    if 2 * codec.word * (n * M + primary.p) + 3 > tau:
        raise ConfigError(f"output tape of length {tau} cannot hold {primary.p} weights "
                          f"after the {n * M} input words")
    traced = triple_states(tm) if construction == "external" else tm
    g = Graph()
    x = g.input("x")
    y = g.input("y")
    s = g.parameter("s")
    z = g.parameter("z")
    nodes: dict[str, int] = {}
    net = ExtendedNetwork(g, construction, traced, primary, codec, None, tau,
                          (n, M, m), nodes, {})
    ro = g.barrier(lambda xv, zv: net.ro_cells(xv, zv), [x, z], "quantize(x, z)")
    nodes["ro"] = ro
    d = tm.d
    rcol = min(tm.read_only)
    if construction == "external":
        params = params or external.choose_constants(d)
        try:
            params.validate(separation=True)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        tl = external.build_loss(traced, params)
        net.tape_loss = tl
        nv = len(tl.vs)
        T = g.parameter("T")
        H = g.parameter("H")
        mask = np.ones((tau, d))
        for i in tm.read_only:
            mask[:, i] = 0.0
        embed = np.zeros((tau * d, tau))
        embed[np.arange(tau) * d + rcol, np.arange(tau)] = 1.0
        T_eff = g.linear([(mask, T), (Mat(embed), ro)], shape=(tau, d), label="T")
        nodes["T_eff"] = T_eff
        colsum = np.kron(np.ones((1, tau)), np.eye(d))
        ell_s = g.simplex_loss(s, lambda _c: tl.ell_s, QUARTER)
        # write term
        diag_th = g.linear([(Mat(colsum), g.product(T_eff, g.stop_gradient(H)))], shape=(d,))
        wx = g.stop_gradient(g.linear([(Mat(tl.ops.write), s)], shape=(d,)))
        q_write = g.sqnorm(g.sub(diag_th, wx), "write")
        # shifted heads S(s) H
        mv = tl.ops.moves
        cp = g.linear([(Mat((mv == 1).T.astype(float)), s)], shape=(d,))
        cm = g.linear([(Mat((mv == -1).T.astype(float)), s)], shape=(d,))
        c0 = g.linear([(Mat((mv == 0).T.astype(float)), s)], shape=(d,))
        down = np.kron(np.eye(tau, k=-1), np.eye(d))
        up = np.kron(np.eye(tau, k=1), np.eye(d))
        h_down = g.linear([(Mat(down), H)], shape=(tau, d))
        h_up = g.linear([(Mat(up), H)], shape=(tau, d))
        SH = g.linear([(1.0, g.product(cp, h_down)), (1.0, g.product(cm, h_up)),
                       (1.0, g.product(c0, H))], label="S(s)H")
        a = g.stop_gradient(g.linear([(Mat(colsum), g.product(T_eff, SH))], shape=(d,)))
        q_read = g.sqnorm(g.sub(a, g.linear([(Mat(tl.ops.read), s)], shape=(d,))), "read")
        q_move = g.sqnorm(g.sub(g.stop_gradient(SH), H), "move")
        gam, b = params.gamma, params.b
        ell = g.linear([(1.0, ell_s), (gam / 2, q_write), (2 * b * b * gam, q_read),
                        (gam / 2, q_move)], bias=params.c, label="ell_TM")
        theta = g.barrier(lambda Tv: net.theta_from_tape(Tv[:, tm.output_tape]), [T_eff],
                          "dequantize(theta)")
        ceiling, floor = params.halting_ceiling, params.nonhalting_floor
        strict = False
        net.mu = QUARTER
        net.lr = {"z": 1.0, "T": 1.0 / gam, "H": 1.0 / gam}
        s0 = vertex(tl.vs.index(traced.initial, _initial_symbols(tm)), nv)
        H0 = np.zeros((tau, d))
        H0[1, :] = 1.0
        net.init = {"s": s0, "T": np.full((tau, d), float(BLANK)), "H": H0,
                    "z": np.zeros((n, m))}
    else:
        size = 3 + max(_orbit_length(tm, net, data, zero) for zero in (True, False))
        cache: dict[bytes, internal.StateGraph] = {}
        losses: dict[bytes, Any] = {}

        def orbit(ro_col):
            key = np.asarray(ro_col).tobytes()
            if key not in cache:
                tapes = np.full((tau, d), BLANK, dtype=np.int8)
                tapes[:, rcol] = np.asarray(ro_col).astype(np.int8)
                c0 = Configuration(tm.initial, tapes, (1,) * d)
                sg = internal.build_graph(tm, tau, [c0], min_vertices=size)
                if sg.m > size:
                    raise ConfigError(f"orbit of {sg.m} vertices exceeds simplex size {size}")
                cache[key] = sg
            return cache[key]

        def provider(ro_col):
            key = np.asarray(ro_col).tobytes()
            if key not in losses:
                sg = orbit(ro_col)
                wa = internal.assign_weights(sg, internal.default_ladder(sg.K))
                losses[key] = internal.build_loss(wa)
            return losses[key]

        net.orbit = orbit
        ell = g.simplex_loss(s, provider, HALF, context=ro, label="ell_TM")
        theta = g.barrier(
            lambda sv, rv: net.theta_from_tape(
                orbit(rv).configs[internal_vertex(sv)].tapes[:, tm.output_tape]),
            [s, ro], "dequantize(theta)")
        ceiling, floor = 1.0, 2.0   # W_0 and W_1 of the default ladder
        strict = True
        net.mu = HALF
        net.lr = {"z": 1.0}
        net.init = {"s": vertex(0, size), "z": np.zeros((n, m))}
    nodes["ell_TM"] = ell
    switches = switches or SwitchParams.between(ceiling, floor, data.eps)
    bad = switches.failures(ceiling, floor, strict)
    if bad:
        raise ConfigError("; ".join(bad))
    net.switches = switches
    # machine branch
    sq = g.sqrt(g.scale(2.0, ell), "sqrt(2 ell)")
    zflat = g.linear([(Mat(np.eye(n * m)), g.stop_gradient(z))], shape=(n * m,))
    fp = f_perp_graph(g, zflat, n * m)
    f_tm = g.linear([(Mat(np.eye(n * m)), g.product(sq, fp))], shape=(n, m), label="f_TM")
    nodes["f_TM"] = f_tm
    f_prim = g.primary(primary, theta, x)
    nodes["theta"], nodes["f"] = theta, f_prim
    sw = switches
    ph = g.cutoff(g.sqnorm(f_tm), [2 * sw.b_lo + sw.delta, 2 * sw.b_hi - sw.delta], [0.0, 1.0],
                  "phi")
    one_minus = g.linear([(-1.0, ph)], bias=1.0)
    u = g.add(g.product(one_minus, f_prim), g.product(ph, f_tm), "s_net")
    ps = g.cutoff(g.sqnorm(z), [sw.eps / 3, 2 * sw.eps / 3], [1.0, 0.0], "psi")
    out = g.add(g.product(g.linear([(-1.0, ps)], bias=1.0), u), g.product(ps, z), "out")
    loss = g.scale(0.5, g.sqnorm(g.sub(out, y)), "loss")
    nodes.update(phi=ph, psi=ps, s_net=u, out=out, loss=loss)
    g.set_output(out)
    # the stopping bound must admit the trained model
    ref_theta, _ = reference_theta(net, data)
    resid = 0.5 * float(np.sum((primary(ref_theta, data.x) - data.y) ** 2))
    if resid > sw.b_stop:
        raise ConfigError(f"B_stop={sw.b_stop} below the trained residual {resid}")
    return net


def _initial_symbols(tm: TuringMachine) -> tuple[int, ...]:
    # heads start on cell 1: the first frame marker on the input tape, blank elsewhere
    return tuple(1 if i == min(tm.read_only) else BLANK for i in range(tm.d))


def _orbit_length(tm, net, data, zero: bool) -> int:
    z = np.zeros_like(data.y) if zero else data.y
    tapes = np.full((net.tau, tm.d), BLANK, dtype=np.int8)
    tapes[:, min(tm.read_only)] = net.ro_cells(data.x, z).astype(np.int8)
    tr = run(tm, Configuration(tm.initial, tapes, (1,) * tm.d), 100 * net.tau + 100)
    if not tr.halted:
        raise ConfigError("machine does not halt on the encoded data")
    return tr.step_count + 1


def report_json(rep: TrainReport) -> str:
    return json.dumps(rep.to_json(), indent=1)
