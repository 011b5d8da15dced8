"""Acceptance checks 1-9, shared by the test gate and ``gdtm verify``.

Each check returns a ``Result``; ``detail`` says what was measured so a
failure is readable without rerunning anything.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import external, internal
from .codec import FloatCodec
from .graph import Graph, Mat
from .machine import CORPUS, corpus_machine, corpus_tau, make_initial, run, triple_states
from .network import ConstantNet, Dataset, assemble
from .simplex import (HALF, QUARTER, SimplexLoss, barycenter, check_corner_affine, corner_argmin,
                      dir_deriv, edge_bump, edge_point, hat, profile, random_point,
                      unsymmetric_corner, vertex)


@dataclass
class Result:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.number}. {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, str]]) -> Result:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failure with its message
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return Result(number, name, ok, detail, time.perf_counter() - t0)


# -- 1 ---------------------------------------------------------------------

def _internal_equivalence() -> tuple[bool, str]:
    runs, bad = 0, []
    for name in CORPUS:
        tm = corpus_machine(name)
        for payload in tm.examples:
            tau = corpus_tau(tm, payload)
            c0 = make_initial(tm, payload, tau)
            ref = run(tm, c0, 10_000)
            g = internal.build_graph(tm, tau, [c0])
            loss = internal.build_loss(internal.assign_weights(g))
            for rule in ("unit", "line_search"):
                tr = internal.trace(loss, g.starts[0], rule)
                runs += 1
                got = [g.configs[v] for v in tr.vertices]
                if got != list(ref.configs):
                    bad.append(f"{name}{payload}/{rule}: trace != simulator")
                if not all(b < a for a, b in zip(tr.losses, tr.losses[1:])):
                    bad.append(f"{name}{payload}/{rule}: loss not strictly decreasing")
                if not tr.fixed_point:
                    bad.append(f"{name}{payload}/{rule}: no fixed point")
                if not g.accepting[tr.vertices[-1]]:
                    bad.append(f"{name}{payload}/{rule}: fixed point is not a halting vertex")
    return not bad, f"{runs} traces, " + ("all equal to the simulator" if not bad else "; ".join(bad))


# -- 2 ---------------------------------------------------------------------

def external_run(tm, payload, params=None):
    """(tape loss, trace, reference configurations) for one corpus input."""
    tt = triple_states(tm)
    params = params or external.choose_constants(tm.d)
    loss = external.build_loss(tt, params)
    tau = corpus_tau(tm, payload)
    c0 = make_initial(tt, payload, tau)
    tr = external.trace(loss, external.initial_state(loss, c0))
    ref = run(tm, make_initial(tm, payload, tau), 10_000)
    return loss, tr, ref


def _external_equivalence() -> tuple[bool, str]:
    p2 = external.choose_constants(2)
    bad = []
    if (p2.b, p2.c, p2.halting_ceiling, p2.nonhalting_floor) != (17, 4947, 4664, 4947):
        bad.append(f"d=2 constants {p2}")
    runs = 0
    for name in CORPUS:
        tm = corpus_machine(name)
        for payload in tm.examples:
            loss, tr, ref = external_run(tm, payload)
            p = loss.params
            runs += 1
            confs = [external.as_configuration(loss, st) for st in tr.states]
            if confs != list(ref.configs):
                bad.append(f"{name}{payload}: (s,T,H) != simulator")
            for st, val in zip(tr.states, tr.losses):
                halting = loss.vs.label(st.vertex)[0] in loss.tm.accepting
                ok = (val <= p.halting_ceiling if halting
                      else p.nonhalting_floor <= val <= p.nonhalting_ceiling)
                if not ok:
                    bad.append(f"{name}{payload}: loss {val} outside its band")
                    break
    return not bad, f"{runs} traces (b=17 for d=2, b=25 for d=3), " + (
        "all equal, sandwich holds" if not bad else "; ".join(bad[:4]))


# -- 3 ---------------------------------------------------------------------

def end_to_end(construction: str = "external", codec: FloatCodec | None = None,
               y=(2.0, -3.0), x=(1.0,)):
    tm = corpus_machine("copy")
    data = Dataset(x=[list(x)], y=[list(y)])
    net = assemble(ConstantNet(len(y)), tm, construction, data, codec=codec)
    return net, data, net.train(data)


def _training_run() -> tuple[bool, str]:
    out = []
    for cons, codec in (("external", FloatCodec()),
                        ("internal", FloatCodec("mantissa-exponent", 3, 2))):
        net, data, rep = end_to_end(cons, codec)
        zs = [st["z"] for st in rep.states]
        z_ok = (np.array_equal(zs[0], 0 * data.y)
                and all(np.array_equal(z, data.y) for z in zs[1:]))
        ok = (rep.steps_ok and rep.output_ok and np.array_equal(rep.output, data.y)
              and z_ok and rep.init_flips == [1] and rep.net_flips == [rep.steps])
        out.append((ok, f"{cons}: {rep.steps} steps (k_t={rep.k_t}), "
                        f"F={rep.output.ravel().tolist()}, z flip {rep.init_flips}"))
    return all(o for o, _ in out), "; ".join(d for _, d in out)


# -- 4 ---------------------------------------------------------------------

def basis_identities(seed: int = 0) -> tuple[int, list[str]]:
    """Interpolation and corner-affinity identities; (assertions, failures)."""
    rng = np.random.default_rng(seed)
    n, bad = 0, []

    def check(cond, what):
        nonlocal n
        n += 1
        if not cond:
            bad.append(what)

    tol = 1e-12
    for m in range(3, 9):
        E = np.eye(m)
        for mu in (QUARTER, HALF):
            for v in range(m):
                h = hat(v, mu, m)
                check(abs(h(E[v]) - 1) < tol, f"hat({v},{mu},{m}) at e_v")
                for w in range(m):
                    if w != v:
                        check(abs(h(E[w])) < tol, f"hat at e_{w}")
                        check(abs(h(edge_point(v, w, mu, m))) < tol, "hat at its edge point")
                check(abs(h(barycenter(m))) < tol, "hat at barycenter")
                check(check_corner_affine(h, m, mu, rng), f"hat({v},{mu},{m}) affinity")
                red = SimplexLoss(m).add_hats([v], mu)
                p = random_point(m, rng)
                check(abs(red(p) - h(p)) < tol, "hull-reduced hat")
        for v in range(m):
            for w in range(m):
                if w == v:
                    continue
                bump = edge_bump(v, w, m)
                check(abs(bump(edge_point(v, w, HALF, m)) - 1) < tol, "bump at e_vw")
                for u in range(m):
                    check(abs(bump(E[u])) < tol, "bump at a vertex")
                for a in range(m):
                    for b in range(a + 1, m):
                        if {a, b} != {v, w}:
                            check(abs(bump(edge_point(a, b, HALF, m))) < tol, "bump at another half point")
                cor = unsymmetric_corner(v, w, QUARTER, m)
                check(abs(cor(E[v]) - 1) < tol, "corner at e_v")
                check(abs(cor(edge_point(v, w, QUARTER, m))) < tol, "corner at its edge point")
                for u in range(m):
                    if u not in (v, w):
                        check(abs(cor(edge_point(v, u, HALF, m))) < tol, "corner at half point")
                    if u != v:
                        check(abs(cor(E[u])) < tol, "corner at other vertex")
                prof = profile(v, w, m)
                for t, val in ((0, 0.0), (QUARTER, 1.0), (HALF, 1.0), (0.75, 0.5), (1.0, 0.0)):
                    check(abs(prof(edge_point(v, w, t, m)) - val) < tol, f"profile at t={t}")
                for a in range(m):
                    for b in range(m):
                        if a != b and (a, b) != (v, w) and (a, b) != (w, v):
                            check(abs(prof(edge_point(a, b, QUARTER, m))) < tol, "profile at other quarter point")
                if v < w or m <= 4:
                    check(check_corner_affine(bump, m, HALF, rng), "bump affinity")
                    check(check_corner_affine(prof, m, QUARTER, rng), "profile affinity")
                    check(check_corner_affine(cor, m, QUARTER, rng), "corner affinity")
                    p = random_point(m, rng)
                    red = SimplexLoss(m).add_profiles([v], [w])
                    check(abs(red(p) - prof(p)) < tol, "hull-reduced profile")
                    red = SimplexLoss(m).add_edge_bumps([v], [w])
                    check(abs(red(p) - bump(p)) < tol, "hull-reduced bump")
                    red = SimplexLoss(m).add_corners([v], [w], QUARTER)
                    check(abs(red(p) - cor(p)) < tol, "hull-reduced corner")
    return n, bad


def _basis_suite() -> tuple[bool, str]:
    n, bad = basis_identities()
    ok = not bad and n >= 500
    return ok, f"{n} assertions, {len(bad)} failed" + (f" (first: {bad[0]})" if bad else "")


# -- 5 ---------------------------------------------------------------------

def random_corner_loss(m: int, rng: np.random.Generator):
    """A SimplexLoss and an independent geometric twin, both affine on quarter corners."""
    red = SimplexLoss(m)
    geo = []
    for _ in range(rng.integers(2, 3 * m)):
        kind = rng.integers(4)
        w = float(rng.normal())
        v, u = rng.choice(m, 2, replace=False)
        if kind == 0:
            red.add_hats([v], QUARTER, w)
            geo.append((w, hat(v, QUARTER, m)))
        elif kind == 1:
            red.add_hats([v], HALF, w)
            geo.append((w, hat(v, HALF, m)))
        elif kind == 2:
            red.add_edge_bumps([v], [u], w)
            geo.append((w, edge_bump(v, u, m)))
        else:
            red.add_profiles([v], [u], w)
            geo.append((w, profile(v, u, m)))
    return red, (lambda x: sum(c * f(x) for c, f in geo))


def _argmin_oracle(trials: int = 100, seed: int = 1) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    agree = 0
    for k in range(trials):
        m = int(rng.integers(3, 9))
        red, geo = random_corner_loss(m, rng)
        v = int(rng.integers(m))
        quad = None
        if k % 2:
            A = rng.normal(size=(2, m))
            target = rng.normal(size=2)
            coef = float(rng.uniform(0.1, 3))
            quad = (A, target, coef)
        dd = np.array([dir_deriv(geo, vertex(v, m), vertex(u, m), QUARTER) for u in range(m)])
        if quad is not None:
            A, target, coef = quad
            dd += coef * np.array([(A @ vertex(v, m) - target) @ (A @ (vertex(u, m) - vertex(v, m)))
                                   for u in range(m)])
        best = dd.min()
        brute = v if dd[v] <= best + 1e-9 * max(1, abs(best)) else int(np.argmin(dd))
        agree += corner_argmin(red, v, QUARTER, quad) == brute
    return agree == trials, f"{agree}/{trials} agree with brute-force enumeration"


# -- 6 ---------------------------------------------------------------------

class _Affine:
    """Tiny primary net for FD checks: theta (2,) -> x * theta."""
    p = 2

    def __call__(self, theta, x):
        return np.asarray(x) * theta

    def vjp(self, theta, x, g):
        return np.sum(np.asarray(x) * g, axis=0)

    def jvp(self, theta, x, dt):
        return np.asarray(x) * dt


def node_kind_graphs():
    """(name, graph, smooth-point sampler) for every differentiable node kind."""
    out = []

    def mk(name, build, shape=(3,)):
        g = Graph()
        a = g.parameter("a")
        g.set_output(g.sqnorm(build(g, a)) if name != "sqnorm" else build(g, a))
        out.append((name, g, shape))

    A = np.arange(6.0).reshape(2, 3) / 5 - 0.4
    mk("linear", lambda g, a: g.linear([(Mat(A), a), (2.0, g.constant([1.0, -1.0]))], bias=0.3))
    mk("relu", lambda g, a: g.relu(a))
    mk("sqrt", lambda g, a: g.sqrt(g.linear([(1.0, g.product(a, a))], bias=1.0)))
    mk("reciprocal", lambda g, a: g.reciprocal(g.linear([(1.0, g.product(a, a))], bias=0.5)))
    mk("product", lambda g, a: g.product(a, g.linear([(2.0, a)], bias=1.0)))
    mk("sqnorm", lambda g, a: g.sqnorm(a))
    mk("cutoff", lambda g, a: g.cutoff(a, [-2.0, 0.5, 3.0], [1.0, -1.0, 2.0]))
    mk("primary", lambda g, a: g.primary(_Affine(), g.linear([(Mat(np.eye(2, 3)), a)], shape=(2,)),
                                         g.constant([[1.5, -0.5]])))
    return out


def fd_gradient_check(points: int = 20, seed: int = 2, rtol: float = 1e-6):
    rng = np.random.default_rng(seed)
    bad = []
    for name, g, shape in node_kind_graphs():
        done = 0
        while done < points:
            a = rng.normal(size=shape)
            # stay away from kinks so central differences are meaningful
            if name in ("relu", "cutoff") and np.min(np.abs(np.subtract.outer(a, [-2, 0, 0.5, 3]))) < 1e-3:
                continue
            done += 1
            grad = g.backward({"a": a})["a"]
            h = 1e-6
            fd = np.array([(g.eval({"a": a + h * e}) - g.eval({"a": a - h * e})) / (2 * h)
                           for e in np.eye(a.size)]).reshape(shape)
            scale = max(1.0, np.abs(fd).max())
            if np.abs(grad - fd).max() > rtol * scale:
                bad.append(f"{name}: {grad} vs {fd}")
                break
    return bad


def sg_example() -> float:
    g = Graph()
    a = g.parameter("x")
    g.set_output(g.product(a, g.stop_gradient(a)))
    return float(g.backward({"x": np.array(3.0)})["x"])


def chain_identity(step: int = 3):
    """Max deviation between d loss and d ell_TM for T, H and the s-directions."""
    net, data, rep = end_to_end("external")
    params = rep.states[step]
    feed = net.feed(params, data.x, data.y)
    g = net.graph
    vals = g.evaluate(feed)
    gl = g.backward(feed, node=net.nodes["loss"], vals=vals)
    ge = g.backward(feed, node=net.nodes["ell_TM"], vals=vals)
    dev = max(float(np.abs(gl[b] - ge[b]).max()) for b in ("T", "H"))
    dirs = np.eye(len(params["s"])) - params["s"]
    jl = g.jvp(feed, {"s": dirs}, node=net.nodes["loss"], vals=vals)
    je = g.jvp(feed, {"s": dirs}, node=net.nodes["ell_TM"], vals=vals)
    return dev, float(np.abs(jl - je).max() / max(1.0, np.abs(je).max()))


def _grad_engine() -> tuple[bool, str]:
    bad = fd_gradient_check()
    sg = sg_example()
    dev, sdev = chain_identity()
    ok = not bad and sg == 3.0 and dev <= 1e-9 and sdev <= 1e-9
    return ok, (f"FD on {len(node_kind_graphs())} node kinds: {len(bad)} mismatches; "
                f"d/dx x*sg(x) at 3 = {sg}; chain identity dev T/H {dev:.1e}, s {sdev:.1e}")


# -- 7 ---------------------------------------------------------------------

def _sizes() -> tuple[bool, str]:
    tm = corpus_machine("copy")
    data = Dataset(x=[[1.0]], y=[[2.0, -3.0]])
    net = assemble(ConstantNet(2), tm, "external", data)
    want = external.trainable_dimension(tm, net.tau, data.n, data.m)
    formula = 3 * len(tm.states) * 2 ** tm.d + 2 * tm.d * net.tau + data.n * data.m
    depth = net.depth()
    small = min((corpus_machine(n) for n in CORPUS), key=lambda t: (len(t.states), t.d))
    tau = 3
    g = internal.build_graph(small, tau, [], mode="full", horizon=4)
    full = len(small.states) * 2 ** (small.d * tau) * tau ** small.d
    ok = net.trainable_dimension() == want == formula and depth <= 12 and g.m == full
    return ok, (f"external dim {net.trainable_dimension()} = 3|Q|2^d+2d tau+nm = {formula}; "
                f"depth {depth}; full enumeration of {small.name} at tau={tau}: {g.m} = {full}")


# -- 8 ---------------------------------------------------------------------

def codec_roundtrips(count: int = 10_000, seed: int = 3):
    rng = np.random.default_rng(seed)
    codec = FloatCodec()
    raw = rng.integers(0, 2 ** 63, size=count * 2, dtype=np.uint64) * np.uint64(2) \
        + rng.integers(0, 2, size=count * 2, dtype=np.uint64)
    floats = [f for f in raw.view(np.float64) if math.isfinite(f)][:count]
    pt_bad = sum(struct.pack(">d", codec.decode(codec.encode(f))) != struct.pack(">d", f)
                 for f in floats)
    me = FloatCodec("mantissa-exponent", 10, 4)
    sweep = [0.0]
    for E in range(2 ** me.n_q):
        for k in range(2 ** me.m_q):
            mag = (1 + k / 2 ** me.m_q) * 2.0 ** E
            sweep += [mag, -mag]
    me_bad = sum(me.decode(me.encode(x)) != x for x in sweep)
    eps = 2.0 ** -60
    heavy_bad = sum(me.encode(x) != me.encode(x, eps) for x in sweep[::7])
    return len(floats), pt_bad, len(sweep), me_bad, heavy_bad


def _codec() -> tuple[bool, str]:
    n, pt_bad, ns, me_bad, hb = codec_roundtrips()
    return (n == 10_000 and pt_bad == 0 and me_bad == 0 and hb == 0,
            f"passthrough {n - pt_bad}/{n} bit-identical; mantissa-exponent {ns - me_bad}/{ns}; "
            f"eps-surrogate mismatches {hb}")


# -- 9 ---------------------------------------------------------------------

def _negative() -> tuple[bool, str]:
    p = external.ExternalLossParams(16, 1.0, (16 ** 3 + 2 * 16), 2)
    names = p.failures()
    try:
        p.validate()
        rejected = False
    except ValueError:
        rejected = True
    tm = corpus_machine("copy")
    try:
        external.build_loss(tm, external.choose_constants(tm.d))
        backstep = "accepted"
    except external.BackStepError as exc:
        backstep = f"rejected ({str(exc).split(' (')[0]})"
    ok = rejected and any(n.startswith("halting-separation") for n in names) and \
        backstep.startswith("rejected")
    return ok, f"b=16 fails {[n.split(':')[0] for n in names]}; untripled copy {backstep}"


CRITERIA = [
    (1, "internal tracer equals simulator", _internal_equivalence),
    (2, "external tracer equals simulator", _external_equivalence),
    (3, "end-to-end training in k_t+1 steps", _training_run),
    (4, "basis-function identities", _basis_suite),
    (5, "corner argmin equals brute force", _argmin_oracle),
    (6, "gradient engine", _grad_engine),
    (7, "size accounting", _sizes),
    (8, "codec round trips", _codec),
    (9, "negative controls", _negative),
]


def run_criterion(number: int) -> Result:
    num, name, fn = CRITERIA[number - 1]
    return _timed(num, name, fn)


def run_all() -> list[Result]:
    return [run_criterion(k) for k, _, _ in CRITERIA]
