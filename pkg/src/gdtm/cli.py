"""Command line: ``gdtm trace | train | verify``.

Exit codes: 0 success, 1 configuration error, 2 oracle mismatch or no halt.
A ``--config`` JSON file overrides the flags given on the command line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import external, internal
from .codec import CodecError, FloatCodec
from .machine import (CORPUS, MachineError, TapeBoundError, corpus_machine, corpus_tau,
                      load_machine, make_initial, run, triple_states)
from .network import ConfigError, ConstantNet, Dataset, LinearNet, assemble

OK, CONFIG, MISMATCH = 0, 1, 2


class UsageError(Exception):
    pass


def _machine(ref: str):
    if ref in CORPUS:
        return corpus_machine(ref)
    path = Path(ref)
    if not path.exists():
        raise UsageError(f"machine file {ref} not found")
    return load_machine(path)


def _bits(text: str | None, tm) -> list[tuple[int, ...]]:
    if text is None:
        if not tm.examples:
            raise UsageError("machine has no examples; pass --input")
        return [tuple(p) for p in tm.examples]
    if any(ch not in "01" for ch in text):
        raise UsageError(f"--input must be a bit string, got {text!r}")
    return [tuple(int(ch) for ch in text)]


def _dataset(source: str | None) -> Dataset:
    if source is None:
        return Dataset(x=[[1.0]], y=[[2.0, -3.0]])
    path = Path(source)
    raw = json.loads(path.read_text()) if path.exists() else json.loads(source)
    return Dataset(x=raw["x"], y=raw["y"], eps=raw.get("eps"))


def _write(path: str | None, text: str):
    if path:
        Path(path).write_text(text)


# -- trace -------------------------------------------------------------------

def cmd_trace(a) -> int:
    tm = _machine(a.machine)
    code, lines, out = OK, [], []
    for payload in _bits(a.input, tm):
        tau = a.tau or corpus_tau(tm, payload)
        ref = run(tm, make_initial(tm, payload, tau), 100_000)
        tag = "".join(map(str, payload)) or "<empty>"
        if a.construction == "external":
            tt = triple_states(tm)
            params = external.choose_constants(tm.d) if a.b is None else \
                external.ExternalLossParams(a.b, 1.0, (a.b ** 3 + tm.d * a.b), tm.d)
            params.validate()
            loss = external.build_loss(tt, params)
            st = external.initial_state(loss, make_initial(tt, payload, tau))
            try:
                tr = external.trace(loss, st, a.max_iters)
            except external.NoHaltError as exc:
                lines.append(f"{tm.name} {tag}: {exc}")
                code = MISMATCH
                continue
            confs = [external.as_configuration(loss, s) for s in tr.states]
            out.append(tr.to_jsonl(loss.vs))
            losses, halted = tr.losses, tr.halted
        else:
            c0 = make_initial(tm, payload, tau)
            g = internal.build_graph(tm, tau, [c0], mode="full" if a.full_enumeration else "reachable")
            loss = internal.build_loss(internal.assign_weights(g))
            rule = "line_search" if a.mode == "linesearch" else "unit"
            tr = internal.trace(loss, g.starts[0], rule, a.max_iters)
            if not tr.fixed_point:
                lines.append(f"{tm.name} {tag}: no halt within {a.max_iters}")
                code = MISMATCH
                continue
            confs = [g.configs[v] for v in tr.vertices]
            out.append(tr.to_jsonl())
            losses, halted = tr.losses, bool(g.accepting[tr.vertices[-1]])
        match = confs == list(ref.configs)
        if not match:
            code = MISMATCH
        line = (f"{tm.name} {tag}: steps={len(confs) - 1} halted={str(halted).lower()} "
                f"oracle={'match' if match else 'mismatch'} loss=[{min(losses):g}, {max(losses):g}]")
        if a.construction == "internal":
            dec = all(y < x for x, y in zip(losses, losses[1:]))
            line += f" vertices={g.m}; loss strictly decreasing: {str(dec).lower()}"
        lines.append(line)
    print("\n".join(lines))
    _write(a.out, "".join(out))
    return code


# -- train -------------------------------------------------------------------

def cmd_train(a) -> int:
    tm = _machine(a.machine)
    data = _dataset(a.dataset)
    codec = FloatCodec(a.codec, a.m_q, a.n_q)
    primary = ConstantNet(data.m) if a.primary == "constant" else LinearNet(data.M, data.m)
    params = None
    if a.b is not None:
        params = external.ExternalLossParams(a.b, 1.0, (a.b ** 3 + tm.d * a.b), tm.d)
    net = assemble(primary, tm, a.construction, data, codec=codec, params=params)
    try:
        rep = net.train(data, a.max_iters)
    except RuntimeError as exc:
        print(exc)
        return MISMATCH
    print(f"{tm.name} ({a.construction}): {rep.summary()}")
    print(f"steps={rep.steps} k_t={rep.k_t} s_init flips at {rep.init_flips} "
          f"s_net flips at {rep.net_flips}")
    _write(a.out, json.dumps(rep.to_json(), indent=1) + "\n")
    return OK if rep.steps_ok and rep.output_ok else MISMATCH


# -- verify ------------------------------------------------------------------

def corpus_table() -> str:
    rows = [f"{'machine':<10} {'|Q|':>4} {'d':>2} {'tau':>4} {'k_t':>4}  input"]
    for name in CORPUS:
        tm = corpus_machine(name)
        for payload in tm.examples:
            tau = corpus_tau(tm, payload)
            k = run(tm, make_initial(tm, payload, tau), 100_000).step_count
            bits = "".join(map(str, payload)) or "<empty>"
            rows.append(f"{name:<10} {len(tm.states):>4} {tm.d:>2} {tau:>4} {k:>4}  {bits}")
    return "\n".join(rows)


def cmd_verify(a) -> int:
    if a.b is not None:
        d = 2 if a.d is None else a.d
        bad = external.ExternalLossParams(a.b, 1.0, (a.b ** 3 + d * a.b), d).failures()
        if bad:
            print(f"constant check failed for b={a.b:g}, d={d}: " + "; ".join(bad))
            return CONFIG
        print(f"constants b={a.b:g}, d={d} pass every check")
    from .acceptance import run_all
    results = run_all()
    for r in results:
        line = r.line()
        print(line if a.timings else line.rsplit(" (", 1)[0])
    print()
    print(corpus_table())
    return OK if all(r.passed for r in results) else MISMATCH


# -- entry point -------------------------------------------------------------

def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gdtm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--machine", default="copy", help="corpus name or JSON path")
    common.add_argument("--construction", choices=("internal", "external"), default="external")
    common.add_argument("--max-iters", type=int, default=10_000)
    common.add_argument("--out")
    common.add_argument("--b", type=float)
    common.add_argument("--config", help="JSON file whose keys override the flags")
    t = sub.add_parser("trace", parents=[common])
    t.add_argument("--input", help="bit string written to the read-only tape")
    t.add_argument("--tau", type=int)
    t.add_argument("--mode", choices=("unit", "linesearch"), default="unit")
    t.add_argument("--full-enumeration", action="store_true")
    r = sub.add_parser("train", parents=[common])
    r.add_argument("--dataset", help="JSON file or inline JSON with x, y and optional eps")
    r.add_argument("--primary", choices=("constant", "linear"), default="constant")
    r.add_argument("--codec", choices=("passthrough64", "mantissa-exponent"), default="passthrough64")
    r.add_argument("--m-q", type=int, default=10)
    r.add_argument("--n-q", type=int, default=4)
    v = sub.add_parser("verify", parents=[common])
    v.add_argument("--d", type=int)
    v.add_argument("--timings", action="store_true")
    return p


def main(argv=None) -> int:
    a = parser().parse_args(argv)
    try:
        if a.config:
            path = Path(a.config)
            if not path.exists():
                raise UsageError(f"config file {a.config} not found")
            for key, val in json.loads(path.read_text()).items():
                key = key.replace("-", "_")
                if not hasattr(a, key):
                    raise UsageError(f"unknown config key {key!r}")
                setattr(a, key, val)
        return {"trace": cmd_trace, "train": cmd_train, "verify": cmd_verify}[a.cmd](a)
    except TapeBoundError as exc:
        print(f"error: tape too short, raise --tau: {exc}", file=sys.stderr)
        return CONFIG
    except internal.GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return MISMATCH
    except (UsageError, ConfigError, MachineError, CodecError, ValueError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG


if __name__ == "__main__":
    sys.exit(main())
