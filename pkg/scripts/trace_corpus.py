"""Run both tracers on every corpus input and compare with the simulator.

    python scripts/trace_corpus.py [--out runs/traces]
"""

import argparse
from pathlib import Path

from gdtm import external, internal
from gdtm.acceptance import external_run
from gdtm.machine import CORPUS, corpus_machine, corpus_tau, make_initial, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    print(f"{'machine':<10} {'input':<8} {'k_t':>4} {'internal losses':<24} {'external loss range':<20} match")
    for name in CORPUS:
        tm = corpus_machine(name)
        for p in tm.examples:
            tau = corpus_tau(tm, p)
            c0 = make_initial(tm, p, tau)
            ref = run(tm, c0, 10_000)
            g = internal.build_graph(tm, tau, [c0])
            itr = internal.trace(internal.build_loss(internal.assign_weights(g)), 0, "line_search")
            loss, etr, _ = external_run(tm, p)
            ok_i = [g.configs[v] for v in itr.vertices] == list(ref.configs)
            ok_e = [external.as_configuration(loss, s) for s in etr.states] == list(ref.configs)
            bits = "".join(map(str, p)) or "-"
            ilos = " ".join(f"{v:g}" for v in itr.losses)
            print(f"{name:<10} {bits:<8} {ref.step_count:>4} {ilos:<24} "
                  f"[{min(etr.losses):g}, {max(etr.losses):g}]{'':<6} {ok_i and ok_e}")
            if args.out:
                stem = args.out / f"{name}-{bits}"
                stem.with_suffix(".sim.jsonl").write_text(ref.to_jsonl())
                stem.with_suffix(".internal.jsonl").write_text(itr.to_jsonl())
                stem.with_suffix(".external.jsonl").write_text(etr.to_jsonl(loss.vs))


if __name__ == "__main__":
    main()
