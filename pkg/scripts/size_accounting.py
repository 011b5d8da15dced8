"""Parameter counts and depth of both constructions for the corpus machines."""

from gdtm import external, internal
from gdtm.codec import FloatCodec
from gdtm.graph import COST
from gdtm.machine import CORPUS, corpus_machine, corpus_tau, make_initial
from gdtm.network import ConstantNet, Dataset, assemble


def main():
    print(f"{'machine':<10} {'|Q|':>3} {'d':>2} {'tau':>4} {'reachable':>9} "
          f"{'full |Q|2^(d tau) tau^d':>24} {'external 3|Q|2^d+2d tau':>24}")
    for name in CORPUS:
        tm = corpus_machine(name)
        p = max(tm.examples, key=len)
        tau = corpus_tau(tm, p)
        g = internal.build_graph(tm, tau, [make_initial(tm, q, tau) for q in tm.examples])
        full = len(tm.states) * 2 ** (tm.d * tau) * tau ** tm.d
        ext = external.trainable_dimension(tm, tau)
        print(f"{name:<10} {len(tm.states):>3} {tm.d:>2} {tau:>4} {g.m:>9} {full:>24.3e} {ext:>24}")
    data = Dataset(x=[[1.0]], y=[[2.0, -3.0]])
    for cons in ("external", "internal"):
        net = assemble(ConstantNet(2), corpus_machine("copy"), cons, data,
                       codec=FloatCodec("mantissa-exponent", 3, 2))
        kinds = {}
        for n in net.graph.nodes:
            kinds[n.kind] = kinds.get(n.kind, 0) + 1
        print(f"\n{cons}: trainable {net.trainable_dimension()}, depth {net.depth()} "
              f"(cost table {COST})")
        print("  nodes:", ", ".join(f"{k}={v}" for k, v in sorted(kinds.items())))
        for key in ("ell_TM", "f_TM", "phi", "s_net", "psi", "out"):
            print(f"  depth({key}) = {net.graph.depth(net.nodes[key])}")


if __name__ == "__main__":
    main()
