"""Train the extended network on one sample and show the switch timeline.

    python scripts/train_demo.py --construction external --codec mantissa-exponent
"""

import argparse
import json

from gdtm.codec import FloatCodec
from gdtm.machine import corpus_machine
from gdtm.network import ConstantNet, Dataset, LinearNet, assemble


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--construction", choices=("internal", "external"), default="external")
    ap.add_argument("--codec", choices=("passthrough64", "mantissa-exponent"), default="mantissa-exponent")
    ap.add_argument("--primary", choices=("constant", "linear"), default="constant")
    ap.add_argument("--y", type=float, nargs="+", default=[2.0, -3.0])
    ap.add_argument("--every", type=int, default=5, help="print every k-th step")
    ap.add_argument("--out")
    args = ap.parse_args()
    data = Dataset(x=[[1.0]], y=[args.y])
    primary = ConstantNet(data.m) if args.primary == "constant" else LinearNet(1, data.m)
    codec = FloatCodec(args.codec, 3, 2) if args.codec == "mantissa-exponent" else FloatCodec()
    net = assemble(primary, corpus_machine("copy"), args.construction, data, codec=codec)
    print(f"tau={net.tau} trainable={net.trainable_dimension()} depth={net.depth()} "
          f"switches={net.switches}")
    rep = net.train(data)
    for r in rep.records:
        if r.step % args.every == 0 or r.step in (1, rep.steps) or r.phi != 1.0:
            print(f"step {r.step:4d} loss={r.loss:12.4f} psi={r.psi:g} phi={r.phi:g} "
                  f"vertex={r.vertex:3d} heads={r.heads} z=y:{r.z_is_y}")
    print(rep.summary())
    print("output", rep.output.tolist(), "reference", rep.reference.tolist())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rep.to_json(), fh, indent=1)


if __name__ == "__main__":
    main()
