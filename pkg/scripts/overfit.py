"""Teach one small circuit, overfit the network on it and compare placements.

    python scripts/overfit.py --cells 50 --epochs 500
"""

import argparse

from flowplace.config import GenConfig, PipelineConfig
from flowplace.finetune import finetune, random_placement
from flowplace.hier import build_hierarchy
from flowplace.partition import trivial_partition
from flowplace.pipeline import generate
from flowplace.tpgnn import TrainConfig, inductive_place, samples_from_hierarchy, train
from flowplace.wirelength import hpwl


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--lr", type=float, default=3e-3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    cfg = PipelineConfig()
    nl = generate(GenConfig(cells=args.cells), seed=args.seed)
    teacher = finetune(nl, random_placement(nl, args.seed), cfg.teach)
    hier = build_hierarchy(nl, trivial_partition(nl))
    res = train(samples_from_hierarchy(hier, teacher.placement),
                TrainConfig(lr=args.lr, epochs=args.epochs, seed=0))
    for e in range(0, args.epochs, max(1, args.epochs // 10)):
        print(f"epoch {e + 1:4d}  loss {res.history[e]:.4f}")
    model = inductive_place(hier, res.params)
    print(f"loss {res.initial_loss:.4f} -> {res.history[-1]:.4f} "
          f"({res.history[-1] / res.initial_loss:.3f}x)")
    print(f"HPWL teacher {hpwl(nl, teacher.placement):.1f}  model {hpwl(nl, model):.1f}  "
          f"random {hpwl(nl, random_placement(nl, args.seed)):.1f}")


if __name__ == "__main__":
    main()
