"""Warm start from the inductive placement versus a random start.

For each held-out circuit the random-start run fixes a target (its final
HPWL at overflow below the stop threshold); the script reports how many
iterations the warm start needs to reach it, and compares inductive-only
metrics against the fine-tuned result.

    python scripts/ablation.py --circuits 10 --cells 500
"""

import argparse

from flowplace.config import PipelineConfig
from flowplace.finetune import FinetuneConfig, finetune, random_placement
from flowplace.hier import build_hierarchy
from flowplace.metrics import evaluate
from flowplace.partition import trivial_partition
from flowplace.pipeline import synthetic_training
from flowplace.synth import SynthSpec, generate_synthetic
from flowplace.tpgnn import inductive_place, load_params


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--circuits", type=int, default=10)
    ap.add_argument("--cells", type=int, default=500)
    ap.add_argument("--terminals", type=int, default=None,
                    help="fixed cells per circuit (default round(4 sqrt(cells)))")
    ap.add_argument("--ckpt", help="trained model; trains the default model when omitted")
    ap.add_argument("--seed", type=int, default=900)
    args = ap.parse_args()

    cfg = PipelineConfig()
    params = load_params(args.ckpt) if args.ckpt else synthetic_training(cfg).params
    terminals = args.terminals or max(4, round(4 * args.cells ** 0.5))
    fast = 0
    for s in range(args.circuits):
        nl = generate_synthetic(SynthSpec(args.cells, terminals, seed=args.seed + s))
        rand = finetune(nl, random_placement(nl, 50 + s), FinetuneConfig())
        n_rand, target = rand.history[-1]["iteration"], rand.history[-1]["hpwl"]
        start = inductive_place(build_hierarchy(nl, trivial_partition(nl)), params)
        warm = finetune(nl, start, cfg.finetune)
        reach = warm.iterations_to(target, cfg.finetune.stop_overflow)
        ind, fin = evaluate(nl, start, cfg.metrics), evaluate(nl, warm.placement, cfg.metrics)
        fast += reach is not None and reach <= 0.9 * n_rand
        print(f"circuit {s}: random {n_rand:4d} it  warm {reach if reach is not None else '-':>4}  "
              f"HPWL {ind['hpwl']:8.0f} -> {fin['hpwl']:8.0f}  TOF {ind['tof']:7.1f} -> {fin['tof']:7.1f}")
    print(f"target reached within 0.9x of the random-start iterations on {fast}/{args.circuits}")


if __name__ == "__main__":
    main()
