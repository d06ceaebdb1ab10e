"""Runtime of the graph stages as the netlist doubles in size.

    python scripts/scaling.py --sizes 1000 2000 4000 8000 16000
"""

import argparse
import ctypes
import math
import timeit

import numpy as np

from flowplace.cellflow import build_cellflow
from flowplace.codec import decode, encode
from flowplace.finetune import random_placement
from flowplace.hier import build_hierarchy
from flowplace.netlist import Placement
from flowplace.partition import partition
from flowplace.synth import SynthSpec, generate_synthetic
from flowplace.tpgnn import centered


def fixed_allocator():
    """Pin glibc's mmap and trim thresholds so every size takes the same allocation path."""
    try:
        libc = ctypes.CDLL("libc.so.6")
    except OSError:
        return
    libc.mallopt(-3, 1 << 26)    # M_MMAP_THRESHOLD
    libc.mallopt(-1, 1 << 28)    # M_TRIM_THRESHOLD


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 2000, 4000, 8000, 16000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    fixed_allocator()

    rows = []
    for n in args.sizes:
        nl = generate_synthetic(SynthSpec(n, round(4 * math.sqrt(n)), seed=n))
        part = partition(nl, target_parts=max(1, n // 500), max_part_cells=600,
                         min_part_cells=32, seed=0)
        gc, c = centered(nl)
        flow = build_cellflow(gc)
        pl = Placement(random_placement(nl, 0).xy - c)
        enc = encode(gc, flow, pl)
        stages = {"hierarchy": lambda: build_hierarchy(nl, part),
                  "cellflow": lambda: build_cellflow(gc),
                  "encode": lambda: encode(gc, flow, pl),
                  "decode": lambda: decode(gc, flow, enc)}
        row = {}
        for name, fn in stages.items():
            t = timeit.Timer(fn)
            loops, _ = t.autorange()
            row[name] = float(np.median(t.repeat(args.repeat, loops))) / loops
        rows.append(row)
        print(f"{n:6d} cells  " + "  ".join(f"{k} {v * 1e3:8.2f} ms" for k, v in row.items()))
    for a, b, n in zip(rows, rows[1:], args.sizes[1:]):
        print(f"ratio at {n:6d}  " + "  ".join(f"{k} {b[k] / a[k]:.2f}" for k in a))


if __name__ == "__main__":
    main()
