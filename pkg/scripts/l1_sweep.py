"""L1 capacity sweep at pipeline width 1 with the delay model on.

Prints per-benchmark and average per_pen for each L1 size (L2 is raised to
the L1 size where needed).

    python scripts/l1_sweep.py --kernels dijkstra flow_class
"""

import argparse

from uarch_dse.cli import load_config
from uarch_dse.dse import SweepSpec, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/default.json")
    ap.add_argument("--kernels", nargs="+", default=["dijkstra", "flow_class"])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64, 128, 256, 512])
    ap.add_argument("--no-delay-model", action="store_true")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config)
    bench = tuple(b for b in cfg.benchmarks if b.kernel in args.kernels)
    spec = SweepSpec("l1_kb", tuple(args.sizes), bench, cfg.core.with_widths(1), cfg.cache,
                     not args.no_delay_model)
    res = run_sweep(spec, jobs=args.jobs)
    print("l1_kb " + " ".join(res.benchmarks) + " avg")
    for v in res.values:
        cells = [f"{res.points[(b, v)].per_pen:+8.2f}" for b in res.benchmarks]
        print(f"{v:5d} " + " ".join(cells) + f" {res.avg_per_pen[v]:+8.2f}")


if __name__ == "__main__":
    main()
