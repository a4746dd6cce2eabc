"""Register file, ROB, IQ and LSQ sweeps around the default configuration.

Reports whether cycles are non-increasing along each grid for every kernel
and the average gain of the final grid step.

    python scripts/resource_sweeps.py --axes rob lsq
"""

import argparse

from uarch_dse.cli import load_config
from uarch_dse.dse import RESOURCE_AXES, Runner, SweepSpec, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/default.json")
    ap.add_argument("--axes", nargs="+", default=list(RESOURCE_AXES), choices=RESOURCE_AXES)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config)
    with Runner(args.jobs) as runner:
        for ax in args.axes:
            spec = SweepSpec(ax, cfg.grids[ax], cfg.benchmarks, cfg.core, cfg.cache,
                             cfg.use_delay_model)
            res = run_sweep(spec, runner)
            print(f"== {ax}")
            for b in res.benchmarks:
                cyc = [res.points[(b, v)].roi_cycles for v in res.values]
                mono = all(x >= y for x, y in zip(cyc, cyc[1:]))
                print(f"  {b:14s} {'mono' if mono else 'NON-MONO'} {cyc}")
            avg = res.avg_per_pen
            print("  avg " + " ".join(f"{v}:{avg[v]:+.2f}" for v in res.values))
            last = res.values
            print(f"  final step {last[-2]}->{last[-1]}: {avg[last[-1]] - avg[last[-2]]:+.3f} pp")


if __name__ == "__main__":
    main()
