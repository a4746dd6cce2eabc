"""Full staged exploration; writes CSV, JSON and .dat files and prints the
recommended configuration.

    python scripts/explore.py --config configs/default.json --out out/default
"""

import argparse
import json
import time

from uarch_dse.cli import load_config
from uarch_dse.dse import emit_report, staged_explore


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/default.json")
    ap.add_argument("--out", default=None)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config)
    t0 = time.perf_counter()
    report = staged_explore(cfg.explore_config(), jobs=args.jobs, log=print)
    files = emit_report(report, args.out or cfg.output_dir)
    print(json.dumps(report.recommended, indent=2))
    print(f"{len(files)} files written in {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
