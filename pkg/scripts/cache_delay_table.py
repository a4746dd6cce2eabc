"""Access time, cycles and area over a capacity grid, as a gnuplot table.

    python scripts/cache_delay_table.py --clock-ghz 1.0 > delay.dat
"""

import argparse

from uarch_dse.camodel import ACCESS_TYPES, CacheGeometry, timing


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--clock-ghz", type=float, default=1.0)
    ap.add_argument("--assoc", type=int, default=4)
    ap.add_argument("--line", type=int, default=32)
    args = ap.parse_args()

    print("# capacity_kb " + " ".join(f"{t}_ns {t}_cycles" for t in ACCESS_TYPES) + " area_mm2")
    kb = 4
    while kb <= 4096:
        cells = []
        for t in ACCESS_TYPES:
            g = CacheGeometry(kb * 1024, args.line, args.assoc, access_type=t)
            tm = timing(g, args.clock_ghz)
            cells += [f"{tm.access_ns:.4f}", str(tm.access_cycles)]
        print(f"{kb} " + " ".join(cells) + f" {tm.area_mm2:.4f}")
        kb *= 2


if __name__ == "__main__":
    main()
