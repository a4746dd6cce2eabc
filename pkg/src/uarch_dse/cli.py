"""Command-line front end.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or config error.
Primary results go to stdout as JSON; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields

from . import dse
from .camodel import load_overrides
from .core import CoreConfig, SimulationError, simulate
from .kernels import KernelError, KernelSpec, build_kernel, list_kernels
from .trace import TraceError, load_trace, save_trace

log = logging.getLogger("uarch_dse")

SEED_ENV = "UARCH_DSE_SEED"
DEFAULT_SEED = 1


class ConfigError(ValueError):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# --- configuration ------------------------------------------------------------

_CACHE_KEYS = {f.name for f in fields(dse.CacheParams)} - {"overrides"}
_TOP_KEYS = {"core", "cache", "grids", "benchmarks", "output_dir", "cache_stage_width",
             "threshold_pp", "epsilon_pp"}


@dataclass(frozen=True)
class RunConfig:
    core: CoreConfig
    cache: dse.CacheParams
    use_delay_model: bool
    grids: dict
    benchmarks: tuple
    output_dir: str = "out"
    cache_stage_width: int = 1
    threshold_pp: float = dse.DEFAULT_THRESHOLD_PP
    epsilon_pp: float = dse.DEFAULT_EPSILON_PP

    def explore_config(self) -> dse.ExploreConfig:
        return dse.ExploreConfig(self.benchmarks, self.core, self.cache, self.grids,
                                 self.use_delay_model, self.cache_stage_width,
                                 self.threshold_pp, self.epsilon_pp)

    def hierarchy(self):
        return self.cache.hierarchy(self.core.clock_ghz, self.use_delay_model)


def _require_dict(d, what):
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be an object")
    return d


def parse_config(doc: dict, base_dir: str = ".") -> RunConfig:
    """Build a RunConfig from the JSON document; raises ConfigError."""
    _require_dict(doc, "config")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        core_d = dict(_require_dict(doc.get("core", {}), "core"))
        cache_d = dict(_require_dict(doc.get("cache", {}), "cache"))
        use_delay = cache_d.pop("use_delay_model", True)
        if not isinstance(use_delay, bool):
            raise ConfigError("cache.use_delay_model must be true or false")
        ov_path = cache_d.pop("delay_overrides", None)
        clock = cache_d.pop("clock_ghz", None)
        if clock is not None:
            if "clock_ghz" in core_d and core_d["clock_ghz"] != clock:
                raise ConfigError("core.clock_ghz and cache.clock_ghz disagree")
            core_d["clock_ghz"] = clock
        bad = set(cache_d) - _CACHE_KEYS
        if bad:
            raise ConfigError(f"unknown cache keys {sorted(bad)}")
        overrides = ()
        if ov_path is not None:
            path = os.path.join(base_dir, ov_path)
            if not os.path.isfile(path):
                raise ConfigError(f"delay override file not found: {path}")
            overrides = tuple(sorted(load_overrides(path).items()))
        core = CoreConfig(**core_d)
        cache = dse.CacheParams(**cache_d, overrides=overrides)
        cache.hierarchy(core.clock_ghz, use_delay)  # validate geometry now

        grids = dict(dse.DEFAULT_GRIDS)
        for ax, vals in _require_dict(doc.get("grids", {}), "grids").items():
            if ax not in dse.AXES:
                raise ConfigError(f"unknown grid axis {ax!r}")
            if not isinstance(vals, list) or not all(type(v) is int and v > 0 for v in vals):
                raise ConfigError(f"grid {ax} must be a list of positive integers")
            grids[ax] = tuple(vals)

        bench_docs = doc.get("benchmarks")
        if bench_docs is None:
            bench_docs = [{"kernel": name} for name, _, _ in list_kernels()]
        if not isinstance(bench_docs, list) or not bench_docs:
            raise ConfigError("benchmarks must be a non-empty list")
        seed = default_seed()
        benches = []
        for b in bench_docs:
            _require_dict(b, "benchmark entry")
            extra = set(b) - {"kernel", "params", "seed"}
            if extra or "kernel" not in b:
                raise ConfigError(f"benchmark entries take kernel, params, seed; got {sorted(b)}")
            spec = KernelSpec.make(b["kernel"], b.get("params"), b.get("seed", seed))
            spec.check()
            benches.append(spec)

        rc = RunConfig(core, cache, use_delay, grids, tuple(benches),
                       str(doc.get("output_dir", "out")),
                       int(doc.get("cache_stage_width", 1)),
                       float(doc.get("threshold_pp", dse.DEFAULT_THRESHOLD_PP)),
                       float(doc.get("epsilon_pp", dse.DEFAULT_EPSILON_PP)))
        rc.explore_config()  # grid and benchmark checks
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, KernelError) as e:
        raise ConfigError(str(e)) from e
    return rc


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(doc, os.path.dirname(os.path.abspath(path)))


# --- commands -----------------------------------------------------------------

def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def _flag(param: str) -> str:
    return "--" + param.replace("_", "-")


def _kernel_params():
    names = {}
    for _, ranges, _ in list_kernels():
        for p in ranges:
            names[p] = p
    return sorted(names)


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    params = {p: getattr(args, p) for p in _kernel_params() if getattr(args, p) is not None}
    try:
        spec = KernelSpec.make(args.kernel, params, seed)
        spec.check()
    except (KernelError, ValueError) as e:
        raise ConfigError(str(e)) from e
    run = build_kernel(spec)
    save_trace(run.trace, args.output)
    _emit({"kernel": spec.kernel, "params": dict(spec.params), "seed": seed,
           "records": len(run.trace), "path": args.output})
    return 0


def cmd_sim(args) -> int:
    cfg = load_config(args.config)
    trace = load_trace(args.trace)
    res = simulate(trace, cfg.core, cfg.hierarchy(), debug=args.debug)
    _emit(res.to_dict())
    return 0


def _out_dir(args, cfg: RunConfig) -> str:
    return args.output_dir if args.output_dir is not None else cfg.output_dir


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.values:
        try:
            values = tuple(int(v) for v in args.values.split(","))
        except ValueError:
            raise ConfigError(f"--values must be comma-separated integers: {args.values!r}")
    else:
        values = cfg.grids[args.axis]
    try:
        spec = dse.SweepSpec(args.axis, values, cfg.benchmarks, cfg.core, cfg.cache,
                             cfg.use_delay_model)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    res = dse.run_sweep(spec, jobs=args.jobs)
    ext = dse.extract(res, cfg.threshold_pp, cfg.epsilon_pp)
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, f"sweep_{args.axis}.csv"), "w", newline="") as f:
        dse.write_csv([res], f)
    doc = {"sweep": res.to_dict(), "extraction": ext.to_dict()}
    with open(os.path.join(out, f"sweep_{args.axis}.json"), "w") as f:
        f.write(json.dumps(doc, indent=2) + "\n")
    _emit(doc)
    return 0


def _summary(report: dse.ExploreReport, out: str, files) -> dict:
    return {"best_cache_size": list(report.best_cache_size),
            "recommended": report.recommended,
            "extractions": {k: e.to_dict() for k, e in report.extractions.items()},
            "output_dir": out, "files": sorted(files)}


def cmd_explore(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    report = dse.staged_explore(cfg.explore_config(), jobs=args.jobs, log=log.info)
    files = dse.emit_report(report, out)
    _emit(_summary(report, out, files))
    return 0


def cmd_report(args) -> int:
    try:
        with open(args.input) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{args.input}: invalid JSON: {e}") from None
    out = args.output_dir or os.path.dirname(os.path.abspath(args.input))
    try:
        if "sweeps" in doc:
            report = dse.ExploreReport.from_dict(doc)
        elif "sweep" in doc:
            res = dse.SweepResult.from_dict(doc["sweep"])
            ext = dse.ExtractionResult.from_dict(doc["extraction"])
            report = None
        else:
            raise ConfigError("input is neither an explore report nor a sweep result")
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed report {args.input}: {e}") from e
    if report is not None:
        files = dse.emit_report(report, out)
        _emit(_summary(report, out, files))
        return 0
    os.makedirs(os.path.join(out, "dat"), exist_ok=True)
    files = [f"sweep_{res.axis}.csv"]
    with open(os.path.join(out, files[0]), "w", newline="") as f:
        dse.write_csv([res], f)
    if res.axis == dse.CACHE_AXIS:
        for b in res.benchmarks:
            files.append(f"dat/cache_{b}.dat")
            with open(os.path.join(out, files[-1]), "w") as f:
                f.write(dse.cache_dat(res, b))
    else:
        files.append(f"dat/{res.axis}.dat")
        with open(os.path.join(out, files[-1]), "w") as f:
            f.write(dse.axis_dat(res))
    _emit({"axis": res.axis, "extraction": ext.to_dict(), "output_dir": out,
           "files": sorted(files)})
    return 0


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uarch-dse", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a kernel trace")
    g.add_argument("kernel", choices=[k for k, _, _ in list_kernels()])
    for name in _kernel_params():
        g.add_argument(_flag(name), dest=name, type=int, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("-o", "--output", required=True, help="trace file to write")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("sim", help="simulate one trace")
    s.add_argument("config")
    s.add_argument("trace")
    s.add_argument("--debug", action="store_true", help="check occupancy bounds every cycle")
    s.set_defaults(func=cmd_sim)

    w = sub.add_parser("sweep", help="sweep one axis")
    w.add_argument("config")
    w.add_argument("--axis", required=True, choices=dse.AXES)
    w.add_argument("--values", help="comma-separated sizes (default: the config grid)")
    w.add_argument("--jobs", type=_positive_int, default=1)
    w.add_argument("-o", "--output-dir", default=None)
    w.set_defaults(func=cmd_sweep)

    e = sub.add_parser("explore", help="staged cache / register file / superscalar exploration")
    e.add_argument("config")
    e.add_argument("--jobs", type=_positive_int, default=1)
    e.add_argument("-o", "--output-dir", default=None)
    e.set_defaults(func=cmd_explore)

    r = sub.add_parser("report", help="rewrite CSV and .dat files from a JSON result")
    r.add_argument("input")
    r.add_argument("-o", "--output-dir", default=None)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except dse.StageError as e:
        print(f"error: stage {e.stage}: {e.cause}", file=sys.stderr)
        return 1
    except (SimulationError, dse.SweepError, TraceError, KernelError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
