"""Parameter sweeps, best/optimum extraction and the staged exploration.

Performance is compared on ROI cycles. ``per_pen`` is the signed percentage
speedup of a configuration over the sweep's baseline, so slower
configurations get negative values. Points are keyed by (benchmark, value),
which makes every aggregate independent of the order in which simulations
finish.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Mapping

from .cachesim import HierarchyConfig, build_hierarchy
from .camodel import FAST, NORMAL_SERIAL, CacheGeometry, area_mm2
from .core import CoreConfig, simulate
from .kernels import KernelSpec, gen_kernel

AXES = ("l1_kb", "l2_kb", "phys_regs", "rob", "iq", "lsq")
CACHE_AXIS = "cache"  # l1_kb x l2_kb cross product; values are (l1_kb, l2_kb) pairs
RESOURCE_AXES = ("phys_regs", "rob", "iq", "lsq")
_CORE_FIELD = {"phys_regs": "phys_regs", "rob": "rob_size", "iq": "iq_size", "lsq": "lsq_size"}

DEFAULT_EPSILON_PP = 0.05
DEFAULT_THRESHOLD_PP = 2.0

DEFAULT_GRIDS = {
    "l1_kb": (16, 32, 64, 128, 256, 512),
    "l2_kb": (64, 128, 256, 512),
    "phys_regs": (40, 48, 56, 64, 72, 80, 96),
    "rob": (8, 16, 32, 64, 128),
    "iq": (4, 8, 12, 16, 20, 32),
    "lsq": (4, 8, 12, 16, 32),
}

CSV_HEADER = ("axis", "value", "benchmark", "roi_cycles", "ipc_roi", "per_pen")


class SweepError(RuntimeError):
    pass


class NoOptimumError(ValueError):
    """No grid value lies within the threshold of the best one."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def per_pen(cycles_cfg: float, cycles_ref: float) -> float:
    if not cycles_cfg > 0 or not cycles_ref > 0:
        raise ValueError("cycle counts must be positive")
    return (cycles_ref / cycles_cfg - 1.0) * 100.0


def _order_key(v):
    # cache pairs order by total capacity, then L1
    if isinstance(v, tuple):
        return (sum(v), v[0])
    return v


def format_value(v) -> str:
    return f"{v[0]}-{v[1]}" if isinstance(v, tuple) else str(v)


def parse_value(s: str):
    if "-" in s:
        a, b = s.split("-", 1)
        return int(a), int(b)
    return int(s)


@dataclass(frozen=True)
class CacheParams:
    """Hierarchy recipe; sweeps rebuild the hierarchy from it per point."""

    l1_kb: int = 64
    l2_kb: int = 128
    l1_line: int = 32
    l2_line: int = 64
    l1_assoc: int = 4
    l2_assoc: int = 8
    mem_cycles: int = 100
    l1_hit_cycles: int = 1  # only used without the delay model
    l2_hit_cycles: int = 4
    overrides: tuple = ()  # ((capacity_bytes, assoc, type), access_ns) pairs

    def hierarchy(self, clock_ghz: float, use_delay_model: bool) -> HierarchyConfig:
        return build_hierarchy(
            self.l1_kb, self.l2_kb, l1_line=self.l1_line, l2_line=self.l2_line,
            l1_assoc=self.l1_assoc, l2_assoc=self.l2_assoc, mem_cycles=self.mem_cycles,
            clock_ghz=clock_ghz, use_delay_model=use_delay_model,
            overrides=dict(self.overrides) or None,
            l1_hit_cycles=self.l1_hit_cycles, l2_hit_cycles=self.l2_hit_cycles)

    def area_mm2(self) -> float:
        """Split L1 (instruction + data) plus L2."""
        g1 = CacheGeometry(self.l1_kb * 1024, self.l1_line, self.l1_assoc, access_type=FAST)
        g2 = CacheGeometry(self.l2_kb * 1024, self.l2_line, self.l2_assoc,
                           access_type=NORMAL_SERIAL)
        return 2 * area_mm2(g1) + area_mm2(g2)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    benchmarks: tuple
    core: CoreConfig = field(default_factory=CoreConfig)
    cache: CacheParams = field(default_factory=CacheParams)
    use_delay_model: bool = True

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(
            tuple(v) if isinstance(v, list) else v for v in self.values))
        object.__setattr__(self, "benchmarks", tuple(self.benchmarks))
        if self.axis not in AXES and self.axis != CACHE_AXIS:
            raise ValueError(f"unknown axis {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        keys = [_order_key(v) for v in self.values]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise ValueError(f"{self.axis} values must be strictly increasing")
        if self.axis == CACHE_AXIS:
            if not all(isinstance(v, tuple) and len(v) == 2 for v in self.values):
                raise ValueError("cache axis values are (l1_kb, l2_kb) pairs")
        elif not all(isinstance(v, int) and not isinstance(v, bool) for v in self.values):
            raise ValueError(f"{self.axis} values must be integers")
        if not self.benchmarks:
            raise ValueError("sweep needs at least one benchmark")
        labels = [b.label for b in self.benchmarks]
        if len(set(labels)) != len(labels):
            raise ValueError("benchmark labels must be unique")

    def baseline(self) -> tuple[CoreConfig, HierarchyConfig]:
        return self.core, self.cache.hierarchy(self.core.clock_ghz, self.use_delay_model)

    def configure(self, value) -> tuple[CoreConfig, HierarchyConfig]:
        core, cache = self.core, self.cache
        if self.axis == CACHE_AXIS:
            cache = replace(cache, l1_kb=value[0], l2_kb=value[1])
        elif self.axis == "l1_kb":
            # L2 never drops below L1
            cache = replace(cache, l1_kb=value, l2_kb=max(cache.l2_kb, value))
        elif self.axis == "l2_kb":
            cache = replace(cache, l2_kb=value)
        else:
            core = replace(core, **{_CORE_FIELD[self.axis]: value})
        return core, cache.hierarchy(core.clock_ghz, self.use_delay_model)


@dataclass(frozen=True)
class Point:
    roi_cycles: int
    ipc_roi: float
    per_pen: float


@dataclass
class SweepResult:
    axis: str
    values: list
    benchmarks: list
    baseline_cycles: dict  # benchmark -> roi_cycles
    points: dict  # (benchmark, value) -> Point
    avg_per_pen: dict  # value -> mean per_pen over benchmarks

    def curve(self) -> dict:
        return {v: self.avg_per_pen[v] for v in self.values}

    def to_dict(self) -> dict:
        def enc(v):
            return list(v) if isinstance(v, tuple) else v
        return {
            "axis": self.axis,
            "values": [enc(v) for v in self.values],
            "benchmarks": list(self.benchmarks),
            "baseline_cycles": dict(self.baseline_cycles),
            "points": [
                {"benchmark": b, "value": enc(v), "roi_cycles": p.roi_cycles,
                 "ipc_roi": p.ipc_roi, "per_pen": p.per_pen}
                for v in self.values for b in self.benchmarks
                for p in (self.points[(b, v)],)
            ],
            "avg_per_pen": [{"value": enc(v), "avg_per_pen": self.avg_per_pen[v]}
                            for v in self.values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        def dec(v):
            return tuple(v) if isinstance(v, list) else v
        points = {(p["benchmark"], dec(p["value"])): Point(p["roi_cycles"], p["ipc_roi"],
                                                           p["per_pen"])
                  for p in d["points"]}
        return cls(d["axis"], [dec(v) for v in d["values"]], list(d["benchmarks"]),
                   dict(d["baseline_cycles"]), points,
                   {dec(a["value"]): a["avg_per_pen"] for a in d["avg_per_pen"]})


@dataclass(frozen=True)
class ExtractionResult:
    axis: str
    best_size: object
    optimum_size: object
    threshold_pp: float = DEFAULT_THRESHOLD_PP
    epsilon_pp: float = DEFAULT_EPSILON_PP
    saturation_detected: bool = False
    degradation_detected: bool = False

    def to_dict(self) -> dict:
        enc = (lambda v: list(v) if isinstance(v, tuple) else v)
        return {"axis": self.axis, "best_size": enc(self.best_size),
                "optimum_size": enc(self.optimum_size), "threshold_pp": self.threshold_pp,
                "epsilon_pp": self.epsilon_pp, "saturation_detected": self.saturation_detected,
                "degradation_detected": self.degradation_detected}

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionResult":
        dec = (lambda v: tuple(v) if isinstance(v, list) else v)
        return cls(d["axis"], dec(d["best_size"]), dec(d["optimum_size"]), d["threshold_pp"],
                   d["epsilon_pp"], d["saturation_detected"], d["degradation_detected"])


# --- simulation runner --------------------------------------------------------

@lru_cache(maxsize=16)
def _trace_for(spec: KernelSpec):
    return gen_kernel(spec)


def _simulate_task(task):
    spec, core, hier = task
    try:
        r = simulate(_trace_for(spec), core, hier)
    except Exception as e:  # reported back with the point that failed
        return False, f"{type(e).__name__}: {e}"
    return True, (r.roi_cycles, r.ipc_roi)


class Runner:
    """Memoizing simulation pool. ``jobs > 1`` fans out over processes; the
    results never depend on ``jobs``."""

    def __init__(self, jobs: int = 1):
        if jobs < 1:
            raise ValueError("jobs must be >= 1")
        self.jobs = jobs
        self._memo: dict = {}
        self._pool: ProcessPoolExecutor | None = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def run(self, tasks: list) -> list:
        todo = list(dict.fromkeys(t for t in tasks if t not in self._memo))
        if self.jobs > 1 and len(todo) > 1:
            if self._pool is None:
                self._pool = ProcessPoolExecutor(self.jobs)
            outs = list(self._pool.map(_simulate_task, todo))
        else:
            outs = [_simulate_task(t) for t in todo]
        self._memo.update(zip(todo, outs))
        return [self._memo[t] for t in tasks]


def _mean(xs) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs)


def run_sweep(spec: SweepSpec, runner: Runner | None = None, jobs: int = 1) -> SweepResult:
    own = runner is None
    runner = runner or Runner(jobs)
    try:
        base_core, base_hier = spec.baseline()
        tasks, where = [], []
        for b in spec.benchmarks:
            tasks.append((b, base_core, base_hier))
            where.append((b.label, "baseline"))
        for v in spec.values:
            try:
                core, hier = spec.configure(v)
            except ValueError as e:
                raise SweepError(f"{spec.axis}={format_value(v)}: {e}") from e
            for b in spec.benchmarks:
                tasks.append((b, core, hier))
                where.append((b.label, v))
        outs = runner.run(tasks)
    finally:
        if own:
            runner.close()

    for (label, v), (ok, payload) in zip(where, outs):
        if not ok:
            shown = v if v == "baseline" else format_value(v)
            raise SweepError(f"{label} at {spec.axis}={shown}: {payload}")

    labels = [b.label for b in spec.benchmarks]
    nb = len(labels)
    base = {labels[i]: outs[i][1][0] for i in range(nb)}
    points = {}
    for (label, v), (_, (cyc, ipc)) in zip(where[nb:], outs[nb:]):
        points[(label, v)] = Point(cyc, ipc, per_pen(cyc, base[label]))
    avg = {v: _mean(points[(b, v)].per_pen for b in labels) for v in spec.values}
    return SweepResult(spec.axis, list(spec.values), labels, base, points, avg)


# --- extraction ---------------------------------------------------------------

def _ordered(curve) -> list:
    if isinstance(curve, SweepResult):
        return [(v, curve.avg_per_pen[v]) for v in curve.values]
    items = sorted(curve.items(), key=lambda kv: _order_key(kv[0]))
    if not items:
        raise ValueError("empty curve")
    return items


def find_best(curve, epsilon_pp: float = DEFAULT_EPSILON_PP):
    """Smallest value whose average is within ``epsilon_pp`` of the maximum.

    ``curve`` is a SweepResult or a {value: avg_per_pen} mapping.
    """
    items = _ordered(curve)
    top = max(a for _, a in items)
    return next(v for v, a in items if a >= top - epsilon_pp)


def find_optimum(curve, threshold_pp: float = DEFAULT_THRESHOLD_PP,
                 epsilon_pp: float = DEFAULT_EPSILON_PP):
    """Smallest value no larger than the best whose average is within
    ``threshold_pp`` of the best's."""
    items = _ordered(curve)
    best = find_best(curve, epsilon_pp)
    target = dict(items)[best] - threshold_pp
    for v, a in items:
        if a >= target:
            return v
        if v == best:
            break
    raise NoOptimumError(f"no optimum under threshold {threshold_pp} pp")


def extract(result: SweepResult, threshold_pp: float = DEFAULT_THRESHOLD_PP,
            epsilon_pp: float = DEFAULT_EPSILON_PP) -> ExtractionResult:
    items = _ordered(result)
    best = find_best(result, epsilon_pp)
    opt = find_optimum(result, threshold_pp, epsilon_pp)
    top = max(a for _, a in items)
    after = [a for v, a in items if _order_key(v) > _order_key(best)]
    return ExtractionResult(
        result.axis, best, opt, threshold_pp, epsilon_pp,
        saturation_detected=bool(after),
        degradation_detected=any(a < top - epsilon_pp for a in after))


# --- staged exploration -------------------------------------------------------

@dataclass(frozen=True)
class ExploreConfig:
    benchmarks: tuple
    core: CoreConfig = field(default_factory=CoreConfig)
    cache: CacheParams = field(default_factory=CacheParams)
    grids: Mapping = field(default_factory=lambda: dict(DEFAULT_GRIDS))
    use_delay_model: bool = True
    cache_stage_width: int = 1
    threshold_pp: float = DEFAULT_THRESHOLD_PP
    epsilon_pp: float = DEFAULT_EPSILON_PP

    def __post_init__(self):
        missing = set(AXES) - set(self.grids)
        if missing:
            raise ValueError(f"missing grids for {sorted(missing)}")
        for ax in AXES:
            vals = list(self.grids[ax])
            if not vals or any(a >= b for a, b in zip(vals, vals[1:])):
                raise ValueError(f"grid {ax} must be non-empty and strictly increasing")

    def cache_pairs(self) -> list:
        pairs = [(a, b) for a in self.grids["l1_kb"] for b in self.grids["l2_kb"] if b >= a]
        if not pairs:
            raise ValueError("no valid (l1_kb, l2_kb) pair: every L2 is smaller than every L1")
        return sorted(pairs, key=_order_key)


@dataclass
class ExploreReport:
    sweeps: dict  # axis -> SweepResult, in stage order
    extractions: dict  # axis -> ExtractionResult
    best_cache_size: tuple
    recommended: dict
    cache_area: list

    def to_dict(self) -> dict:
        return {
            "best_cache_size": list(self.best_cache_size),
            "recommended": dict(self.recommended),
            "extractions": {k: e.to_dict() for k, e in self.extractions.items()},
            "cache_area": list(self.cache_area),
            "sweeps": {k: s.to_dict() for k, s in self.sweeps.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExploreReport":
        return cls({k: SweepResult.from_dict(s) for k, s in d["sweeps"].items()},
                   {k: ExtractionResult.from_dict(e) for k, e in d["extractions"].items()},
                   tuple(d["best_cache_size"]), dict(d["recommended"]), list(d["cache_area"]))


def staged_explore(cfg: ExploreConfig, jobs: int = 1, runner: Runner | None = None,
                   log=None) -> ExploreReport:
    """Cache cross product at narrow width, then the register file with the
    best cache, then ROB/IQ/LSQ with the register file at its optimum."""
    say = log or (lambda msg: None)
    own = runner is None
    runner = runner or Runner(jobs)
    sweeps, ext = {}, {}

    def stage(name, spec):
        try:
            res = run_sweep(spec, runner)
            sweeps[spec.axis] = res
            ext[spec.axis] = extract(res, cfg.threshold_pp, cfg.epsilon_pp)
        except Exception as e:
            raise StageError(name, e) from e
        say(f"{name}: {spec.axis} best={format_value(ext[spec.axis].best_size)} "
            f"optimum={format_value(ext[spec.axis].optimum_size)}")
        return ext[spec.axis]

    try:
        try:
            pairs = cfg.cache_pairs()
        except ValueError as e:
            raise StageError("cache", e) from e
        narrow = cfg.core.with_widths(cfg.cache_stage_width)
        bcs = stage("cache", SweepSpec(CACHE_AXIS, pairs, cfg.benchmarks, narrow, cfg.cache,
                                       cfg.use_delay_model)).best_size

        cache2 = replace(cfg.cache, l1_kb=bcs[0], l2_kb=bcs[1])
        regs = stage("register_file", SweepSpec("phys_regs", cfg.grids["phys_regs"],
                                                cfg.benchmarks, cfg.core, cache2,
                                                cfg.use_delay_model)).optimum_size

        core3 = replace(cfg.core, phys_regs=regs)
        chosen = {}
        for ax in ("rob", "iq", "lsq"):
            chosen[ax] = stage("superscalar", SweepSpec(ax, cfg.grids[ax], cfg.benchmarks, core3,
                                                        cache2, cfg.use_delay_model)).optimum_size
    finally:
        if own:
            runner.close()

    cache_res = sweeps[CACHE_AXIS]
    area = []
    for v in cache_res.values:
        a = replace(cfg.cache, l1_kb=v[0], l2_kb=v[1]).area_mm2()
        perf = 1.0 + cache_res.avg_per_pen[v] / 100.0
        area.append({"value": list(v), "area_mm2": a, "relative_perf": perf,
                     "perf_per_area": perf / a})
    recommended = {"l1_kb": bcs[0], "l2_kb": bcs[1], "phys_regs": regs, **chosen,
                   "cache_area_mm2": cache2.area_mm2(),
                   "baseline_cache_area_mm2": cfg.cache.area_mm2()}
    return ExploreReport(sweeps, ext, tuple(bcs), recommended, area)


# --- report emission ----------------------------------------------------------

def _num(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def csv_rows(results) -> list:
    rows = []
    for r in results:
        for v in r.values:
            pts = [r.points[(b, v)] for b in r.benchmarks]
            for b, p in zip(r.benchmarks, pts):
                rows.append((r.axis, format_value(v), b, p.roi_cycles, p.ipc_roi, p.per_pen))
            rows.append((r.axis, format_value(v), "AVG",
                         _mean(p.roi_cycles for p in pts), _mean(p.ipc_roi for p in pts),
                         r.avg_per_pen[v]))
    return rows


def write_csv(results, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in csv_rows(results):
        w.writerow([_num(x) for x in row])


def csv_text(results) -> str:
    buf = io.StringIO()
    write_csv(results, buf)
    return buf.getvalue()


def _dat(x) -> str:
    return "nan" if x is None else f"{x:.6f}"


def cache_dat(result: SweepResult, benchmark: str) -> str:
    """Grid of per_pen: one row per L1 size, one column per L2 size."""
    l1s = sorted({v[0] for v in result.values})
    l2s = sorted({v[1] for v in result.values})
    lines = [f"# cache per_pen (%) for {benchmark}; rows l1_kb, columns l2_kb",
             "# l1_kb " + " ".join(f"l2_{b}" for b in l2s)]
    for a in l1s:
        cells = []
        for b in l2s:
            p = result.points.get((benchmark, (a, b)))
            cells.append(_dat(None if p is None else p.per_pen))
        lines.append(f"{a} " + " ".join(cells))
    return "\n".join(lines) + "\n"


def axis_dat(result: SweepResult) -> str:
    """Columns: size, per_pen per benchmark, average."""
    lines = [f"# {result.axis} per_pen (%)",
             f"# {result.axis} " + " ".join(result.benchmarks) + " avg"]
    for v in result.values:
        cells = [_dat(result.points[(b, v)].per_pen) for b in result.benchmarks]
        cells.append(_dat(result.avg_per_pen[v]))
        lines.append(f"{format_value(v)} " + " ".join(cells))
    return "\n".join(lines) + "\n"


def report_json(obj) -> str:
    return json.dumps(obj.to_dict(), indent=2) + "\n"


def emit_report(report: ExploreReport, out_dir) -> list[str]:
    """Write per-axis CSVs, the combined JSON and gnuplot .dat files under
    ``out_dir``. Returns the written paths, relative to ``out_dir``."""
    os.makedirs(os.path.join(out_dir, "dat"), exist_ok=True)
    files = {}
    for axis, res in report.sweeps.items():
        files[f"sweep_{axis}.csv"] = csv_text([res])
        if axis == CACHE_AXIS:
            for b in res.benchmarks:
                files[f"dat/cache_{b}.dat"] = cache_dat(res, b)
        else:
            files[f"dat/{axis}.dat"] = axis_dat(res)
    files["explore.json"] = report_json(report)
    for rel, text in files.items():
        with open(os.path.join(out_dir, rel), "w", newline="") as f:
            f.write(text)
    return list(files)
