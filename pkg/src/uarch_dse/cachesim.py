"""Two-level cache hierarchy: split L1I/L1D over a unified L2.

LRU replacement, write-back, write-allocate. Dirty L1 victims are written
into L2 (counted as L2 accesses); dirty L2 victims count as L2 writebacks to
memory. Writebacks never add latency.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field

from .camodel import FAST, NORMAL_SERIAL, CacheGeometry, OverrideTable, timing

IFETCH = "ifetch"
DATA = "data"


@dataclass(frozen=True)
class CacheConfig:
    geometry: CacheGeometry
    hit_cycles: int

    def __post_init__(self):
        if self.hit_cycles < 1:
            raise ValueError("hit_cycles must be >= 1")


@dataclass(frozen=True)
class HierarchyConfig:
    l1i: CacheConfig
    l1d: CacheConfig
    l2: CacheConfig
    mem_cycles: int = 100
    perfect: bool = False  # every access hits L1

    def __post_init__(self):
        if self.mem_cycles < 1:
            raise ValueError("mem_cycles must be >= 1")
        l2cap = self.l2.geometry.capacity_bytes
        if l2cap < self.l1d.geometry.capacity_bytes or l2cap < self.l1i.geometry.capacity_bytes:
            raise ValueError("L2 capacity must be at least the L1 capacity")


def build_hierarchy(l1_kb: int = 64, l2_kb: int = 128, *, l1_line: int = 32, l2_line: int = 64,
                    l1_assoc: int = 4, l2_assoc: int = 8, mem_cycles: int = 100,
                    clock_ghz: float = 1.0, use_delay_model: bool = True,
                    overrides: OverrideTable | None = None, l1_hit_cycles: int = 1,
                    l2_hit_cycles: int = 4, tech_nm: int = 90,
                    temperature_k: float = 350.0) -> HierarchyConfig:
    """Hierarchy from the knobs the sweeps turn.

    Both L1 arrays get the full ``l1_kb``. With ``use_delay_model`` the hit
    latencies come from the access-time model at ``clock_ghz``; otherwise the
    fixed ``l1_hit_cycles``/``l2_hit_cycles`` are used.
    """
    g1 = CacheGeometry(l1_kb * 1024, l1_line, l1_assoc, tech_nm=tech_nm,
                       access_type=FAST, temperature_k=temperature_k)
    g2 = CacheGeometry(l2_kb * 1024, l2_line, l2_assoc, tech_nm=tech_nm,
                       access_type=NORMAL_SERIAL, temperature_k=temperature_k)
    if use_delay_model:
        h1 = timing(g1, clock_ghz, overrides).access_cycles
        h2 = timing(g2, clock_ghz, overrides).access_cycles
    else:
        h1, h2 = l1_hit_cycles, l2_hit_cycles
    l1 = CacheConfig(g1, h1)
    return HierarchyConfig(l1, l1, CacheConfig(g2, h2), mem_cycles)


@dataclass
class LevelStats:
    accesses: int = 0
    hits: int = 0
    misses: int = 0
    writebacks: int = 0

    @property
    def miss_rate(self) -> float:
        return self.misses / self.accesses if self.accesses else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["miss_rate"] = self.miss_rate
        return d


@dataclass
class CacheStats:
    l1i: LevelStats = field(default_factory=LevelStats)
    l1d: LevelStats = field(default_factory=LevelStats)
    l2: LevelStats = field(default_factory=LevelStats)

    def to_dict(self) -> dict:
        return {"l1i": self.l1i.to_dict(), "l1d": self.l1d.to_dict(), "l2": self.l2.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CacheStats":
        def lv(x):
            return LevelStats(x["accesses"], x["hits"], x["misses"], x["writebacks"])
        return cls(lv(d["l1i"]), lv(d["l1d"]), lv(d["l2"]))


class Cache:
    """One set-associative LRU level. Sets are OrderedDicts of tag -> dirty,
    least recently used first."""

    def __init__(self, cfg: CacheConfig, stats: LevelStats):
        g = cfg.geometry
        self.hit_cycles = cfg.hit_cycles
        self.ways = g.associativity
        self.nsets = g.sets
        self.line_shift = g.line_bytes.bit_length() - 1
        self.sets = [OrderedDict() for _ in range(self.nsets)]
        self.stats = stats
        self.log: list | None = None

    def touch(self, line: int, is_write: bool):
        """Access a line number. Returns (hit, evicted line or None, evicted dirty)."""
        st = self.stats
        st.accesses += 1
        if self.log is not None:
            self.log.append((line, is_write))
        s = self.sets[line % self.nsets]
        tag = line // self.nsets
        dirty = s.get(tag)
        if dirty is not None:
            st.hits += 1
            s.move_to_end(tag)
            if is_write and not dirty:
                s[tag] = True
            return True, None, False
        st.misses += 1
        victim = None
        vdirty = False
        if len(s) >= self.ways:
            vtag, vdirty = s.popitem(last=False)
            victim = vtag * self.nsets + line % self.nsets
            if vdirty:
                st.writebacks += 1
        s[tag] = is_write
        return False, victim, vdirty


class Hierarchy:
    """Mutable hierarchy state for one simulation run."""

    def __init__(self, cfg: HierarchyConfig, record: bool = False):
        self.cfg = cfg
        self.record = record
        self.reset()

    def reset(self) -> None:
        cfg = self.cfg
        self.stats = CacheStats()
        self.l1i = Cache(cfg.l1i, self.stats.l1i)
        self.l1d = Cache(cfg.l1d, self.stats.l1d)
        self.l2 = Cache(cfg.l2, self.stats.l2)
        if self.record:
            for c in (self.l1i, self.l1d, self.l2):
                c.log = []
        self._perfect = cfg.perfect

    def access(self, addr: int, size: int, is_write: bool, port: str) -> int:
        """Access one line's worth of bytes at ``addr``; returns latency in cycles."""
        l1 = self.l1i if port == IFETCH else self.l1d
        if self._perfect:
            st = l1.stats
            st.accesses += 1
            st.hits += 1
            return l1.hit_cycles
        line = addr >> l1.line_shift
        hit, victim, vdirty = l1.touch(line, is_write)
        if hit:
            return l1.hit_cycles
        l2 = self.l2
        if vdirty:
            # dirty L1 victim written into L2; its latency is hidden
            l2.touch((victim << l1.line_shift) >> l2.line_shift, True)
        hit2, _, _ = l2.touch(addr >> l2.line_shift, False)
        if hit2:
            return l1.hit_cycles + l2.hit_cycles
        return l1.hit_cycles + l2.hit_cycles + self.cfg.mem_cycles

    def access_span(self, addr: int, size: int, is_write: bool, port: str) -> int:
        """Access ``size`` bytes, splitting at L1 line boundaries; pieces overlap in time."""
        l1 = self.l1i if port == IFETCH else self.l1d
        shift = l1.line_shift
        first = addr >> shift
        last = (addr + size - 1) >> shift
        if first == last:
            return self.access(addr, size, is_write, port)
        lat = 0
        for line in range(first, last + 1):
            lat = max(lat, self.access(line << shift, 1, is_write, port))
        return lat

    def logs(self) -> dict:
        return {"l1i": self.l1i.log, "l1d": self.l1d.log, "l2": self.l2.log}


def access(state: Hierarchy, addr: int, size: int, is_write: bool, port: str) -> int:
    return state.access_span(addr, size, is_write, port)


def stats(state: Hierarchy) -> CacheStats:
    return state.stats


def reset(state: Hierarchy) -> None:
    state.reset()
