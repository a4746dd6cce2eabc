"""Closed-form cache access-time and area model.

Access time grows with the square root of the per-bank capacity plus a small
associativity term; serial (normal) access arrays pay a fixed 1.4x factor.
Constants target 90 nm: a 32 KiB 4-way fast L1 comes out near 0.9 ns and a
1 MiB array near 3 ns. A CSV override table replaces the formula for exact
(capacity, assoc, type) matches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

FAST = "fast"
NORMAL_SERIAL = "normal_serial"
ACCESS_TYPES = (FAST, NORMAL_SERIAL)

SERIAL_FACTOR = 1.4


@dataclass(frozen=True)
class TechParams:
    t0_ns: float = 0.35
    alpha_ns: float = 0.0025  # per sqrt(byte)
    beta_ns: float = 0.05  # per log2(ways)
    cell_um2: float = 1.0  # per bit
    overhead: float = 1.35


TECH = {90: TechParams()}


@dataclass(frozen=True)
class CacheGeometry:
    capacity_bytes: int
    line_bytes: int
    associativity: int
    banks: int = 1
    rw_ports: int = 1
    tech_nm: int = 90
    access_type: str = FAST
    temperature_k: float = 350.0  # accepted, no timing effect

    def __post_init__(self):
        for name in ("capacity_bytes", "line_bytes", "associativity", "banks", "rw_ports"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.line_bytes & (self.line_bytes - 1):
            raise ValueError(f"line_bytes must be a power of two, got {self.line_bytes}")
        if self.capacity_bytes % (self.line_bytes * self.associativity):
            raise ValueError("capacity must be divisible by line_bytes * associativity")
        if self.access_type not in ACCESS_TYPES:
            raise ValueError(f"access_type must be one of {ACCESS_TYPES}")
        if self.tech_nm not in TECH:
            raise ValueError(f"no technology parameters for {self.tech_nm} nm")

    @property
    def sets(self) -> int:
        return self.capacity_bytes // (self.line_bytes * self.associativity)


@dataclass(frozen=True)
class CacheTiming:
    access_ns: float
    access_cycles: int
    area_mm2: float


OverrideTable = dict  # (capacity_bytes, assoc, access_type) -> access_ns


def access_time_ns(geom: CacheGeometry, overrides: OverrideTable | None = None) -> float:
    if overrides:
        hit = overrides.get((geom.capacity_bytes, geom.associativity, geom.access_type))
        if hit is not None:
            return hit
    p = TECH[geom.tech_nm]
    t = (p.t0_ns
         + p.alpha_ns * math.sqrt(geom.capacity_bytes / geom.banks)
         + p.beta_ns * math.log2(geom.associativity))
    if geom.access_type == NORMAL_SERIAL:
        t *= SERIAL_FACTOR
    return t


def to_cycles(ns: float, clock_ghz: float) -> int:
    if not ns > 0 or not clock_ghz > 0:
        raise ValueError("access time and clock must be positive")
    # round before ceil so 2.0000000001 from float noise stays 2
    return max(1, math.ceil(round(ns * clock_ghz, 9)))


def area_mm2(geom: CacheGeometry) -> float:
    p = TECH[geom.tech_nm]
    return geom.capacity_bytes * 8 * p.cell_um2 * p.overhead * 1e-6


def timing(geom: CacheGeometry, clock_ghz: float,
           overrides: OverrideTable | None = None) -> CacheTiming:
    ns = access_time_ns(geom, overrides)
    return CacheTiming(ns, to_cycles(ns, clock_ghz), area_mm2(geom))


def load_overrides(path) -> OverrideTable:
    """Read a ``capacity_bytes,assoc,type,access_ns`` CSV."""
    table = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        need = {"capacity_bytes", "assoc", "type", "access_ns"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"override file needs columns {sorted(need)}")
        for row in reader:
            typ = row["type"].strip()
            if typ not in ACCESS_TYPES:
                raise ValueError(f"unknown cache type {typ!r} in override file")
            ns = float(row["access_ns"])
            if not ns > 0:
                raise ValueError("override access_ns must be positive")
            table[(int(row["capacity_bytes"]), int(row["assoc"]), typ)] = ns
    return table
