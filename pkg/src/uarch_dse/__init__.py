"""Trace-driven out-of-order core model and design-space exploration."""

from .cachesim import HierarchyConfig, build_hierarchy
from .core import CoreConfig, SimResult, simulate
from .kernels import KernelSpec, build_kernel, gen_kernel, list_kernels
from .trace import InstructionRecord, Kind, Roi, Trace, load_trace, parse_trace, save_trace

__all__ = [
    "CoreConfig", "HierarchyConfig", "InstructionRecord", "KernelSpec", "Kind", "Roi",
    "SimResult", "Trace", "build_hierarchy", "build_kernel", "gen_kernel", "list_kernels",
    "load_trace", "parse_trace", "save_trace", "simulate",
]

__version__ = "0.1.0"
