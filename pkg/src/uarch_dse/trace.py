"""Abstract trace ISA, in-memory traces and the line-oriented text format.

One line per item::

    <sid> A <dst> <s1|-> <s2|->            ALU
    <sid> M <dst> <s1|-> <s2|->            MUL
    <sid> D <dst> <s1|-> <s2|->            DIV
    <sid> L <dst> <sbase|-> <addr> <size>  LOAD
    <sid> S <sdata> <sbase|-> <addr> <size> STORE
    <sid> B <s1|-> <s2|-> <T|N>            BRANCH
    ROI BEGIN / ROI END

Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Iterable, TextIO, Union

NUM_REGS = 32
ADDR_LIMIT = 1 << 64
ACCESS_SIZES = (1, 2, 4, 8)


class Kind(enum.Enum):
    ALU = "A"
    MUL = "M"
    DIV = "D"
    LOAD = "L"
    STORE = "S"
    BRANCH = "B"


_KIND_BY_LETTER = {k.value: k for k in Kind}
_ARITH = (Kind.ALU, Kind.MUL, Kind.DIV)


class Roi(enum.Enum):
    BEGIN = "BEGIN"
    END = "END"


class TraceError(ValueError):
    """Raised for malformed trace text; carries the 1-based line number."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


@dataclass(frozen=True, slots=True)
class InstructionRecord:
    """One dynamic instruction.

    For LOAD, ``src1`` is the address base register. For STORE, ``src1`` is
    the data register and ``src2`` the address base.
    """

    sid: int
    kind: Kind
    dst: int | None = None
    src1: int | None = None
    src2: int | None = None
    addr: int | None = None
    size: int | None = None
    taken: bool | None = None

    @property
    def pc(self) -> int:
        return self.sid * 4

    def violations(self) -> list[str]:
        out = []
        if not isinstance(self.sid, int) or self.sid < 0:
            out.append("sid must be a non-negative integer")
        for name in ("dst", "src1", "src2"):
            r = getattr(self, name)
            if r is not None and not (0 <= r < NUM_REGS):
                out.append(f"{name} r{r} out of range")
        k = self.kind
        is_mem = k in (Kind.LOAD, Kind.STORE)
        if is_mem:
            if self.addr is None or self.size is None:
                out.append(f"{k.name} needs addr and size")
            else:
                if self.size not in ACCESS_SIZES:
                    out.append(f"bad access size {self.size}")
                if self.addr < 0 or self.addr + self.size > ADDR_LIMIT:
                    out.append("address out of 64-bit range")
        elif self.addr is not None or self.size is not None:
            out.append(f"{k.name} must not carry addr/size")
        if k is Kind.BRANCH:
            if self.taken is None:
                out.append("BRANCH needs a taken flag")
        elif self.taken is not None:
            out.append(f"{k.name} must not carry a taken flag")
        if k is Kind.LOAD:
            if self.dst is None:
                out.append("LOAD needs dst")
            if self.src2 is not None:
                out.append("LOAD has a single base source")
        elif k is Kind.STORE:
            if self.dst is not None:
                out.append("STORE must not have dst")
            if self.src1 is None:
                out.append("STORE needs a data register")
        elif k is Kind.BRANCH:
            if self.dst is not None:
                out.append("BRANCH must not have dst")
        else:
            if self.dst is None:
                out.append(f"{k.name} needs dst")
            if self.src1 is None and self.src2 is None:
                out.append(f"{k.name} needs at least one source")
        return out


TraceItem = Union[InstructionRecord, Roi]


@dataclass(frozen=True)
class Trace:
    name: str = ""
    items: tuple[TraceItem, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    @property
    def records(self) -> list[InstructionRecord]:
        return [it for it in self.items if isinstance(it, InstructionRecord)]

    def __len__(self):
        return sum(1 for it in self.items if isinstance(it, InstructionRecord))

    def roi_bounds(self) -> tuple[int, int]:
        """Return (first, stop) record indices of the ROI.

        A trace without markers is treated as one ROI over every record.
        """
        n = 0
        begin = end = None
        for it in self.items:
            if it is Roi.BEGIN:
                begin = n
            elif it is Roi.END:
                end = n
            else:
                n += 1
        if begin is None:
            return 0, n
        return begin, end


def _roi_problems(items: Iterable[TraceItem]) -> list[str]:
    state = 0  # 0 before, 1 open, 2 closed
    for it in items:
        if it is Roi.BEGIN:
            if state != 0:
                return ["unbalanced ROI: extra ROI BEGIN"]
            state = 1
        elif it is Roi.END:
            if state != 1:
                return ["unbalanced ROI: ROI END without BEGIN"]
            state = 2
    if state == 1:
        return ["unbalanced ROI: ROI BEGIN never closed"]
    return []


def validate_trace(trace: Trace) -> list[str]:
    """List every invariant violation; empty means the trace is valid."""
    problems = []
    for i, it in enumerate(trace.items):
        if isinstance(it, InstructionRecord):
            problems.extend(f"item {i}: {v}" for v in it.violations())
        elif not isinstance(it, Roi):
            problems.append(f"item {i}: not a record or ROI marker")
    problems.extend(_roi_problems(trace.items))
    return problems


def _reg(tok: str) -> int | None:
    if tok == "-":
        return None
    if len(tok) < 2 or tok[0] != "r" or not tok[1:].isdigit():
        raise ValueError(f"bad register {tok!r}")
    r = int(tok[1:])
    if r >= NUM_REGS:
        raise ValueError(f"register {tok} out of range")
    return r


def _req_reg(tok: str) -> int:
    r = _reg(tok)
    if r is None:
        raise ValueError("register operand required")
    return r


def _addr(tok: str) -> int:
    if not tok.startswith("0x") or len(tok) == 2:
        raise ValueError(f"malformed address {tok!r}")
    try:
        return int(tok[2:], 16)
    except ValueError:
        raise ValueError(f"malformed address {tok!r}") from None


def _size(tok: str) -> int:
    if not tok.isdigit():
        raise ValueError(f"bad size {tok!r}")
    return int(tok)


def parse_line(line: str) -> TraceItem | None:
    """Parse one line; returns None for blank and comment lines."""
    s = line.strip()
    if not s or s.startswith("#"):
        return None
    toks = s.split()
    if toks[0] == "ROI":
        if len(toks) == 2 and toks[1] in ("BEGIN", "END"):
            return Roi(toks[1])
        raise ValueError("bad ROI marker")
    if not toks[0].isdigit():
        raise ValueError(f"bad sid {toks[0]!r}")
    sid = int(toks[0])
    if len(toks) < 2 or toks[1] not in _KIND_BY_LETTER:
        raise ValueError("unknown opcode")
    kind = _KIND_BY_LETTER[toks[1]]
    ops = toks[2:]
    if kind in _ARITH:
        if len(ops) != 3:
            raise ValueError(f"{kind.name} takes 3 operands")
        rec = InstructionRecord(sid, kind, _req_reg(ops[0]), _reg(ops[1]), _reg(ops[2]))
    elif kind is Kind.LOAD:
        if len(ops) != 4:
            raise ValueError("LOAD takes 4 operands")
        rec = InstructionRecord(sid, kind, dst=_req_reg(ops[0]), src1=_reg(ops[1]),
                                addr=_addr(ops[2]), size=_size(ops[3]))
    elif kind is Kind.STORE:
        if len(ops) != 4:
            raise ValueError("STORE takes 4 operands")
        rec = InstructionRecord(sid, kind, src1=_req_reg(ops[0]), src2=_reg(ops[1]),
                                addr=_addr(ops[2]), size=_size(ops[3]))
    else:
        if len(ops) != 3 or ops[2] not in ("T", "N"):
            raise ValueError("BRANCH takes 2 registers and T|N")
        rec = InstructionRecord(sid, kind, src1=_reg(ops[0]), src2=_reg(ops[1]),
                                taken=ops[2] == "T")
    bad = rec.violations()
    if bad:
        raise ValueError(bad[0])
    return rec


def parse_trace(stream: TextIO | str, name: str = "") -> Trace:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    items: list[TraceItem] = []
    state = 0
    for lineno, line in enumerate(stream, 1):
        try:
            it = parse_line(line)
        except ValueError as e:
            raise TraceError(lineno, str(e)) from None
        if it is None:
            continue
        if it is Roi.BEGIN:
            if state != 0:
                raise TraceError(lineno, "unbalanced ROI: extra ROI BEGIN")
            state = 1
        elif it is Roi.END:
            if state != 1:
                raise TraceError(lineno, "unbalanced ROI: ROI END without BEGIN")
            state = 2
        items.append(it)
    if state == 1:
        raise TraceError(lineno, "unbalanced ROI: ROI BEGIN never closed")
    return Trace(name, tuple(items))


def _r(r: int | None) -> str:
    return "-" if r is None else f"r{r}"


def format_item(it: TraceItem) -> str:
    if isinstance(it, Roi):
        return f"ROI {it.value}"
    k = it.kind
    if k in _ARITH:
        return f"{it.sid} {k.value} {_r(it.dst)} {_r(it.src1)} {_r(it.src2)}"
    if k is Kind.LOAD:
        return f"{it.sid} L {_r(it.dst)} {_r(it.src1)} {it.addr:#x} {it.size}"
    if k is Kind.STORE:
        return f"{it.sid} S {_r(it.src1)} {_r(it.src2)} {it.addr:#x} {it.size}"
    return f"{it.sid} B {_r(it.src1)} {_r(it.src2)} {'T' if it.taken else 'N'}"


def write_trace(trace: Trace, stream: TextIO | None = None) -> str | None:
    """Serialize ``trace``. Returns the text when no stream is given."""
    text = "".join(format_item(it) + "\n" for it in trace.items)
    if stream is None:
        return text
    stream.write(text)
    return None


def load_trace(path, name: str | None = None) -> Trace:
    with open(path) as f:
        return parse_trace(f, name=name if name is not None else str(path))


def save_trace(trace: Trace, path) -> None:
    with open(path, "w") as f:
        write_trace(trace, f)
