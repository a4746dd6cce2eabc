"""Trace-driven out-of-order superscalar timing model.

Six stages: fetch, decode, dispatch (rename + ROB/IQ/LSQ allocation), issue
(execute folded in), writeback, commit. Stages are evaluated back to front
each cycle, so a slot freed by a later stage is reusable by an earlier stage
in the same cycle and every instruction spends at least one cycle per stage:
a lone ALU op takes 6 cycles with 1-cycle caches.

Trace-driven consequences: no wrong-path instructions, a misprediction
blocks fetch until the branch resolves plus a fixed refill penalty, and load
addresses are known up front (a load still waits for its base register).
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import asdict, dataclass, field, fields, replace

from .cachesim import DATA, IFETCH, CacheStats, Hierarchy, HierarchyConfig
from .trace import NUM_REGS, Kind, Trace, validate_trace

STALL_CAUSES = ("rob_full", "iq_full", "lsq_full", "no_phys_reg", "fetch_stall")

_ALU, _MUL, _DIV, _LOAD, _STORE, _BRANCH = range(6)
_KCODE = {Kind.ALU: _ALU, Kind.MUL: _MUL, Kind.DIV: _DIV, Kind.LOAD: _LOAD,
          Kind.STORE: _STORE, Kind.BRANCH: _BRANCH}
_INF = 1 << 62


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoreConfig:
    fetch_width: int = 4
    decode_width: int = 4
    dispatch_width: int = 4
    issue_width: int = 4
    commit_width: int = 4
    rob_size: int = 64
    iq_size: int = 20
    lsq_size: int = 12
    phys_regs: int = 80
    predictor_entries: int = 512
    predictor: str = "bimodal"  # or "perfect"
    mispredict_penalty_cycles: int = 4
    alu_latency: int = 1
    mul_latency: int = 3
    div_latency: int = 12
    clock_ghz: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "predictor":
                if v not in ("bimodal", "perfect"):
                    raise ValueError(f"unknown predictor {v!r}")
            elif f.name == "clock_ghz":
                if not v > 0:
                    raise ValueError("clock_ghz must be positive")
            elif f.name == "mispredict_penalty_cycles":
                if not isinstance(v, int) or v < 0:
                    raise ValueError("mispredict_penalty_cycles must be >= 0")
            elif not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{f.name} must be a positive integer, got {v!r}")
        if self.phys_regs < NUM_REGS + 1:
            raise ValueError(f"phys_regs must be >= {NUM_REGS + 1}")
        e = self.predictor_entries
        if e & (e - 1):
            raise ValueError("predictor_entries must be a power of two")

    def with_widths(self, w: int) -> "CoreConfig":
        return replace(self, fetch_width=w, decode_width=w, dispatch_width=w,
                       issue_width=w, commit_width=w)

    @property
    def min_width(self) -> int:
        return min(self.fetch_width, self.decode_width, self.dispatch_width,
                   self.issue_width, self.commit_width)


@dataclass
class Committed:
    total: int = 0
    roi: int = 0


@dataclass
class BranchStats:
    branches: int = 0
    mispredicts: int = 0


@dataclass
class SimResult:
    total_cycles: int
    roi_cycles: int
    committed_instructions: Committed
    ipc_roi: float
    stall_cycles: dict
    branch: BranchStats
    cache: CacheStats

    def to_dict(self) -> dict:
        return {
            "total_cycles": self.total_cycles,
            "roi_cycles": self.roi_cycles,
            "committed_instructions": asdict(self.committed_instructions),
            "ipc_roi": self.ipc_roi,
            "stall_cycles": dict(self.stall_cycles),
            "branch": asdict(self.branch),
            "cache": self.cache.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimResult":
        return cls(d["total_cycles"], d["roi_cycles"], Committed(**d["committed_instructions"]),
                   d["ipc_roi"], dict(d["stall_cycles"]), BranchStats(**d["branch"]),
                   CacheStats.from_dict(d["cache"]))


@dataclass
class _Flat:
    kind: list = field(default_factory=list)
    dst: list = field(default_factory=list)
    s1: list = field(default_factory=list)
    s2: list = field(default_factory=list)
    addr: list = field(default_factory=list)
    size: list = field(default_factory=list)
    taken: list = field(default_factory=list)
    sid: list = field(default_factory=list)


def _flatten(trace: Trace) -> _Flat:
    f = _Flat()
    for r in trace.records:
        f.kind.append(_KCODE[r.kind])
        f.dst.append(-1 if r.dst is None else r.dst)
        f.s1.append(-1 if r.src1 is None else r.src1)
        f.s2.append(-1 if r.src2 is None else r.src2)
        f.addr.append(r.addr or 0)
        f.size.append(r.size or 0)
        f.taken.append(bool(r.taken))
        f.sid.append(r.sid)
    return f


def simulate(trace: Trace, core: CoreConfig, hier: HierarchyConfig, *,
             debug: bool = False, skip_idle: bool = True,
             commit_log: list | None = None) -> SimResult:
    """Run ``trace`` to completion and return cycle counts and statistics.

    ``debug`` checks structural occupancy bounds every cycle. ``commit_log``,
    when given, receives the committed record indices in order.
    """
    problems = validate_trace(trace)
    if problems:
        raise SimulationError(f"invalid trace: {problems[0]}")
    if not isinstance(core, CoreConfig) or not isinstance(hier, HierarchyConfig):
        raise TypeError("simulate needs a CoreConfig and a HierarchyConfig")

    fl = _flatten(trace)
    n = len(fl.kind)
    roi_b, roi_e = trace.roi_bounds()
    mem = Hierarchy(hier)
    access = mem.access_span

    kind, dst, lsrc1, lsrc2 = fl.kind, fl.dst, fl.s1, fl.s2
    addr, size, taken, sid = fl.addr, fl.size, fl.taken, fl.sid

    lat_of = [core.alu_latency, core.mul_latency, core.div_latency, 0,
              core.alu_latency, core.alu_latency]
    fw, dw, pw, iw, cw = (core.fetch_width, core.decode_width, core.dispatch_width,
                          core.issue_width, core.commit_width)
    rob_size, iq_size, lsq_size = core.rob_size, core.iq_size, core.lsq_size
    penalty = core.mispredict_penalty_cycles
    perfect_bp = core.predictor == "perfect"
    pmask = core.predictor_entries - 1
    counters = [1] * core.predictor_entries  # weakly not-taken

    P = core.phys_regs
    always = P  # sentinel register, always ready
    preg_ready = [0] * (P + 1)
    rmap = list(range(NUM_REGS))
    free = deque(range(NUM_REGS, P))

    fetch_ready = [0] * n
    dec_cycle = [0] * n
    disp_cycle = [0] * n
    issue_cycle = [0] * n
    done = [0] * n
    ps1 = [always] * n
    ps2 = [always] * n
    pdst = [-1] * n
    pold = [-1] * n
    mispred = [False] * n

    fetch_q: deque = deque()
    decode_q: deque = deque()
    rob: deque = deque()
    iq: list = []
    store_q: deque = deque()
    lsq_count = 0
    pending_bp: deque = deque()  # (resolve cycle, counter index, taken)
    load_done: list = []  # heap of (writeback cycle, index): loads still holding an LSQ entry

    fetch_ptr = 0
    fetch_resume = 0
    wait_branch = -1
    committed = 0
    roi_open = roi_close = 0
    n_branches = n_mispred = 0
    stalls = dict.fromkeys(STALL_CAUSES, 0)

    now = 0
    while committed < n:
        now += 1
        active = False

        while pending_bp and pending_bp[0][0] <= now:
            _, ci, tk = pending_bp.popleft()
            c = counters[ci]
            counters[ci] = min(c + 1, 3) if tk else max(c - 1, 0)

        while load_done and load_done[0][0] <= now:
            heapq.heappop(load_done)
            lsq_count -= 1

        # commit
        c = 0
        while rob and c < cw:
            i = rob[0]
            if not issue_cycle[i] or done[i] >= now:
                break
            rob.popleft()
            c += 1
            k = kind[i]
            if k == _STORE:
                access(addr[i], size[i], True, DATA)
                store_q.popleft()
                lsq_count -= 1
            if pold[i] >= 0:
                free.append(pold[i])
            committed += 1
            if committed == roi_b:
                roi_open = now
            if committed == roi_e:
                roi_close = now
            if commit_log is not None:
                commit_log.append(i)
        if c:
            active = True

        # issue (execute + writeback scheduling)
        if iq:
            issued = 0
            keep = []
            for pos, i in enumerate(iq):
                if issued >= iw:
                    keep.extend(iq[pos:])
                    break
                if disp_cycle[i] >= now or preg_ready[ps1[i]] > now or preg_ready[ps2[i]] > now:
                    keep.append(i)
                    continue
                k = kind[i]
                if k == _LOAD:
                    a = addr[i]
                    e = a + size[i]
                    blocked = False
                    youngest = -1
                    for s in store_q:
                        if s > i:
                            break
                        si = issue_cycle[s]
                        if not si or si >= now:
                            blocked = True
                            break
                        sa = addr[s]
                        if sa < e and a < sa + size[s]:
                            youngest = s
                    if blocked:
                        keep.append(i)
                        continue
                    if youngest >= 0:
                        if addr[youngest] != a or size[youngest] != size[i]:
                            keep.append(i)
                            continue
                        lat = 1
                    else:
                        lat = access(a, size[i], False, DATA)
                    heapq.heappush(load_done, (now + lat, i))
                else:
                    lat = lat_of[k]
                issue_cycle[i] = now
                d = now + lat
                done[i] = d
                if pdst[i] >= 0:
                    preg_ready[pdst[i]] = d
                if k == _BRANCH:
                    if mispred[i]:
                        fetch_resume = max(fetch_resume, d + penalty + 1)
                        wait_branch = -1
                    if not perfect_bp:
                        pending_bp.append((d, sid[i] & pmask, taken[i]))
                issued += 1
            if issued:
                iq = keep
                active = True

        # dispatch (rename + allocate)
        cause = None
        nd = 0
        while decode_q and nd < pw:
            i = decode_q[0]
            if dec_cycle[i] >= now:
                break
            k = kind[i]
            is_mem = k == _LOAD or k == _STORE
            if len(rob) >= rob_size:
                cause = "rob_full"
            elif len(iq) >= iq_size:
                cause = "iq_full"
            elif is_mem and lsq_count >= lsq_size:
                cause = "lsq_full"
            elif dst[i] >= 0 and not free:
                cause = "no_phys_reg"
            if cause:
                break
            decode_q.popleft()
            r = lsrc1[i]
            if r >= 0:
                ps1[i] = rmap[r]
            r = lsrc2[i]
            if r >= 0:
                ps2[i] = rmap[r]
            r = dst[i]
            if r >= 0:
                p = free.popleft()
                pold[i] = rmap[r]
                rmap[r] = p
                pdst[i] = p
                preg_ready[p] = _INF
            rob.append(i)
            iq.append(i)
            if is_mem:
                lsq_count += 1
                if k == _STORE:
                    store_q.append(i)
            disp_cycle[i] = now
            nd += 1
        if nd:
            active = True

        # decode
        nd = 0
        while fetch_q and nd < dw and len(decode_q) < dw:
            i = fetch_q[0]
            if fetch_ready[i] > now:
                break
            fetch_q.popleft()
            decode_q.append(i)
            dec_cycle[i] = now
            nd += 1
        if nd:
            active = True

        # fetch
        fetch_stalled = False
        if fetch_ptr < n:
            if wait_branch >= 0 or now < fetch_resume:
                fetch_stalled = True
            elif len(fetch_q) < fw:
                g = fw - len(fetch_q)
                h = access(sid[fetch_ptr] * 4, 4, False, IFETCH)
                ready = now + h
                fetch_resume = ready
                while g and fetch_ptr < n:
                    i = fetch_ptr
                    fetch_ptr += 1
                    g -= 1
                    fetch_ready[i] = ready
                    fetch_q.append(i)
                    if kind[i] == _BRANCH:
                        n_branches += 1
                        tk = taken[i]
                        pred = tk if perfect_bp else counters[sid[i] & pmask] >= 2
                        if pred != tk:
                            mispred[i] = True
                            n_mispred += 1
                            wait_branch = i
                            break
                        if pred:
                            break
                active = True

        step_cause = cause or ("fetch_stall" if fetch_stalled else None)
        if step_cause:
            stalls[step_cause] += 1

        if debug:
            _check_bounds(core, rob, iq, lsq_count, P - len(free), now)

        if not active and committed < n and skip_idle:
            nxt = _next_event(now, rob, issue_cycle, done, fetch_q, fetch_ready,
                              iq, disp_cycle, preg_ready, ps1, ps2,
                              fetch_ptr < n and wait_branch < 0, fetch_resume)
            if load_done and now < load_done[0][0] < nxt:
                nxt = load_done[0][0]
            if nxt >= _INF:
                raise SimulationError(f"pipeline deadlock at cycle {now}")
            if step_cause:
                stalls[step_cause] += nxt - now - 1
            now = nxt - 1

    if roi_e <= roi_b:
        roi_cycles = 0
    else:
        roi_cycles = roi_close - roi_open
    roi_n = max(0, roi_e - roi_b)
    return SimResult(
        total_cycles=now,
        roi_cycles=roi_cycles,
        committed_instructions=Committed(committed, roi_n),
        ipc_roi=roi_n / roi_cycles if roi_cycles else 0.0,
        stall_cycles=stalls,
        branch=BranchStats(n_branches, n_mispred),
        cache=mem.stats,
    )


def _next_event(now, rob, issue_cycle, done, fetch_q, fetch_ready, iq, disp_cycle,
                preg_ready, ps1, ps2, can_fetch, fetch_resume) -> int:
    """Earliest future cycle in which some stage can make progress."""
    nxt = _INF
    if rob:
        i = rob[0]
        if issue_cycle[i] and done[i] + 1 > now:
            nxt = done[i] + 1
    if fetch_q and fetch_ready[fetch_q[0]] > now:
        nxt = min(nxt, fetch_ready[fetch_q[0]])
    if can_fetch and fetch_resume > now:
        nxt = min(nxt, fetch_resume)
    for i in iq:
        t = max(disp_cycle[i] + 1, preg_ready[ps1[i]], preg_ready[ps2[i]])
        if now < t < nxt:
            nxt = t
    return nxt


def _check_bounds(core, rob, iq, lsq_count, allocated, now):
    if len(rob) > core.rob_size:
        raise AssertionError(f"cycle {now}: ROB occupancy {len(rob)} > {core.rob_size}")
    if len(iq) > core.iq_size:
        raise AssertionError(f"cycle {now}: IQ occupancy {len(iq)} > {core.iq_size}")
    if lsq_count > core.lsq_size:
        raise AssertionError(f"cycle {now}: LSQ occupancy {lsq_count} > {core.lsq_size}")
    if allocated > core.phys_regs:
        raise AssertionError(f"cycle {now}: {allocated} physical registers in use")


def degenerate_core(trace: Trace) -> CoreConfig:
    """Width-1 core with structures too large to ever fill and a perfect predictor."""
    n = len(trace)
    return CoreConfig(1, 1, 1, 1, 1, rob_size=n + 1, iq_size=n + 1, lsq_size=n + 1,
                      phys_regs=NUM_REGS + n + 1, predictor="perfect")


def analytic_cycles(trace: Trace, core: CoreConfig, hier: HierarchyConfig) -> int:
    """Total cycles for a width-1 machine with unbounded structures, a perfect
    cache and a perfect predictor, computed without the pipeline model.

    Record i (0-based) is fetched in cycle ``1 + i*hI`` where ``hI`` is the
    L1I hit latency, so it is earliest-issuable in ``1 + (i+1)*hI + 2``.
    Issue picks, each cycle, the oldest record whose operands are ready
    (producer issue + latency <= cycle) and, for loads, whose older stores
    have all issued in an earlier cycle; a load overlapping the youngest such
    store takes 1 cycle on an exact match and otherwise waits for that store
    to commit. Commit is in order, one per cycle, no earlier than the cycle
    after completion: ``C_i = max(C_{i-1} + 1, issue_i + lat_i + 1)``.
    The answer is the last commit cycle.
    """
    if core.min_width != 1 or max(core.fetch_width, core.decode_width, core.dispatch_width,
                                  core.issue_width, core.commit_width) != 1:
        raise ValueError("analytic_cycles needs every width equal to 1")
    recs = trace.records
    n = len(recs)
    if min(core.rob_size, core.iq_size, core.lsq_size) < n or core.phys_regs < NUM_REGS + n:
        raise ValueError("analytic_cycles needs structures at least as large as the trace")
    if not hier.perfect or core.predictor != "perfect":
        raise ValueError("analytic_cycles needs a perfect cache and a perfect predictor")
    if n == 0:
        return 0
    h_i = hier.l1i.hit_cycles
    h_d = hier.l1d.hit_cycles
    lat_fixed = {Kind.ALU: core.alu_latency, Kind.MUL: core.mul_latency,
                 Kind.DIV: core.div_latency, Kind.STORE: core.alu_latency,
                 Kind.BRANCH: core.alu_latency}

    earliest = [1 + (i + 1) * h_i + 2 for i in range(n)]
    # producer record for each source, -1 if the value predates the trace
    last_writer = [-1] * NUM_REGS
    producers = []
    for i, r in enumerate(recs):
        srcs = [x for x in (r.src1, r.src2) if x is not None]
        producers.append([last_writer[x] for x in srcs])
        if r.dst is not None:
            last_writer[r.dst] = i

    issue = [None] * n
    lat = [0] * n
    commit = [None] * n
    commit_known = 0  # commit[] filled for records < commit_known

    def advance_commits():
        nonlocal commit_known
        while commit_known < n and issue[commit_known] is not None:
            j = commit_known
            prev = commit[j - 1] if j else 0
            commit[j] = max(prev + 1, issue[j] + lat[j] + 1)
            commit_known += 1

    pending = list(range(n))
    t = earliest[0]
    while pending:
        chosen = None
        for idx, i in enumerate(pending):
            if earliest[i] > t:
                break
            if any(p >= 0 and (issue[p] is None or issue[p] + lat[p] > t) for p in producers[i]):
                continue
            r = recs[i]
            if r.kind is Kind.LOAD:
                ok = True
                youngest = None
                for j in range(i - 1, -1, -1):
                    s = recs[j]
                    if s.kind is not Kind.STORE:
                        continue
                    if commit[j] is not None and commit[j] <= t:
                        break  # gone from the LSQ, as is every older store
                    if issue[j] is None or issue[j] >= t:
                        ok = False
                        break
                    if youngest is None and s.addr < r.addr + r.size and r.addr < s.addr + s.size:
                        youngest = j
                if not ok:
                    continue
                if youngest is not None:
                    s = recs[youngest]
                    if s.addr != r.addr or s.size != r.size:
                        continue
                    lat_i = 1
                else:
                    lat_i = h_d
            else:
                lat_i = lat_fixed[r.kind]
            chosen = (idx, i, lat_i)
            break
        if chosen is not None:
            idx, i, lat_i = chosen
            issue[i] = t
            lat[i] = lat_i
            del pending[idx]
            advance_commits()
        t += 1
    advance_commits()
    return commit[n - 1]
