"""Desk-scale workload kernels that emit their own dynamic traces.

Each kernel runs its algorithm in Python and, alongside, emits the
instructions a straightforward compiled version would commit: a LOAD per read
of modeled memory, a STORE per write, an ALU/MUL/DIV per arithmetic step and a
fused compare-and-branch per conditional or loop back-edge. Registers are
handed out round-robin over r1-r31; long-lived values are pinned so nothing
still needed gets overwritten (reading a clobbered value raises).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .trace import Kind, InstructionRecord, Roi, Trace

DATA_BASE = 0x1000_0000
REGION_GAP = 0x140  # keeps neighbouring structures off identical set indices
M32 = 0xFFFF_FFFF


class KernelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# emission machinery


class Val:
    __slots__ = ("reg", "gen")

    def __init__(self, reg: int, gen: int):
        self.reg = reg
        self.gen = gen


@dataclass(frozen=True)
class Region:
    name: str
    base: int
    size: int

    @property
    def end(self) -> int:
        return self.base + self.size

    def __contains__(self, addr: int) -> bool:
        return self.base <= addr < self.end


class Emitter:
    def __init__(self, name: str):
        self.name = name
        self.items: list = []
        self.sids: dict[str, int] = {}
        self.regions: dict[str, Region] = {}
        self._brk = DATA_BASE
        self._gen = [0] * 32
        self._pinned = [0] * 32
        self._rr = 0

    def region(self, name: str, nbytes: int) -> int:
        base = self._brk
        self.regions[name] = Region(name, base, nbytes)
        self._brk = (base + nbytes + 63) // 64 * 64 + REGION_GAP
        return base

    def _sid(self, label: str) -> int:
        sid = self.sids.get(label)
        if sid is None:
            sid = self.sids[label] = len(self.sids)
        return sid

    def _new(self) -> Val:
        for _ in range(31):
            self._rr = self._rr % 31 + 1
            if not self._pinned[self._rr]:
                r = self._rr
                self._gen[r] += 1
                return Val(r, self._gen[r])
        raise KernelError("all registers pinned")

    def _src(self, v: Val | None) -> int | None:
        if v is None:
            return None
        if self._gen[v.reg] != v.gen:
            raise KernelError(f"r{v.reg} was reallocated while its value was live")
        return v.reg

    def pin(self, *vals: Val) -> None:
        for v in vals:
            self._src(v)
            self._pinned[v.reg] += 1

    def unpin(self, *vals: Val) -> None:
        for v in vals:
            self._pinned[v.reg] -= 1

    def _arith(self, kind, label, a, b) -> Val:
        s1, s2 = self._src(a), self._src(b)
        d = self._new()
        self.items.append(InstructionRecord(self._sid(label), kind, d.reg, s1, s2))
        return d

    def alu(self, label: str, a: Val, b: Val | None = None) -> Val:
        return self._arith(Kind.ALU, label, a, b)

    def mul(self, label: str, a: Val, b: Val | None = None) -> Val:
        return self._arith(Kind.MUL, label, a, b)

    def div(self, label: str, a: Val, b: Val | None = None) -> Val:
        return self._arith(Kind.DIV, label, a, b)

    def load(self, label: str, base: Val | None, addr: int, size: int) -> Val:
        s = self._src(base)
        d = self._new()
        self.items.append(InstructionRecord(self._sid(label), Kind.LOAD, dst=d.reg, src1=s,
                                            addr=addr, size=size))
        return d

    def store(self, label: str, data: Val, base: Val | None, addr: int, size: int) -> None:
        self.items.append(InstructionRecord(self._sid(label), Kind.STORE, src1=self._src(data),
                                            src2=self._src(base), addr=addr, size=size))

    def branch(self, label: str, taken: bool, a: Val | None = None, b: Val | None = None) -> None:
        self.items.append(InstructionRecord(self._sid(label), Kind.BRANCH, src1=self._src(a),
                                            src2=self._src(b), taken=bool(taken)))

    def roi_begin(self) -> None:
        self.items.append(Roi.BEGIN)

    def roi_end(self) -> None:
        self.items.append(Roi.END)

    def seed_value(self, label: str) -> Val:
        """Materialize an initial register value (setup code, before the ROI)."""
        d = self._new()
        self.items.append(InstructionRecord(self._sid(label), Kind.ALU, d.reg, d.reg, None))
        return d


@dataclass
class KernelRun:
    trace: Trace
    regions: dict
    outputs: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# specs


_SCHEMA = {
    "dijkstra": {"n_nodes": (32, 2, 256), "n_sources": (2, 1, 256)},
    "string_search": {"haystack": (4096, 2, 1 << 16), "needle_len": (8, 1, 64),
                      "n_needles": (16, 1, 256)},
    "susan_corners": {"width": (64, 3, 512), "height": (64, 3, 512)},
    "flow_class": {"n_packets": (512, 1, 1 << 16), "n_buckets": (256, 1, 1 << 16)},
    "ipv4_trie": {"n_routes": (256, 1, 1 << 16), "n_lookups": (1024, 1, 1 << 16),
                  "stride": (4, 1, 8)},
    "ipsec_aes": {"n_blocks": (64, 1, 4096)},
}


@dataclass(frozen=True)
class KernelSpec:
    kernel: str
    params: tuple = ()  # sorted (name, value) pairs, defaults filled in
    seed: int = 1

    @classmethod
    def make(cls, kernel: str, params: dict | None = None, seed: int = 1) -> "KernelSpec":
        if kernel not in _SCHEMA:
            raise KernelError(f"unknown kernel {kernel!r}")
        schema = _SCHEMA[kernel]
        params = dict(params or {})
        unknown = set(params) - set(schema)
        if unknown:
            raise KernelError(f"{kernel} has no parameter(s) {sorted(unknown)}")
        full = {k: params.get(k, d) for k, (d, _, _) in schema.items()}
        spec = cls(kernel, tuple(sorted(full.items())), seed)
        spec.check()
        return spec

    @property
    def p(self) -> dict:
        return dict(self.params)

    def check(self) -> None:
        if self.kernel not in _SCHEMA:
            raise KernelError(f"unknown kernel {self.kernel!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 1 << 64:
            raise KernelError("seed must be a 64-bit unsigned integer")
        schema = _SCHEMA[self.kernel]
        p = self.p
        if set(p) != set(schema):
            raise KernelError(f"{self.kernel} needs parameters {sorted(schema)}")
        for k, (_, lo, hi) in schema.items():
            v = p[k]
            if not isinstance(v, int) or isinstance(v, bool) or not lo <= v <= hi:
                raise KernelError(f"{self.kernel}.{k}={v!r} outside supported range [{lo}, {hi}]")
        if self.kernel == "dijkstra" and p["n_sources"] > p["n_nodes"]:
            raise KernelError("dijkstra.n_sources cannot exceed n_nodes")
        if self.kernel == "string_search" and p["needle_len"] > p["haystack"]:
            raise KernelError("string_search.needle_len cannot exceed haystack")
        if self.kernel == "ipv4_trie" and 32 % p["stride"]:
            raise KernelError("ipv4_trie.stride must divide 32")

    @property
    def label(self) -> str:
        return self.kernel


def list_kernels() -> list[tuple[str, dict, dict]]:
    """(name, {param: (min, max)}, default params) for every kernel."""
    out = []
    for name, schema in _SCHEMA.items():
        out.append((name, {k: (lo, hi) for k, (_, lo, hi) in schema.items()},
                    {k: d for k, (d, _, _) in schema.items()}))
    return out


def gen_kernel(spec: KernelSpec) -> Trace:
    return build_kernel(spec).trace


def build_kernel(spec: KernelSpec) -> KernelRun:
    spec.check()
    rng = random.Random(spec.seed)
    e = Emitter(spec.kernel)
    outputs = _BUILDERS[spec.kernel](e, rng, **spec.p)
    return KernelRun(Trace(spec.kernel, tuple(e.items)), dict(e.regions), outputs or {})


# ---------------------------------------------------------------------------
# dijkstra: adjacency-matrix Dijkstra from several sources


def _dijkstra(e: Emitter, rng: random.Random, n_nodes: int, n_sources: int) -> dict:
    n = n_nodes
    INF = 0x3FFF_FFFF
    adj = [[0 if u == v or rng.random() < 0.25 else rng.randint(1, 100) for v in range(n)]
           for u in range(n)]
    A = e.region("adj", n * n * 4)
    D = e.region("dist", n * 4)
    V = e.region("visited", n * 4)
    PR = e.region("prev", n * 4)

    zero = e.seed_value("setup.zero")
    e.pin(zero)
    inf = e.alu("setup.inf", zero)
    one = e.alu("setup.one", zero)
    lim = e.alu("setup.limit", zero)
    e.pin(inf, one, lim)
    e.roi_begin()

    sources = [k * n // n_sources for k in range(n_sources)]
    all_dist = []
    for s in sources:
        dist = [INF] * n
        visited = [False] * n
        pv = e.alu("init.ptr", zero)
        for v in range(n):
            e.store("init.dist", inf, pv, D + 4 * v, 4)
            e.store("init.vis", zero, pv, V + 4 * v, 4)
            pv = e.alu("init.bump", pv)
            e.branch("init.loop", v < n - 1, pv, lim)
        sp = e.alu("src.ptr", zero)
        e.store("src.dist", zero, sp, D + 4 * s, 4)
        dist[s] = 0

        for it in range(n):
            mn = e.alu("sel.minit", inf)
            ix = e.alu("sel.iinit", zero)
            e.pin(mn, ix)
            best, best_v = INF, -1
            pv = e.alu("sel.ptr", zero)
            for v in range(n):
                vis = e.load("sel.ldvis", pv, V + 4 * v, 4)
                e.branch("sel.visited", visited[v], vis, zero)
                if not visited[v]:
                    dv = e.load("sel.lddist", pv, D + 4 * v, 4)
                    better = dist[v] < best
                    e.branch("sel.cmp", better, dv, mn)
                    if better:
                        best, best_v = dist[v], v
                        nmn = e.alu("sel.setmin", dv)
                        nix = e.alu("sel.setidx", pv)
                        e.unpin(mn, ix)
                        mn, ix = nmn, nix
                        e.pin(mn, ix)
                pv = e.alu("sel.bump", pv)
                e.branch("sel.loop", v < n - 1, pv, lim)
            e.branch("sel.done", best == INF, mn, inf)
            if best == INF:
                e.unpin(mn, ix)
                break
            u = best_v
            visited[u] = True
            e.store("mark.vis", one, ix, V + 4 * u, 4)
            du = e.load("relax.lddu", ix, D + 4 * u, 4)
            rp = e.mul("relax.rowoff", ix, lim)
            e.pin(du)
            e.unpin(mn)
            pv = e.alu("relax.ptr", zero)
            for v in range(n):
                w = adj[u][v]
                wv = e.load("relax.ldw", rp, A + 4 * (u * n + v), 4)
                e.branch("relax.noedge", w == 0, wv, zero)
                if w:
                    dv = e.load("relax.lddv", pv, D + 4 * v, 4)
                    nd = e.alu("relax.add", du, wv)
                    shorter = dist[u] + w < dist[v]
                    e.branch("relax.cmp", shorter, nd, dv)
                    if shorter:
                        dist[v] = dist[u] + w
                        e.store("relax.stdist", nd, pv, D + 4 * v, 4)
                        e.store("relax.stprev", ix, pv, PR + 4 * v, 4)
                rp = e.alu("relax.rbump", rp)
                pv = e.alu("relax.bump", pv)
                e.branch("relax.loop", v < n - 1, pv, lim)
            e.unpin(du, ix)
            e.branch("outer.loop", it < n - 1, lim, one)
        all_dist.append(dist)
    e.roi_end()
    return {"adj": adj, "sources": sources, "dist": all_dist, "inf": INF}


# ---------------------------------------------------------------------------
# string_search: naive case-insensitive search via a lowercase table


def _lower(c: int) -> int:
    return c + 32 if 65 <= c <= 90 else c


def _string_search(e: Emitter, rng: random.Random, haystack: int, needle_len: int,
                   n_needles: int) -> dict:
    H, K = haystack, needle_len
    letters = b"etaoinshrdlucmfwyp"
    text = bytearray()
    while len(text) < H:
        word = bytes(rng.choice(letters) for _ in range(rng.randint(2, 8)))
        if rng.random() < 0.3:
            word = word.capitalize()
        text += word + b" "
    text = bytes(text[:H])
    needles = []
    for _ in range(n_needles):
        i = rng.randrange(H - K + 1)
        nd = bytes(c ^ 32 if 97 <= c <= 122 and rng.random() < 0.3 else c for c in text[i:i + K])
        needles.append(nd)

    HY = e.region("haystack", H)
    ND = e.region("needles", n_needles * K)
    LW = e.region("lower", 256)
    RS = e.region("results", n_needles * 4)

    zero = e.seed_value("setup.zero")
    lim = e.alu("setup.limit", zero)
    e.pin(zero, lim)
    e.roi_begin()

    counts = []
    for t, nd in enumerate(needles):
        q = e.alu("nd.ptr", zero)
        e.pin(q)
        c0 = e.load("nd.ld0", q, ND + t * K, 1)
        l0 = e.load("nd.low0", c0, LW + nd[0], 1)
        cnt = e.alu("nd.cnt0", zero)
        e.pin(l0, cnt)
        p = e.alu("hs.ptr", zero)
        count = 0
        want = bytes(_lower(c) for c in nd)
        for i in range(H - K + 1):
            e.pin(p)
            c = e.load("hs.ld", p, HY + i, 1)
            lc = e.load("hs.low", c, LW + text[i], 1)
            miss = _lower(text[i]) != want[0]
            e.branch("hs.cmp0", miss, lc, l0)
            if not miss:
                j = 1
                while j < K:
                    c2 = e.load("in.ld", p, HY + i + j, 1)
                    l2 = e.load("in.low", c2, LW + text[i + j], 1)
                    cn = e.load("in.ldn", q, ND + t * K + j, 1)
                    ln = e.load("in.lown", cn, LW + nd[j], 1)
                    bad = _lower(text[i + j]) != want[j]
                    e.branch("in.cmp", bad, l2, ln)
                    if bad:
                        break
                    j += 1
                    e.branch("in.loop", j < K, ln, lim)
                if j == K:
                    count += 1
                    ncnt = e.alu("hs.inc", cnt)
                    e.unpin(cnt)
                    cnt = ncnt
                    e.pin(cnt)
            e.unpin(p)
            p = e.alu("hs.bump", p)
            e.branch("hs.loop", i < H - K, p, lim)
        e.store("nd.result", cnt, q, RS + 4 * t, 4)
        e.unpin(q, l0, cnt)
        counts.append(count)
    e.roi_end()
    return {"text": text, "needles": needles, "counts": counts}


# ---------------------------------------------------------------------------
# susan_corners: 3x3 brightness-similarity corner response


def _susan(e: Emitter, rng: random.Random, width: int, height: int) -> dict:
    W, Hh = width, height
    img = [[100 + rng.randint(-3, 3) for _ in range(W)] for _ in range(Hh)]
    for _ in range(max(1, W * Hh // 400)):
        x0, y0 = rng.randrange(W), rng.randrange(Hh)
        x1, y1 = min(W, x0 + rng.randint(3, max(3, W // 3))), min(Hh, y0 + rng.randint(3, max(3, Hh // 3)))
        level = rng.choice((40, 170, 220))
        for y in range(y0, y1):
            for x in range(x0, x1):
                img[y][x] = level + rng.randint(-3, 3)
    t = 20.0
    bp = [int(round(100 * math.exp(-((d / t) ** 6)))) for d in range(-256, 257)]
    g = 400

    IM = e.region("image", W * Hh)
    BP = e.region("bp", len(bp))
    OUT = e.region("response", W * Hh)

    zero = e.seed_value("setup.zero")
    gth = e.alu("setup.g", zero)
    lim = e.alu("setup.limit", zero)
    e.pin(zero, gth, lim)
    e.roi_begin()

    offs = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    corners = []
    for y in range(1, Hh - 1):
        p = e.alu("row.ptr", zero)
        for x in range(1, W - 1):
            e.pin(p)
            c = e.load("px.ldc", p, IM + y * W + x, 1)
            e.pin(c)
            acc = None
            n = 0
            for dy, dx in offs:
                nb = e.load("px.ldn", p, IM + (y + dy) * W + x + dx, 1)
                diff = e.alu("px.diff", nb, c)
                d = img[y + dy][x + dx] - img[y][x]
                b = e.load("px.lut", diff, BP + d + 256, 1)
                acc = e.alu("px.acc", b) if acc is None else e.alu("px.acc", acc, b)
                n += bp[d + 256]
            is_corner = n < g
            e.branch("px.thresh", not is_corner, acc, gth)
            if is_corner:
                r = e.alu("px.resp", gth, acc)
                e.store("px.store", r, p, OUT + y * W + x, 1)
                corners.append((x, y, g - n))
            else:
                e.store("px.store0", zero, p, OUT + y * W + x, 1)
            e.unpin(p, c)
            p = e.alu("px.bump", p)
            e.branch("px.loop", x < W - 2, p, lim)
        e.branch("row.loop", y < Hh - 2, p, lim)
    e.roi_end()
    return {"image": img, "corners": corners}


# ---------------------------------------------------------------------------
# flow_class: 5-tuple hash into chained buckets


def _rot(x: int, k: int) -> int:
    return ((x << k) | (x >> (32 - k))) & M32


def lookup3_13(k0: int, k1: int, k2: int, proto: int, initval: int = 0) -> int:
    """Bob Jenkins' lookup3 (public domain) on a 13-byte little-endian key."""
    a = b = c = (0xDEADBEEF + 13 + initval) & M32
    a = (a + k0) & M32
    b = (b + k1) & M32
    c = (c + k2) & M32
    a, b, c = _mix(a, b, c)
    a = (a + (proto & 0xFF)) & M32
    return _final(a, b, c)


def _mix(a, b, c):
    for x, y, z, r in (("a", "c", "b", 4), ("b", "a", "c", 6), ("c", "b", "a", 8),
                       ("a", "c", "b", 16), ("b", "a", "c", 19), ("c", "b", "a", 4)):
        v = {"a": a, "b": b, "c": c}
        v[x] = (v[x] - v[y]) & M32
        v[x] ^= _rot(v[y], r)
        v[y] = (v[y] + v[z]) & M32
        a, b, c = v["a"], v["b"], v["c"]
    return a, b, c


_FINAL = (("c", "b", 14), ("a", "c", 11), ("b", "a", 25), ("c", "b", 16),
          ("a", "c", 4), ("b", "a", 14), ("c", "b", 24))


def _final(a, b, c):
    v = {"a": a, "b": b, "c": c}
    for x, y, r in _FINAL:
        v[x] ^= v[y]
        v[x] = (v[x] - _rot(v[y], r)) & M32
    return v["c"]


def _emit_lookup3(e: Emitter, init: Val, k0: Val, k1: Val, k2: Val, pr: Val) -> Val:
    a = e.alu("h.a", init, k0)
    b = e.alu("h.b", init, k1)
    c = e.alu("h.c", init, k2)
    v = {"a": a, "b": b, "c": c}
    e.pin(a, b, c)

    def setv(name, new):
        e.unpin(v[name])
        v[name] = new
        e.pin(new)

    for step, (x, y, z, _r) in enumerate((("a", "c", "b", 4), ("b", "a", "c", 6),
                                          ("c", "b", "a", 8), ("a", "c", "b", 16),
                                          ("b", "a", "c", 19), ("c", "b", "a", 4))):
        setv(x, e.alu(f"mix{step}.sub", v[x], v[y]))
        rt = e.alu(f"mix{step}.rot", v[y])
        setv(x, e.alu(f"mix{step}.xor", v[x], rt))
        setv(y, e.alu(f"mix{step}.add", v[y], v[z]))
    pm = e.alu("h.tailmask", pr)
    setv("a", e.alu("h.tail", v["a"], pm))
    for step, (x, y, _r) in enumerate(_FINAL):
        setv(x, e.alu(f"fin{step}.xor", v[x], v[y]))
        rt = e.alu(f"fin{step}.rot", v[y])
        setv(x, e.alu(f"fin{step}.sub", v[x], rt))
    out = v["c"]
    e.unpin(v["a"], v["b"])
    e.unpin(out)
    return out


def _flow_class(e: Emitter, rng: random.Random, n_packets: int, n_buckets: int) -> dict:
    n_flows = max(1, n_packets // 2)
    flows = []
    seen = set()
    while len(flows) < n_flows:
        f = (rng.getrandbits(32), rng.getrandbits(32), rng.getrandbits(16), rng.getrandbits(16),
             rng.choice((6, 17)))
        if f not in seen:
            seen.add(f)
            flows.append(f)
    pkts = [(rng.randrange(n_flows), rng.randint(40, 1500)) for _ in range(n_packets)]

    SLOT, NODE = 64, 64
    PK = e.region("packets", n_packets * SLOT)
    BK = e.region("buckets", n_buckets * 4)
    ND = e.region("nodes", n_flows * NODE)
    FR = e.region("freeptr", 4)
    pow2 = n_buckets & (n_buckets - 1) == 0

    zero = e.seed_value("setup.zero")
    init = e.alu("setup.init", zero)
    nbk = e.alu("setup.nbuckets", zero)
    lim = e.alu("setup.limit", zero)
    e.pin(zero, init, nbk, lim)
    e.roi_begin()

    heads = [0] * n_buckets  # node index + 1, 0 = empty
    nxt: list[int] = []
    keys: list[tuple] = []
    counters: list[list[int]] = []
    p = e.alu("pkt.ptr", zero)
    for pi, (fi, length) in enumerate(pkts):
        e.pin(p)
        src, dst, sport, dport, proto = flows[fi]
        k2 = sport | dport << 16
        base = PK + pi * SLOT
        k0v = e.load("pkt.ldsrc", p, base, 4)
        k1v = e.load("pkt.lddst", p, base + 4, 4)
        k2v = e.load("pkt.ldports", p, base + 8, 4)
        prv = e.load("pkt.ldproto", p, base + 12, 1)
        e.pin(k0v, k1v, k2v, prv)
        hv = _emit_lookup3(e, init, k0v, k1v, k2v, prv)
        h = lookup3_13(src, dst, k2, proto)
        if pow2:
            bi = h & (n_buckets - 1)
            bix = e.alu("pkt.mask", hv, nbk)
        else:
            bi = h % n_buckets
            bix = e.div("pkt.mod", hv, nbk)
        ba = e.alu("pkt.baddr", bix)
        e.pin(ba)
        head = e.load("pkt.ldhead", ba, BK + 4 * bi, 4)
        e.pin(head)
        node = heads[bi]
        cur = head
        found = None
        key = (src, dst, k2, proto)
        while True:
            e.branch("walk.null", node == 0, cur, zero)
            if node == 0:
                break
            ni = node - 1
            na = ND + ni * NODE
            e.pin(cur)
            match = True
            for off, kv, want, have, sz in ((0, k0v, src, keys[ni][0], 4), (4, k1v, dst, keys[ni][1], 4),
                                            (8, k2v, k2, keys[ni][2], 4), (12, prv, proto, keys[ni][3], 1)):
                fk = e.load(f"walk.ldkey{off}", cur, na + off, sz)
                e.branch(f"walk.cmp{off}", want != have, fk, kv)
                if want != have:
                    match = False
                    break
            if match:
                found = ni
                break
            nn = e.load("walk.ldnext", cur, na + 16, 4)
            e.unpin(cur)
            cur = nn
            node = nxt[ni]
        lenv = e.load("pkt.ldlen", p, base + 16, 2)
        if found is not None:
            na = ND + found * NODE
            pk = e.load("hit.ldpk", cur, na + 32, 4)
            pk2 = e.alu("hit.incpk", pk)
            e.store("hit.stpk", pk2, cur, na + 32, 4)
            by = e.load("hit.ldby", cur, na + 40, 4)
            by2 = e.alu("hit.addby", by, lenv)
            e.store("hit.stby", by2, cur, na + 40, 4)
            e.unpin(cur)
            counters[found][0] += 1
            counters[found][1] += length
        else:
            ni = len(keys)
            na = ND + ni * NODE
            fp = e.load("new.ldfree", zero, FR, 4)
            e.pin(fp)
            fp2 = e.alu("new.bump", fp)
            e.store("new.stfree", fp2, zero, FR, 4)
            e.store("new.stk0", k0v, fp, na, 4)
            e.store("new.stk1", k1v, fp, na + 4, 4)
            e.store("new.stk2", k2v, fp, na + 8, 4)
            e.store("new.stpr", prv, fp, na + 12, 1)
            e.store("new.stnext", head, fp, na + 16, 4)
            one = e.alu("new.one", zero)
            e.store("new.stpk", one, fp, na + 32, 4)
            e.store("new.stby", lenv, fp, na + 40, 4)
            e.store("new.sthead", fp, ba, BK + 4 * bi, 4)
            e.unpin(fp)
            keys.append(key)
            nxt.append(heads[bi])
            counters.append([1, length])
            heads[bi] = ni + 1
        e.unpin(ba, head, k0v, k1v, k2v, prv, p)
        p = e.alu("pkt.bump", p)
        e.branch("pkt.loop", pi < n_packets - 1, p, lim)
    e.roi_end()
    return {"flows": flows, "keys": keys, "counters": counters, "heads": heads}


# ---------------------------------------------------------------------------
# ipv4_trie: fixed-stride multibit trie longest-prefix match


def _ipv4_trie(e: Emitter, rng: random.Random, n_routes: int, n_lookups: int, stride: int) -> dict:
    k = stride
    fan = 1 << k
    levels = 32 // k
    ENTRY = 8
    # node -> list of [child, nexthop, plen]
    nodes = [[[0, 0, -1] for _ in range(fan)]]
    routes = []
    for r in range(n_routes):
        plen = rng.choice((8, 12, 16, 16, 20, 22, 24, 24, 24))
        prefix = rng.getrandbits(32) & (M32 << (32 - plen)) & M32
        routes.append((prefix, plen, r + 1))
    for prefix, plen, nh in sorted(routes, key=lambda t: t[1]):
        node = 0
        depth = max(1, -(-plen // k))
        for lvl in range(depth - 1):
            idx = (prefix >> (32 - k * (lvl + 1))) & (fan - 1)
            ent = nodes[node][idx]
            if not ent[0]:
                nodes.append([[0, 0, -1] for _ in range(fan)])
                ent[0] = len(nodes) - 1
            node = ent[0]
        lvl = depth - 1
        free_bits = k * depth - plen
        base_idx = (prefix >> (32 - k * depth)) & (fan - 1)
        for j in range(1 << free_bits):
            ent = nodes[node][base_idx | j]
            if plen >= ent[2]:
                ent[1], ent[2] = nh, plen

    def lookup(ip):
        node, best, path = 0, 0, []
        for lvl in range(levels):
            idx = (ip >> (32 - k * (lvl + 1))) & (fan - 1)
            ent = nodes[node][idx]
            path.append((node, idx, ent[1], ent[0]))
            if ent[1]:
                best = ent[1]
            if not ent[0]:
                break
            node = ent[0]
        return best, path

    ips = []
    for _ in range(n_lookups):
        if routes and rng.random() < 0.8:
            prefix, plen, _ = routes[rng.randrange(len(routes))]
            ips.append(prefix | (rng.getrandbits(32) & (M32 >> plen if plen < 32 else 0)))
        else:
            ips.append(rng.getrandbits(32))

    NBYTES = fan * ENTRY
    PK = e.region("packets", n_lookups * 32)
    TR = e.region("trie", len(nodes) * NBYTES)

    zero = e.seed_value("setup.zero")
    root = e.alu("setup.root", zero)
    lim = e.alu("setup.limit", zero)
    e.pin(zero, root, lim)
    e.roi_begin()

    results = []
    p = e.alu("pkt.ptr", zero)
    for li, ip in enumerate(ips):
        e.pin(p)
        base = PK + li * 32
        ipv = e.load("pkt.lddst", p, base + 16, 4)
        e.pin(ipv)
        ttl = e.load("pkt.ldttl", p, base + 8, 1)
        e.branch("pkt.ttlchk", False, ttl, zero)
        ttl2 = e.alu("pkt.decttl", ttl)
        e.store("pkt.stttl", ttl2, p, base + 8, 1)
        ck = e.load("pkt.ldck", p, base + 10, 2)
        ck2 = e.alu("pkt.updck", ck, ttl2)
        e.store("pkt.stck", ck2, p, base + 10, 2)
        best, path = lookup(ip)
        bv = zero
        nodev = root
        e.pin(bv)
        for lvl, (node, idx, nh, child) in enumerate(path):
            ix = e.alu("lvl.idx", ipv)
            ea = e.alu("lvl.addr", nodev, ix)
            ent_addr = TR + node * NBYTES + idx * ENTRY
            nhv = e.load("lvl.ldnh", ea, ent_addr + 4, 4)
            e.branch("lvl.nhchk", nh == 0, nhv, zero)
            if nh:
                e.unpin(bv)
                bv = e.alu("lvl.setbest", nhv)
                e.pin(bv)
            ch = e.load("lvl.ldchild", ea, ent_addr, 4)
            e.branch("lvl.leaf", child == 0, ch, zero)
            nodev = ch
        e.store("pkt.stport", bv, p, base + 24, 4)
        e.unpin(bv, ipv, p)
        results.append(best)
        p = e.alu("pkt.bump", p)
        e.branch("pkt.loop", li < n_lookups - 1, p, lim)
    e.roi_end()
    return {"routes": routes, "ips": ips, "nexthops": results, "n_nodes": len(nodes)}


# ---------------------------------------------------------------------------
# ipsec_aes: byte-oriented AES-128 encryption of packet payload, in place


def _make_sbox() -> list[int]:
    def gmul(a, b):
        r = 0
        while b:
            if b & 1:
                r ^= a
            a = (a << 1) ^ (0x11B if a & 0x80 else 0)
            b >>= 1
        return r

    sbox = []
    for x in range(256):
        inv = 0 if x == 0 else next(y for y in range(1, 256) if gmul(x, y) == 1)
        s = inv
        for sh in range(1, 5):
            s ^= ((inv << sh) | (inv >> (8 - sh))) & 0xFF
        sbox.append(s ^ 0x63)
    return sbox


SBOX = _make_sbox()


def _xtime(a: int) -> int:
    return ((a << 1) ^ (0x1B if a & 0x80 else 0)) & 0xFF


def aes128_expand(key: bytes) -> list[list[int]]:
    w = [list(key[4 * i:4 * i + 4]) for i in range(4)]
    rcon = 1
    for i in range(4, 44):
        t = list(w[i - 1])
        if i % 4 == 0:
            t = [SBOX[b] for b in t[1:] + t[:1]]
            t[0] ^= rcon
            rcon = _xtime(rcon)
        w.append([x ^ y for x, y in zip(w[i - 4], t)])
    return [sum(w[4 * r:4 * r + 4], []) for r in range(11)]


def _shift_rows(s: list) -> list:
    return [s[(r + 4 * ((c + r) % 4))] for c in range(4) for r in range(4)]


def _mix_column(col: list[int]) -> list[int]:
    t = col[0] ^ col[1] ^ col[2] ^ col[3]
    return [col[i] ^ t ^ _xtime(col[i] ^ col[(i + 1) % 4]) for i in range(4)]


def aes128_encrypt_block(block: bytes, round_keys: list[list[int]]) -> bytes:
    s = [b ^ k for b, k in zip(block, round_keys[0])]
    for r in range(1, 11):
        s = _shift_rows([SBOX[b] for b in s])
        if r < 10:
            s = sum((_mix_column(s[4 * c:4 * c + 4]) for c in range(4)), [])
        s = [b ^ k for b, k in zip(s, round_keys[r])]
    return bytes(s)


def _ipsec_aes(e: Emitter, rng: random.Random, n_blocks: int) -> dict:
    key = bytes(rng.getrandbits(8) for _ in range(16))
    plain = bytes(rng.getrandbits(8) for _ in range(16 * n_blocks))
    rk = aes128_expand(key)

    PL = e.region("payload", 16 * n_blocks)
    SB = e.region("sbox", 256)
    RK = e.region("round_keys", 176)

    zero = e.seed_value("setup.zero")
    rkp = e.alu("setup.rk", zero)
    lim = e.alu("setup.limit", zero)
    e.pin(zero, rkp, lim)
    e.roi_begin()

    cipher = bytearray()
    p = e.alu("blk.ptr", zero)
    for blk in range(n_blocks):
        e.pin(p)
        base = PL + 16 * blk
        data = list(plain[16 * blk:16 * blk + 16])
        sv = []
        for i in range(16):
            b = e.load("ark0.ldpt", p, base + i, 1)
            kk = e.load("ark0.ldrk", rkp, RK + i, 1)
            sv.append(e.alu("ark0.xor", b, kk))
            e.pin(sv[-1])
        s = [b ^ kk for b, kk in zip(data, rk[0])]
        for r in range(1, 11):
            tv = []
            for i in range(16):
                tv.append(e.load("sub.ld", sv[i], SB + s[i], 1))
                e.unpin(sv[i])
                e.pin(tv[-1])
            s = _shift_rows([SBOX[b] for b in s])
            sv = _shift_rows(tv)
            if r < 10:
                nv = []
                ns = []
                for c in range(4):
                    col = s[4 * c:4 * c + 4]
                    cv = sv[4 * c:4 * c + 4]
                    t01 = e.alu("mc.t01", cv[0], cv[1])
                    t23 = e.alu("mc.t23", cv[2], cv[3])
                    tt = e.alu("mc.t", t01, t23)
                    e.pin(tt)
                    outv = []
                    for i in range(4):
                        u = e.alu("mc.u", cv[i], cv[(i + 1) % 4])
                        x1 = e.alu("mc.xshl", u)
                        x2 = e.alu("mc.xred", x1, u)
                        y = e.alu("mc.y", cv[i], tt)
                        outv.append(e.alu("mc.out", y, x2))
                        e.pin(outv[-1])
                    e.unpin(tt, *cv)
                    nv += outv
                    ns += _mix_column(col)
                sv, s = nv, ns
            kv = []
            for i in range(16):
                kk = e.load("ark.ldrk", rkp, RK + 16 * r + i, 1)
                kv.append(e.alu("ark.xor", sv[i], kk))
                e.unpin(sv[i])
                e.pin(kv[-1])
            sv = kv
            s = [b ^ kk for b, kk in zip(s, rk[r])]
            e.branch("round.loop", r < 10, lim, zero)
        for i in range(16):
            e.store("blk.stct", sv[i], p, base + i, 1)
            e.unpin(sv[i])
        cipher += bytes(s)
        e.unpin(p)
        p = e.alu("blk.bump", p)
        e.branch("blk.loop", blk < n_blocks - 1, p, lim)
    e.roi_end()
    return {"key": key, "plaintext": plain, "ciphertext": bytes(cipher)}


_BUILDERS = {
    "dijkstra": _dijkstra,
    "string_search": _string_search,
    "susan_corners": _susan,
    "flow_class": _flow_class,
    "ipv4_trie": _ipv4_trie,
    "ipsec_aes": _ipsec_aes,
}
