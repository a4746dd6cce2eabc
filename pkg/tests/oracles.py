"""Independent reference models used by the test-suite.

Kept deliberately naive: a per-set Python list in explicit LRU order instead
of the OrderedDict machinery in cachesim, brute-force algorithms for the
kernels, and a random generator of valid traces.
"""

import random

from uarch_dse.trace import ACCESS_SIZES, InstructionRecord, Kind, Roi, Trace


class NaiveLevel:
    def __init__(self, capacity, line, ways, hit):
        self.nsets = capacity // (line * ways)
        self.line = line
        self.ways = ways
        self.hit = hit
        self.sets = [[] for _ in range(self.nsets)]  # [line_no, dirty], LRU first
        self.accesses = self.hits = self.misses = self.writebacks = 0

    def touch(self, line_no, write):
        self.accesses += 1
        s = self.sets[line_no % self.nsets]
        for k, ent in enumerate(s):
            if ent[0] == line_no:
                self.hits += 1
                del s[k]
                s.append([line_no, ent[1] or write])
                return True, None
        self.misses += 1
        victim = None
        if len(s) == self.ways:
            victim = s.pop(0)
            if victim[1]:
                self.writebacks += 1
        s.append([line_no, write])
        return False, victim

    def stats(self):
        return (self.accesses, self.hits, self.misses, self.writebacks)


class NaiveHierarchy:
    def __init__(self, cfg):
        def mk(c):
            g = c.geometry
            return NaiveLevel(g.capacity_bytes, g.line_bytes, g.associativity, c.hit_cycles)
        self.l1i, self.l1d, self.l2 = mk(cfg.l1i), mk(cfg.l1d), mk(cfg.l2)
        self.mem = cfg.mem_cycles

    def _one(self, addr, write, l1):
        hit, victim = l1.touch(addr // l1.line, write)
        if hit:
            return l1.hit
        if victim is not None and victim[1]:
            self.l2.touch(victim[0] * l1.line // self.l2.line, True)
        hit2, _ = self.l2.touch(addr // self.l2.line, False)
        return l1.hit + self.l2.hit + (0 if hit2 else self.mem)

    def access(self, addr, size, write, port):
        l1 = self.l1i if port == "ifetch" else self.l1d
        first, last = addr // l1.line, (addr + size - 1) // l1.line
        return max(self._one(ln * l1.line if ln != first else addr, write, l1)
                   for ln in range(first, last + 1))

    def stats(self):
        return {"l1i": self.l1i.stats(), "l1d": self.l1d.stats(), "l2": self.l2.stats()}


def random_record(rng, sid_range=64, addr_range=256):
    k = rng.choice(list(Kind))
    sid = rng.randrange(sid_range)

    def reg():
        return rng.randrange(32)

    def opt():
        return rng.choice([None, rng.randrange(32)])

    if k in (Kind.ALU, Kind.MUL, Kind.DIV):
        return InstructionRecord(sid, k, reg(), reg(), opt())
    if k in (Kind.LOAD, Kind.STORE):
        sz = rng.choice(ACCESS_SIZES)
        addr = rng.randrange(addr_range) // sz * sz
        if k is Kind.LOAD:
            return InstructionRecord(sid, k, dst=reg(), src1=opt(), addr=addr, size=sz)
        return InstructionRecord(sid, k, src1=reg(), src2=opt(), addr=addr, size=sz)
    return InstructionRecord(sid, k, src1=opt(), src2=opt(), taken=rng.random() < 0.5)


def random_trace(seed, n, roi=False, **kw):
    rng = random.Random(seed)
    items = [random_record(rng, **kw) for _ in range(n)]
    if roi and n >= 2:
        a = rng.randrange(n)
        b = rng.randrange(a, n + 1)
        items = items[:a] + [Roi.BEGIN] + items[a:b] + [Roi.END] + items[b:]
    return Trace(f"random{seed}", items)


def shortest_paths(adj, src):
    """Bellman-Ford over the adjacency matrix (0 means no edge)."""
    n = len(adj)
    inf = float("inf")
    d = [inf] * n
    d[src] = 0
    for _ in range(n):
        for u in range(n):
            if d[u] == inf:
                continue
            for v in range(n):
                w = adj[u][v]
                if w and d[u] + w < d[v]:
                    d[v] = d[u] + w
    return d


def count_matches(text: bytes, needle: bytes) -> int:
    t, nd = text.lower(), needle.lower()
    return sum(t[i:i + len(nd)] == nd for i in range(len(t) - len(nd) + 1))


def naive_search_loads(text: bytes, needle: bytes) -> int:
    """LOADs a naive first-char-then-rest case-insensitive scan performs,
    counting each character fetch plus its lowercase-table lookup."""
    t, nd = text.lower(), needle.lower()
    loads = 2  # first needle char and its table lookup
    for i in range(len(t) - len(nd) + 1):
        loads += 2
        if t[i] != nd[0]:
            continue
        for j in range(1, len(nd)):
            loads += 4  # haystack char, lookup, needle char, lookup
            if t[i + j] != nd[j]:
                break
    return loads


def longest_prefix_match(routes, ip):
    best_len, best = -1, 0
    for prefix, plen, nh in routes:
        mask = (0xFFFFFFFF << (32 - plen)) & 0xFFFFFFFF if plen else 0
        if ip & mask == prefix and plen >= best_len:
            best_len, best = plen, nh
    return best
