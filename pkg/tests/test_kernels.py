import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from hypothesis import given, settings, strategies as st

from oracles import count_matches, longest_prefix_match, naive_search_loads, shortest_paths
from uarch_dse.kernels import (
    SBOX, KernelError, KernelSpec, build_kernel, gen_kernel, list_kernels, lookup3_13,
)
from uarch_dse.trace import Kind, Roi, write_trace

NAMES = ["dijkstra", "string_search", "susan_corners", "flow_class", "ipv4_trie", "ipsec_aes"]


def loads_in(run, region):
    reg = run.regions[region]
    return [r for r in run.trace.records if r.kind is Kind.LOAD and r.addr in reg]


def test_list_kernels():
    ks = list_kernels()
    assert [k[0] for k in ks] == NAMES
    for name, ranges, defaults in ks:
        assert set(ranges) == set(defaults)
        KernelSpec.make(name, defaults).check()


def test_determinism():
    a = write_trace(gen_kernel(KernelSpec.make("dijkstra", {"n_nodes": 4}, seed=1)))
    b = write_trace(gen_kernel(KernelSpec.make("dijkstra", {"n_nodes": 4}, seed=1)))
    assert a == b
    c = write_trace(gen_kernel(KernelSpec.make("dijkstra", {"n_nodes": 4}, seed=2)))
    assert a != c


@pytest.mark.parametrize("kernel,params", [
    ("nope", {}),
    ("dijkstra", {"n_nodes": 0}),
    ("dijkstra", {"n_nodes": 4, "n_sources": 5}),
    ("string_search", {"haystack": 4, "needle_len": 8}),
    ("ipv4_trie", {"stride": 3}),
    ("ipsec_aes", {"rounds": 4}),
])
def test_bad_specs(kernel, params):
    with pytest.raises(KernelError):
        KernelSpec.make(kernel, params)


def test_roi_well_formed(kernel_traces):
    for name, t in kernel_traces.items():
        assert sum(it is Roi.BEGIN for it in t.items) == 1
        assert sum(it is Roi.END for it in t.items) == 1
        b, e = t.roi_bounds()
        assert (e - b) >= 0.9 * len(t), name


def test_regions_disjoint_and_cover_accesses(kernel_runs):
    for name, run in kernel_runs.items():
        regs = sorted(run.regions.values(), key=lambda r: r.base)
        for a, b in zip(regs, regs[1:]):
            assert a.end <= b.base, (name, a.name, b.name)
        for r in run.trace.records:
            if r.kind in (Kind.LOAD, Kind.STORE):
                assert any(r.addr in g and r.addr + r.size <= g.end for g in regs), (name, r)


def test_registers_defined_before_use(kernel_traces):
    for name, t in kernel_traces.items():
        written = set()
        for r in t.records:
            srcs = [x for x in (r.src1, r.src2) if x is not None]
            if r.dst is not None and srcs == [r.dst]:
                written.add(r.dst)  # setup value materialization
                continue
            assert all(x in written for x in srcs), (name, r)
            if r.dst is not None:
                written.add(r.dst)


def test_dijkstra_distances(kernel_runs):
    out = kernel_runs["dijkstra"].outputs
    for s, dist in zip(out["sources"], out["dist"]):
        ref = shortest_paths(out["adj"], s)
        assert [d if d != out["inf"] else float("inf") for d in dist] == ref


def test_dijkstra_relax_compare_depends_on_distance_load(kernel_runs):
    run = kernel_runs["dijkstra"]
    dist = run.regions["dist"]
    producer = {}  # logical register -> kind and whether it loaded dist[]
    seen = 0
    for r in run.trace.records:
        if r.kind is Kind.BRANCH:
            srcs = [producer.get(x) for x in (r.src1, r.src2) if x is not None]
            if any(s == "dist_load" for s in srcs):
                seen += 1
        if r.dst is not None:
            producer[r.dst] = "dist_load" if r.kind is Kind.LOAD and r.addr in dist else "other"
    assert seen > 0


@pytest.mark.parametrize("haystack,needle_len,seed", [(64, 3, 1), (300, 5, 7), (1000, 8, 3)])
def test_string_search_counts_and_loads(haystack, needle_len, seed):
    run = build_kernel(KernelSpec.make("string_search", {
        "haystack": haystack, "needle_len": needle_len, "n_needles": 1}, seed))
    text, (needle,) = run.outputs["text"], run.outputs["needles"]
    assert run.outputs["counts"] == [count_matches(text, needle)]
    assert run.outputs["counts"][0] >= 1  # needles are cut from the text
    hay_loads = loads_in(run, "haystack")
    assert len(hay_loads) >= haystack - needle_len + 1
    n_loads = sum(r.kind is Kind.LOAD for r in run.trace.records)
    assert n_loads == naive_search_loads(text, needle)


def test_susan_corners_against_recomputation(kernel_runs):
    import math
    img = kernel_runs["susan_corners"].outputs["image"]
    h, w = len(img), len(img[0])
    expect = []
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            n = 0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dy or dx:
                        d = img[y + dy][x + dx] - img[y][x]
                        n += int(round(100 * math.exp(-((d / 20.0) ** 6))))
            if n < 400:
                expect.append((x, y, 400 - n))
    assert kernel_runs["susan_corners"].outputs["corners"] == expect
    assert expect  # the synthetic image has edges


def test_flow_class_bookkeeping(kernel_runs):
    p = KernelSpec.make("flow_class").p
    out = kernel_runs["flow_class"].outputs
    assert sum(c[0] for c in out["counters"]) == p["n_packets"]
    assert len(set(out["keys"])) == len(out["keys"])
    flows = {(s, d, sp | dp << 16, pr) for s, d, sp, dp, pr in out["flows"]}
    assert set(out["keys"]) <= flows
    # every bucket chain starts at a node whose key hashes to that bucket
    for b, head in enumerate(out["heads"]):
        if head:
            k = out["keys"][head - 1]
            assert lookup3_13(*k) % p["n_buckets"] == b


def test_lookup3_mixes():
    assert lookup3_13(1, 2, 3, 6) != lookup3_13(1, 2, 3, 17)
    assert 0 <= lookup3_13(0xFFFFFFFF, 0xFFFFFFFF, 0xFFFFFFFF, 255) < 1 << 32


def test_ipv4_longest_prefix(kernel_runs):
    out = kernel_runs["ipv4_trie"].outputs
    for ip, nh in zip(out["ips"], out["nexthops"]):
        assert nh == longest_prefix_match(out["routes"], ip)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 40), st.sampled_from([1, 2, 4, 8]), st.integers(0, 2**32))
def test_ipv4_any_stride(n_routes, stride, seed):
    out = build_kernel(KernelSpec.make("ipv4_trie", {
        "n_routes": n_routes, "n_lookups": 30, "stride": stride}, seed)).outputs
    for ip, nh in zip(out["ips"], out["nexthops"]):
        assert nh == longest_prefix_match(out["routes"], ip)


def test_aes_matches_reference_implementation(kernel_runs):
    out = kernel_runs["ipsec_aes"].outputs
    enc = Cipher(algorithms.AES(out["key"]), modes.ECB()).encryptor()
    assert out["ciphertext"] == enc.update(out["plaintext"]) + enc.finalize()


def test_aes_sbox_loads():
    run = build_kernel(KernelSpec.make("ipsec_aes", {"n_blocks": 2}))
    assert len(loads_in(run, "sbox")) == 2 * 10 * 16
    sb = run.regions["sbox"]
    assert SBOX[0] == 0x63 and SBOX[0x53] == 0xED
    assert sorted(SBOX) == list(range(256))
    assert sb.size == 256
