import pytest

from nvrsim.memory import (CacheConfig, DramConfig, MemoryConfigError,
                           MemRequest, MemoryHierarchy, NsbConfig,
                           DEMAND_STORE, bandwidth_ledger, reset_and_configure)


def small_hierarchy(l1_kib=1, l2_kib=2, dram_latency=100, bw=64, mshr=4,
                    nsb=None, l1_ways=2, l2_ways=2):
    l1 = CacheConfig(l1_kib * 1024, 64, l1_ways, 1, mshr)
    l2 = CacheConfig(l2_kib * 1024, 64, l2_ways, 10, mshr)
    return MemoryHierarchy(l1, l2, nsb, DramConfig(dram_latency, bw), mshr)


def test_default_config_accepted():
    h = reset_and_configure()
    assert h.level_names() == ("L1", "L2")
    assert h.levels[1].cfg.capacity_bytes == 256 * 1024


def test_bad_geometry_rejected():
    with pytest.raises(MemoryConfigError):
        CacheConfig(1000, 64, 8, 1).validate()
    with pytest.raises(MemoryConfigError):
        CacheConfig(1024, 64, 8, 1, mshr_entries=0).validate()


def test_nsb_participates_in_lookup_order():
    nsb = NsbConfig(16 * 1024, 64, 16, 1, 16, enabled=True)
    h = MemoryHierarchy(CacheConfig(1024, 64, 2, 1), CacheConfig(2048, 64, 2, 10),
                        nsb, DramConfig(100, 64), 16)
    assert h.level_names() == ("NSB", "L1", "L2")


def test_cold_access_additive_path():
    h = small_hierarchy()
    res = h.access(MemRequest(0x1000, 4), now=0)
    assert res.hit_level == "DRAM"
    assert res.served_at == 0 + 1 + 10 + 100


def test_second_access_coalesces_single_transaction():
    h = small_hierarchy()
    r1 = h.access(MemRequest(0x1000, 4), now=0)
    r2 = h.access(MemRequest(0x1010, 4), now=5)  # same line, before fill
    assert r2.coalesced
    assert r2.served_at == r1.served_at
    assert h.dram_transactions == 1


def test_hit_after_fill():
    h = small_hierarchy()
    r1 = h.access(MemRequest(0x1000, 4), now=0)
    r2 = h.access(MemRequest(0x1000, 4), now=r1.served_at + 1)
    assert r2.hit_level == "L1"
    assert r2.served_at == r1.served_at + 1 + 1


def test_lru_hand_trace():
    # one 2-way set: three distinct lines evict the first; re-access misses
    l1 = CacheConfig(128, 64, 2, 1, 16)       # exactly one set, 2 ways
    l2 = CacheConfig(1 << 20, 64, 2, 10, 16)  # large L2 so evictions only in L1
    h = MemoryHierarchy(l1, l2, None, DramConfig(100, 64), 16)
    step = l1.capacity_bytes  # lines mapping to the same L1 set
    t = 0
    for addr in (0, step, 2 * step):
        t = h.access(MemRequest(addr, 4), t).served_at + 1
    # line 0 was least recently used and must be gone from L1
    r = h.access(MemRequest(0, 4), t)
    assert r.hit_level == "L2"
    # line at 2*step is still L1 resident
    r = h.access(MemRequest(2 * step, 4), r.served_at + 1)
    assert r.hit_level == "L1"


def test_mshr_full_stalls_demand():
    h = small_hierarchy(mshr=2)
    h.access(MemRequest(0x0000, 4), 0)
    h.access(MemRequest(0x4000, 4), 1)
    r3 = h.access(MemRequest(0x8000, 4), 2)  # file full: waits for a free entry
    assert r3.served_at > 2 + 1 + 10 + 100


def test_prefetch_statuses():
    h = small_hierarchy(mshr=2)
    assert h.prefetch(0x1000, 0, "NVR", ("L2",)) == "accepted"
    assert h.prefetch(0x1010, 1, "NVR", ("L2",)) == "inflight"
    assert h.prefetch(0x2000, 2, "NVR", ("L2",)) == "accepted"
    assert h.prefetch(0x3000, 3, "NVR", ("L2",)) == "full"
    h.drain(1000)
    assert h.prefetch(0x1000, 1001, "NVR", ("L2",)) == "resident"


def test_prefetch_fills_target_level_only():
    h = small_hierarchy()
    h.prefetch(0x1000, 0, "BaselinePrefetcher", ("L2",))
    h.drain(500)
    assert not h.levels[0].probe(h.line_of(0x1000))  # not in L1
    assert h.levels[1].probe(h.line_of(0x1000))
    r = h.access(MemRequest(0x1000, 4), 600)
    assert r.hit_level == "L2"
    assert r.prefetch_hit


def test_prefetch_usefulness_counted_once():
    h = small_hierarchy()
    h.prefetch(0x1000, 0, "NVR", ("L2",))
    h.drain(500)
    h.access(MemRequest(0x1000, 4), 600)
    h.access(MemRequest(0x1000, 4), 700)
    assert h.prefetch_useful == 1


def test_late_prefetch_flagged():
    h = small_hierarchy()
    h.prefetch(0x1000, 0, "NVR", ("L2",))
    r = h.access(MemRequest(0x1000, 4), 5)  # demanded while in flight
    assert r.coalesced
    assert h.prefetch_late == 1
    assert h.prefetch_useful == 0


def test_prefetch_does_not_touch_demand_stats():
    h = small_hierarchy()
    h.prefetch(0x1000, 0, "NVR", ("L2",))
    h.drain(500)
    assert h.levels[1].demand_lookups == 0
    assert h.demand_line_accesses == 0


def test_bandwidth_ledger_accounting():
    h = small_hierarchy()
    h.access(MemRequest(0x1000, 4), 0)
    h.prefetch(0x9000, 1, "NVR", ("L2",))
    h.store_batch([0x5000 + 4 * i for i in range(16)], 4, 2)
    led = bandwidth_ledger(h)
    assert led["dram"]["demand_bytes"] == 64
    assert led["dram"]["prefetch_bytes"] == 64
    assert led["dram"]["writeback_bytes"] == 64
    assert led["dram"]["demand_bytes"] + led["dram"]["prefetch_bytes"] == \
        h.dram_transactions * 64


def test_no_prefetcher_means_zero_prefetch_bytes():
    h = small_hierarchy()
    for i in range(50):
        h.access(MemRequest(i * 64, 4), i * 200)
    assert h.bandwidth_ledger()["dram"]["prefetch_bytes"] == 0


def test_transactions_bounded_by_distinct_lines_with_big_cache():
    h = MemoryHierarchy(CacheConfig(1 << 20, 64, 16, 1),
                        CacheConfig(1 << 22, 64, 16, 10),
                        None, DramConfig(50, 64), 32)
    import random
    rnd = random.Random(7)
    lines = set()
    t = 0
    for _ in range(1000):
        addr = rnd.randrange(0, 1 << 18) * 4
        lines.add(h.line_of(addr))
        t = max(t + 1, h.access(MemRequest(addr, 4), t).served_at)
    assert h.dram_transactions == len(lines)


def test_request_splitting_across_lines():
    h = small_hierarchy()
    res = h.access(MemRequest(0x1000, 256), 0)  # spans four lines
    assert h.dram_transactions == 4
    assert res.served_at >= 0 + 1 + 10 + 100


def test_scratchpad_region_fixed_latency():
    h = MemoryHierarchy(CacheConfig(1024, 64, 2, 1), CacheConfig(2048, 64, 2, 10),
                        None, DramConfig(100, 64), 8,
                        scratchpad_spans=((0x7000_0000, 0x7100_0000),))
    r = h.access(MemRequest(0x7000_0040, 4), 10)
    assert r.hit_level == "Scratchpad"
    assert r.served_at == 11
    assert h.dram_transactions == 0


def test_store_bypasses_caches():
    h = small_hierarchy()
    h.access(MemRequest(0x5000, 4, DEMAND_STORE), 0)
    assert not h.levels[0].probe(h.line_of(0x5000))
    assert h.dram_writeback_bytes == 4


def test_monotonic_cycle_enforced():
    h = small_hierarchy()
    h.access(MemRequest(0x1000, 4), 100)
    with pytest.raises(MemoryConfigError):
        h.access(MemRequest(0x2000, 4), 50)


def test_classification_independent_of_mshr_count():
    def classify(mshr):
        h = small_hierarchy(mshr=mshr)
        seq = [0x0000, 0x4000, 0x8000, 0x0000, 0x4000, 0xC000, 0x0010]
        out = []
        t = 0
        for addr in seq:
            r = h.access(MemRequest(addr, 4), t)
            out.append(r.hit_level)
            t = r.served_at + 1
        return out

    assert classify(1) == classify(16)
