#!/usr/bin/env python3
"""The cycle-accounted memory system: additive lookup latency, MSHR
coalescing, LRU replacement, the speculative buffer, and the byte-exact
traffic ledger.

Run:  python demos/03_memory_hierarchy.py
"""

from nvrsim.memory import (CacheConfig, DramConfig, MemRequest, MemoryHierarchy,
                           NsbConfig, reset_and_configure)

print("=" * 70)
print("1. Additive lookup path on a cold miss")
print("=" * 70)
h = reset_and_configure(dram=DramConfig(100, 32))
r = h.access(MemRequest(0x4000_0000, 4), now=0)
print("levels:", h.level_names())
print("cold access served at cycle %d via %s (L1 1 + L2 10 + DRAM 100)"
      % (r.served_at, r.hit_level))
r2 = h.access(MemRequest(0x4000_0000, 4), now=r.served_at + 1)
print("re-access hits %s at +%d cycles" % (r2.hit_level, r2.served_at - r.served_at - 1))

print()
print("=" * 70)
print("2. MSHR coalescing: one transaction per in-flight line")
print("=" * 70)
h = reset_and_configure(dram=DramConfig(100, 32))
a = h.access(MemRequest(0x5000_0000, 4), 0)
b = h.access(MemRequest(0x5000_0010, 4), 5)   # same line, still in flight
print("first served at %d; second coalesced=%s served at %d; DRAM transactions=%d"
      % (a.served_at, b.coalesced, b.served_at, h.dram_transactions))

print()
print("=" * 70)
print("3. LRU in a 2-way set")
print("=" * 70)
l1 = CacheConfig(128, 64, 2, 1)     # a single 2-way set
l2 = CacheConfig(1 << 20, 64, 8, 10)
h = MemoryHierarchy(l1, l2, None, DramConfig(100, 32), 16)
t = 0
for tag, addr in (("A", 0), ("B", 128), ("C", 256)):
    r = h.access(MemRequest(addr, 4), t)
    t = r.served_at + 1
    print("touch %s -> %s" % (tag, r.hit_level))
r = h.access(MemRequest(0, 4), t)
print("re-touch A -> %s (evicted by C under LRU, refilled from L2)" % r.hit_level)

print()
print("=" * 70)
print("4. Speculative buffer in the lookup path")
print("=" * 70)
nsb = NsbConfig(16 * 1024, 64, 16, 1, 16, enabled=True)
h = MemoryHierarchy(CacheConfig(4096, 64, 4, 1), CacheConfig(32768, 64, 8, 10),
                    nsb, DramConfig(120, 32), 32)
print("lookup order:", h.level_names())
h.prefetch(0x4000_0000, 0, "NVR", ("NSB", "L2"))
h.drain(500)
r = h.access(MemRequest(0x4000_0000, 4), 500)
print("demand after a buffer fill: hit %s at 1 cycle, prefetch credited=%s"
      % (r.hit_level, r.prefetch_hit))

print()
print("=" * 70)
print("5. Byte-exact bandwidth ledger")
print("=" * 70)
h = reset_and_configure(dram=DramConfig(100, 32))
t = 0
for i in range(20):
    t = h.access(MemRequest(0x4000_0000 + 64 * i, 4), t).served_at + 1
h.prefetch(0x4100_0000, t, "NVR", ("L2",))
h.store_batch([0x5000_0000 + 4 * i for i in range(16)], 4, t)
led = h.bandwidth_ledger()
print("dram:", led["dram"])
print("demand+prefetch bytes == transactions x line:",
      led["dram"]["demand_bytes"] + led["dram"]["prefetch_bytes"]
      == h.dram_transactions * 64)
