"""Cycle-accounted memory system.

Lookup path for NPU-side requests: optional NSB (small, high-associativity,
in-NPU), then L1, then L2, then DRAM. Every level is set-associative with LRU
replacement. A single MSHR file sits at the DRAM boundary: outstanding line
fills coalesce repeat requests, and a full file stalls demand requests until
an entry frees (prefetch requests are dropped instead). DRAM is a fixed
latency plus a per-cycle byte budget enforced as a FIFO channel.

Scratchpad regions bypass the cache path entirely at a fixed one-cycle access
cost; irregular regions route through the caches.

Stores are modelled as streaming writes: they consume channel bandwidth and
are counted in the writeback ledger but do not allocate cache state, keeping
miss statistics load-only.
"""

from __future__ import annotations

import heapq
from collections import OrderedDict
from dataclasses import dataclass

DEMAND_LOAD = "DemandLoad"
DEMAND_STORE = "DemandStore"
PREFETCH = "Prefetch"

ORIGIN_NPU = "NPU"
ORIGIN_NVR = "NVR"
ORIGIN_BASELINE = "BaselinePrefetcher"


class MemoryConfigError(ValueError):
    """Invalid cache or DRAM geometry."""


@dataclass
class CacheConfig:
    capacity_bytes: int
    line_bytes: int = 64
    ways: int = 8
    hit_latency: int = 1
    mshr_entries: int = 16
    replacement: str = "LRU"

    def validate(self, name: str = "cache") -> None:
        if self.ways < 1:
            raise MemoryConfigError("%s: ways must be >= 1" % name)
        if self.mshr_entries < 1:
            raise MemoryConfigError("%s: mshr_entries must be >= 1" % name)
        if self.line_bytes < 1 or self.capacity_bytes < 1:
            raise MemoryConfigError("%s: sizes must be positive" % name)
        if self.capacity_bytes % (self.line_bytes * self.ways):
            raise MemoryConfigError(
                "%s: capacity %d not divisible by line_bytes*ways = %d"
                % (name, self.capacity_bytes, self.line_bytes * self.ways))
        if self.replacement != "LRU":
            raise MemoryConfigError("%s: only LRU replacement is modelled" % name)


@dataclass
class NsbConfig(CacheConfig):
    """Non-blocking speculative buffer: same geometry, high default ways."""

    ways: int = 16
    enabled: bool = True


@dataclass
class DramConfig:
    latency_cycles: int = 100
    bandwidth_bytes_per_cycle: int = 16

    def validate(self) -> None:
        if self.latency_cycles <= 0 or self.bandwidth_bytes_per_cycle <= 0:
            raise MemoryConfigError("DRAM latency and bandwidth must be > 0")


@dataclass
class MemRequest:
    address: int
    size_bytes: int = 4
    kind: str = DEMAND_LOAD
    origin: str = ORIGIN_NPU
    issue_cycle: int = 0
    fill_levels: tuple = ()  # prefetch target levels; empty = demand path


@dataclass
class AccessResult:
    served_at: int
    hit_level: str       # "NSB" | "L1" | "L2" | "DRAM" | "Scratchpad"
    coalesced: bool
    prefetch_hit: bool = False  # served by a prefetched resident copy


@dataclass
class MshrEntry:
    line: int
    fill_at: int
    is_prefetch: bool
    fill_levels: tuple
    late: bool = False


# cache line metadata: [filled_by_prefetch_creditable]
class _Level:
    __slots__ = ("name", "cfg", "n_sets", "set_mask", "sets",
                 "demand_lookups", "demand_hits", "prefetch_fills", "demand_fills")

    def __init__(self, name: str, cfg: CacheConfig):
        cfg.validate(name)
        self.name = name
        self.cfg = cfg
        self.n_sets = cfg.capacity_bytes // (cfg.line_bytes * cfg.ways)
        self.set_mask = self.n_sets - 1
        self.sets = [OrderedDict() for _ in range(self.n_sets)]
        self.demand_lookups = 0
        self.demand_hits = 0
        self.prefetch_fills = 0
        self.demand_fills = 0

    def _set_of(self, line: int) -> OrderedDict:
        if self.n_sets & self.set_mask:  # not a power of two
            return self.sets[line % self.n_sets]
        return self.sets[line & self.set_mask]

    def lookup(self, line: int, demand: bool):
        """Returns the line's metadata list on hit (LRU updated), else None."""
        s = self._set_of(line)
        if demand:
            self.demand_lookups += 1
        meta = s.get(line)
        if meta is None:
            return None
        s.move_to_end(line)
        if demand:
            self.demand_hits += 1
        return meta

    def probe(self, line: int) -> bool:
        return line in self._set_of(line)

    def fill(self, line: int, prefetch_credit: bool, demand: bool) -> None:
        s = self._set_of(line)
        if line in s:
            s.move_to_end(line)
            if prefetch_credit:
                s[line][0] = True
            return
        if len(s) >= self.cfg.ways:
            s.popitem(last=False)
        s[line] = [prefetch_credit]
        if demand:
            self.demand_fills += 1
        else:
            self.prefetch_fills += 1


class MemoryHierarchy:
    """Single-driver mutable state machine; advance with non-decreasing cycles."""

    def __init__(self, l1: CacheConfig | None, l2: CacheConfig | None,
                 nsb: NsbConfig | None, dram: DramConfig,
                 mshr_entries: int = 16, scratchpad_spans: tuple = ()):
        dram.validate()
        if mshr_entries < 1:
            raise MemoryConfigError("mshr_entries must be >= 1")
        self.levels: list[_Level] = []
        if nsb is not None and nsb.enabled:
            self.levels.append(_Level("NSB", nsb))
        if l1 is not None:
            self.levels.append(_Level("L1", l1))
        if l2 is not None:
            self.levels.append(_Level("L2", l2))
        if not self.levels:
            raise MemoryConfigError("at least one cache level is required")
        self.line_bytes = self.levels[0].cfg.line_bytes
        for lv in self.levels:
            if lv.cfg.line_bytes != self.line_bytes:
                raise MemoryConfigError("all levels must share one line size")
        self.dram = dram
        self.mshr_entries = mshr_entries
        self.scratchpad_spans = tuple(scratchpad_spans)

        self._mshr: dict[int, MshrEntry] = {}
        self._fill_heap: list = []  # (fill_at, seq, line)
        self._seq = 0
        self._channel_free = 0
        self._last_cycle = 0

        self.dram_transactions = 0
        self.dram_demand_bytes = 0
        self.dram_prefetch_bytes = 0
        self.dram_writeback_bytes = 0
        self.demand_line_accesses = 0
        self.demand_dram_served = 0
        self.level_misses = {lv.name: 0 for lv in self.levels}
        # prefetch effectiveness feedback, read by the attached engine
        self.prefetch_useful = 0
        self.prefetch_late = 0

    # -- helpers -----------------------------------------------------------

    def line_of(self, addr: int) -> int:
        return addr // self.line_bytes

    def nearest_hit_latency(self) -> int:
        return self.levels[0].cfg.hit_latency

    def level_names(self) -> tuple:
        return tuple(lv.name for lv in self.levels)

    def in_scratchpad(self, addr: int) -> bool:
        for base, end in self.scratchpad_spans:
            if base <= addr < end:
                return True
        return False

    def probe(self, addr: int) -> bool:
        """Read-only residency check across all levels (no LRU update)."""
        line = self.line_of(addr)
        return any(lv.probe(line) for lv in self.levels)

    def in_flight(self, addr: int) -> bool:
        return self.line_of(addr) in self._mshr

    def _retire(self, now: int) -> None:
        heap = self._fill_heap
        while heap and heap[0][0] <= now:
            fill_at, _, line = heapq.heappop(heap)
            entry = self._mshr.pop(line, None)
            if entry is None:
                continue
            targets = entry.fill_levels or self.level_names()
            demand = not entry.is_prefetch
            credit_left = entry.is_prefetch
            for lv in self.levels:
                if lv.name in targets:
                    lv.fill(line, prefetch_credit=credit_left, demand=demand)
                    credit_left = False  # exactly one creditable copy per fill

    def _dram_fetch(self, line: int, now: int, is_prefetch: bool,
                    fill_levels: tuple) -> MshrEntry:
        # critical word arrives after the access latency; the line transfer
        # itself only occupies the channel's per-cycle byte budget
        transfer = -(-self.line_bytes // self.dram.bandwidth_bytes_per_cycle)
        start = max(now, self._channel_free)
        self._channel_free = start + transfer
        fill_at = start + self.dram.latency_cycles
        entry = MshrEntry(line, fill_at, is_prefetch, fill_levels)
        self._mshr[line] = entry
        self._seq += 1
        heapq.heappush(self._fill_heap, (fill_at, self._seq, line))
        self.dram_transactions += 1
        if is_prefetch:
            self.dram_prefetch_bytes += self.line_bytes
        else:
            self.dram_demand_bytes += self.line_bytes
        return entry

    # -- the spec access path ----------------------------------------------

    def access(self, req: MemRequest, now: int) -> AccessResult:
        """Serve one request; requests larger than a line are split."""
        if now < self._last_cycle:
            raise MemoryConfigError("hierarchy driven with a decreasing cycle")
        self._last_cycle = now
        if req.kind == DEMAND_STORE:
            return self._store(req, now)
        first = self.line_of(req.address)
        last = self.line_of(req.address + max(req.size_bytes, 1) - 1)
        out = None
        for line in range(first, last + 1):
            res = self._access_line(line, req.kind, now, req.fill_levels,
                                    req.origin)
            if out is None or res.served_at > out.served_at:
                out = res
        return out

    def _store(self, req: MemRequest, now: int) -> AccessResult:
        if self.in_scratchpad(req.address):
            return AccessResult(now + 1, "Scratchpad", False)
        transfer = -(-req.size_bytes // self.dram.bandwidth_bytes_per_cycle)
        self._channel_free = max(self._channel_free, now) + transfer
        self.dram_writeback_bytes += req.size_bytes
        return AccessResult(now + 1, "DRAM", False)

    def _access_line(self, line: int, kind: str, now: int,
                     fill_levels: tuple, origin: str) -> AccessResult:
        self._retire(now)
        demand = kind != PREFETCH
        addr = line * self.line_bytes
        if self.in_scratchpad(addr):
            return AccessResult(now + 1, "Scratchpad", False)

        if demand:
            self.demand_line_accesses += 1
        lat = 0
        for depth, lv in enumerate(self.levels):
            lat += lv.cfg.hit_latency
            meta = lv.lookup(line, demand) if demand else (
                [True] if lv.probe(line) else None)
            if meta is not None:
                pf_hit = False
                if demand:
                    if meta[0]:
                        meta[0] = False
                        self.prefetch_useful += 1
                        pf_hit = True
                    else:
                        # the creditable copy may sit at a lower level when
                        # the serving copy arrived by promotion or NSB fill
                        for lower in self.levels[depth + 1:]:
                            lmeta = lower._set_of(line).get(line)
                            if lmeta is not None and lmeta[0]:
                                lmeta[0] = False
                                self.prefetch_useful += 1
                                pf_hit = True
                                break
                    # standard upward fill: a hit below promotes the line into
                    # the cache levels above it. The speculative buffer is not
                    # a promotion target; it holds prefetched and demand-missed
                    # lines only, so reuse churn cannot flush speculation.
                    for upper in self.levels[:depth]:
                        if upper.name != "NSB":
                            upper.fill(line, prefetch_credit=False, demand=True)
                return AccessResult(now + lat, lv.name, False, pf_hit)
            if demand:
                self.level_misses[lv.name] += 1

        entry = self._mshr.get(line)
        if entry is not None:
            if demand and entry.is_prefetch and not entry.late:
                entry.late = True
                self.prefetch_late += 1
            if demand:
                self.demand_dram_served += 1
                # demand takes over the fill: widen targets to the full path
                entry.fill_levels = ()
                entry.is_prefetch = entry.is_prefetch and False
            return AccessResult(max(entry.fill_at, now + lat), "DRAM", True)

        if len(self._mshr) >= self.mshr_entries:
            if not demand:
                return AccessResult(now, "DRAM", False)  # dropped, see caller
            # stall until the oldest outstanding fill frees an entry
            while len(self._mshr) >= self.mshr_entries:
                t_free = self._fill_heap[0][0]
                self._retire(t_free)
                now = max(now, t_free)
        entry = self._dram_fetch(line, now + lat, kind == PREFETCH,
                                 fill_levels if kind == PREFETCH else ())
        if demand:
            self.demand_dram_served += 1
        return AccessResult(entry.fill_at, "DRAM", False)

    # -- NPU-facing batch interface ----------------------------------------

    def demand_batch(self, addresses, now: int):
        """Issue all lanes of a vector load at one cycle.

        Lanes sharing a cache line share one lookup. Returns
        (ready_at, missed_lane_count, lane_count).
        """
        self._retire(now)
        ready = now
        missed = 0
        line_res: dict[int, AccessResult] = {}
        for addr in addresses:
            line = self.line_of(addr)
            res = line_res.get(line)
            if res is None:
                res = self._access_line(line, DEMAND_LOAD, now, (), ORIGIN_NPU)
                line_res[line] = res
            if res.served_at > ready:
                ready = res.served_at
            if res.hit_level == "DRAM":
                missed += 1
        return ready, missed, len(addresses)

    def prefetch(self, addr: int, now: int, origin: str,
                 fill_levels: tuple) -> str:
        """Issue one line prefetch. Returns "accepted", or the drop reason:
        "resident" / "inflight" (redundant) or "full" (MSHR back-pressure).

        A prefetch that finds the line already resident in one of its target
        levels refreshes that copy's recency, protecting a predicted-reuse
        line from eviction before its demand arrives."""
        line = self.line_of(addr)
        self._retire(now)
        if self.in_scratchpad(addr):
            return "resident"
        if line in self._mshr:
            return "inflight"
        targets = fill_levels or self.level_names()
        resident = False
        for lv in self.levels:
            if lv.probe(line):
                resident = True
                if lv.name in targets:
                    s = lv._set_of(line)
                    s.move_to_end(line)
        if resident:
            return "resident"
        if len(self._mshr) >= self.mshr_entries:
            return "full"
        self._dram_fetch(line, now, True, fill_levels)
        return "accepted"

    def store_batch(self, addresses, elem_bytes: int, now: int) -> None:
        self._store(MemRequest(addresses[0], elem_bytes * len(addresses),
                               DEMAND_STORE), now)

    def drain(self, now: int) -> None:
        self._retire(now)

    # -- accounting ----------------------------------------------------------

    def bandwidth_ledger(self) -> dict:
        """Byte-exact traffic per boundary.

        The DRAM boundary separates demand fills, prefetch fills and streamed
        writebacks; per-level rows report lookup/hit/fill counts plus request
        bytes reaching that level.
        """
        out = {
            "dram": {
                "demand_bytes": self.dram_demand_bytes,
                "prefetch_bytes": self.dram_prefetch_bytes,
                "writeback_bytes": self.dram_writeback_bytes,
                "transactions": self.dram_transactions,
            }
        }
        for lv in self.levels:
            out[lv.name.lower()] = {
                "demand_lookups": lv.demand_lookups,
                "demand_hits": lv.demand_hits,
                "demand_fills": lv.demand_fills,
                "prefetch_fills": lv.prefetch_fills,
                "demand_request_bytes": lv.demand_lookups * self.line_bytes,
            }
        return out

    def off_chip_bytes(self) -> int:
        return (self.dram_demand_bytes + self.dram_prefetch_bytes
                + self.dram_writeback_bytes)


def access(hierarchy: MemoryHierarchy, req: MemRequest, now: int) -> AccessResult:
    return hierarchy.access(req, now)


def bandwidth_ledger(hierarchy: MemoryHierarchy) -> dict:
    return hierarchy.bandwidth_ledger()


def reset_and_configure(l1: CacheConfig | None = None,
                        l2: CacheConfig | None = None,
                        nsb: NsbConfig | None = None,
                        dram: DramConfig | None = None,
                        mshr_entries: int = 16,
                        scratchpad_spans: tuple = ()) -> MemoryHierarchy:
    """Fresh hierarchy: empty caches, empty MSHRs, cycle 0.

    Defaults follow the reference platform: 32 KiB 4-way L1, 256 KiB 8-way
    L2, 64 B lines, no NSB.
    """
    if l1 is None:
        l1 = CacheConfig(32 * 1024, ways=4, hit_latency=1)
    if l2 is None:
        l2 = CacheConfig(256 * 1024, ways=8, hit_latency=10)
    if dram is None:
        dram = DramConfig()
    return MemoryHierarchy(l1, l2, nsb, dram, mshr_entries, scratchpad_spans)
