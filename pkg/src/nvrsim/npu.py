"""Gemmini-like NPU execution model.

Replays a trace of coarse vector instructions against a memory hierarchy.
Vector loads issue all lanes at once and compute for a batch begins only when
every lane is served: one missing lane stalls the whole batch. Two execution
modes are provided:

  * inorder   - each event completes before the next issues; stall cycles are
                exactly total - sum of base latencies.
  * ideal_ooo - an upper-bound comparator that overlaps load service with
                later work across up to rob_entries in-flight vector batches.

A small sparse unit handles alignment / skipping / tiling of sparse operands.
Its registers (structure base, index shift, rowptr window, last index) mirror
what the most recent sparse decode saw; a passive snooper hands read-only
views of those registers, of CPU branches, and of NPU loads to an attached
prefetch engine. Snooping never mutates simulator state, so an engine that
issues nothing leaves the run bit-identical to running with no engine at all.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .memory import MemoryHierarchy
from .workload import (BRANCH, COMPUTE, LOAD, REGION_COLIDX, REGION_ROWPTR,
                       STORE, Trace)

EXEC_INORDER = "inorder"
EXEC_IDEAL_OOO = "ideal_ooo"


class NpuModelError(ValueError):
    pass


@dataclass
class NpuConfig:
    vector_width: int = 16
    exec_mode: str = EXEC_INORDER
    element_bits: int = 32
    rob_entries: int = 4
    sparse_unit_latency: int = 2
    compute_cycles: int = 1  # per lane-group pass through the MAC array

    def __post_init__(self):
        if self.vector_width < 1 or self.rob_entries < 1:
            raise NpuModelError("vector_width and rob_entries must be >= 1")
        if self.exec_mode not in (EXEC_INORDER, EXEC_IDEAL_OOO):
            raise NpuModelError("exec_mode must be inorder or ideal_ooo")


@dataclass
class SparseUnitState:
    """Registers visible to snoopers after the latest sparse decode."""

    current_row: int = -1
    rowptr_window: tuple = ()
    ss_start: int = -1
    stride_shift: int = -1
    last_index: int = -1
    index_pc: int = -1
    run_length: int = 1  # consecutive lines per indirect invocation


class SparseUnit:
    """Busy/idle bookkeeping for the alignment/skip/tile unit."""

    def __init__(self, latency: int):
        self.latency = max(int(latency), 0)
        self.busy_until = 0
        self.busy_intervals: list = []
        self.state = SparseUnitState()

    def occupy(self, now: int) -> int:
        start = max(now, self.busy_until)
        end = start + self.latency
        self.busy_until = end
        if self.latency:
            if self.busy_intervals and self.busy_intervals[-1][1] >= start:
                s, _ = self.busy_intervals[-1]
                self.busy_intervals[-1] = (s, end)
            else:
                self.busy_intervals.append((start, end))
        return end

    def is_idle(self, now: int) -> bool:
        return now >= self.busy_until

    def execute(self, kind: str, operands: dict, now: int) -> dict:
        """Spec-level Align / Skip / Tile operations.

        Align gathers the index stream a CSR row selects; Skip drops zero
        entries; Tile groups indices into fixed-width tiles, padding the
        last one.
        """
        done = self.occupy(now)
        if kind == "Align":
            indices = list(operands["indices"])
            return {"indices": indices, "done_cycle": done}
        if kind == "Skip":
            row = operands["row"]
            indices = [i for i, v in enumerate(row) if v]
            return {"indices": indices, "done_cycle": done}
        if kind == "Tile":
            indices = list(operands["indices"])
            width = int(operands["width"])
            if width < 1:
                raise NpuModelError("tile width must be >= 1")
            tiles = []
            for i in range(0, len(indices), width):
                tiles.append(indices[i:i + width])
            padded = 0
            if tiles and len(tiles[-1]) < width:
                padded = width - len(tiles[-1])
                tiles[-1] = tiles[-1] + [None] * padded
            return {"tiles": tiles, "padded_lanes": padded, "done_cycle": done}
        raise NpuModelError("unknown sparse unit op %r" % (kind,))


def sparse_unit_execute(unit: SparseUnit, kind: str, operands: dict, now: int = 0) -> dict:
    return unit.execute(kind, operands, now)


def idle_windows(unit: SparseUnit, horizon: int) -> list:
    """Sorted, non-overlapping idle intervals of the sparse unit in [0, horizon)."""
    out = []
    cursor = 0
    for start, end in unit.busy_intervals:
        if start >= horizon:
            break
        if start > cursor:
            out.append((cursor, min(start, horizon)))
        cursor = max(cursor, end)
    if cursor < horizon:
        out.append((cursor, horizon))
    return out


@dataclass
class BatchRecord:
    batch_id: int
    lanes: int
    issue: int
    ready: int
    stall: int
    missed_lanes: int

    @property
    def any_miss(self) -> bool:
        return self.missed_lanes > 0


@dataclass
class SimReport:
    """Cycle and miss breakdown of one replay.

    overall_miss_rate counts missing lanes; per_batch_miss_rate counts lanes
    belonging to a batch with at least one missing lane (the fraction of work
    the any-miss stall semantics afflict), so batch >= overall always holds,
    with equality when misses are perfectly clustered or absent.
    """

    total_cycles: int
    base_exec_cycles: int
    miss_stall_cycles: int
    overall_miss_rate: float
    per_batch_miss_rate: float
    off_chip_bytes: int
    n_batches: int
    n_lanes: int
    missed_lanes: int
    missed_batches: int
    demand_misses: int
    batch_hist: dict = field(default_factory=dict)
    ledger: dict = field(default_factory=dict)
    prefetch: object = None

    def signature(self) -> tuple:
        """Stable tuple for bit-identity comparisons across runs."""
        return (self.total_cycles, self.base_exec_cycles, self.miss_stall_cycles,
                round(self.overall_miss_rate, 12), round(self.per_batch_miss_rate, 12),
                self.off_chip_bytes, self.n_batches, self.n_lanes,
                self.missed_lanes, self.missed_batches, self.demand_misses,
                tuple(sorted(self.batch_hist.items())))


class _Snooper:
    """Builds read-only snoop views and keeps the sparse registers current."""

    def __init__(self, trace: Trace, unit: SparseUnit):
        self.trace = trace
        self.unit = unit
        self.image = trace.image
        self.shift = trace.meta.get("indirect_shift")
        self.pairing = trace.meta.get("indirect_pairing", "per_lane")
        self.run_length = int(trace.meta.get("chunk_lines", 1))
        self._fifo: deque = deque()
        self._run_pos = 0

    def ingest(self, ev) -> tuple:
        """Track the event through the sparse decode.

        Returns (values, regs_changed): the values a snooping engine can see
        for this event, and whether the sparse-unit registers were updated.
        Index-region loads expose their loaded values; indirect loads expose
        the index values they consume (the load-to-load dependency a
        dataflow-observing prefetcher pairs addresses with).
        """
        st = self.unit.state
        if ev.kind != LOAD:
            return (), False
        if ev.region == REGION_ROWPTR:
            vals = tuple(self.image.read(a) for a in ev.addresses)
            if len(vals) == 2 and all(v is not None for v in vals):
                st.rowptr_window = (vals[0], vals[1])
                st.current_row = ev.loop_iter
                return vals, True
            return (), False
        if ev.region == REGION_COLIDX:
            vals = tuple(self.image.read(a) for a in ev.addresses)
            if not all(v is not None for v in vals):
                return (), False
            self._fifo.extend(vals)
            # cap queued values; hardware mirrors only a small window
            while len(self._fifo) > 4096:
                self._fifo.popleft()
            return vals, False
        if ev.is_indirect and self.shift is not None and self._fifo:
            if self.pairing == "per_lane":
                take = min(ev.lanes, len(self._fifo))
                vals = tuple(self._fifo.popleft() for _ in range(take))
            elif self.pairing == "per_event":
                vals = (self._fifo.popleft(),)
            else:  # per_run: one routed value per run of consecutive lines
                if self._run_pos == 0:
                    vals = (self._fifo.popleft(),)
                else:
                    vals = ()
                self._run_pos = (self._run_pos + 1) % max(self.run_length, 1)
            if not vals:
                return (), False
            st.ss_start = ev.addresses[0] - (vals[0] << self.shift)
            st.stride_shift = self.shift
            st.last_index = vals[-1]
            st.index_pc = ev.pc
            st.run_length = self.run_length
            return vals, True
        return (), False


def execute(trace: Trace, hierarchy: MemoryHierarchy, prefetcher=None,
            cfg: NpuConfig | None = None) -> SimReport:
    """Replay a trace; returns the cycle/miss breakdown.

    An attached prefetch engine observes every event before the NPU consumes
    it and may inject prefetch requests; demand lanes are issued first at any
    given cycle, so prefetches never win arbitration over demand.
    """
    cfg = cfg or NpuConfig()
    unit = SparseUnit(cfg.sparse_unit_latency)
    snooper = _Snooper(trace, unit)
    ooo = cfg.exec_mode == EXEC_IDEAL_OOO
    hit_path = hierarchy.nearest_hit_latency()

    now = 0
    base = 0
    stall = 0
    n_batches = 0
    n_lanes = 0
    missed_lanes = 0
    missed_batches = 0
    afflicted_lanes = 0  # lanes inside any-miss batches
    batch_hist: dict = {}
    inflight: deque = deque()
    last_step = 0

    for ev in trace.events:
        values, regs_changed = snooper.ingest(ev)
        if prefetcher is not None:
            prefetcher.snoop(make_snoop_event(ev, now, values))
            if regs_changed:
                prefetcher.snoop(regs_snoop(unit.state, now))
            budget = max(now - last_step, 1)
            last_step = now
            requests = prefetcher.step(now, unit.is_idle(now), budget)
        else:
            requests = ()
        issue_cycle = now

        if ev.kind == LOAD:
            if ev.is_indirect or ev.region == REGION_COLIDX:
                unit.occupy(now)
            ready, missed, lanes = hierarchy.demand_batch(ev.addresses, now)
            n_batches += 1
            n_lanes += lanes
            missed_lanes += missed
            if missed:
                missed_batches += 1
                afflicted_lanes += lanes
            batch_hist[missed] = batch_hist.get(missed, 0) + 1
            if prefetcher is not None:
                prefetcher.observe_outcome(ev.pc, missed > 0, now)
            if ooo:
                if len(inflight) >= cfg.rob_entries:
                    wait = max(0, inflight.popleft() - now)
                    stall += wait
                    now += wait
                inflight.append(ready)
                base += 1
                now += 1
            else:
                base_lat = 1 + hit_path
                ev_stall = max(0, ready - now - base_lat)
                base += base_lat
                stall += ev_stall
                now += base_lat + ev_stall
        elif ev.kind == STORE:
            hierarchy.store_batch(ev.addresses, trace.spec.element_bytes, now)
            base += 1
            now += 1
        elif ev.kind == COMPUTE:
            groups = max(1, -(-ev.lanes // cfg.vector_width))
            cost = cfg.compute_cycles * groups
            if ooo and inflight:
                wait = max(0, inflight.popleft() - now)
                stall += wait
                now += wait
            base += cost
            now += cost
        # branches execute on the CPU side and cost no NPU cycles

        # prefetches issue at the cycle the event began: speculative work
        # overlaps the demand stall, behind the demand in channel order
        if requests:
            _issue_prefetches(hierarchy, prefetcher, requests, issue_cycle)

    while inflight:
        wait = max(0, inflight.popleft() - now)
        stall += wait
        now += wait
    hierarchy.drain(now)

    ledger = hierarchy.bandwidth_ledger()
    stats = getattr(prefetcher, "stats", None)
    if stats is not None:
        stats.useful = hierarchy.prefetch_useful
        stats.late = hierarchy.prefetch_late
    return SimReport(
        total_cycles=now,
        base_exec_cycles=base,
        miss_stall_cycles=stall,
        overall_miss_rate=missed_lanes / n_lanes if n_lanes else 0.0,
        per_batch_miss_rate=afflicted_lanes / n_lanes if n_lanes else 0.0,
        off_chip_bytes=hierarchy.off_chip_bytes(),
        n_batches=n_batches,
        n_lanes=n_lanes,
        missed_lanes=missed_lanes,
        missed_batches=missed_batches,
        demand_misses=hierarchy.demand_dram_served,
        batch_hist=batch_hist,
        ledger=ledger,
        prefetch=stats,
    )


def _issue_prefetches(hierarchy, prefetcher, requests, now: int) -> None:
    for req in requests:
        status = hierarchy.prefetch(req.address, now, req.origin, req.fill_levels)
        if status == "accepted":
            prefetcher.stats.issued += 1
        elif status == "full":
            # MSHR back-pressure: the engine may defer to a later window
            prefetcher.requeue(req.address)


def make_snoop_event(ev, now: int, values: tuple):
    from .prefetch import SnoopEvent  # late import: prefetch depends on npu types

    if ev.kind == BRANCH:
        return SnoopEvent(source="CpuBranch", pc=ev.pc, cycle=now,
                          bound=ev.bound_observed, loop_level=ev.loop_level)
    return SnoopEvent(source="NpuLoad", pc=ev.pc, cycle=now, kind=ev.kind,
                      base=ev.addresses[0] if ev.addresses else 0,
                      lanes=ev.lanes, region=ev.region,
                      is_indirect=ev.is_indirect, addresses=ev.addresses,
                      values=values, loop_level=ev.loop_level)


def regs_snoop(state: SparseUnitState, now: int):
    from .prefetch import SnoopEvent

    return SnoopEvent(source="SparseUnitRegs", pc=state.index_pc, cycle=now,
                      regs=SparseUnitState(
                          current_row=state.current_row,
                          rowptr_window=state.rowptr_window,
                          ss_start=state.ss_start,
                          stride_shift=state.stride_shift,
                          last_index=state.last_index,
                          index_pc=state.index_pc,
                          run_length=state.run_length))
