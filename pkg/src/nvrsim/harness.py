"""Experiment orchestration: configs, scenario sweeps, metrics, reports.

A scenario is one (workload, prefetcher, sweep-cell, repeat) combination.
Every accuracy/coverage number is paired with a matched-seed no-prefetch
baseline run of the same cell; traces are cached per workload so all engines
replay byte-identical event streams.

Config files are flat structured text: ``[section]`` headers with
``key = value`` lines (see parse_config for the schema).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from itertools import product

from .memory import CacheConfig, DramConfig, MemoryHierarchy, NsbConfig
from .npu import NpuConfig, SimReport, execute
from .workload import COMPUTE
from .prefetch import EngineContext, PrefetcherConfig, PrefetchStats, make_engine
from .rng import derive_seed
from .workload import PRESET_NAMES, Trace, WorkloadSpec, build_trace, preset_workload


class ConfigError(ValueError):
    """Config validation failure; message names the offending field."""


@dataclass
class MemoryParams:
    """[memory] section: experiment-scale hierarchy parameters."""

    l1_kib: int = 4
    l2_kib: int = 32
    line_bytes: int = 64
    ways_l1: int = 4
    ways_l2: int = 8
    nsb_kib: int = 16
    nsb_ways: int = 16
    mshr_entries: int = 64
    dram_latency: int = 120
    dram_bw: int = 32
    l1_hit: int = 1
    l2_hit: int = 10
    nsb_hit: int = 1

    def build(self, nsb_enabled: bool) -> MemoryHierarchy:
        l1 = CacheConfig(self.l1_kib * 1024, self.line_bytes, self.ways_l1,
                         self.l1_hit, self.mshr_entries)
        l2 = CacheConfig(self.l2_kib * 1024, self.line_bytes, self.ways_l2,
                         self.l2_hit, self.mshr_entries)
        nsb = None
        if nsb_enabled and self.nsb_kib > 0:
            nsb = NsbConfig(self.nsb_kib * 1024, self.line_bytes, self.nsb_ways,
                            self.nsb_hit, self.mshr_entries, enabled=True)
        dram = DramConfig(self.dram_latency, self.dram_bw)
        return MemoryHierarchy(l1, l2, nsb, dram, self.mshr_entries)


@dataclass
class ExperimentConfig:
    workloads: list = field(default_factory=lambda: list(PRESET_NAMES))
    memory: MemoryParams = field(default_factory=MemoryParams)
    npu: NpuConfig = field(default_factory=NpuConfig)
    prefetcher: PrefetcherConfig = field(default_factory=PrefetcherConfig)
    prefetchers: list = field(default_factory=lambda: ["none"])
    repeats: int = 1
    seed: int = 1
    sweep: dict = field(default_factory=dict)  # memory field -> value list

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("experiment.repeats must be >= 1")
        for kind in self.prefetchers:
            if kind not in ("none", "stream", "imp", "dvr", "nvr"):
                raise ConfigError("experiment.prefetchers: unknown kind %r" % (kind,))
        for axis in self.sweep:
            if not hasattr(self.memory, axis):
                raise ConfigError("sweep axis %r is not a [memory] field" % (axis,))


@dataclass
class MetricsRow:
    scenario: str
    total_cycles: int
    base_cycles: int
    stall_cycles: int
    overall_miss_rate: float
    per_batch_miss_rate: float
    accuracy: float
    coverage: float
    offchip_bytes: int
    prefetch_bytes: int
    perf_per_area: float


_TRACE_CACHE: dict = {}


def _cached_trace(spec: WorkloadSpec, vector_width: int) -> Trace:
    key = (spec.spec_hash(), vector_width)
    trace = _TRACE_CACHE.get(key)
    if trace is None:
        trace = build_trace(spec, vector_width=vector_width)
        _TRACE_CACHE[key] = trace
    return trace


def resolve_workload(wl, exp_seed: int, repeat: int) -> WorkloadSpec:
    """Preset name or explicit spec, reseeded deterministically per repeat."""
    spec = preset_workload(wl) if isinstance(wl, str) else replace(wl)
    spec.seed = derive_seed(spec.seed, exp_seed, repeat)
    return spec


def run_simulation(spec: WorkloadSpec, mem: MemoryParams, npu_cfg: NpuConfig,
                   pf_cfg: PrefetcherConfig) -> SimReport:
    """Build workload -> hierarchy -> engine -> NPU and execute once.

    The speculative buffer is an NVR-coupled structure: it exists in the
    hierarchy only for runs whose engine fills it."""
    trace = _cached_trace(spec, npu_cfg.vector_width)
    nsb_on = pf_cfg.nsb_enabled and pf_cfg.kind == "nvr"
    hierarchy = mem.build(nsb_enabled=nsb_on)
    image = trace.image

    def read_value(addr):
        return image.read(addr) if hierarchy.probe(addr) else None

    ctx = EngineContext(mem.line_bytes, npu_cfg.vector_width,
                        probe=hierarchy.probe, in_flight=hierarchy.in_flight,
                        read_value=read_value)
    engine = make_engine(pf_cfg, ctx)
    return execute(trace, hierarchy, engine, npu_cfg)


def compute_accuracy_coverage(stats: PrefetchStats) -> tuple:
    """accuracy = useful/issued (1 when nothing was issued);
    coverage = covered/baseline misses (1 when there was nothing to cover)."""
    accuracy = stats.useful / stats.issued if stats.issued else 1.0
    coverage = (stats.covered_misses / stats.baseline_misses
                if stats.baseline_misses else 1.0)
    return accuracy, coverage


def trace_mac_lanes(trace: Trace) -> int:
    return sum(ev.lanes for ev in trace.events if ev.kind == COMPUTE)


def _area_kib(mem: MemoryParams, nsb_enabled: bool) -> float:
    return mem.l2_kib + (mem.nsb_kib if nsb_enabled else 0)


def _row_from_report(scenario: str, report: SimReport, baseline: SimReport,
                     mem: MemoryParams, nsb_enabled: bool) -> MetricsRow:
    stats = report.prefetch if report.prefetch is not None else PrefetchStats()
    stats.baseline_misses = baseline.demand_misses
    stats.covered_misses = max(0, baseline.demand_misses - report.demand_misses)
    accuracy, coverage = compute_accuracy_coverage(stats)
    area = _area_kib(mem, nsb_enabled)
    return MetricsRow(
        scenario=scenario,
        total_cycles=report.total_cycles,
        base_cycles=report.base_exec_cycles,
        stall_cycles=report.miss_stall_cycles,
        overall_miss_rate=report.overall_miss_rate,
        per_batch_miss_rate=report.per_batch_miss_rate,
        accuracy=accuracy,
        coverage=coverage,
        offchip_bytes=report.off_chip_bytes,
        prefetch_bytes=report.ledger["dram"]["prefetch_bytes"],
        perf_per_area=1.0 / (report.total_cycles * area) if report.total_cycles else 0.0,
    )


def run_experiment(cfg: ExperimentConfig):
    """All scenario rows for the config's workload x prefetcher x sweep grid.

    Returns (rows, reports) with reports keyed by scenario id. A matched
    no-prefetch baseline is run for every cell even when "none" is not among
    the requested prefetchers.
    """
    rows = []
    reports = {}
    axes = sorted(cfg.sweep)
    cells = list(product(*(cfg.sweep[a] for a in axes))) if axes else [()]
    for cell in cells:
        mem = replace(cfg.memory, **dict(zip(axes, cell)))
        cell_id = ",".join("%s=%s" % (a, v) for a, v in zip(axes, cell))
        for wl in cfg.workloads:
            for rep in range(cfg.repeats):
                spec = resolve_workload(wl, cfg.seed, rep)
                name = spec.name or spec.archetype
                baseline = run_simulation(
                    spec, mem, cfg.npu, replace(cfg.prefetcher, kind="none"))
                for kind in cfg.prefetchers:
                    if kind == "none":
                        report = baseline
                    else:
                        report = run_simulation(
                            spec, mem, cfg.npu, replace(cfg.prefetcher, kind=kind))
                    scenario = "/".join(p for p in (name, kind, cell_id,
                                                    "r%d" % rep if cfg.repeats > 1 else "")
                                        if p)
                    rows.append(_row_from_report(scenario, report, baseline, mem,
                                                 cfg.prefetcher.nsb_enabled))
                    reports[scenario] = report
    rows.sort(key=lambda r: r.scenario)
    return rows, reports


def sensitivity_sweep(cfg: ExperimentConfig, nsb_values, l2_values,
                      workload=None):
    """NSB x L2 grid with the NVR engine; reports the perf-per-area surface
    and the marginal gain of NSB scaling versus L2 scaling at matched area
    increments (taken between the two smallest values on each axis).
    """
    wl = workload or cfg.workloads[0]
    rows = []
    grid = {}
    for nsb_kib, l2_kib in product(nsb_values, l2_values):
        mem = replace(cfg.memory, nsb_kib=nsb_kib, l2_kib=l2_kib)
        pf = replace(cfg.prefetcher, kind="nvr", nsb_enabled=nsb_kib > 0)
        spec = resolve_workload(wl, cfg.seed, 0)
        baseline = run_simulation(spec, mem, cfg.npu, replace(pf, kind="none"))
        report = run_simulation(spec, mem, cfg.npu, pf)
        scenario = "%s/nvr/nsb_kib=%d,l2_kib=%d" % (
            spec.name or spec.archetype, nsb_kib, l2_kib)
        row = _row_from_report(scenario, report, baseline, mem, nsb_kib > 0)
        rows.append(row)
        grid[(nsb_kib, l2_kib)] = row
    best = max(rows, key=lambda r: r.perf_per_area)

    analysis = {}
    nsb_sorted = sorted(nsb_values)
    l2_sorted = sorted(l2_values)
    if len(nsb_sorted) >= 2 and len(l2_sorted) >= 2:
        nsb0, nsb1 = nsb_sorted[0], nsb_sorted[1]
        l20, l21 = l2_sorted[0], l2_sorted[1]
        base = grid[(nsb0, l20)]
        if nsb1 - nsb0 == l21 - l20:  # matched area increments
            gain_nsb = grid[(nsb1, l20)].perf_per_area - base.perf_per_area
            gain_l2 = grid[(nsb0, l21)].perf_per_area - base.perf_per_area
            analysis = {
                "area_delta_kib": nsb1 - nsb0,
                "gain_nsb": gain_nsb,
                "gain_l2": gain_l2,
                "ratio": (gain_nsb / gain_l2 if gain_l2 > 0 else float("inf")),
            }
    return rows, best, analysis


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

METRICS_HEADER = ("scenario,total_cycles,base_cycles,stall_cycles,"
                  "overall_miss_rate,per_batch_miss_rate,accuracy,coverage,"
                  "offchip_bytes,prefetch_bytes,perf_per_area")


def _fmt_row(r: MetricsRow) -> str:
    return ("%s,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%d,%d,%.6e"
            % (r.scenario, r.total_cycles, r.base_cycles, r.stall_cycles,
               r.overall_miss_rate, r.per_batch_miss_rate, r.accuracy,
               r.coverage, r.offchip_bytes, r.prefetch_bytes, r.perf_per_area))


def emit_reports(rows, out_dir: str, cfg: ExperimentConfig | None = None) -> list:
    """Write metrics.csv, roofline.csv and summary.txt; stable column order,
    rows sorted by scenario, byte-identical across reruns of the same config."""
    if not rows:
        raise ConfigError("no rows to emit")
    os.makedirs(out_dir, exist_ok=True)
    rows = sorted(rows, key=lambda r: r.scenario)
    paths = []

    metrics_path = os.path.join(out_dir, "metrics.csv")
    with open(metrics_path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for r in rows:
            fh.write(_fmt_row(r) + "\n")
    paths.append(metrics_path)

    mac_rate = float(cfg.npu.vector_width if cfg else 16)
    bw = float(cfg.memory.dram_bw if cfg else 16)
    knee = mac_rate / bw
    roofline_path = os.path.join(out_dir, "roofline.csv")
    with open(roofline_path, "w") as fh:
        fh.write("scenario,intensity,attained,bound\n")
        for r in rows:
            ops = mac_rate * r.base_cycles  # peak-equivalent work proxy
            intensity = ops / r.offchip_bytes if r.offchip_bytes else float("inf")
            attained = ops / r.total_cycles if r.total_cycles else 0.0
            bound = "IO" if intensity < knee else "Compute"
            fh.write("%s,%.6f,%.6f,%s\n" % (r.scenario, intensity, attained, bound))
    paths.append(roofline_path)

    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w") as fh:
        fh.write("scenarios: %d\n" % len(rows))
        for r in rows:
            fh.write("%-40s cycles=%-10d stall=%-10d miss=%.4f batch_miss=%.4f "
                     "acc=%.3f cov=%.3f\n"
                     % (r.scenario, r.total_cycles, r.stall_cycles,
                        r.overall_miss_rate, r.per_batch_miss_rate,
                        r.accuracy, r.coverage))
    paths.append(summary_path)
    return paths


# ---------------------------------------------------------------------------
# Config file parsing
# ---------------------------------------------------------------------------

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _get(parser, section, key, cast, default, errors: list):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    try:
        if cast is bool:
            return _BOOL[raw.lower()]
        return cast(raw)
    except (KeyError, ValueError):
        errors.append("%s.%s: cannot parse %r" % (section, key, raw))
        return default


def parse_config(path: str) -> ExperimentConfig:
    """Load an experiment config; raises ConfigError naming bad fields."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError("cannot read config file %s" % path)
    errors: list = []

    mem = MemoryParams()
    for f in ("l1_kib", "l2_kib", "line_bytes", "ways_l1", "ways_l2", "nsb_kib",
              "nsb_ways", "mshr_entries", "dram_latency", "dram_bw",
              "l1_hit", "l2_hit", "nsb_hit"):
        setattr(mem, f, _get(parser, "memory", f, int, getattr(mem, f), errors))

    npu = NpuConfig(
        vector_width=_get(parser, "npu", "vector_width", int, 16, errors),
        exec_mode=_get(parser, "npu", "exec_mode", str, "inorder", errors),
        element_bits=_get(parser, "npu", "element_bits", int, 32, errors),
        rob_entries=_get(parser, "npu", "rob_entries", int, 4, errors),
        sparse_unit_latency=_get(parser, "npu", "sparse_unit_latency", int, 2, errors),
    )

    pf = PrefetcherConfig(
        kind=_get(parser, "prefetcher", "kind", str, "none", errors),
        degree=_get(parser, "prefetcher", "degree", int, 4, errors),
        confidence_threshold=_get(parser, "prefetcher", "confidence_threshold",
                                  int, 2, errors),
        nvr_fuzzy_overfetch=_get(parser, "prefetcher", "nvr_fuzzy_overfetch",
                                 bool, True, errors),
        nsb_enabled=_get(parser, "prefetcher", "nsb_enabled", bool, False, errors),
    )

    workloads: list = []
    if parser.has_option("experiment", "workloads"):
        names = [w.strip() for w in parser.get("experiment", "workloads").split(",") if w.strip()]
        for nm in names:
            if nm not in PRESET_NAMES:
                errors.append("experiment.workloads: unknown preset %r" % nm)
        workloads = names
    elif parser.has_section("workload"):
        if parser.has_option("workload", "preset"):
            nm = parser.get("workload", "preset").strip()
            if nm not in PRESET_NAMES:
                errors.append("workload.preset: unknown preset %r" % nm)
            else:
                workloads = [nm]
        else:
            try:
                workloads = [_workload_from_section(parser, errors)]
            except ConfigError as exc:
                errors.append(str(exc))
    if not workloads:
        workloads = list(PRESET_NAMES)

    kinds = [pf.kind]
    if parser.has_option("experiment", "prefetchers"):
        kinds = [k.strip() for k in parser.get("experiment", "prefetchers").split(",") if k.strip()]

    if errors:
        raise ConfigError("; ".join(errors))
    try:
        return ExperimentConfig(
            workloads=workloads, memory=mem, npu=npu, prefetcher=pf,
            prefetchers=kinds,
            repeats=_get(parser, "experiment", "repeats", int, 1, errors),
            seed=_get(parser, "experiment", "seed", int, 1, errors),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _workload_from_section(parser, errors: list) -> WorkloadSpec:
    arch = _get(parser, "workload", "archetype", str, "", errors)
    if arch not in ("spmm_csr", "topk_shuffle", "moe_routing"):
        raise ConfigError("workload.archetype: unknown archetype %r" % arch)
    dims = tuple(int(x) for x in
                 parser.get("workload", "dims", fallback="64,256,16").split(","))
    if len(dims) != 3:
        raise ConfigError("workload.dims: expected three comma-separated sizes")
    return WorkloadSpec(
        archetype=arch, dims=dims,
        density_w=_get(parser, "workload", "density_w", float, 0.1, errors),
        density_ia=_get(parser, "workload", "density_ia", float, 1.0, errors),
        correlation_rho=_get(parser, "workload", "correlation_rho", float, 0.0, errors),
        topk_k=_get(parser, "workload", "topk_k", int, 0, errors),
        n_experts=_get(parser, "workload", "n_experts", int, 0, errors),
        moe_skew=_get(parser, "workload", "moe_skew", float, 0.0, errors),
        element_bits=_get(parser, "workload", "element_bits", int, 32, errors),
        seed=_get(parser, "workload", "seed", int, 0, errors),
        name=arch,
    )
