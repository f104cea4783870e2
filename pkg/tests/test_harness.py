import os

import pytest

from nvrsim.harness import (ConfigError, ExperimentConfig, MemoryParams,
                            MetricsRow, compute_accuracy_coverage, emit_reports,
                            parse_config, resolve_workload, run_experiment,
                            run_simulation, sensitivity_sweep)
from nvrsim.npu import NpuConfig
from nvrsim.prefetch import PrefetcherConfig, PrefetchStats


BASE_CONFIG = """
[memory]
l1_kib = 4
l2_kib = 32
nsb_kib = 16
mshr_entries = 64
dram_latency = 120
dram_bw = 32

[npu]
vector_width = 16
exec_mode = inorder

[prefetcher]
kind = nvr
nsb_enabled = true

[experiment]
seed = 1
workloads = GCN,DS
prefetchers = none,nvr
"""


def write_config(tmp_path, text=BASE_CONFIG, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_config_round_trip(tmp_path):
    cfg = parse_config(write_config(tmp_path))
    assert cfg.memory.l2_kib == 32
    assert cfg.npu.vector_width == 16
    assert cfg.prefetcher.kind == "nvr"
    assert cfg.prefetcher.nsb_enabled is True
    assert cfg.workloads == ["GCN", "DS"]
    assert cfg.prefetchers == ["none", "nvr"]


def test_parse_config_field_level_errors(tmp_path):
    bad = BASE_CONFIG.replace("l2_kib = 32", "l2_kib = many")
    with pytest.raises(ConfigError) as err:
        parse_config(write_config(tmp_path, bad))
    assert "memory.l2_kib" in str(err.value)


def test_parse_config_unknown_preset(tmp_path):
    bad = BASE_CONFIG.replace("GCN,DS", "GCN,WAT")
    with pytest.raises(ConfigError) as err:
        parse_config(write_config(tmp_path, bad))
    assert "WAT" in str(err.value)


def test_parse_config_explicit_workload_section(tmp_path):
    text = """
[workload]
archetype = spmm_csr
dims = 16,32,16
density_w = 0.3
seed = 4
"""
    cfg = parse_config(write_config(tmp_path, text))
    assert cfg.workloads[0].archetype == "spmm_csr"
    assert cfg.workloads[0].dims == (16, 32, 16)


def test_accuracy_coverage_conventions():
    stats = PrefetchStats(issued=100, useful=90, covered_misses=150, baseline_misses=200)
    acc, cov = compute_accuracy_coverage(stats)
    assert acc == pytest.approx(0.9)
    assert cov == pytest.approx(0.75)
    empty = PrefetchStats()
    assert compute_accuracy_coverage(empty) == (1.0, 1.0)


def test_coverage_bookkeeping_identity():
    mem = MemoryParams()
    spec = resolve_workload("GCN", 1, 0)
    base = run_simulation(spec, mem, NpuConfig(), PrefetcherConfig(kind="none"))
    pref = run_simulation(spec, mem, NpuConfig(),
                          PrefetcherConfig(kind="nvr", nsb_enabled=True))
    covered = base.demand_misses - pref.demand_misses
    assert base.demand_misses - covered == pref.demand_misses


def test_run_experiment_rows_and_determinism():
    cfg = ExperimentConfig(workloads=["GCN"], prefetchers=["none", "nvr"],
                           prefetcher=PrefetcherConfig(kind="nvr", nsb_enabled=True),
                           seed=3)
    rows1, _ = run_experiment(cfg)
    rows2, _ = run_experiment(cfg)
    assert len(rows1) == 2
    assert rows1 == rows2


def test_run_experiment_sweep_completeness():
    cfg = ExperimentConfig(workloads=["H2O"], prefetchers=["nvr"],
                           prefetcher=PrefetcherConfig(kind="nvr", nsb_enabled=True),
                           sweep={"l2_kib": [16, 32], "nsb_kib": [8, 16]})
    rows, _ = run_experiment(cfg)
    assert len(rows) == 4  # cartesian product of the axes
    assert len({r.scenario for r in rows}) == 4


def test_rows_satisfy_rate_invariants():
    cfg = ExperimentConfig(workloads=["MK"], prefetchers=["none", "stream"],
                           prefetcher=PrefetcherConfig(kind="stream"))
    rows, _ = run_experiment(cfg)
    for r in rows:
        assert 0.0 <= r.overall_miss_rate <= 1.0
        assert 0.0 <= r.coverage <= 1.0
        assert r.per_batch_miss_rate >= r.overall_miss_rate
        assert r.perf_per_area > 0


def test_emit_reports_files_and_stability(tmp_path):
    cfg = ExperimentConfig(workloads=["H2O"], prefetchers=["none", "nvr"],
                           prefetcher=PrefetcherConfig(kind="nvr", nsb_enabled=True))
    rows, _ = run_experiment(cfg)
    out1 = tmp_path / "out1"
    out2 = tmp_path / "out2"
    paths1 = emit_reports(rows, str(out1), cfg)
    rows2, _ = run_experiment(cfg)
    emit_reports(rows2, str(out2), cfg)
    names = [os.path.basename(p) for p in paths1]
    assert names == ["metrics.csv", "roofline.csv", "summary.txt"]
    for name in names:
        a = (out1 / name).read_bytes()
        b = (out2 / name).read_bytes()
        assert a == b
    header = (out1 / "metrics.csv").read_text().splitlines()[0]
    assert header == ("scenario,total_cycles,base_cycles,stall_cycles,"
                      "overall_miss_rate,per_batch_miss_rate,accuracy,coverage,"
                      "offchip_bytes,prefetch_bytes,perf_per_area")


def test_emit_reports_single_row(tmp_path):
    row = MetricsRow("x", 10, 5, 5, 0.1, 0.2, 1.0, 1.0, 100, 0, 1e-3)
    paths = emit_reports([row], str(tmp_path / "o"))
    lines = open(paths[0]).read().splitlines()
    assert len(lines) == 2


def test_emit_reports_rejects_empty(tmp_path):
    with pytest.raises(ConfigError):
        emit_reports([], str(tmp_path / "o"))


def test_sensitivity_single_cell():
    cfg = ExperimentConfig(workloads=["DS"],
                           prefetcher=PrefetcherConfig(kind="nvr", nsb_enabled=True))
    rows, best, analysis = sensitivity_sweep(cfg, [16], [32])
    assert len(rows) == 1
    assert best is rows[0]
    assert analysis == {}


def test_l2_scaling_non_increases_misses():
    mem_small = MemoryParams(l2_kib=16)
    mem_big = MemoryParams(l2_kib=32)
    spec = resolve_workload("GCN", 1, 0)
    small = run_simulation(spec, mem_small, NpuConfig(), PrefetcherConfig(kind="none"))
    big = run_simulation(spec, mem_big, NpuConfig(), PrefetcherConfig(kind="none"))
    assert big.demand_misses <= small.demand_misses


def test_preset_suite_forty_rows_nvr_never_worse():
    from nvrsim.workload import PRESET_NAMES
    cfg = ExperimentConfig(workloads=list(PRESET_NAMES),
                           prefetchers=["none", "stream", "imp", "dvr", "nvr"],
                           prefetcher=PrefetcherConfig(kind="nvr", nsb_enabled=True),
                           seed=1)
    rows, _ = run_experiment(cfg)
    assert len(rows) == 40
    stalls = {r.scenario: r.stall_cycles for r in rows}
    for name in PRESET_NAMES:
        assert stalls["%s/nvr" % name] <= stalls["%s/none" % name]


def test_element_bits_variants_run():
    from dataclasses import replace as dreplace
    mem = MemoryParams()
    for bits in (8, 16, 32):
        spec = dreplace(resolve_workload("GCN", 1, 0), element_bits=bits)
        rep = run_simulation(spec, mem, NpuConfig(element_bits=bits),
                             PrefetcherConfig(kind="nvr", nsb_enabled=True))
        assert rep.total_cycles > 0
