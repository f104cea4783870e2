import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from nvrsim.analytic import (
    LayerSparsitySpec, MachineModel, ModelError, TilingConstraints,
    TimeEstimate, WorkloadEstimate, bottleneck_analysis,
    estimate_alignment_redundancy, estimate_ideal_workload, estimate_time,
    estimate_workload, mc_both_nonzero, mc_workload_counts, optimize_tiling,
    powerlaw_miss_model, prob_both_nonzero, roofline_curve,
    row_sparsity_distribution)
from nvrsim.workload import sample_bernoulli_mask


# -- row sparsity distribution ----------------------------------------------

def test_row_distribution_direct_substitution():
    assert row_sparsity_distribution(100, 0.5) == (50.0, 25.0)


def test_row_distribution_dense_degenerate():
    mean, var = row_sparsity_distribution(64, 1.0)
    assert mean == 64 and var == 0


def test_row_distribution_matches_empirical():
    k, s = 200, 0.1
    rng = np.random.default_rng(11)
    counts = (rng.random((100_000, k)) < s).sum(axis=1)
    mean, var = row_sparsity_distribution(k, s)
    se_mean = math.sqrt(var / 100_000)
    assert abs(counts.mean() - mean) < 3 * se_mean
    # variance of the sample variance for a binomial is close to 2 var^2 / n
    assert abs(counts.var() - var) < 3 * math.sqrt(2 * var * var / 100_000 + 1)


def test_row_distribution_rejects_bad_ratio():
    with pytest.raises(ModelError):
        row_sparsity_distribution(10, 1.2)


# -- copula orthant probability ----------------------------------------------

def test_independence_product_exact():
    assert prob_both_nonzero(0.3, 0.5, 0.0) == pytest.approx(0.15, abs=0)


def test_comonotone_limit():
    assert prob_both_nonzero(0.4, 0.4, 1.0) == pytest.approx(0.4)
    assert prob_both_nonzero(0.2, 0.7, 1.0) == pytest.approx(0.2)


def test_countermonotone_limit():
    assert prob_both_nonzero(0.3, 0.4, -1.0) == pytest.approx(0.0)
    assert prob_both_nonzero(0.8, 0.7, -1.0) == pytest.approx(0.5)


def test_marginal_edges():
    assert prob_both_nonzero(0.0, 0.5, 0.3) == 0.0
    assert prob_both_nonzero(1.0, 0.5, -0.6) == pytest.approx(0.5)
    assert prob_both_nonzero(1.0, 1.0, 0.9) == pytest.approx(1.0)


def test_orthant_matches_scipy_grid():
    for s1 in (0.1, 0.4, 0.75):
        for s2 in (0.2, 0.5, 0.9):
            for rho in (-0.9, -0.5, 0.25, 0.6, 0.95):
                q1, q2 = norm.ppf(1 - s1), norm.ppf(1 - s2)
                mvn = multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]])
                expect = 1 - norm.cdf(q1) - norm.cdf(q2) + mvn.cdf([q1, q2])
                got = prob_both_nonzero(s1, s2, rho)
                assert got == pytest.approx(expect, abs=5e-7)


def test_orthant_matches_monte_carlo():
    got = prob_both_nonzero(0.4, 0.6, 0.5)
    est, se = mc_both_nonzero(0.4, 0.6, 0.5, trials=1_000_000, seed=3)
    assert abs(got - est) < 3 * se


def test_orthant_monotone_in_rho():
    rhos = np.linspace(-1, 1, 41)
    vals = [prob_both_nonzero(0.35, 0.55, r) for r in rhos]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_orthant_vectorised_matches_scalar():
    s1 = np.array([0.1, 0.5, 0.9])
    s2 = np.array([0.3, 0.3, 0.3])
    out = prob_both_nonzero(s1, s2, 0.4)
    for i in range(3):
        assert out[i] == pytest.approx(prob_both_nonzero(s1[i], s2[i], 0.4))


def test_orthant_rejects_bad_inputs():
    with pytest.raises(ModelError):
        prob_both_nonzero(0.5, 0.5, 1.5)
    with pytest.raises(ModelError):
        prob_both_nonzero(-0.1, 0.5, 0.0)


# -- ideal workload and alignment redundancy ---------------------------------

def test_dense_spec_gives_mnk():
    spec = LayerSparsitySpec.uniform(5, 7, 3, 1.0, 1.0, 0.7)
    assert estimate_ideal_workload(spec) == pytest.approx(5 * 7 * 3)


def test_independence_closed_form():
    spec = LayerSparsitySpec.uniform(8, 8, 8, 0.5, 0.5, 0.0)
    assert estimate_ideal_workload(spec) == pytest.approx(128.0, rel=1e-12)


def test_rho_zero_product_form_tight():
    spec = LayerSparsitySpec.uniform(16, 16, 16, 0.3, 0.7, 0.0)
    expect = 16 ** 3 * 0.3 * 0.7
    assert estimate_ideal_workload(spec) == pytest.approx(expect, rel=1e-9)


def test_ideal_workload_matches_mask_sampling():
    spec = LayerSparsitySpec.uniform(16, 16, 16, 0.3, 0.7, 0.4)
    closed = estimate_ideal_workload(spec)
    mc, _ = mc_workload_counts(spec, trials=20_000, seed=5)
    assert abs(closed - mc) / closed < 0.01


def test_alignment_zero_when_weights_dense():
    spec = LayerSparsitySpec.uniform(6, 6, 6, 1.0, 0.5, 0.2)
    assert estimate_alignment_redundancy(spec) == pytest.approx(0.0, abs=1e-9)


def test_alignment_independence_half():
    # dense IA against half-dense W at rho = 0: half the pairs are unmatched
    spec = LayerSparsitySpec.uniform(4, 8, 2, 0.5, 1.0, 0.0)
    pairs = 4 * 8 * 2
    assert estimate_alignment_redundancy(spec) == pytest.approx(0.5 * pairs, rel=1e-9)


def test_alignment_matches_mask_sampling():
    spec = LayerSparsitySpec.uniform(16, 16, 16, 0.4, 0.6, 0.2)
    closed = estimate_alignment_redundancy(spec)
    _, mc = mc_workload_counts(spec, trials=20_000, seed=6)
    assert abs(closed - mc) / closed < 0.01


def test_ideal_monotone_in_density():
    lo = LayerSparsitySpec.uniform(8, 8, 8, 0.3, 0.5, 0.25)
    hi = LayerSparsitySpec.uniform(8, 8, 8, 0.4, 0.5, 0.25)
    assert estimate_ideal_workload(hi) >= estimate_ideal_workload(lo)


def test_ideal_bounds():
    spec = LayerSparsitySpec.uniform(8, 8, 8, 0.6, 0.8, -0.5)
    w = estimate_ideal_workload(spec)
    assert 0.0 <= w <= 8 ** 3


def test_per_row_ratios_respected():
    m = k = n = 8
    rng = np.random.default_rng(0)
    spec = LayerSparsitySpec(m, k, n,
                             rng.uniform(0.2, 0.9, m), rng.uniform(0.2, 0.9, k),
                             rng.uniform(0.2, 0.9, k), rng.uniform(0.2, 0.9, n),
                             0.0)
    closed = estimate_ideal_workload(spec)
    pw = spec.p_w()
    pia = spec.p_ia()
    direct = sum(pw[i, l] * pia[l, j]
                 for i in range(m) for l in range(k) for j in range(n))
    assert closed == pytest.approx(direct, rel=1e-9)


# -- tiling -------------------------------------------------------------------

def test_tiling_dense_mask_no_redundancy():
    mask = sample_bernoulli_mask(8, 8, 1.0, 1)
    _, w_const, _ = optimize_tiling(mask, TilingConstraints(1, 4))
    assert w_const == 0


def test_tiling_empty_mask_empty_output():
    mask = sample_bernoulli_mask(8, 8, 0.0, 1)
    tiled, w_const, objective = optimize_tiling(mask, TilingConstraints(2, 2))
    assert w_const == 0
    assert tiled.popcount() == 0
    assert objective == 0


def test_tiling_matches_exhaustive_scan():
    mask = sample_bernoulli_mask(8, 8, 0.3, 12)
    tiled, w_const, _ = optimize_tiling(mask, TilingConstraints.row_aligned(4))
    # brute force: count zeros inside kept 1x4 tiles
    expect = 0
    for r in range(8):
        for c0 in range(0, 8, 4):
            tile = mask.bits[r, c0:c0 + 4]
            if tile.any():
                expect += int((~tile).sum())
    assert w_const == expect
    assert tiled.popcount() - mask.popcount() == w_const


def test_tiling_superset_and_padding():
    mask = sample_bernoulli_mask(5, 6, 0.5, 3)
    tiled, w_const, _ = optimize_tiling(mask, TilingConstraints(2, 4))
    assert tiled.rows == 6 and tiled.cols == 8
    assert np.all(tiled.bits[:5, :6] | ~mask.bits)  # support superset
    assert w_const == tiled.popcount() - mask.popcount()


def test_tiling_column_aligned():
    mask = sample_bernoulli_mask(8, 8, 0.2, 5)
    tiled, w_const, _ = optimize_tiling(mask, TilingConstraints.column_aligned(4))
    expect = 0
    for c in range(8):
        for r0 in range(0, 8, 4):
            tile = mask.bits[r0:r0 + 4, c]
            if tile.any():
                expect += int((~tile).sum())
    assert w_const == expect


# -- execution time and bottleneck -------------------------------------------

def test_tcomp_is_division():
    machine = MachineModel(mac_rate=10.0, bw=8.0)
    est = WorkloadEstimate(1000.0, 0.0, 0.0)
    t = estimate_time(machine, est, {})
    assert t.t_comp == pytest.approx(100.0)


def test_tio_pure_transfer():
    machine = MachineModel(mac_rate=10.0, bw=8.0, l1_enabled=False, l2_enabled=False,
                           prefetch_enabled=False)
    est = WorkloadEstimate(10.0, 0.0, 0.0)
    t = estimate_time(machine, est, {"mvin_bytes": 500, "mvout_bytes": 300})
    assert t.t_io == pytest.approx(100.0)


def test_tio_with_miss_penalties_and_prefetch():
    machine = MachineModel(mac_rate=10.0, bw=10.0, t_l1=10, t_l2=100,
                           prefetch_enabled=True, miss_model="measured")
    est = WorkloadEstimate(100.0, 0.0, 0.0)
    t = estimate_time(machine, est, {
        "mvin_bytes": 100, "mvout_bytes": 0, "prefetch_bytes": 50,
        "features": {"l1_misses": 3, "l2_misses": 2}})
    assert t.t_io == pytest.approx(10 + 5 + 30 + 200)


def test_powerlaw_model_zero_inside_capacity():
    assert powerlaw_miss_model(2, {"accesses": 100, "footprint_bytes": 100,
                                   "l2_capacity": 200}) == 0.0
    big = powerlaw_miss_model(2, {"accesses": 100, "footprint_bytes": 1600,
                                  "l2_capacity": 200, "alpha": 0.5})
    assert 0 < big < 100


def test_bottleneck_io_side():
    t = TimeEstimate(100, 400, 0, 0, 0, "IO", (1.0, 1.0))
    verdict = bottleneck_analysis(t)
    assert verdict["bottleneck"] == "IO"
    assert verdict["io_bound"]
    assert verdict["speedup_literal"] == 100
    assert verdict["bound_latency"] == 400


def test_bottleneck_tie_goes_to_compute():
    machine = MachineModel(mac_rate=1.0, bw=1.0, l1_enabled=False, l2_enabled=False)
    est = WorkloadEstimate(100.0, 0.0, 0.0)
    t = estimate_time(machine, est, {"mvin_bytes": 100})
    assert t.t_comp == t.t_io
    assert t.bottleneck == "Compute"


def test_bottleneck_compute_side():
    t = TimeEstimate(400, 100, 0, 0, 0, "Compute", (1.0, 1.0))
    verdict = bottleneck_analysis(t)
    assert verdict["bottleneck"] == "Compute"
    assert verdict["speedup_literal"] == 100


def test_roofline_curve_knee():
    machine = MachineModel(mac_rate=16.0, bw=4.0)
    rows = roofline_curve(machine, [1.0, 4.0, 16.0])
    assert rows[0] == (1.0, 4.0, "IO")
    assert rows[1] == (4.0, 16.0, "Compute")
    assert rows[2] == (16.0, 16.0, "Compute")


def test_estimate_workload_totals():
    spec = LayerSparsitySpec.uniform(8, 8, 8, 0.5, 0.5, 0.0)
    est = estimate_workload(spec, w_const=10.0)
    assert est.w_total == pytest.approx(est.w_ideal + est.w_align + 10.0)


def test_tio_matches_simulator_on_replayed_trace():
    # simulator-as-oracle: measured miss counts feed the analytic t_io, which
    # must land within 10% of the summed batch service latencies for a trace
    # whose misses cannot overlap (single-lane loads)
    import random
    import nvrsim.memory as memory
    from nvrsim.memory import CacheConfig, DramConfig, MemoryHierarchy
    from nvrsim.npu import NpuConfig, execute
    from nvrsim.workload import (LOAD, REGION_IA, MemoryImage, Trace,
                                 TraceEvent, WorkloadSpec, default_layout)

    rnd = random.Random(9)
    events = [TraceEvent(0x500, LOAD, (0x4000_0000 + rnd.randrange(1 << 14) * 64,),
                         1, 0, i, 0, False, REGION_IA) for i in range(4000)]
    trace = Trace(events, WorkloadSpec("spmm_csr", (1, 1, 1), seed=0),
                  default_layout(), MemoryImage(), {})
    hier = MemoryHierarchy(CacheConfig(4 * 1024, 64, 4, 1, 64),
                           CacheConfig(32 * 1024, 64, 8, 10, 64),
                           None, DramConfig(400, 64), 64)
    io_cycles = [0]
    orig = memory.MemoryHierarchy.demand_batch

    def spy(self, addresses, now):
        ready, missed, lanes = orig(self, addresses, now)
        io_cycles[0] += ready - now
        return ready, missed, lanes

    memory.MemoryHierarchy.demand_batch = spy
    try:
        rep = execute(trace, hier, None, NpuConfig())
    finally:
        memory.MemoryHierarchy.demand_batch = orig

    led = rep.ledger
    features = {
        "l1_misses": led["l1"]["demand_lookups"] - led["l1"]["demand_hits"],
        "l2_misses": led["l2"]["demand_lookups"] - led["l2"]["demand_hits"],
    }
    machine = MachineModel(mac_rate=16, bw=64, t_l1=10, t_l2=400,
                           miss_model="measured")
    t = estimate_time(machine, WorkloadEstimate(1000, 0, 0), {
        "mvin_bytes": led["dram"]["demand_bytes"], "features": features})
    assert abs(t.t_io - io_cycles[0]) / io_cycles[0] < 0.10
