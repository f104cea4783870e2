#!/usr/bin/env python3
"""The analytic side: expected multiply counts under correlated sparsity,
alignment and tiling redundancy, and the compute/IO time split -- each closed
form checked against its Monte Carlo or exhaustive oracle.

Run:  python demos/02_workload_model.py
"""

from nvrsim.analytic import (LayerSparsitySpec, MachineModel, TilingConstraints,
                             bottleneck_analysis, estimate_alignment_redundancy,
                             estimate_ideal_workload, estimate_time,
                             estimate_workload, mc_both_nonzero,
                             mc_workload_counts, optimize_tiling,
                             prob_both_nonzero, roofline_curve,
                             row_sparsity_distribution)
from nvrsim.workload import sample_bernoulli_mask

print("=" * 70)
print("1. Row sparsity is approximately Gaussian")
print("=" * 70)
mean, var = row_sparsity_distribution(k=200, s=0.1)
print("k=200, s=0.1 -> mean %.1f variance %.1f" % (mean, var))

print()
print("=" * 70)
print("2. Correlated non-zero overlap (Gaussian copula)")
print("=" * 70)
for rho in (-0.8, 0.0, 0.5, 1.0):
    p = prob_both_nonzero(0.4, 0.6, rho)
    print("P(both nonzero | s_ia=0.4, s_w=0.6, rho=%+.1f) = %.4f" % (rho, p))
est, se = mc_both_nonzero(0.4, 0.6, 0.5, trials=500_000, seed=1)
print("Monte Carlo check at rho=0.5: %.4f +/- %.4f" % (est, se))

print()
print("=" * 70)
print("3. Ideal workload and alignment redundancy vs mask sampling")
print("=" * 70)
spec = LayerSparsitySpec.uniform(16, 16, 16, s_w=0.3, s_ia=0.7, rho=0.4)
ideal = estimate_ideal_workload(spec)
align = estimate_alignment_redundancy(spec)
mc_ideal, mc_align = mc_workload_counts(spec, trials=20_000, seed=3)
print("closed form: W_ideal=%.1f  W_align=%.1f" % (ideal, align))
print("mask MC    : W_ideal=%.1f  W_align=%.1f" % (mc_ideal, mc_align))
print("relative gaps: %.4f / %.4f" % (abs(ideal - mc_ideal) / mc_ideal,
                                      abs(align - mc_align) / mc_align))

print()
print("=" * 70)
print("4. Structural tiling redundancy")
print("=" * 70)
mask = sample_bernoulli_mask(8, 8, 0.3, seed=12)
tiled, w_const, objective = optimize_tiling(mask, TilingConstraints.row_aligned(4))
print("8x8 mask, 1x4 row tiles: kept nonzeros %d -> %d (w_const=%d, J=%.0f)"
      % (mask.popcount(), tiled.popcount(), w_const, objective))

print()
print("=" * 70)
print("5. Execution time split and roofline verdict")
print("=" * 70)
machine = MachineModel(mac_rate=256, bw=32, t_l1=10, t_l2=120,
                       miss_model="powerlaw")
est = estimate_workload(spec, w_const=w_const)
t = estimate_time(machine, est, {
    "mvin_bytes": 400_000, "mvout_bytes": 80_000,
    "features": {"accesses": 30_000, "footprint_bytes": 1 << 20,
                 "l1_capacity": 4096, "l2_capacity": 32768}})
verdict = bottleneck_analysis(t)
print("W_total=%.1f  t_comp=%.1f  t_io=%.1f -> bottleneck %s"
      % (est.w_total, t.t_comp, t.t_io, t.bottleneck))
print("operational point: intensity=%.3f ops/byte, attained=%.3f ops/cycle"
      % t.roofline_point)
print("literal min-of-times figure: %.1f; wall-clock bound: %.1f"
      % (verdict["speedup_literal"], verdict["bound_latency"]))
print()
print("machine roofline (intensity -> attainable):")
for x, attained, bound in roofline_curve(machine, [0.5, 2, 8, 32]):
    print("  %6.2f ops/byte -> %7.2f ops/cycle (%s-bound)" % (x, attained, bound))
