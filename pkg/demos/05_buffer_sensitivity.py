#!/usr/bin/env python3
"""Where to spend silicon: growing the small in-NPU speculative buffer versus
growing the shared L2, at matched area increments, plus the prefetcher's own
storage bill.

Run:  python demos/05_buffer_sensitivity.py
"""

from nvrsim.harness import ExperimentConfig, sensitivity_sweep
from nvrsim.prefetch import PrefetcherConfig, format_overhead_table

print("=" * 70)
print("1. Buffer-vs-L2 sensitivity on the shuffle preset (runahead engine)")
print("=" * 70)
cfg = ExperimentConfig(workloads=["DS"], prefetchers=["nvr"], seed=1,
                       prefetcher=PrefetcherConfig(kind="nvr", nsb_enabled=True))
rows, best, analysis = sensitivity_sweep(cfg, nsb_values=[0, 8, 16, 32],
                                         l2_values=[32, 48, 64])
print("%-34s %12s %14s" % ("scenario", "cycles", "perf/area"))
for r in rows:
    print("%-34s %12d %14.3e" % (r.scenario, r.total_cycles, r.perf_per_area))
print()
print("best cell:", best.scenario)
if analysis:
    print("matched +%d KiB increments: buffer gain %.3e vs L2 gain %.3e"
          % (analysis["area_delta_kib"], analysis["gain_nsb"], analysis["gain_l2"]))
    ratio = analysis["ratio"]
    print("marginal-gain ratio: %s" % ("unbounded (L2 gain <= 0)"
                                       if ratio == float("inf") else "%.1fx" % ratio))

print()
print("=" * 70)
print("2. Prefetcher storage overhead at 16 parallel entries")
print("=" * 70)
print(format_overhead_table(16))
