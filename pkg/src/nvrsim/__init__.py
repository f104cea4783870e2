"""nvrsim: trace-driven sparse-workload NPU simulator with pluggable
prefetchers, paired with an analytic performance model.

Subsystems:
  workload  - sparse structures, trace archetypes and the eight presets
  analytic  - closed-form workload/time model plus Monte Carlo oracles
  memory    - NSB/L1/L2 caches, MSHR file, DRAM latency/bandwidth model
  npu       - in-order / ideal-OoO vector execution with batch-stall semantics
  prefetch  - stream / imp / dvr / nvr engines behind one snoop contract
  harness   - experiment configs, sweeps, metrics and report emission
"""

from .workload import (AddressLayout, CsrMatrix, MemoryImage, SparseMask, Trace,
                       TraceEvent, WorkloadSpec, build_trace, default_layout,
                       gen_moe_trace, gen_spmm_trace, gen_topk_shuffle_trace,
                       preset_workload, sample_bernoulli_mask, to_csr,
                       PRESET_NAMES)
from .analytic import (LayerSparsitySpec, MachineModel, TilingConstraints,
                       TimeEstimate, WorkloadEstimate, bottleneck_analysis,
                       estimate_alignment_redundancy, estimate_ideal_workload,
                       estimate_time, estimate_workload, mc_both_nonzero,
                       mc_workload_counts, optimize_tiling, prob_both_nonzero,
                       row_sparsity_distribution)
from .memory import (CacheConfig, DramConfig, MemRequest, MemoryHierarchy,
                     NsbConfig, bandwidth_ledger, reset_and_configure)
from .npu import (NpuConfig, SimReport, SparseUnit, execute, idle_windows,
                  sparse_unit_execute)
from .prefetch import (EngineContext, PrefetcherConfig, PrefetchStats,
                       SnoopEvent, hardware_overhead, make_engine, sd_predict,
                       scd_predict, lbd_bound, vmig_generate)
from .harness import (ExperimentConfig, MetricsRow, compute_accuracy_coverage,
                      emit_reports, run_experiment, sensitivity_sweep)

__version__ = "0.1.0"
