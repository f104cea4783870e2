"""Sparse structures and deterministic NPU memory-access traces.

Three archetype generators cover the irregular access classes seen in sparse
DNN inference:

  * spmm_csr     - CSR sparse-weight x dense-activation product. Sequential
                   rowptr/weight/col-index streams feeding an indirect gather
                   of input-activation rows.
  * topk_shuffle - per-step top-k selection over a large vector table,
                   producing long-stride gathers of contiguous vectors.
  * moe_routing  - token stream where a routed expert id selects a disjoint
                   weight region; loop bounds vary per expert.

Traces are pure functions of (WorkloadSpec, seed): the splitmix64 generator in
``nvrsim.rng`` makes them byte-identical across platforms. Events carry only
addresses and control metadata; element values for index-carrying regions live
in a side MemoryImage so simulators can model value snooping without the trace
format growing data payloads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import SplitMix64, derive_seed, uniform_floats

# Event kinds
LOAD = "load"
STORE = "store"
COMPUTE = "compute"
BRANCH = "branch"

# Address regions
REGION_W = "W"
REGION_IA = "IA"
REGION_OA = "OA"
REGION_ROWPTR = "RowPtr"
REGION_COLIDX = "ColIdx"
REGION_OTHER = "Other"
REGIONS = (REGION_W, REGION_IA, REGION_OA, REGION_ROWPTR, REGION_COLIDX, REGION_OTHER)

ADDRESS_BITS = 48
ADDRESS_SPACE = 1 << ADDRESS_BITS

# Synthetic PCs: one per static source line, so prefetcher tables can key on
# them the way a hardware table keys on a 48-bit PC.
PC_ROW_BRANCH = 0x400
PC_TILE_BRANCH = 0x404
PC_INNER_BRANCH = 0x408
PC_LOAD_ROWPTR = 0x440
PC_LOAD_W = 0x444
PC_LOAD_COLIDX = 0x448
PC_LOAD_IA = 0x44C
PC_STORE_OA = 0x450
PC_COMPUTE = 0x454
PC_LOAD_IDXLIST = 0x460
PC_LOAD_KV = 0x464
PC_STEP_BRANCH = 0x468
PC_LOAD_ROUTE = 0x470
PC_LOAD_EXPERT_W = 0x474
PC_LOAD_TOKEN = 0x478
PC_TOKEN_BRANCH = 0x47C
PC_CHUNK_BRANCH = 0x480
PC_STORE_MOE_OA = 0x484


class WorkloadError(ValueError):
    """Invalid workload parameters or address layout."""


@dataclass(frozen=True)
class SparseMask:
    """Dense boolean grid sampled element-wise from a Bernoulli distribution."""

    rows: int
    cols: int
    bits: np.ndarray  # bool, shape (rows, cols)
    density_target: float
    seed: int

    def __post_init__(self):
        if self.bits.shape != (self.rows, self.cols):
            raise WorkloadError("mask bits must have exactly rows x cols entries")

    def popcount(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed sparse row encoding; drives indirect address streams."""

    rows: int
    cols: int
    rowptr: np.ndarray      # int64, length rows + 1
    col_indices: np.ndarray  # int64, length nnz
    values: np.ndarray       # float64, length nnz

    @property
    def nnz(self) -> int:
        return int(self.rowptr[-1])

    def validate(self) -> None:
        rp = self.rowptr
        if len(rp) != self.rows + 1 or rp[0] != 0 or rp[-1] != len(self.col_indices):
            raise WorkloadError("rowptr must run from 0 to nnz over rows+1 entries")
        if np.any(np.diff(rp) < 0):
            raise WorkloadError("rowptr must be non-decreasing")
        if len(self.col_indices) and (self.col_indices.min() < 0 or self.col_indices.max() >= self.cols):
            raise WorkloadError("column index out of range")
        for r in range(self.rows):
            seg = self.col_indices[rp[r]:rp[r + 1]]
            if len(seg) > 1 and np.any(np.diff(seg) <= 0):
                raise WorkloadError("col_indices must be strictly increasing within a row")

    def to_dense_support(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=bool)
        for r in range(self.rows):
            out[r, self.col_indices[self.rowptr[r]:self.rowptr[r + 1]]] = True
        return out


@dataclass(frozen=True)
class TraceEvent:
    """One NPU-visible event.

    Loads/stores carry exactly ``lanes`` byte addresses. Branch events carry
    the loop bound observed at that point in ``bound_observed``.
    """

    pc: int
    kind: str
    addresses: tuple
    lanes: int
    loop_level: int
    loop_iter: int
    bound_observed: int
    is_indirect: bool
    region: str

    def __post_init__(self):
        if self.kind in (LOAD, STORE):
            if self.lanes < 1 or len(self.addresses) != self.lanes:
                raise WorkloadError("loads/stores need lanes >= 1 and one address per lane")
        elif self.addresses:
            raise WorkloadError("compute/branch events carry no addresses")


@dataclass
class WorkloadSpec:
    """Parameters of one synthetic workload instance.

    dims meaning per archetype:
      spmm_csr:     (m, k, n)  W is m x k, IA is k x n
      topk_shuffle: (steps, n_vectors, dim)
      moe_routing:  (n_tokens, chunk_elems, token_slice_elems)
    """

    archetype: str
    dims: tuple
    density_w: float = 1.0
    density_ia: float = 1.0
    correlation_rho: float = 0.0
    topk_k: int = 0
    n_experts: int = 0
    moe_skew: float = 0.0          # tokens-per-expert distribution parameter
    routing_override: tuple = ()   # explicit token -> expert map (tests)
    element_bits: int = 32
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.element_bits not in (8, 16, 32):
            raise WorkloadError("element_bits must be one of 8, 16, 32")
        if self.archetype not in ("spmm_csr", "topk_shuffle", "moe_routing"):
            raise WorkloadError("unknown archetype %r" % (self.archetype,))

    @property
    def element_bytes(self) -> int:
        return self.element_bits // 8

    def spec_hash(self) -> str:
        key = repr((self.archetype, self.dims, round(self.density_w, 12),
                    round(self.density_ia, 12), round(self.correlation_rho, 12),
                    self.topk_k, self.n_experts, round(self.moe_skew, 12),
                    tuple(self.routing_override), self.element_bits, self.seed))
        return hashlib.sha1(key.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class AddressLayout:
    """Disjoint byte regions in a flat 48-bit space; bases 64-byte aligned."""

    regions: dict  # name -> (base, size)
    align: int = 64

    def validate(self) -> None:
        spans = []
        for name, (base, size) in self.regions.items():
            if name not in REGIONS:
                raise WorkloadError("unknown region %r" % (name,))
            if base % self.align:
                raise WorkloadError("region %s base not %d-byte aligned" % (name, self.align))
            if size <= 0 or base + size > ADDRESS_SPACE:
                raise WorkloadError("region %s outside 48-bit space" % (name,))
            spans.append((base, base + size, name))
        spans.sort()
        for (a0, a1, n0), (b0, b1, n1) in zip(spans, spans[1:]):
            if b0 < a1:
                raise WorkloadError("regions %s and %s overlap" % (n0, n1))

    def base(self, region: str) -> int:
        return self.regions[region][0]

    def span(self, region: str) -> tuple:
        base, size = self.regions[region]
        return base, base + size

    def region_of(self, addr: int) -> str:
        for name, (base, size) in self.regions.items():
            if base <= addr < base + size:
                return name
        return REGION_OTHER


_DEFAULT_BASES = {
    REGION_ROWPTR: 0x1000_0000,
    REGION_COLIDX: 0x2000_0000,
    REGION_W: 0x3000_0000,
    REGION_IA: 0x4000_0000,
    REGION_OA: 0x5000_0000,
    REGION_OTHER: 0x6000_0000,
}


def default_layout(sizes: dict | None = None) -> AddressLayout:
    """Layout with fixed well-separated bases; sizes default to 16 MiB each."""
    out = {}
    for name, base in _DEFAULT_BASES.items():
        size = (sizes or {}).get(name, 16 << 20)
        out[name] = (base, size)
    lay = AddressLayout(out)
    lay.validate()
    return lay


class MemoryImage:
    """Side table mapping element-aligned addresses to integer values.

    Holds the index-carrying arrays (rowptr, col_indices, routing tables) so a
    simulator can model hardware that observes loaded values, without the
    trace format carrying data payloads.
    """

    def __init__(self):
        self._arrays = []  # (base, end, elem_bytes, np int array)

    def add_array(self, base: int, elem_bytes: int, values: np.ndarray) -> None:
        vals = np.asarray(values, dtype=np.int64)
        self._arrays.append((base, base + elem_bytes * len(vals), elem_bytes, vals))
        self._arrays.sort()

    def read(self, addr: int):
        """Value at element-aligned addr, or None if unmapped."""
        for base, end, eb, vals in self._arrays:
            if base <= addr < end:
                off = addr - base
                if off % eb:
                    return None
                return int(vals[off // eb])
        return None

    def spans(self) -> list:
        return [(base, end) for base, end, _, _ in self._arrays]


@dataclass
class Trace:
    """Event sequence plus the side state a simulator needs to replay it."""

    events: list
    spec: WorkloadSpec
    layout: AddressLayout
    image: MemoryImage
    meta: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def __getitem__(self, i):
        return self.events[i]


# ---------------------------------------------------------------------------
# Sparse structure generation
# ---------------------------------------------------------------------------

def sample_bernoulli_mask(rows: int, cols: int, density: float, seed: int) -> SparseMask:
    """Each bit set independently with probability ``density``."""
    if rows < 1 or cols < 1:
        raise WorkloadError("mask dimensions must be >= 1")
    if not 0.0 <= density <= 1.0:
        raise WorkloadError("density must lie in [0, 1]")
    u = uniform_floats(seed, rows * cols)
    bits = (u < density).reshape(rows, cols)
    return SparseMask(rows, cols, bits, density, seed)


def to_csr(mask: SparseMask, value_seed: int) -> CsrMatrix:
    """CSR encoding of the mask support with deterministic nonzero values."""
    rows, cols = mask.rows, mask.cols
    counts = mask.bits.sum(axis=1)
    rowptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(counts, out=rowptr[1:])
    col_indices = np.nonzero(mask.bits)[1].astype(np.int64)
    # values in [1, 2): nonzero by construction
    values = 1.0 + uniform_floats(value_seed, int(rowptr[-1]))
    return CsrMatrix(rows, cols, rowptr, col_indices, values)


# ---------------------------------------------------------------------------
# Trace generators
# ---------------------------------------------------------------------------

def _batches(seq, width):
    for i in range(0, len(seq), width):
        yield i, seq[i:i + width]


def _require_region(layout, region, needed):
    base, size = layout.regions[region]
    if needed > size:
        raise WorkloadError("region %s too small: need %d bytes, have %d" % (region, needed, size))
    return base


def gen_spmm_trace(w: CsrMatrix, ia_cols: int, spec: WorkloadSpec,
                   layout: AddressLayout, vector_width: int = 16,
                   tile_width: int | None = None) -> Trace:
    """CSR SpMM trace: W selectively indexes IA rows.

    Per row and output tile: rowptr pair load, a bound-carrying branch, then
    the weight / column-index streams and the indirect IA gather in vector
    batches. Output tile width defaults to the vector width; the IA address
    for index j and tile column ``col`` is
    ``IA_base + (col_indices[j] * ia_cols + col) * element_bytes``.
    """
    layout.validate()
    w.validate()
    eb = spec.element_bytes
    tile_width = tile_width or vector_width
    n_tiles = (ia_cols + tile_width - 1) // tile_width

    rp_base = _require_region(layout, REGION_ROWPTR, 4 * (w.rows + 1))
    ci_base = _require_region(layout, REGION_COLIDX, 4 * max(w.nnz, 1))
    w_base = _require_region(layout, REGION_W, eb * max(w.nnz, 1))
    ia_base = _require_region(layout, REGION_IA, eb * w.cols * ia_cols)
    oa_base = _require_region(layout, REGION_OA, eb * w.rows * ia_cols)

    image = MemoryImage()
    image.add_array(rp_base, 4, w.rowptr)
    image.add_array(ci_base, 4, w.col_indices)

    events = []
    emit = events.append
    rowptr = w.rowptr
    colidx = w.col_indices
    for i in range(w.rows):
        lo, hi = int(rowptr[i]), int(rowptr[i + 1])
        nnz_i = hi - lo
        emit(TraceEvent(PC_ROW_BRANCH, BRANCH, (), 0, 2, i, w.rows, False, REGION_OTHER))
        for t in range(n_tiles):
            col = t * tile_width
            emit(TraceEvent(PC_TILE_BRANCH, BRANCH, (), 0, 1, t, n_tiles, False, REGION_OTHER))
            emit(TraceEvent(PC_LOAD_ROWPTR, LOAD,
                            (rp_base + 4 * i, rp_base + 4 * (i + 1)),
                            2, 1, i, 0, False, REGION_ROWPTR))
            emit(TraceEvent(PC_INNER_BRANCH, BRANCH, (), 0, 0, i, nnz_i, False, REGION_OTHER))
            for j0, chunk in _batches(colidx[lo:hi], vector_width):
                base_j = lo + j0
                lanes = len(chunk)
                emit(TraceEvent(PC_LOAD_W, LOAD,
                                tuple(w_base + eb * (base_j + l) for l in range(lanes)),
                                lanes, 0, base_j, 0, False, REGION_W))
                emit(TraceEvent(PC_LOAD_COLIDX, LOAD,
                                tuple(ci_base + 4 * (base_j + l) for l in range(lanes)),
                                lanes, 0, base_j, 0, False, REGION_COLIDX))
                emit(TraceEvent(PC_LOAD_IA, LOAD,
                                tuple(ia_base + eb * (int(c) * ia_cols + col) for c in chunk),
                                lanes, 0, base_j, 0, True, REGION_IA))
                emit(TraceEvent(PC_COMPUTE, COMPUTE, (), lanes, 0, base_j, 0, False, REGION_OTHER))
            if nnz_i:
                width = min(tile_width, ia_cols - col)
                emit(TraceEvent(PC_STORE_OA, STORE,
                                tuple(oa_base + eb * (i * ia_cols + col + c) for c in range(width)),
                                width, 1, i, 0, False, REGION_OA))
    meta = {
        "row_nnz": [int(rowptr[i + 1] - rowptr[i]) for i in range(w.rows)],
        "n_tiles": n_tiles,
        "rows": w.rows,
        "nnz": w.nnz,
        "indirect_shift": _log2_or_none(ia_cols * eb),
        "indirect_pairing": "per_lane",
    }
    return Trace(events, spec, layout, image, meta)


def _log2_or_none(v: int):
    return v.bit_length() - 1 if v > 0 and (v & (v - 1)) == 0 else None


def gen_topk_shuffle_trace(n_vectors: int, dim: int, k: int, spec: WorkloadSpec,
                           layout: AddressLayout, vector_width: int = 16) -> Trace:
    """Top-k shuffle trace: per step, k distinct vector ids gathered.

    The selected-index list is itself loaded (its values drive the gathers),
    then each selected vector is fetched as ``dim`` contiguous elements from
    the vector table. Compute events interleave with the gathers the way
    score math overlaps fetches on a real pipeline.
    """
    layout.validate()
    if k > n_vectors:
        raise WorkloadError("k must not exceed n_vectors")
    if k < 1 or n_vectors < 1 or dim < 1:
        raise WorkloadError("k, n_vectors and dim must be >= 1")
    steps = spec.dims[0]
    eb = spec.element_bytes

    idx_base = _require_region(layout, REGION_COLIDX, 4 * steps * k)
    kv_base = _require_region(layout, REGION_IA, eb * n_vectors * dim)
    oa_base = _require_region(layout, REGION_OA, eb * steps * dim)

    rng = SplitMix64(derive_seed(spec.seed, 0x70B0))
    all_ids = []
    events = []
    emit = events.append
    for s in range(steps):
        ids = rng.shuffle_prefix(n_vectors, k)
        all_ids.extend(ids)
        for j0, chunk in _batches(ids, vector_width):
            emit(TraceEvent(PC_LOAD_IDXLIST, LOAD,
                            tuple(idx_base + 4 * (s * k + j0 + l) for l in range(len(chunk))),
                            len(chunk), 1, s, 0, False, REGION_COLIDX))
        emit(TraceEvent(PC_STEP_BRANCH, BRANCH, (), 0, 0, s, k, False, REGION_OTHER))
        for j, v in enumerate(ids):
            emit(TraceEvent(PC_LOAD_KV, LOAD,
                            tuple(kv_base + eb * (v * dim + d) for d in range(dim)),
                            dim, 0, j, 0, True, REGION_IA))
            emit(TraceEvent(PC_COMPUTE, COMPUTE, (), dim, 0, j, 0, False, REGION_OTHER))
        emit(TraceEvent(PC_STORE_OA, STORE,
                        tuple(oa_base + eb * (s * dim + d) for d in range(dim)),
                        dim, 1, s, 0, False, REGION_OA))

    image = MemoryImage()
    image.add_array(idx_base, 4, np.asarray(all_ids, dtype=np.int64))
    meta = {
        "steps": steps,
        "k": k,
        "dim": dim,
        "selected": all_ids,
        "indirect_shift": _log2_or_none(dim * eb),
        "indirect_pairing": "per_event",
        "chunk_lines": (dim * eb + 63) // 64,  # lines per gathered vector
    }
    return Trace(events, spec, layout, image, meta)


def _route_tokens(spec: WorkloadSpec, n_tokens: int) -> np.ndarray:
    if spec.routing_override:
        if len(spec.routing_override) != n_tokens:
            raise WorkloadError("routing_override must cover every token")
        route = np.asarray(spec.routing_override, dtype=np.int64)
        if route.min() < 0 or route.max() >= spec.n_experts:
            raise WorkloadError("routing_override names an unknown expert")
        return route
    if spec.moe_skew < 0:
        raise WorkloadError("moe_skew must be >= 0")
    # expert weights ~ (rank+1)^-skew; skew 0 is uniform
    weights = (np.arange(1, spec.n_experts + 1, dtype=np.float64)) ** (-spec.moe_skew)
    cdf = np.cumsum(weights / weights.sum())
    u = uniform_floats(derive_seed(spec.seed, 0x30E0), n_tokens)
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def gen_moe_trace(spec: WorkloadSpec, layout: AddressLayout,
                  vector_width: int = 16) -> Trace:
    """Mixture-of-experts trace: each token's expert id selects a weight region.

    Tokens are processed in arrival order. A routing-table load (one lane per
    token, in vector batches) precedes each block of tokens; every token then
    streams a chunk of its expert's weights plus its own activation slice.
    Branch events carry the routed expert's total token count, which varies
    across experts.
    """
    layout.validate()
    if spec.n_experts < 1:
        raise WorkloadError("n_experts must be >= 1")
    n_tokens, chunk_elems, slice_elems = spec.dims
    if n_tokens < 1 or chunk_elems < 1 or slice_elems < 1:
        raise WorkloadError("moe dims must be >= 1")
    eb = spec.element_bytes
    line = 64
    chunk_bytes = chunk_elems * eb
    expert_bytes = 1 << max(chunk_bytes - 1, 1).bit_length()  # pow2 region stride
    chunk_lines = (chunk_bytes + line - 1) // line

    route = _route_tokens(spec, n_tokens)
    counts = np.bincount(route, minlength=spec.n_experts)

    route_base = _require_region(layout, REGION_COLIDX, 4 * n_tokens)
    w_base = _require_region(layout, REGION_W, expert_bytes * spec.n_experts)
    ia_base = _require_region(layout, REGION_IA, eb * slice_elems * n_tokens)
    oa_base = _require_region(layout, REGION_OA, eb * slice_elems * n_tokens)

    image = MemoryImage()
    image.add_array(route_base, 4, route)

    events = []
    emit = events.append
    for t0 in range(0, n_tokens, vector_width):
        block = route[t0:t0 + vector_width]
        emit(TraceEvent(PC_LOAD_ROUTE, LOAD,
                        tuple(route_base + 4 * (t0 + l) for l in range(len(block))),
                        len(block), 2, t0 // vector_width, 0, False, REGION_COLIDX))
        for t_off, e in enumerate(block):
            t = t0 + t_off
            e = int(e)
            emit(TraceEvent(PC_TOKEN_BRANCH, BRANCH, (), 0, 1, t, int(counts[e]), False, REGION_OTHER))
            emit(TraceEvent(PC_CHUNK_BRANCH, BRANCH, (), 0, 0, t, chunk_lines, False, REGION_OTHER))
            region_base = w_base + e * expert_bytes
            for ln in range(chunk_lines):
                lanes = min(vector_width, (chunk_bytes - ln * line) // eb)
                lanes = max(lanes, 1)
                emit(TraceEvent(PC_LOAD_EXPERT_W, LOAD,
                                tuple(region_base + ln * line + eb * l for l in range(lanes)),
                                lanes, 0, ln, 0, True, REGION_W))
            for j0 in range(0, slice_elems, vector_width):
                lanes = min(vector_width, slice_elems - j0)
                emit(TraceEvent(PC_LOAD_TOKEN, LOAD,
                                tuple(ia_base + eb * (t * slice_elems + j0 + l) for l in range(lanes)),
                                lanes, 0, t, 0, False, REGION_IA))
            emit(TraceEvent(PC_COMPUTE, COMPUTE, (), min(vector_width, slice_elems),
                            0, t, 0, False, REGION_OTHER))
            emit(TraceEvent(PC_STORE_MOE_OA, STORE,
                            tuple(oa_base + eb * (t * slice_elems + l) for l in range(min(vector_width, slice_elems))),
                            min(vector_width, slice_elems), 1, t, 0, False, REGION_OA))
    meta = {
        "expert_counts": counts.tolist(),
        "route": route.tolist(),
        "chunk_lines": chunk_lines,
        "expert_bytes": expert_bytes,
        "indirect_shift": _log2_or_none(expert_bytes),
        "indirect_pairing": "per_run",
    }
    return Trace(events, spec, layout, image, meta)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

# Desk-scale stand-ins for the eight evaluation workloads, one archetype each.
# Parameter choices keep every trace under ~20k events while leaving the
# irregular region footprint several times larger than the experiment caches.
_PRESETS = {
    "DS":    WorkloadSpec("topk_shuffle", (48, 4096, 32), topk_k=48, seed=101, name="DS"),
    "H2O":   WorkloadSpec("topk_shuffle", (64, 2048, 16), topk_k=32, seed=102, name="H2O"),
    "GSABT": WorkloadSpec("topk_shuffle", (32, 4096, 16), topk_k=96, seed=103, name="GSABT"),
    "GAT":   WorkloadSpec("spmm_csr", (128, 1024, 16), density_w=0.05, seed=104, name="GAT"),
    "GCN":   WorkloadSpec("spmm_csr", (128, 1024, 16), density_w=0.03, seed=105, name="GCN"),
    "MK":    WorkloadSpec("spmm_csr", (96, 1024, 16), density_w=0.04, seed=106, name="MK"),
    "SCN":   WorkloadSpec("spmm_csr", (112, 896, 16), density_w=0.06, seed=107, name="SCN"),
    "ST":    WorkloadSpec("moe_routing", (256, 256, 16), n_experts=16, moe_skew=0.3,
                          seed=108, name="ST"),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset_workload(name: str) -> WorkloadSpec:
    """Named desk-scale workload spec; raises on unknown names."""
    try:
        return replace(_PRESETS[name])
    except KeyError:
        raise WorkloadError("unknown preset %r (choose from %s)" % (name, ", ".join(PRESET_NAMES)))


def build_trace(spec: WorkloadSpec, layout: AddressLayout | None = None,
                vector_width: int = 16) -> Trace:
    """Dispatch a WorkloadSpec to its archetype generator."""
    layout = layout or default_layout()
    if spec.archetype == "spmm_csr":
        m, k, n = spec.dims
        mask = sample_bernoulli_mask(m, k, spec.density_w, spec.seed)
        w = to_csr(mask, derive_seed(spec.seed, 0xC5A))
        return gen_spmm_trace(w, n, spec, layout, vector_width=vector_width)
    if spec.archetype == "topk_shuffle":
        _, n_vectors, dim = spec.dims
        return gen_topk_shuffle_trace(n_vectors, dim, spec.topk_k, spec, layout,
                                      vector_width=vector_width)
    return gen_moe_trace(spec, layout, vector_width=vector_width)


# ---------------------------------------------------------------------------
# Trace file format
# ---------------------------------------------------------------------------
#
# One event per line:
#   pc kind lanes loop_level loop_iter bound_observed is_indirect region addr0 addr1 ...
# Addresses and pc in hex; header line carries the spec hash and seed.

_HEADER_PREFIX = "#nvrtrace1"


def write_trace_file(trace: Trace, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("%s spec=%s seed=%d events=%d\n"
                 % (_HEADER_PREFIX, trace.spec.spec_hash(), trace.spec.seed, len(trace.events)))
        for ev in trace.events:
            fields = ["%x" % ev.pc, ev.kind, str(ev.lanes), str(ev.loop_level),
                      str(ev.loop_iter), str(ev.bound_observed),
                      "1" if ev.is_indirect else "0", ev.region]
            fields.extend("%x" % a for a in ev.addresses)
            fh.write(" ".join(fields) + "\n")


def read_trace_file(path: str) -> tuple:
    """Returns (events, header dict). The memory image is not serialised;
    regenerate it from the spec and seed named in the header."""
    events = []
    header = {}
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(_HEADER_PREFIX):
            raise WorkloadError("not a trace file: bad header")
        for tok in first.split()[1:]:
            k, _, v = tok.partition("=")
            header[k] = v
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            pc, kind, lanes, level, it, bound, ind, region = parts[:8]
            addrs = tuple(int(a, 16) for a in parts[8:])
            events.append(TraceEvent(int(pc, 16), kind, addrs, int(lanes), int(level),
                                     int(it), int(bound), ind == "1", region))
    return events, header
