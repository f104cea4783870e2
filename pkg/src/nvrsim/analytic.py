"""Closed-form performance model of sparse matrix workloads.

The model treats every weight/activation element as a Bernoulli variable whose
probability comes from the layer's row/column non-zero ratios. Correlated
sparsity between the two operands is expressed with a Gaussian copula: a
bivariate standard normal with correlation rho, thresholded at the quantiles
matching each marginal density. On top of the element model sit:

  * expected multiply counts (ideal workload),
  * alignment redundancy (activations fetched for zero weights),
  * tiling redundancy (zeros kept to satisfy structural constraints),
  * an execution-time split into compute and I/O with cache-miss penalties,
  * a roofline-style bottleneck classification.

Every closed form is paired with a Monte Carlo oracle in this module so the
two can be cross-checked at any tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri, roots_legendre

_TWO_PI = 2.0 * math.pi
_QUAD_NODES = 160  # Gauss-Legendre order for the copula integral
_GL_X, _GL_W = roots_legendre(_QUAD_NODES)
_GL_U = 0.5 * (_GL_X + 1.0)  # nodes mapped to [0, 1]
_GL_WU = 0.5 * _GL_W


class ModelError(ValueError):
    """Invalid sparsity ratios, correlations or machine parameters."""


def _check_fraction(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ModelError("%s must lie in [0, 1]" % name)
    return arr


def row_sparsity_distribution(k: int, s: float) -> tuple:
    """Gaussian approximation of a row's non-zero count: N(k*s, k*s*(1-s))."""
    if k < 1:
        raise ModelError("k must be >= 1")
    _check_fraction(s, "s")
    return (k * s, k * s * (1.0 - s))


def prob_both_nonzero(s_ia, s_w, rho):
    """P(IA element != 0 and W element != 0) under the Gaussian copula.

    Marginals are matched exactly: each latent normal is thresholded at the
    quantile that reproduces its density. rho = 0 gives the independence
    product s_ia * s_w exactly; rho = +/-1 are the comonotone and
    countermonotone limits. Accepts scalars or broadcastable arrays.

    The orthant probability is evaluated with the single-integral identity

        P = s1*s2 + (1/2pi) * int_0^rho exp(-(q1^2 - 2 r q1 q2 + q2^2)
                                            / (2 (1-r^2))) / sqrt(1-r^2) dr

    via fixed Gauss-Legendre quadrature, which vectorises over element grids.
    """
    s1 = _check_fraction(s_ia, "s_ia")
    s2 = _check_fraction(s_w, "s_w")
    r = np.asarray(rho, dtype=np.float64)
    if np.any(np.abs(r) > 1.0):
        raise ModelError("|rho| must be <= 1")

    s1, s2, r = np.broadcast_arrays(s1, s2, r)
    out = np.empty(s1.shape, dtype=np.float64)

    degenerate = (s1 <= 0.0) | (s2 <= 0.0) | (s1 >= 1.0) | (s2 >= 1.0)
    near_one = np.abs(r) >= 1.0 - 1e-12
    plain = ~degenerate & ~near_one

    # marginal edge cases: a density of 0 or 1 pins the joint probability
    out[degenerate] = np.minimum(s1, s2)[degenerate] * (
        (s1[degenerate] > 0) & (s2[degenerate] > 0))
    if np.any(near_one & ~degenerate):
        m = near_one & ~degenerate
        pos = r[m] > 0
        lo = np.maximum(0.0, s1[m] + s2[m] - 1.0)
        out[m] = np.where(pos, np.minimum(s1[m], s2[m]), lo)

    if np.any(plain):
        a = s1[plain]
        b = s2[plain]
        rr = r[plain]
        q1 = ndtri(1.0 - a)
        q2 = ndtri(1.0 - b)
        acc = np.zeros(a.shape, dtype=np.float64)
        nonzero = rr != 0.0
        if np.any(nonzero):
            q1n = q1[nonzero]
            q2n = q2[nonzero]
            rn = rr[nonzero]
            accn = np.zeros(q1n.shape, dtype=np.float64)
            for u, wu in zip(_GL_U, _GL_WU):
                rv = rn * u
                om = 1.0 - rv * rv
                accn += wu * np.exp(-(q1n * q1n - 2.0 * rv * q1n * q2n + q2n * q2n)
                                    / (2.0 * om)) / np.sqrt(om)
            acc[nonzero] = rn * accn / _TWO_PI
        out[plain] = np.clip(a * b + acc, 0.0, np.minimum(a, b))

    if out.ndim == 0:
        return float(out)
    return out


def mc_both_nonzero(s_ia: float, s_w: float, rho: float, trials: int, seed: int) -> tuple:
    """Monte Carlo copula oracle; returns (estimate, standard error)."""
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal(trials)
    z2 = rho * z1 + math.sqrt(max(0.0, 1.0 - rho * rho)) * rng.standard_normal(trials)
    q1 = ndtri(1.0 - s_ia) if 0.0 < s_ia < 1.0 else (np.inf if s_ia <= 0 else -np.inf)
    q2 = ndtri(1.0 - s_w) if 0.0 < s_w < 1.0 else (np.inf if s_w <= 0 else -np.inf)
    hits = (z1 > q1) & (z2 > q2)
    p = hits.mean()
    return float(p), float(math.sqrt(max(p * (1 - p), 1e-12) / trials))


# ---------------------------------------------------------------------------
# Layer sparsity model
# ---------------------------------------------------------------------------

@dataclass
class LayerSparsitySpec:
    """Per-row/per-column non-zero ratios of W (m x k) and IA (k x n).

    An element's Bernoulli probability is the geometric mean of its row and
    column ratios, which reduces to the shared value when the two agree and
    to 1 for a dense matrix. rho is the copula correlation between aligned
    W/IA element pairs: a scalar, or an (m, n) array indexed by (W row,
    IA column).
    """

    m: int
    k: int
    n: int
    s_w_row: np.ndarray
    s_w_col: np.ndarray
    s_ia_row: np.ndarray
    s_ia_col: np.ndarray
    rho: object = 0.0

    def __post_init__(self):
        if min(self.m, self.k, self.n) < 1:
            raise ModelError("dimensions must be >= 1")
        self.s_w_row = _check_fraction(self.s_w_row, "s_w_row")
        self.s_w_col = _check_fraction(self.s_w_col, "s_w_col")
        self.s_ia_row = _check_fraction(self.s_ia_row, "s_ia_row")
        self.s_ia_col = _check_fraction(self.s_ia_col, "s_ia_col")
        for arr, length, name in ((self.s_w_row, self.m, "s_w_row"),
                                  (self.s_w_col, self.k, "s_w_col"),
                                  (self.s_ia_row, self.k, "s_ia_row"),
                                  (self.s_ia_col, self.n, "s_ia_col")):
            if arr.shape != (length,):
                raise ModelError("%s must have length %d" % (name, length))
        r = np.asarray(self.rho, dtype=np.float64)
        if np.any(np.abs(r) > 1.0):
            raise ModelError("|rho| must be <= 1")
        if r.ndim not in (0, 2) or (r.ndim == 2 and r.shape != (self.m, self.n)):
            raise ModelError("rho must be scalar or an (m, n) array")

    @classmethod
    def uniform(cls, m: int, k: int, n: int, s_w: float, s_ia: float,
                rho: float = 0.0) -> "LayerSparsitySpec":
        return cls(m, k, n,
                   np.full(m, s_w), np.full(k, s_w),
                   np.full(k, s_ia), np.full(n, s_ia), rho)

    def p_w(self) -> np.ndarray:
        """Element non-zero probabilities of W, shape (m, k)."""
        return np.sqrt(np.outer(self.s_w_row, self.s_w_col))

    def p_ia(self) -> np.ndarray:
        """Element non-zero probabilities of IA, shape (k, n)."""
        return np.sqrt(np.outer(self.s_ia_row, self.s_ia_col))

    def rho_grid(self) -> np.ndarray:
        r = np.asarray(self.rho, dtype=np.float64)
        if r.ndim == 0:
            return np.full((self.m, self.n), float(r))
        return r


def _pair_probability_sum(spec: LayerSparsitySpec, want_align: bool) -> tuple:
    """Sums P(both != 0) and optionally P(IA != 0) - P(both) over (i, l, j)."""
    pw = spec.p_w()      # (m, k)
    pia = spec.p_ia()    # (k, n)
    rho = spec.rho_grid()  # (m, n)

    uniform = (pw.min() == pw.max() and pia.min() == pia.max()
               and rho.min() == rho.max())
    if uniform:
        p = prob_both_nonzero(pia.flat[0], pw.flat[0], rho.flat[0])
        n_pairs = spec.m * spec.k * spec.n
        ideal = p * n_pairs
        align = (pia.flat[0] - p) * n_pairs
        return ideal, align

    both = prob_both_nonzero(pia[None, :, :], pw[:, :, None], rho[:, None, :])
    ideal = float(both.sum())
    align = float((pia[None, :, :] - both).sum()) if want_align else 0.0
    return ideal, align


def estimate_ideal_workload(spec: LayerSparsitySpec) -> float:
    """Expected multiply count: sum over (i, l, j) of P(W[i,l] and IA[l,j] nonzero)."""
    ideal, _ = _pair_probability_sum(spec, want_align=False)
    return ideal


def estimate_alignment_redundancy(spec: LayerSparsitySpec) -> float:
    """Expected activations fetched whose weight partner is zero.

    Sum over aligned pairs of P(IA != 0) - P(IA != 0 and W != 0); zero when
    W is fully dense.
    """
    _, align = _pair_probability_sum(spec, want_align=True)
    return align


def mc_workload_counts(spec: LayerSparsitySpec, trials: int, seed: int,
                       chunk: int = 2048) -> tuple:
    """Mask-sampling oracle for (ideal, alignment) counts; scalar rho only.

    Draws correlated mask pairs through a shared per-k-index latent factor so
    every aligned (W[i,l], IA[l,j]) pair has Gaussian correlation exactly rho,
    then averages the realised multiply and unmatched-activation counts.
    """
    rho = np.asarray(spec.rho, dtype=np.float64)
    if rho.ndim != 0:
        raise ModelError("mask-sampling oracle supports scalar rho only")
    rho = float(rho)
    a = math.sqrt(abs(rho))
    resid = math.sqrt(max(0.0, 1.0 - abs(rho)))
    sign = 1.0 if rho >= 0 else -1.0

    with np.errstate(divide="ignore"):
        q_w = ndtri(1.0 - np.clip(spec.p_w(), 0.0, 1.0))
        q_ia = ndtri(1.0 - np.clip(spec.p_ia(), 0.0, 1.0))

    rng = np.random.default_rng(seed)
    ideal = 0.0
    align = 0.0
    done = 0
    m, k, n = spec.m, spec.k, spec.n
    while done < trials:
        t = min(chunk, trials - done)
        g = rng.standard_normal((t, 1, k))
        z_w = a * g + resid * rng.standard_normal((t, m, k))
        z_ia = sign * a * g.transpose(0, 2, 1) + resid * rng.standard_normal((t, k, n))
        w_mask = z_w > q_w[None, :, :]
        ia_mask = z_ia > q_ia[None, :, :]
        w_per_l = w_mask.sum(axis=1).astype(np.float64)    # (t, k)
        ia_per_l = ia_mask.sum(axis=2).astype(np.float64)  # (t, k)
        ideal += float((w_per_l * ia_per_l).sum())
        align += float(((m - w_per_l) * ia_per_l).sum())
        done += t
    return ideal / trials, align / trials


# ---------------------------------------------------------------------------
# Tiling redundancy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TilingConstraints:
    """Structural rule applied tile-by-tile.

    (1, w) tiles are row-aligned groups, (h, 1) column-aligned. The only rule
    currently defined keeps a tile whenever it holds any non-zero and pads it
    to fully occupied.
    """

    tile_rows: int
    tile_cols: int
    rule: str = "any_nonzero"

    def __post_init__(self):
        if self.tile_rows < 1 or self.tile_cols < 1:
            raise ModelError("tile shape must be >= 1 in both dimensions")
        if self.rule != "any_nonzero":
            raise ModelError("unknown tiling rule %r" % (self.rule,))

    @classmethod
    def row_aligned(cls, width: int) -> "TilingConstraints":
        return cls(1, width)

    @classmethod
    def column_aligned(cls, height: int) -> "TilingConstraints":
        return cls(height, 1)


def optimize_tiling(mask, constraints: TilingConstraints):
    """Smallest structured superset of the mask under the tile constraint.

    Matrix dims that do not divide the tile shape are padded with zeros first
    (the padded cells count as construction redundancy when their tile is
    kept, since the hardware processes whole tiles). Returns
    (tiled_mask, w_const, objective) where w_const is the popcount increase
    and the objective charges one unit per kept tile plus one per padded
    element.
    """
    from .workload import SparseMask  # local import avoids a module cycle

    tr, tc = constraints.tile_rows, constraints.tile_cols
    rows = ((mask.rows + tr - 1) // tr) * tr
    cols = ((mask.cols + tc - 1) // tc) * tc
    padded = np.zeros((rows, cols), dtype=bool)
    padded[:mask.rows, :mask.cols] = mask.bits

    tiles = padded.reshape(rows // tr, tr, cols // tc, tc)
    keep = tiles.any(axis=(1, 3))
    tiled = np.repeat(np.repeat(keep, tr, axis=0), tc, axis=1)

    w_const = int(tiled.sum()) - mask.popcount()
    objective = float(keep.sum() + w_const)
    out = SparseMask(rows, cols, tiled,
                     float(tiled.mean()) if tiled.size else 0.0, mask.seed)
    return out, w_const, objective


# ---------------------------------------------------------------------------
# Workload and execution-time estimates
# ---------------------------------------------------------------------------

@dataclass
class WorkloadEstimate:
    w_ideal: float
    w_align: float
    w_const: float

    @property
    def w_total(self) -> float:
        return self.w_ideal + self.w_align + self.w_const


def estimate_workload(spec: LayerSparsitySpec, w_const: float = 0.0) -> WorkloadEstimate:
    return WorkloadEstimate(estimate_ideal_workload(spec),
                            estimate_alignment_redundancy(spec), w_const)


def measured_miss_model(level: int, features: dict) -> float:
    """Miss counts taken directly from a simulator run of the same trace."""
    return float(features.get("l%d_misses" % level, 0.0))


def powerlaw_miss_model(level: int, features: dict) -> float:
    """Fitted power-law in footprint / cache capacity.

    miss rate = clip(1 - (capacity / footprint)^alpha, 0, 1) applied to the
    access count; a footprint inside the cache yields zero misses.
    """
    accesses = float(features.get("accesses", 0.0))
    footprint = float(features.get("footprint_bytes", 0.0))
    capacity = float(features.get("l%d_capacity" % level, 0.0))
    alpha = float(features.get("alpha", 0.5))
    if footprint <= 0 or capacity <= 0 or footprint <= capacity:
        return 0.0
    rate = 1.0 - (capacity / footprint) ** alpha
    return accesses * min(max(rate, 0.0), 1.0)


_MISS_MODELS = {
    "zero": lambda level, features: 0.0,
    "measured": measured_miss_model,
    "powerlaw": powerlaw_miss_model,
}


@dataclass
class MachineModel:
    """Peak compute rate, off-chip bandwidth and cache penalty parameters."""

    mac_rate: float
    bw: float
    l1_enabled: bool = True
    l2_enabled: bool = True
    t_l1: float = 10.0
    t_l2: float = 100.0
    prefetch_enabled: bool = False
    miss_model: object = "zero"  # registry name or callable(level, features)

    def __post_init__(self):
        if self.mac_rate <= 0 or self.bw <= 0:
            raise ModelError("mac_rate and bw must be > 0")
        if self.l1_enabled and self.t_l1 <= 0:
            raise ModelError("t_l1 must be > 0 when L1 is enabled")
        if self.l2_enabled and self.t_l2 <= 0:
            raise ModelError("t_l2 must be > 0 when L2 is enabled")

    def miss_fn(self):
        if callable(self.miss_model):
            return self.miss_model
        try:
            return _MISS_MODELS[self.miss_model]
        except KeyError:
            raise ModelError("unknown miss model %r" % (self.miss_model,))


@dataclass
class TimeEstimate:
    t_comp: float
    t_io: float
    w_mvin: float
    w_mvout: float
    w_prefetch: float
    bottleneck: str           # "Compute" or "IO"; tie goes to Compute
    roofline_point: tuple     # (operational intensity ops/byte, attained ops/cycle)


def estimate_time(machine: MachineModel, est: WorkloadEstimate, traffic: dict) -> TimeEstimate:
    """Split execution into compute and I/O time.

    t_comp = W_total / MAC.
    t_io   = (mvin + mvout) / BW
             + [prefetch] * prefetch_bytes / BW
             + sum over enabled cache levels of t_li * miss_model(level).
    """
    mvin = float(traffic.get("mvin_bytes", 0.0))
    mvout = float(traffic.get("mvout_bytes", 0.0))
    pf = float(traffic.get("prefetch_bytes", 0.0))
    features = dict(traffic.get("features", {}))

    t_comp = est.w_total / machine.mac_rate
    t_io = (mvin + mvout) / machine.bw
    if machine.prefetch_enabled:
        t_io += pf / machine.bw
    miss_fn = machine.miss_fn()
    if machine.l1_enabled:
        t_io += machine.t_l1 * miss_fn(1, features)
    if machine.l2_enabled:
        t_io += machine.t_l2 * miss_fn(2, features)

    bottleneck = "IO" if t_io > t_comp else "Compute"
    total_bytes = mvin + mvout + (pf if machine.prefetch_enabled else 0.0)
    intensity = est.w_total / total_bytes if total_bytes > 0 else math.inf
    wall = max(t_comp, t_io)
    attained = est.w_total / wall if wall > 0 else 0.0
    return TimeEstimate(t_comp, t_io, mvin, mvout, pf, bottleneck,
                        (intensity, attained))


def bottleneck_analysis(t: TimeEstimate) -> dict:
    """Roofline-style classification of the estimate.

    ``speedup_literal`` is min(t_comp, t_io) kept verbatim from the model's
    stated form; ``bound_latency`` is the max-based wall-clock bound. Both are
    reported because min-of-times is dimensionally a time, not a ratio.
    """
    return {
        "bottleneck": t.bottleneck,
        "io_bound": t.t_io > t.t_comp,
        "speedup_literal": min(t.t_comp, t.t_io),
        "bound_latency": max(t.t_comp, t.t_io),
    }


def roofline_curve(machine: MachineModel, intensities) -> list:
    """Rows of (intensity, attained, bound) for the machine's roofline."""
    rows = []
    knee = machine.mac_rate / machine.bw
    for x in intensities:
        attained = min(machine.mac_rate, x * machine.bw)
        rows.append((float(x), float(attained), "IO" if x < knee else "Compute"))
    return rows
