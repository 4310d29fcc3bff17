"""Per-stage feature vectors and dataset normalization statistics.

Two families of features are extracted for every stage. Invariant features
(width 320) describe *what* a stage computes and are identical across all
schedules of a pipeline. Dependent features (width 94) describe *how* a
schedule executes the stage. Both are zero-padded to their fixed widths;
``docs/feature_layout.md`` freezes the slot-by-slot meaning.

Counts with large dynamic range are stored log-scaled as log2(1 + x); a few
raw copies are kept alongside where exact counts matter. Compound slots
supply products/ratios that are hard for a network to synthesize
(arithmetic intensity, footprint x recompute, parallel work / footprint,
and consolidated effective-work terms); a cumulative log2-bucket histogram
of each stage's effective work gives downstream regressors a piecewise
basis over the work scale. Inlining recompute terms are deliberately kept
log-scaled only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError
from .synthesis import (
    ACCESS_PATTERN,
    BOOL_OP_WEIGHT,
    ELEMENT_BYTES,
    FLOP_WEIGHT,
    INT_OP_WEIGHT,
    OpKind,
    OracleConfig,
    ScheduleDecision,
    StageSchedule,
    SynthPipeline,
    stage_stats,
)

INVARIANT_WIDTH = 320
DEPENDENT_WIDTH = 94
STD_FLOOR = 1e-6

OP_INDEX = {op: i for i, op in enumerate(OpKind)}

# --- invariant slot indices -------------------------------------------------
INV_OP_ONEHOT = 0                      # 14 slots, one per OpKind
INV_FLOAT_OPS_RAW = 14
INV_FLOAT_OPS_LOG = 15
INV_INT_OPS_RAW = 16
INV_INT_OPS_LOG = 17
INV_BOOL_OPS_RAW = 18
INV_BOOL_OPS_LOG = 19
INV_READS_UNIT = 20
INV_READS_STRIDED = 21
INV_READS_TRANSPOSED = 22
INV_READS_BROADCAST = 23
INV_RANK = 24
INV_DIM_LOG = 25                       # 4 slots, log2 of each dim
INV_ELEMS_LOG = 29
INV_OUT_BYTES_LOG = 30
INV_NUM_PRODUCERS = 31
INV_PRODUCER_ELEMS_LOG = 32
INV_IS_INPUT = 33

# --- dependent slot indices --------------------------------------------------
DEP_INNER_BY_DIM = 0                   # 4 slots, log2(1 + inner extent), dim order
DEP_OUTER_BY_DIM = 4                   # 4 slots
DEP_INNER_BY_LOOP = 8                  # 4 slots, innermost loop first
DEP_OUTER_BY_LOOP = 12                 # 4 slots
DEP_MISALIGNMENT = 16
DEP_UNIT_STRIDE_INNER = 17
DEP_REUSE_LOG = 18
DEP_LOCALITY_LOG = 19
DEP_TILE_ELEMS_LOG = 20
DEP_CACHE_LINES_LOG = 21
DEP_TILE_GAIN_LOG = 22
DEP_CACHE_PENALTY_LOG = 23
DEP_VEC_WIDTH_LOG = 24
DEP_VEC_EFF_WIDTH_LOG = 25
DEP_VEC_GAIN_LOG = 26
DEP_VECTOR_OPS_LOG = 27
DEP_SCALAR_OPS_LOG = 28
DEP_PARALLEL = 29
DEP_TASKS_LOG = 30
DEP_CORE_UTILIZATION = 31
DEP_EFF_TASKS_LOG = 32
DEP_PARALLEL_GAIN_LOG = 33
DEP_UNROLL_LOG = 34
DEP_UNROLL_GAIN_LOG = 35
DEP_INLINED = 36
DEP_RECOMPUTE_LOG = 37
DEP_RECOMPUTE_FLOPS_LOG = 38
DEP_BYTES_READ_RAW = 39
DEP_BYTES_READ_LOG = 40
DEP_BYTES_WRITTEN_RAW = 41
DEP_BYTES_WRITTEN_LOG = 42
DEP_BYTES_TOTAL_RAW = 43
DEP_BYTES_TOTAL_LOG = 44
DEP_BYTES_BUCKET = 45                  # 4 slots, one-hot log10 bucket of total bytes
DEP_ALLOC_LOG = 49
DEP_DEALLOC_LOG = 50
DEP_FLOPS_RAW = 51
DEP_FLOPS_LOG = 52
DEP_ARITH_INTENSITY = 53               # compound: flops_raw / max(bytes_total_raw, 1)
DEP_FOOTPRINT_X_RECOMPUTE = 54         # compound: cache_lines_log + recompute_log
DEP_PARWORK_OVER_FOOTPRINT = 55        # compound: flops_log - parallel_gain_log - cache_lines_log
DEP_WORK_EFF_LOG = 56                  # compound: log2(1 + flops*locality*cache/(gains))
DEP_STAGE_COST_LOG = 57                # compound: work_eff plus recompute extra, log2(1+x)
DEP_WORK_HISTOGRAM = 58                # 16 slots: cumulative log2-bucket histogram of work
DEP_WORK_HISTOGRAM_BUCKETS = 16
DEP_WORK_HISTOGRAM_MIN = 7.0           # first bucket threshold, log2 units
DEP_WORK_HISTOGRAM_STEP = 0.75         # bucket spacing, log2 units


def _log2p1(x: float) -> float:
    return math.log2(1.0 + x)


def extract_invariant(pipeline: SynthPipeline, node: int) -> np.ndarray:
    """Schedule-invariant feature vector (width 320) for one stage."""
    if not 0 <= node < pipeline.num_nodes:
        raise ConfigError(f"node {node} out of range for pipeline of {pipeline.num_nodes}")
    op = pipeline.node_ops[node]
    dims = pipeline.node_shapes[node]
    n_elems = float(pipeline.num_elements(node))

    v = np.zeros(INVARIANT_WIDTH, dtype=np.float64)
    v[INV_OP_ONEHOT + OP_INDEX[op]] = 1.0

    flops = FLOP_WEIGHT[op] * n_elems
    int_ops = INT_OP_WEIGHT[op] * len(dims) * n_elems if op != OpKind.INPUT else 0.0
    bool_ops = BOOL_OP_WEIGHT[op] * n_elems
    v[INV_FLOAT_OPS_RAW] = flops
    v[INV_FLOAT_OPS_LOG] = _log2p1(flops)
    v[INV_INT_OPS_RAW] = int_ops
    v[INV_INT_OPS_LOG] = _log2p1(int_ops)
    v[INV_BOOL_OPS_RAW] = bool_ops
    v[INV_BOOL_OPS_LOG] = _log2p1(bool_ops)

    unit, strided, transposed, broadcast = ACCESS_PATTERN[op]
    v[INV_READS_UNIT] = unit
    v[INV_READS_STRIDED] = strided
    v[INV_READS_TRANSPOSED] = transposed
    v[INV_READS_BROADCAST] = broadcast

    v[INV_RANK] = len(dims)
    for j, d in enumerate(dims[:4]):
        v[INV_DIM_LOG + j] = math.log2(d)
    v[INV_ELEMS_LOG] = math.log2(n_elems)
    v[INV_OUT_BYTES_LOG] = _log2p1(ELEMENT_BYTES * n_elems)

    producers = pipeline.graph.producers_of(node)
    v[INV_NUM_PRODUCERS] = len(producers)
    v[INV_PRODUCER_ELEMS_LOG] = _log2p1(sum(pipeline.num_elements(p) for p in producers))
    v[INV_IS_INPUT] = 1.0 if op == OpKind.INPUT else 0.0
    return v


def extract_dependent(
    pipeline: SynthPipeline,
    node: int,
    schedule: StageSchedule,
    config: OracleConfig = OracleConfig(),
) -> np.ndarray:
    """Schedule-dependent feature vector (width 94) for one stage."""
    if not 0 <= node < pipeline.num_nodes:
        raise ConfigError(f"node {node} out of range for pipeline of {pipeline.num_nodes}")
    v = np.zeros(DEPENDENT_WIDTH, dtype=np.float64)
    if pipeline.node_ops[node] == OpKind.INPUT:
        return v

    st = stage_stats(pipeline, node, schedule, config)
    n_elems = float(pipeline.num_elements(node))
    rank = len(pipeline.node_shapes[node])

    for j in range(rank):
        v[DEP_INNER_BY_DIM + j] = _log2p1(st.inner_extents[j])
        v[DEP_OUTER_BY_DIM + j] = _log2p1(st.outer_extents[j])
    for pos in range(rank):
        dim = schedule.loop_order[pos]
        v[DEP_INNER_BY_LOOP + pos] = _log2p1(st.inner_extents[dim])
        v[DEP_OUTER_BY_LOOP + pos] = _log2p1(st.outer_extents[dim])

    v[DEP_MISALIGNMENT] = st.misalignment
    v[DEP_UNIT_STRIDE_INNER] = 1.0 if st.misalignment == 0 else 0.0
    v[DEP_REUSE_LOG] = math.log2(st.reuse_distance)
    v[DEP_LOCALITY_LOG] = math.log2(st.locality)
    v[DEP_TILE_ELEMS_LOG] = _log2p1(st.tile_elems)
    v[DEP_CACHE_LINES_LOG] = _log2p1(st.cache_lines)
    v[DEP_TILE_GAIN_LOG] = math.log2(st.tile_gain)
    v[DEP_CACHE_PENALTY_LOG] = math.log2(st.cache_penalty)

    v[DEP_VEC_WIDTH_LOG] = _log2p1(schedule.vectorize_width)
    v[DEP_VEC_EFF_WIDTH_LOG] = _log2p1(st.vec_width_eff)
    v[DEP_VEC_GAIN_LOG] = math.log2(st.vec_gain)
    v[DEP_VECTOR_OPS_LOG] = _log2p1(n_elems) if schedule.vectorize_width > 0 else 0.0
    v[DEP_SCALAR_OPS_LOG] = _log2p1(n_elems) if schedule.vectorize_width == 0 else 0.0

    v[DEP_PARALLEL] = 1.0 if schedule.parallel else 0.0
    v[DEP_TASKS_LOG] = _log2p1(st.tasks)
    utilization = st.tasks / config.total_cores
    v[DEP_CORE_UTILIZATION] = min(utilization, float(config.total_cores))
    v[DEP_EFF_TASKS_LOG] = _log2p1(min(st.tasks, config.total_cores))
    v[DEP_PARALLEL_GAIN_LOG] = math.log2(st.parallel_gain)

    v[DEP_UNROLL_LOG] = math.log2(schedule.unroll_factor)
    v[DEP_UNROLL_GAIN_LOG] = math.log2(st.unroll_gain)

    v[DEP_INLINED] = 1.0 if schedule.inlined else 0.0
    v[DEP_RECOMPUTE_LOG] = math.log2(st.recompute_factor)
    v[DEP_RECOMPUTE_FLOPS_LOG] = _log2p1((st.recompute_factor - 1.0) * st.flops)

    total_bytes = st.bytes_read + st.bytes_written
    v[DEP_BYTES_READ_RAW] = st.bytes_read
    v[DEP_BYTES_READ_LOG] = _log2p1(st.bytes_read)
    v[DEP_BYTES_WRITTEN_RAW] = st.bytes_written
    v[DEP_BYTES_WRITTEN_LOG] = _log2p1(st.bytes_written)
    v[DEP_BYTES_TOTAL_RAW] = total_bytes
    v[DEP_BYTES_TOTAL_LOG] = _log2p1(total_bytes)
    bucket = min(3, int(math.log10(total_bytes) // 2)) if total_bytes >= 1 else 0
    v[DEP_BYTES_BUCKET + bucket] = 1.0

    v[DEP_ALLOC_LOG] = _log2p1(st.alloc_bytes)
    v[DEP_DEALLOC_LOG] = _log2p1(st.alloc_bytes)
    v[DEP_FLOPS_RAW] = st.flops
    v[DEP_FLOPS_LOG] = _log2p1(st.flops)

    v[DEP_ARITH_INTENSITY] = v[DEP_FLOPS_RAW] / max(v[DEP_BYTES_TOTAL_RAW], 1.0)
    v[DEP_FOOTPRINT_X_RECOMPUTE] = v[DEP_CACHE_LINES_LOG] + v[DEP_RECOMPUTE_LOG]
    v[DEP_PARWORK_OVER_FOOTPRINT] = (
        v[DEP_FLOPS_LOG] - v[DEP_PARALLEL_GAIN_LOG] - v[DEP_CACHE_LINES_LOG]
    )
    work_eff = config.flops_per_ms * st.compute_ms
    v[DEP_WORK_EFF_LOG] = _log2p1(work_eff)
    v[DEP_STAGE_COST_LOG] = _log2p1(work_eff + (st.recompute_factor - 1.0) * st.flops)
    for k in range(DEP_WORK_HISTOGRAM_BUCKETS):
        threshold = DEP_WORK_HISTOGRAM_MIN + DEP_WORK_HISTOGRAM_STEP * k
        v[DEP_WORK_HISTOGRAM + k] = max(0.0, v[DEP_WORK_EFF_LOG] - threshold)
    return v


def featurize_pipeline(pipeline: SynthPipeline) -> np.ndarray:
    """Invariant feature matrix (num_nodes x 320)."""
    return np.stack([extract_invariant(pipeline, i) for i in range(pipeline.num_nodes)])


def featurize_schedule(
    pipeline: SynthPipeline,
    decision: ScheduleDecision,
    config: OracleConfig = OracleConfig(),
) -> np.ndarray:
    """Dependent feature matrix (num_nodes x 94)."""
    return np.stack(
        [
            extract_dependent(pipeline, i, stage, config)
            for i, stage in enumerate(decision.stages)
        ]
    )


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    """Per-coordinate mean/std for both feature families, fit on training data.

    Std uses the population convention (divide by n) and is floored at
    ``STD_FLOOR`` so constant coordinates normalize to zero.
    """

    inv_mean: np.ndarray
    inv_std: np.ndarray
    dep_mean: np.ndarray
    dep_std: np.ndarray

    def normalize_invariant(self, x: np.ndarray) -> np.ndarray:
        return apply_norm(x, self.inv_mean, self.inv_std)

    def normalize_dependent(self, x: np.ndarray) -> np.ndarray:
        return apply_norm(x, self.dep_mean, self.dep_std)


def fit_norm_stats(
    invariant_rows: np.ndarray, dependent_rows: np.ndarray
) -> NormStats:
    """Fit normalization statistics from stacked per-stage training rows."""
    if invariant_rows.ndim != 2 or dependent_rows.ndim != 2:
        raise DataFormatError("feature rows must be 2-D (stages x width)")
    if invariant_rows.shape[0] < 2:
        raise DataFormatError("need at least 2 rows to fit normalization statistics")
    if invariant_rows.shape[1] != INVARIANT_WIDTH or dependent_rows.shape[1] != DEPENDENT_WIDTH:
        raise DataFormatError(
            f"expected widths ({INVARIANT_WIDTH}, {DEPENDENT_WIDTH}), got "
            f"({invariant_rows.shape[1]}, {dependent_rows.shape[1]})"
        )
    return NormStats(
        inv_mean=invariant_rows.mean(axis=0),
        inv_std=np.maximum(invariant_rows.std(axis=0), STD_FLOOR),
        dep_mean=dependent_rows.mean(axis=0),
        dep_std=np.maximum(dependent_rows.std(axis=0), STD_FLOOR),
    )


def apply_norm(features: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """(x - mean) / std along the last axis."""
    if features.shape[-1] != mean.shape[0]:
        raise DataFormatError(
            f"feature width {features.shape[-1]} does not match stats width {mean.shape[0]}"
        )
    return (features - mean) / std
