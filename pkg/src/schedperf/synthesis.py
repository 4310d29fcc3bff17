"""Random pipeline generator, schedule sampler, and the analytic cost oracle.

The generator builds tensor pipelines stage by stage: every stage samples a
few new compute nodes whose producers come from the previous stage's tensor
frontier, and tensors the new stage did not consume are carried forward so a
later stage (or the output set) can still use them. Three filters gate
acceptance: at most one sink (multi-output graphs are discarded with high
probability), a minimum depth, and the presence of at least one favored op.

The oracle prices a (pipeline, schedule) pair in milliseconds from per-stage
work, locality, vectorization, parallelism, and inlining-recompute terms.
Every quantity it consumes is also exported per stage via ``stage_stats`` so
the feature extractor records exactly the signals that drive the cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, GenerationError, GraphStructureError
from .graph import PipelineGraph


class OpKind(str, Enum):
    INPUT = "input"
    CONV = "conv"
    GEMM = "gemm"
    MATMUL = "matmul"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    MAXPOOL = "maxpool"
    AVGPOOL = "avgpool"
    PAD = "pad"
    BATCH_NORM = "batch_norm"
    ADD = "add"
    MUL = "mul"
    CONCAT = "concat"


# Number of producer tensors each op consumes.
OP_ARITY: dict[OpKind, int] = {
    OpKind.INPUT: 0,
    OpKind.RELU: 1,
    OpKind.SIGMOID: 1,
    OpKind.SOFTMAX: 1,
    OpKind.MAXPOOL: 1,
    OpKind.AVGPOOL: 1,
    OpKind.PAD: 1,
    OpKind.CONV: 2,
    OpKind.GEMM: 2,
    OpKind.MATMUL: 2,
    OpKind.BATCH_NORM: 2,
    OpKind.ADD: 2,
    OpKind.MUL: 2,
    OpKind.CONCAT: 2,
}

UNARY_OPS = tuple(op for op in OpKind if OP_ARITY[op] == 1)
BINARY_OPS = tuple(op for op in OpKind if OP_ARITY[op] == 2)

# Floating-point operations per output element.
FLOP_WEIGHT: dict[OpKind, float] = {
    OpKind.INPUT: 0.0,
    OpKind.CONV: 4.0,
    OpKind.GEMM: 2.0,
    OpKind.MATMUL: 2.0,
    OpKind.SOFTMAX: 3.0,
    OpKind.MAXPOOL: 1.0,
    OpKind.AVGPOOL: 1.0,
    OpKind.RELU: 1.0,
    OpKind.SIGMOID: 1.0,
    OpKind.PAD: 1.0,
    OpKind.BATCH_NORM: 1.0,
    OpKind.ADD: 1.0,
    OpKind.MUL: 1.0,
    OpKind.CONCAT: 1.0,
}

# Reads issued per output element, by access pattern:
# (unit-stride, strided, transposed, broadcast).
ACCESS_PATTERN: dict[OpKind, tuple[int, int, int, int]] = {
    OpKind.INPUT: (0, 0, 0, 0),
    OpKind.CONV: (1, 1, 0, 1),
    OpKind.GEMM: (1, 0, 1, 0),
    OpKind.MATMUL: (1, 0, 1, 0),
    OpKind.RELU: (1, 0, 0, 0),
    OpKind.SIGMOID: (1, 0, 0, 0),
    OpKind.SOFTMAX: (2, 0, 0, 0),
    OpKind.MAXPOOL: (0, 1, 0, 0),
    OpKind.AVGPOOL: (0, 1, 0, 0),
    OpKind.PAD: (1, 0, 0, 0),
    OpKind.BATCH_NORM: (1, 0, 0, 1),
    OpKind.ADD: (2, 0, 0, 0),
    OpKind.MUL: (2, 0, 0, 0),
    OpKind.CONCAT: (2, 0, 0, 0),
}

# Integer-indexing and boolean/compare ops per output element.
INT_OP_WEIGHT: dict[OpKind, float] = {op: 1.0 for op in OpKind}
INT_OP_WEIGHT[OpKind.INPUT] = 0.0
BOOL_OP_WEIGHT: dict[OpKind, float] = {op: 0.0 for op in OpKind}
BOOL_OP_WEIGHT[OpKind.RELU] = 1.0
BOOL_OP_WEIGHT[OpKind.MAXPOOL] = 1.0

# How many times an inlined producer is recomputed per consumer output point.
INLINE_USE_MULT: dict[OpKind, float] = {op: 1.0 for op in OpKind}
INLINE_USE_MULT[OpKind.CONV] = 6.0
INLINE_USE_MULT[OpKind.GEMM] = 3.0
INLINE_USE_MULT[OpKind.MATMUL] = 3.0
INLINE_USE_MULT[OpKind.MAXPOOL] = 3.0
INLINE_USE_MULT[OpKind.AVGPOOL] = 3.0
INLINE_USE_MULT[OpKind.SOFTMAX] = 2.0

ELEMENT_BYTES = 4

SPLIT_CHOICES = (1, 2, 4, 8, 16)
VECTOR_CHOICES = (0, 2, 4, 8, 16)
UNROLL_CHOICES = (1, 2, 4, 8)


@dataclass(frozen=True)
class GeneratorConfig:
    """Ranges and thresholds for random pipeline generation.

    Ranges are inclusive ``(lo, hi)`` pairs. Tensor dims are sampled
    log-uniformly within ``dim_range``; derived shapes are clipped to
    ``dim_cap`` so concat/pad chains cannot blow up the cost range.
    """

    num_inputs: tuple[int, int] = (1, 3)
    num_stages: tuple[int, int] = (5, 8)
    stage_width: tuple[int, int] = (1, 3)
    tensor_rank: tuple[int, int] = (2, 3)
    dim_range: tuple[int, int] = (4, 256)
    target_log2_elems: tuple[float, float] = (13.5, 15.0)
    ceil_log2_elems: float = 15.5
    dim_cap: int = 512
    binary_prob: float = 0.45
    output_thresh: int = 1
    depth_thresh: int = 5
    favored_ops: tuple[OpKind, ...] = (OpKind.CONV, OpKind.RELU)
    multi_output_discard_prob: float = 0.95
    max_attempts: int = 1000

    def validate(self) -> None:
        for name in ("num_inputs", "num_stages", "stage_width", "tensor_rank", "dim_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 1:
                raise ConfigError(f"{name} range ({lo}, {hi}) is inverted or non-positive")
        if not self.favored_ops:
            raise ConfigError("favored_ops must not be empty")
        if not 0.0 <= self.multi_output_discard_prob <= 1.0:
            raise ConfigError("multi_output_discard_prob must lie in [0, 1]")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.tensor_rank[1] > 4:
            raise ConfigError("tensor rank is limited to 4")


@dataclass(frozen=True)
class SynthPipeline:
    """One generated pipeline: graph topology, per-node ops and tensor shapes."""

    graph: PipelineGraph
    node_ops: tuple[OpKind, ...]
    node_shapes: tuple[tuple[int, ...], ...]
    seed: int

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    def num_elements(self, node: int) -> int:
        return int(np.prod(self.node_shapes[node], dtype=np.int64))


@dataclass(frozen=True)
class StageSchedule:
    """Implementation decisions for one stage.

    ``loop_order`` lists the stage's loop dims innermost first. Input
    stages carry empty splits/order and neutral flags.
    """

    split_factors: tuple[int, ...]
    loop_order: tuple[int, ...]
    vectorize_width: int
    parallel: bool
    inlined: bool
    unroll_factor: int


@dataclass(frozen=True)
class ScheduleDecision:
    """Per-stage schedule records for every node of one pipeline."""

    stages: tuple[StageSchedule, ...]


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float = 0.05
    n_measurements: int = 10


@dataclass(frozen=True)
class OracleConfig:
    """Coefficients of the analytic run-time model.

    Per stage, cost = work x locality x cache penalty / (vector, parallel,
    tile, and unroll gains) + inlining recompute penalty. Gains use
    efficiency-scaled divisors clamped at 1. ``flops_per_ms`` converts work
    to milliseconds. Every term is a function of quantities the feature
    extractor records per stage, keeping the oracle learnable from stored
    features.
    """

    flops_per_ms: float = 1500.0
    total_cores: int = 8
    vec_efficiency: float = 0.6
    vec_efficiency_strided: float = 0.3
    parallel_efficiency: float = 0.7
    locality_misalign_cost: float = 0.2
    locality_reuse_cost: float = 0.08
    tile_bonus: float = 0.1
    cache_overflow_cost: float = 0.2
    l1_floats: int = 8192
    unroll_bonus: float = 0.03


# ---------------------------------------------------------------------------
# Pipeline generation
# ---------------------------------------------------------------------------


def _sample_dims(rng: np.random.Generator, config: GeneratorConfig) -> tuple[int, ...]:
    """Sample a shape whose total element count stays in a bounded band.

    A target log2(total elements) is drawn and split across the rank's
    dims, so tensors of different rank carry comparable work. Each dim is
    clipped to ``dim_range``.
    """
    rank = int(rng.integers(config.tensor_rank[0], config.tensor_rank[1] + 1))
    target = rng.uniform(*config.target_log2_elems)
    shares = rng.dirichlet(np.full(rank, 4.0))
    lo, hi = np.log2(config.dim_range[0]), np.log2(config.dim_range[1])
    dims = 2.0 ** np.clip(shares * target, lo, hi)
    return tuple(int(round(d)) for d in dims)


def _derive_shape(
    op: OpKind, producer_shapes: list[tuple[int, ...]], config: GeneratorConfig
) -> tuple[int, ...]:
    """Synthetic shape rule; shapes only feed features and the oracle.

    Growth ops (pad, concat) are bounded: the total element count is
    halved along the largest dim until it fits under ``ceil_log2_elems``,
    mimicking how real networks bound activation sizes.
    """
    a = producer_shapes[0]
    if op in (OpKind.RELU, OpKind.SIGMOID, OpKind.SOFTMAX, OpKind.CONV, OpKind.BATCH_NORM,
              OpKind.ADD, OpKind.MUL):
        out = a
    elif op == OpKind.PAD:
        out = tuple(d + 2 for d in a)
    elif op in (OpKind.MAXPOOL, OpKind.AVGPOOL):
        out = tuple(max(1, d // 2) for d in a)
    elif op in (OpKind.GEMM, OpKind.MATMUL):
        b = producer_shapes[1]
        out = a[:-1] + (b[-1],) if len(a) >= 2 and len(b) >= 1 else a
    elif op == OpKind.CONCAT:
        b = producer_shapes[1]
        out = (a[0] + b[0],) + a[1:]
    else:
        raise ConfigError(f"no shape rule for op {op}")
    dims = [min(config.dim_cap, max(1, d)) for d in out]
    while float(np.prod(dims, dtype=np.float64)) > 2.0 ** config.ceil_log2_elems:
        dims[int(np.argmax(dims))] = max(1, dims[int(np.argmax(dims))] // 2)
    return tuple(dims)


def build_random_pipeline(config: GeneratorConfig, seed: int) -> SynthPipeline | None:
    """Build one pipeline from ``seed``; returns None when a filter rejects it.

    The same (config, seed) pair always produces the same result, so
    callers retry with fresh seeds rather than re-rolling in place.
    """
    config.validate()
    rng = np.random.default_rng(seed)

    ops: list[OpKind] = []
    shapes: list[tuple[int, ...]] = []
    edges: list[tuple[int, int]] = []

    n_inputs = int(rng.integers(config.num_inputs[0], config.num_inputs[1] + 1))
    for _ in range(n_inputs):
        ops.append(OpKind.INPUT)
        shapes.append(_sample_dims(rng, config))
    frontier = list(range(n_inputs))

    n_stages = int(rng.integers(config.num_stages[0], config.num_stages[1] + 1))
    for _ in range(n_stages):
        width = int(rng.integers(config.stage_width[0], config.stage_width[1] + 1))
        new_nodes: list[int] = []
        used: set[int] = set()
        for _ in range(width):
            binary = len(frontier) >= 2 and rng.random() < config.binary_prob
            pool = BINARY_OPS if binary else UNARY_OPS
            op = pool[int(rng.integers(len(pool)))]
            k = OP_ARITY[op]
            producers = [int(i) for i in rng.choice(frontier, size=k, replace=False)]
            node = len(ops)
            ops.append(op)
            shapes.append(_derive_shape(op, [shapes[p] for p in producers], config))
            edges.extend((p, node) for p in producers)
            used.update(producers)
            new_nodes.append(node)
        carried = [t for t in frontier if t not in used]
        frontier = new_nodes + carried

    graph = PipelineGraph(num_nodes=len(ops), edges=tuple(edges))
    pipeline = SynthPipeline(
        graph=graph, node_ops=tuple(ops), node_shapes=tuple(shapes), seed=seed
    )

    n_sinks = len(graph.sinks())
    if n_sinks > config.output_thresh and rng.random() < config.multi_output_discard_prob:
        return None
    if graph.longest_path_nodes() < config.depth_thresh:
        return None
    if not any(op in config.favored_ops for op in ops):
        return None
    return pipeline


def sample_pipeline(config: GeneratorConfig, seed: int) -> SynthPipeline:
    """Retry build_random_pipeline on consecutive seeds until one is accepted."""
    for attempt in range(config.max_attempts):
        pipeline = build_random_pipeline(config, seed + attempt)
        if pipeline is not None:
            return pipeline
    raise GenerationError(
        f"no pipeline accepted within {config.max_attempts} attempts from seed {seed}"
    )


# ---------------------------------------------------------------------------
# Schedule sampling and validation
# ---------------------------------------------------------------------------


def _sample_stage_schedule(
    rng: np.random.Generator, dims: tuple[int, ...], n_consumers: int, is_input: bool
) -> StageSchedule:
    if is_input:
        return StageSchedule((), (), 0, False, False, 1)
    rank = len(dims)
    factors = [int(rng.choice([f for f in SPLIT_CHOICES if f <= d] or [1])) for d in dims]
    order = tuple(int(i) for i in rng.permutation(rank))
    vec = int(rng.choice(VECTOR_CHOICES, p=[0.4, 0.15, 0.15, 0.15, 0.15]))
    if vec > 0:
        # vectorizing implies the innermost loop is split at least that wide
        inner_dim = order[0]
        factors[inner_dim] = min(dims[inner_dim], max(factors[inner_dim], vec))
    parallel = bool(rng.random() < 0.5)
    inlined = n_consumers == 1 and bool(rng.random() < 0.35)
    unroll = int(rng.choice(UNROLL_CHOICES))
    return StageSchedule(tuple(factors), order, vec, parallel, inlined, unroll)


def validate_schedule(pipeline: SynthPipeline, decision: ScheduleDecision) -> None:
    """Raise GraphStructureError when a decision violates its pipeline."""
    if len(decision.stages) != pipeline.num_nodes:
        raise GraphStructureError(
            f"decision covers {len(decision.stages)} stages, pipeline has {pipeline.num_nodes}"
        )
    consumers = [0] * pipeline.num_nodes
    for p, _ in pipeline.graph.edges:
        consumers[p] += 1
    for node, stage in enumerate(decision.stages):
        dims = pipeline.node_shapes[node]
        if pipeline.node_ops[node] == OpKind.INPUT:
            if stage.split_factors or stage.loop_order or stage.inlined:
                raise GraphStructureError(f"input node {node} must carry a trivial schedule")
            continue
        if len(stage.split_factors) != len(dims):
            raise GraphStructureError(f"node {node}: split factor count != rank")
        for f, d in zip(stage.split_factors, dims):
            if not 1 <= f <= d:
                raise GraphStructureError(f"node {node}: split factor {f} outside [1, {d}]")
        if sorted(stage.loop_order) != list(range(len(dims))):
            raise GraphStructureError(f"node {node}: loop order is not a permutation")
        if stage.vectorize_width not in VECTOR_CHOICES:
            raise GraphStructureError(f"node {node}: bad vectorize width {stage.vectorize_width}")
        if stage.unroll_factor not in UNROLL_CHOICES:
            raise GraphStructureError(f"node {node}: bad unroll factor {stage.unroll_factor}")
        if stage.inlined and consumers[node] != 1:
            raise GraphStructureError(
                f"node {node}: inlined with {consumers[node]} consumers (needs exactly 1)"
            )


def enumerate_schedules(
    pipeline: SynthPipeline, count: int, seed: int
) -> list[ScheduleDecision]:
    """Sample ``count`` distinct valid schedules for the pipeline."""
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    consumers = [0] * pipeline.num_nodes
    for p, _ in pipeline.graph.edges:
        consumers[p] += 1
    out: list[ScheduleDecision] = []
    seen: set[tuple] = set()
    attempts = 0
    cap = max(1000, 50 * count)
    while len(out) < count:
        attempts += 1
        if attempts > cap:
            raise GenerationError(
                f"only {len(out)} distinct schedules found in {cap} attempts (wanted {count})"
            )
        stages = tuple(
            _sample_stage_schedule(
                rng,
                pipeline.node_shapes[node],
                consumers[node],
                pipeline.node_ops[node] == OpKind.INPUT,
            )
            for node in range(pipeline.num_nodes)
        )
        if stages in seen:
            continue
        seen.add(stages)
        out.append(ScheduleDecision(stages))
    return out


# ---------------------------------------------------------------------------
# Cost oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageStats:
    """Every per-stage quantity priced by the oracle.

    The feature extractor records these same numbers, which is what makes
    the oracle learnable from the dataset.
    """

    flops: float
    int_ops: float
    bool_ops: float
    inner_extents: tuple[int, ...]     # per dim
    outer_extents: tuple[int, ...]     # per dim
    misalignment: int                  # position of the unit-stride dim in loop order
    reuse_distance: float              # >= 1
    locality: float
    tile_elems: float
    cache_lines: float
    tile_gain: float
    cache_penalty: float
    vec_width_eff: int
    vec_gain: float
    tasks: int
    parallel_gain: float
    unroll_gain: float
    recompute_factor: float            # >= 1; 1 when not inlined
    bytes_read: float
    bytes_written: float
    alloc_bytes: float
    compute_ms: float
    inline_ms: float
    cost_ms: float


def stage_stats(
    pipeline: SynthPipeline,
    node: int,
    stage: StageSchedule,
    config: OracleConfig = OracleConfig(),
) -> StageStats:
    """Cost-model statistics for one stage under one schedule."""
    op = pipeline.node_ops[node]
    dims = pipeline.node_shapes[node]
    n_elems = float(pipeline.num_elements(node))

    if op == OpKind.INPUT:
        return StageStats(
            flops=0.0, int_ops=0.0, bool_ops=0.0,
            inner_extents=(), outer_extents=(),
            misalignment=0, reuse_distance=1.0, locality=1.0,
            tile_elems=0.0, cache_lines=0.0, tile_gain=1.0, cache_penalty=1.0,
            vec_width_eff=0, vec_gain=1.0, tasks=1, parallel_gain=1.0,
            unroll_gain=1.0, recompute_factor=1.0,
            bytes_read=0.0, bytes_written=0.0, alloc_bytes=0.0,
            compute_ms=0.0, inline_ms=0.0, cost_ms=0.0,
        )

    rank = len(dims)
    flops = FLOP_WEIGHT[op] * n_elems
    int_ops = INT_OP_WEIGHT[op] * rank * n_elems
    bool_ops = BOOL_OP_WEIGHT[op] * n_elems

    inner = tuple(min(f, d) for f, d in zip(stage.split_factors, dims))
    outer = tuple(math.ceil(d / i) for d, i in zip(dims, inner))

    mis = stage.loop_order.index(rank - 1)
    reuse = 1.0
    for pos in range(mis):
        reuse *= dims[stage.loop_order[pos]]
    locality = (
        1.0
        + config.locality_misalign_cost * mis
        + config.locality_reuse_cost * math.log2(reuse)
    )

    tile_elems = float(np.prod(inner, dtype=np.float64))
    lines = math.ceil(tile_elems / 16.0) if mis == 0 else tile_elems
    tile_gain = 1.0 + config.tile_bonus * math.log2(min(tile_elems, config.l1_floats))
    overflow = max(0.0, math.log2(tile_elems / config.l1_floats)) if tile_elems > 0 else 0.0
    cache_penalty = 1.0 + config.cache_overflow_cost * overflow

    innermost_dim = stage.loop_order[0]
    vec_eff_width = min(stage.vectorize_width, inner[innermost_dim]) if stage.vectorize_width else 0
    eff = config.vec_efficiency if mis == 0 else config.vec_efficiency_strided
    vec_gain = max(1.0, eff * vec_eff_width) if vec_eff_width > 0 else 1.0

    outermost_dim = stage.loop_order[rank - 1]
    tasks = outer[outermost_dim] if stage.parallel else 1
    eff_tasks = min(tasks, config.total_cores)
    parallel_gain = (
        max(1.0, config.parallel_efficiency * eff_tasks) if stage.parallel else 1.0
    )

    unroll_gain = 1.0 + config.unroll_bonus * math.log2(stage.unroll_factor)

    recompute = 1.0
    if stage.inlined:
        consumer = pipeline.graph.consumers_of(node)[0]
        uses = INLINE_USE_MULT[pipeline.node_ops[consumer]] * pipeline.num_elements(consumer)
        recompute = max(1.0, uses / n_elems)

    producer_elems = sum(
        pipeline.num_elements(p) for p in pipeline.graph.producers_of(node)
    )
    bytes_read = float(ELEMENT_BYTES * producer_elems)
    bytes_written = float(ELEMENT_BYTES * n_elems)
    alloc_bytes = 0.0 if stage.inlined else bytes_written

    compute_ms = (
        flops * locality * cache_penalty
        / (vec_gain * parallel_gain * tile_gain * unroll_gain)
        / config.flops_per_ms
    )
    inline_ms = (recompute - 1.0) * flops / config.flops_per_ms

    return StageStats(
        flops=flops, int_ops=int_ops, bool_ops=bool_ops,
        inner_extents=inner, outer_extents=outer,
        misalignment=mis, reuse_distance=reuse, locality=locality,
        tile_elems=tile_elems, cache_lines=float(lines),
        tile_gain=tile_gain, cache_penalty=cache_penalty,
        vec_width_eff=vec_eff_width, vec_gain=vec_gain,
        tasks=tasks, parallel_gain=parallel_gain, unroll_gain=unroll_gain,
        recompute_factor=recompute,
        bytes_read=bytes_read, bytes_written=bytes_written, alloc_bytes=alloc_bytes,
        compute_ms=compute_ms, inline_ms=inline_ms,
        cost_ms=compute_ms + inline_ms,
    )


def oracle_base_cost(
    pipeline: SynthPipeline,
    schedule: ScheduleDecision,
    config: OracleConfig = OracleConfig(),
) -> float:
    """Noise-free total run time in milliseconds."""
    return sum(
        stage_stats(pipeline, node, stage, config).cost_ms
        for node, stage in enumerate(schedule.stages)
    )


def oracle_runtime(
    pipeline: SynthPipeline,
    schedule: ScheduleDecision,
    noise: NoiseConfig,
    seed: int,
    config: OracleConfig = OracleConfig(),
) -> list[float]:
    """N noisy measurements of the schedule's run time (all strictly positive)."""
    base = oracle_base_cost(pipeline, schedule, config)
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, noise.sigma, size=noise.n_measurements) if noise.sigma > 0 else (
        np.zeros(noise.n_measurements)
    )
    eps = np.maximum(eps, -0.9)
    return [float(base * (1.0 + e)) for e in eps]
