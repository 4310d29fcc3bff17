"""Shared fixtures: random DAGs, hand-built pipelines, and a gradient checker."""

from __future__ import annotations

import numpy as np

from schedperf.features import DEPENDENT_WIDTH, INVARIANT_WIDTH
from schedperf.graph import PipelineGraph
from schedperf.model import GraphBatch, forward
from schedperf.synthesis import OpKind, ScheduleDecision, StageSchedule, SynthPipeline


def random_dag(rng: np.random.Generator, max_nodes: int = 8, edge_prob: float = 0.4) -> PipelineGraph:
    n = int(rng.integers(1, max_nodes + 1))
    edges = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < edge_prob
    ]
    return PipelineGraph(num_nodes=n, edges=tuple(edges))


def random_features(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    return rng.normal(size=(n, INVARIANT_WIDTH)), rng.normal(size=(n, DEPENDENT_WIDTH))


def single_node_pipeline(op: OpKind, shape: tuple[int, ...]) -> SynthPipeline:
    return SynthPipeline(
        graph=PipelineGraph(num_nodes=1, edges=()),
        node_ops=(op,),
        node_shapes=(shape,),
        seed=0,
    )


def chain_pipeline(ops: list[OpKind], shapes: list[tuple[int, ...]]) -> SynthPipeline:
    edges = tuple((i, i + 1) for i in range(len(ops) - 1))
    return SynthPipeline(
        graph=PipelineGraph(num_nodes=len(ops), edges=edges),
        node_ops=tuple(ops),
        node_shapes=tuple(shapes),
        seed=0,
    )


def plain_stage_schedule(shape: tuple[int, ...], **overrides) -> StageSchedule:
    """Unit splits, unit-stride-innermost order, no vector/parallel/inline."""
    rank = len(shape)
    fields = dict(
        split_factors=(1,) * rank,
        loop_order=tuple(range(rank - 1, -1, -1)),
        vectorize_width=0,
        parallel=False,
        inlined=False,
        unroll_factor=1,
    )
    fields.update(overrides)
    return StageSchedule(**fields)


def plain_decision(
    pipeline: SynthPipeline, overrides: dict[int, dict] | None = None
) -> ScheduleDecision:
    overrides = overrides or {}
    stages = []
    for node in range(pipeline.num_nodes):
        if pipeline.node_ops[node] == OpKind.INPUT:
            stages.append(StageSchedule((), (), 0, False, False, 1))
        else:
            stages.append(
                plain_stage_schedule(
                    pipeline.node_shapes[node], **overrides.get(node, {})
                )
            )
    return ScheduleDecision(tuple(stages))


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def _agree(fd: float, an: float, rtol: float, atol: float) -> bool:
    return abs(fd - an) <= rtol * max(abs(fd), abs(an)) + atol


def _central_diff(perturb, steps, an, rtol, atol):
    """Central difference at the primary step, falling back to finer steps.

    A step that straddles a ReLU kink corrupts the coarse estimate; the
    finer retries vanish for kink noise but stay wrong for a genuine
    gradient bug. Returns (fd, agreed).
    """
    last = None
    for h in steps:
        fp = perturb(+h)
        fm = perturb(-h)
        last = (fp - fm) / (2 * h)
        if _agree(last, an, rtol, atol):
            return last, True
    return last, False


def check_gradients(
    f, params, grads: dict[str, np.ndarray],
    rng: np.random.Generator,
    coords_per_tensor: int = 4,
    steps: tuple[float, ...] = (1e-4, 1e-5, 1e-6),
    rtol: float = 1e-4,
    atol: float = 1e-8,
) -> float:
    """Compare analytic gradients against central finite differences.

    For every tensor: a handful of sampled coordinates plus one random
    directional derivative. ``f`` re-evaluates the scalar objective with
    the (mutated-in-place) parameters. Returns the worst relative
    discrepancy among agreeing coordinates above the absolute floor;
    raises AssertionError on disagreement at every step size.
    """
    worst = 0.0

    def track(fd: float, an: float) -> None:
        nonlocal worst
        if max(abs(fd), abs(an)) > atol:
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an)))

    for name, arr, _ in params.named_tensors(trainable_only=True):
        g = grads[name].reshape(arr.shape)
        for _ in range(coords_per_tensor):
            ix = tuple(int(rng.integers(0, s)) for s in arr.shape)
            old = arr[ix]

            def perturb_coord(delta: float) -> float:
                arr[ix] = old + delta
                value = f()
                arr[ix] = old
                return value

            fd, ok = _central_diff(perturb_coord, steps, g[ix], rtol, atol)
            assert ok, f"{name}{list(ix)}: finite-diff {fd:.6e} vs analytic {g[ix]:.6e}"
            track(fd, g[ix])
        # directional derivative across the whole tensor
        v = rng.normal(size=arr.shape)
        v /= np.linalg.norm(v.ravel())
        an_dir = float((g * v).sum())
        saved = arr.copy()

        def perturb_dir(delta: float) -> float:
            arr[...] = saved + delta * v
            value = f()
            arr[...] = saved
            return value

        fd_dir, ok = _central_diff(perturb_dir, steps, an_dir, rtol, atol)
        assert ok, f"{name} directional: finite-diff {fd_dir:.6e} vs analytic {an_dir:.6e}"
        track(fd_dir, an_dir)
    return worst


def small_graph_batch(rng: np.random.Generator, max_nodes: int = 6) -> GraphBatch:
    g = random_dag(rng, max_nodes=max_nodes)
    inv, dep = random_features(rng, g.num_nodes)
    return GraphBatch.build([g], [inv], [dep])


def forward_is_kink_free(batch: GraphBatch, params, margin: float = 1e-3) -> bool:
    """True when no ReLU pre-activation sits within ``margin`` of zero.

    Finite-difference steps across a kink would poison the comparison, so
    gradcheck call sites skip such configurations.
    """
    _, trace = forward(batch, params, mode="train", update_running=False)
    pre = [trace.p_inv, trace.p_dep] + [c.g for c in trace.convs]
    return all(np.abs(p).min() > margin for p in pre)
