"""Graph-convolutional run-time model and the feed-forward baseline.

Forward pass: per-node invariant/dependent features (already normalized)
are embedded to width 220 + 60 = 280, passed through graph-convolution
blocks (linear -> adjacency aggregation -> batch-norm -> ReLU), and the
node embeddings at every depth are sum-pooled per graph, concatenated, and
mapped through a linear head with a softplus to a strictly positive run
time. Reverse mode is implemented by hand against a cached forward trace.

Train mode uses batch statistics over all nodes in the batch and updates
the running statistics; eval mode uses the running statistics, which keeps
batched and per-graph evaluation bitwise-equivalent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IncompatibleArtifactError
from .features import DEPENDENT_WIDTH, INVARIANT_WIDTH
from .graph import PipelineGraph, normalize_adjacency

EMBED_INVARIANT = 220
EMBED_DEPENDENT = 60
EMBED_WIDTH = EMBED_INVARIANT + EMBED_DEPENDENT
DEFAULT_CONV_LAYERS = 2
BASELINE_INPUT = INVARIANT_WIDTH + DEPENDENT_WIDTH
BASELINE_HIDDEN = (256, 64)
BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ConvLayer:
    w: np.ndarray
    b: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray


@dataclass
class ModelParams:
    """All learnable tensors plus batch-norm running statistics."""

    w_inv: np.ndarray
    b_inv: np.ndarray
    w_dep: np.ndarray
    b_dep: np.ndarray
    convs: list[ConvLayer]
    w_out: np.ndarray
    b_out: np.ndarray

    @property
    def num_conv_layers(self) -> int:
        return len(self.convs)

    @property
    def readout_width(self) -> int:
        return EMBED_WIDTH * (len(self.convs) + 1)

    def named_tensors(self, trainable_only: bool = False):
        """Yield (name, array, weight_decay_applies) for every tensor."""
        yield "w_inv", self.w_inv, True
        yield "b_inv", self.b_inv, False
        yield "w_dep", self.w_dep, True
        yield "b_dep", self.b_dep, False
        for k, layer in enumerate(self.convs):
            yield f"conv{k}.w", layer.w, True
            yield f"conv{k}.b", layer.b, False
            yield f"conv{k}.bn_gamma", layer.bn_gamma, False
            yield f"conv{k}.bn_beta", layer.bn_beta, False
            if not trainable_only:
                yield f"conv{k}.bn_running_mean", layer.bn_running_mean, False
                yield f"conv{k}.bn_running_var", layer.bn_running_var, False
        yield "w_out", self.w_out, True
        yield "b_out", self.b_out, False

    def copy(self) -> "ModelParams":
        return ModelParams(
            w_inv=self.w_inv.copy(), b_inv=self.b_inv.copy(),
            w_dep=self.w_dep.copy(), b_dep=self.b_dep.copy(),
            convs=[ConvLayer(l.w.copy(), l.b.copy(), l.bn_gamma.copy(), l.bn_beta.copy(),
                             l.bn_running_mean.copy(), l.bn_running_var.copy())
                   for l in self.convs],
            w_out=self.w_out.copy(), b_out=self.b_out.copy(),
        )

    def validate_shapes(self) -> None:
        expected = expected_shapes(len(self.convs))
        for name, arr, _ in self.named_tensors():
            if tuple(arr.shape) != expected[name]:
                raise IncompatibleArtifactError(
                    f"tensor {name} has shape {tuple(arr.shape)}, expected {expected[name]}"
                )


def expected_shapes(conv_layers: int = DEFAULT_CONV_LAYERS) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "w_inv": (INVARIANT_WIDTH, EMBED_INVARIANT),
        "b_inv": (EMBED_INVARIANT,),
        "w_dep": (DEPENDENT_WIDTH, EMBED_DEPENDENT),
        "b_dep": (EMBED_DEPENDENT,),
        "w_out": (EMBED_WIDTH * (conv_layers + 1), 1),
        "b_out": (1,),
    }
    for k in range(conv_layers):
        shapes[f"conv{k}.w"] = (EMBED_WIDTH, EMBED_WIDTH)
        for suffix in ("b", "bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var"):
            shapes[f"conv{k}.{suffix}"] = (EMBED_WIDTH,)
    return shapes


def init_model_params(seed: int, conv_layers: int = DEFAULT_CONV_LAYERS) -> ModelParams:
    rng = np.random.default_rng(seed)
    convs = []
    for _ in range(conv_layers):
        convs.append(
            ConvLayer(
                w=_uniform_init(rng, EMBED_WIDTH, (EMBED_WIDTH, EMBED_WIDTH)),
                b=_uniform_init(rng, EMBED_WIDTH, (EMBED_WIDTH,)),
                bn_gamma=np.ones(EMBED_WIDTH),
                bn_beta=np.zeros(EMBED_WIDTH),
                bn_running_mean=np.zeros(EMBED_WIDTH),
                bn_running_var=np.ones(EMBED_WIDTH),
            )
        )
    readout = EMBED_WIDTH * (conv_layers + 1)
    return ModelParams(
        w_inv=_uniform_init(rng, INVARIANT_WIDTH, (INVARIANT_WIDTH, EMBED_INVARIANT)),
        b_inv=_uniform_init(rng, INVARIANT_WIDTH, (EMBED_INVARIANT,)),
        w_dep=_uniform_init(rng, DEPENDENT_WIDTH, (DEPENDENT_WIDTH, EMBED_DEPENDENT)),
        b_dep=_uniform_init(rng, DEPENDENT_WIDTH, (EMBED_DEPENDENT,)),
        convs=convs,
        w_out=_uniform_init(rng, readout, (readout, 1)),
        b_out=_uniform_init(rng, readout, (1,)),
    )


# ---------------------------------------------------------------------------
# Batched graph input
# ---------------------------------------------------------------------------


@dataclass
class GraphBatch:
    """A batch of graphs stacked along the node axis.

    ``inv``/``dep`` hold normalized per-node features; adjacency blocks are
    kept per graph so aggregation never crosses graph boundaries.
    """

    blocks: list[np.ndarray]
    starts: np.ndarray
    sizes: np.ndarray
    inv: np.ndarray
    dep: np.ndarray

    @classmethod
    def build(
        cls,
        graphs: list[PipelineGraph],
        inv: list[np.ndarray],
        dep: list[np.ndarray],
    ) -> "GraphBatch":
        blocks = [normalize_adjacency(g).matrix for g in graphs]
        sizes = np.array([b.shape[0] for b in blocks], dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]) if len(blocks) else np.zeros(0, np.int64)
        stack = lambda mats, width: (
            np.vstack(mats) if mats else np.zeros((0, width), dtype=np.float64)
        )
        return cls(
            blocks=blocks,
            starts=starts.astype(np.int64),
            sizes=sizes,
            inv=stack(inv, INVARIANT_WIDTH),
            dep=stack(dep, DEPENDENT_WIDTH),
        )

    @property
    def num_graphs(self) -> int:
        return len(self.blocks)

    @property
    def num_nodes(self) -> int:
        return int(self.sizes.sum())

    def apply_adjacency(self, m: np.ndarray, transpose: bool = False) -> np.ndarray:
        out = np.empty_like(m)
        for block, start, size in zip(self.blocks, self.starts, self.sizes):
            rows = slice(start, start + size)
            out[rows] = (block.T if transpose else block) @ m[rows]
        return out

    def pool(self, e: np.ndarray) -> np.ndarray:
        """Per-graph sums of node rows."""
        if self.num_graphs == 0:
            return np.zeros((0, e.shape[1]))
        return np.add.reduceat(e, self.starts, axis=0)

    def scatter(self, per_graph: np.ndarray) -> np.ndarray:
        """Broadcast per-graph rows back to their nodes."""
        return np.repeat(per_graph, self.sizes, axis=0)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ConvTrace:
    e_in: np.ndarray
    z: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    g: np.ndarray


@dataclass
class ForwardTrace:
    """Cached intermediates from a train-mode forward pass."""

    batch: GraphBatch
    p_inv: np.ndarray
    p_dep: np.ndarray
    embeddings: list[np.ndarray] = field(default_factory=list)
    convs: list[ConvTrace] = field(default_factory=list)
    pooled: np.ndarray | None = None
    z_out: np.ndarray | None = None


def initial_embedding(inv: np.ndarray, dep: np.ndarray, params: ModelParams) -> np.ndarray:
    """Concatenated ReLU embeddings of both feature families, width 280."""
    if inv.shape[-1] != INVARIANT_WIDTH or dep.shape[-1] != DEPENDENT_WIDTH:
        raise IncompatibleArtifactError(
            f"feature widths ({inv.shape[-1]}, {dep.shape[-1]}) do not match "
            f"({INVARIANT_WIDTH}, {DEPENDENT_WIDTH})"
        )
    h_inv = np.maximum(inv @ params.w_inv + params.b_inv, 0.0)
    h_dep = np.maximum(dep @ params.w_dep + params.b_dep, 0.0)
    return np.concatenate([h_inv, h_dep], axis=-1)


def _batch_norm_forward(
    m: np.ndarray, layer: ConvLayer, mode: str, update_running: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if mode == "train":
        mean = m.mean(axis=0)
        var = m.var(axis=0)
        if update_running:
            layer.bn_running_mean *= 1.0 - BN_MOMENTUM
            layer.bn_running_mean += BN_MOMENTUM * mean
            layer.bn_running_var *= 1.0 - BN_MOMENTUM
            layer.bn_running_var += BN_MOMENTUM * var
    else:
        mean = layer.bn_running_mean
        var = layer.bn_running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (m - mean) * inv_std
    return layer.bn_gamma * xhat + layer.bn_beta, xhat, inv_std


class _DenseAdjacency:
    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix

    def apply_adjacency(self, m: np.ndarray, transpose: bool = False) -> np.ndarray:
        return (self.matrix.T if transpose else self.matrix) @ m


def conv_forward(
    e: np.ndarray,
    adjacency,
    layer: ConvLayer,
    mode: str = "eval",
    update_running: bool = False,
) -> tuple[np.ndarray, ConvTrace | None]:
    """One convolution block: ReLU(BatchNorm(A' @ (E W + b))).

    ``adjacency`` is anything exposing ``apply_adjacency`` (a GraphBatch)
    or a raw dense normalized-adjacency matrix.
    """
    if isinstance(adjacency, np.ndarray):
        adjacency = _DenseAdjacency(adjacency)
    if e.shape[1] != layer.w.shape[0]:
        raise IncompatibleArtifactError(
            f"embedding width {e.shape[1]} does not match conv weight {layer.w.shape}"
        )
    z = adjacency.apply_adjacency(e @ layer.w + layer.b)
    g, xhat, inv_std = _batch_norm_forward(z, layer, mode, update_running)
    e_next = np.maximum(g, 0.0)
    trace = ConvTrace(e_in=e, z=z, xhat=xhat, inv_std=inv_std, g=g) if mode == "train" else None
    return e_next, trace


def readout(
    e_list: list[np.ndarray], params: ModelParams
) -> tuple[float, np.ndarray, float]:
    """Sum-pool one graph's embeddings at every depth and map to a run time.

    Returns (yhat, pooled vector, pre-softplus activation).
    """
    pooled = np.concatenate([e.sum(axis=0) for e in e_list])
    if pooled.shape[0] != params.readout_width:
        raise IncompatibleArtifactError(
            f"pooled width {pooled.shape[0]} does not match readout {params.readout_width}"
        )
    z = float(pooled @ params.w_out[:, 0] + params.b_out[0])
    return float(softplus(np.array(z))), pooled, z


def forward(
    batch: GraphBatch,
    params: ModelParams,
    mode: str = "eval",
    update_running: bool = True,
) -> tuple[np.ndarray, ForwardTrace | None]:
    """Predict run times for every graph in the batch.

    Returns an empty prediction vector for an empty batch. A trace is
    returned only in train mode.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if batch.num_graphs == 0:
        return np.zeros(0), None

    p_inv = batch.inv @ params.w_inv + params.b_inv
    p_dep = batch.dep @ params.w_dep + params.b_dep
    e = np.concatenate([np.maximum(p_inv, 0.0), np.maximum(p_dep, 0.0)], axis=1)

    embeddings = [e]
    conv_traces: list[ConvTrace] = []
    for layer in params.convs:
        e, tr = conv_forward(e, batch, layer, mode, update_running and mode == "train")
        embeddings.append(e)
        if tr is not None:
            conv_traces.append(tr)

    pooled = np.concatenate([batch.pool(e_k) for e_k in embeddings], axis=1)
    z = pooled @ params.w_out[:, 0] + params.b_out[0]
    yhat = softplus(z)

    if mode != "train":
        return yhat, None
    trace = ForwardTrace(
        batch=batch, p_inv=p_inv, p_dep=p_dep,
        embeddings=embeddings, convs=conv_traces, pooled=pooled, z_out=z,
    )
    return yhat, trace


def backward(
    trace: ForwardTrace, dloss_dyhat: np.ndarray, params: ModelParams
) -> dict[str, np.ndarray]:
    """Exact gradients of sum(loss) for every learnable tensor."""
    if trace is None:
        raise ValueError("backward requires a trace from a train-mode forward")
    batch = trace.batch
    n_layers = len(params.convs)
    width = EMBED_WIDTH

    dz = dloss_dyhat * sigmoid(trace.z_out)
    grads: dict[str, np.ndarray] = {
        "w_out": trace.pooled.T @ dz[:, None],
        "b_out": np.array([dz.sum()]),
    }
    dpooled = dz[:, None] * params.w_out[:, 0]
    # per-depth pooled gradients broadcast back to the nodes of each graph
    de_pool = [
        batch.scatter(dpooled[:, k * width : (k + 1) * width]) for k in range(n_layers + 1)
    ]

    de = de_pool[n_layers]
    for k in range(n_layers - 1, -1, -1):
        layer = params.convs[k]
        tr = trace.convs[k]
        dg = de * (tr.g > 0.0)
        grads[f"conv{k}.bn_gamma"] = (dg * tr.xhat).sum(axis=0)
        grads[f"conv{k}.bn_beta"] = dg.sum(axis=0)
        dxhat = dg * layer.bn_gamma
        n = dxhat.shape[0]
        dm = (tr.inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - tr.xhat * (dxhat * tr.xhat).sum(axis=0)
        )
        dzlin = batch.apply_adjacency(dm, transpose=True)
        grads[f"conv{k}.w"] = tr.e_in.T @ dzlin
        grads[f"conv{k}.b"] = dzlin.sum(axis=0)
        de = de_pool[k] + dzlin @ layer.w.T

    d_inv = de[:, :EMBED_INVARIANT] * (trace.p_inv > 0.0)
    d_dep = de[:, EMBED_INVARIANT:] * (trace.p_dep > 0.0)
    grads["w_inv"] = batch.inv.T @ d_inv
    grads["b_inv"] = d_inv.sum(axis=0)
    grads["w_dep"] = batch.dep.T @ d_dep
    grads["b_dep"] = d_dep.sum(axis=0)
    return grads


# ---------------------------------------------------------------------------
# Feed-forward baseline
# ---------------------------------------------------------------------------


@dataclass
class BaselineParams:
    """Two-hidden-layer MLP over sum-pooled per-graph features."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    pooled_mean: np.ndarray
    pooled_std: np.ndarray

    def named_tensors(self, trainable_only: bool = False):
        yield "w1", self.w1, True
        yield "b1", self.b1, False
        yield "w2", self.w2, True
        yield "b2", self.b2, False
        yield "w3", self.w3, True
        yield "b3", self.b3, False
        if not trainable_only:
            yield "pooled_mean", self.pooled_mean, False
            yield "pooled_std", self.pooled_std, False

    def copy(self) -> "BaselineParams":
        return BaselineParams(
            *(a.copy() for a in (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3,
                                 self.pooled_mean, self.pooled_std))
        )


@dataclass
class BaselineTrace:
    x: np.ndarray
    p1: np.ndarray
    h1: np.ndarray
    p2: np.ndarray
    h2: np.ndarray
    z: np.ndarray


def init_baseline_params(seed: int) -> BaselineParams:
    rng = np.random.default_rng(seed)
    h1, h2 = BASELINE_HIDDEN
    return BaselineParams(
        w1=_uniform_init(rng, BASELINE_INPUT, (BASELINE_INPUT, h1)),
        b1=_uniform_init(rng, BASELINE_INPUT, (h1,)),
        w2=_uniform_init(rng, h1, (h1, h2)),
        b2=_uniform_init(rng, h1, (h2,)),
        w3=_uniform_init(rng, h2, (h2, 1)),
        b3=_uniform_init(rng, h2, (1,)),
        pooled_mean=np.zeros(BASELINE_INPUT),
        pooled_std=np.ones(BASELINE_INPUT),
    )


def pool_raw_features(inv: np.ndarray, dep: np.ndarray) -> np.ndarray:
    """Per-graph baseline input: stage-summed concat(invariant, dependent)."""
    return np.concatenate([inv.sum(axis=0), dep.sum(axis=0)])


def baseline_forward(
    x: np.ndarray, params: BaselineParams, want_trace: bool = False
) -> tuple[np.ndarray, BaselineTrace | None]:
    """Run the baseline on normalized pooled features (batch x 414)."""
    if x.shape[-1] != BASELINE_INPUT:
        raise IncompatibleArtifactError(
            f"baseline input width {x.shape[-1]} != {BASELINE_INPUT}"
        )
    p1 = x @ params.w1 + params.b1
    h1 = np.maximum(p1, 0.0)
    p2 = h1 @ params.w2 + params.b2
    h2 = np.maximum(p2, 0.0)
    z = h2 @ params.w3[:, 0] + params.b3[0]
    yhat = softplus(z)
    trace = BaselineTrace(x=x, p1=p1, h1=h1, p2=p2, h2=h2, z=z) if want_trace else None
    return yhat, trace


def baseline_backward(
    trace: BaselineTrace, dloss_dyhat: np.ndarray, params: BaselineParams
) -> dict[str, np.ndarray]:
    dz = dloss_dyhat * sigmoid(trace.z)
    grads = {
        "w3": trace.h2.T @ dz[:, None],
        "b3": np.array([dz.sum()]),
    }
    dh2 = dz[:, None] * params.w3[:, 0]
    dp2 = dh2 * (trace.p2 > 0.0)
    grads["w2"] = trace.h1.T @ dp2
    grads["b2"] = dp2.sum(axis=0)
    dh1 = dp2 @ params.w2.T
    dp1 = dh1 * (trace.p1 > 0.0)
    grads["w1"] = trace.x.T @ dp1
    grads["b1"] = dp1.sum(axis=0)
    return grads
