"""
Inside the graph-convolutional performance model
================================================

Walks one batch through the model by hand: feature normalization, the
280-wide initial embeddings, two convolution blocks over the normalized
adjacency, sum-pool readout, and the softplus head. Also verifies the two
structural properties the architecture guarantees: node-permutation
invariance and batching equivalence.
"""
import numpy as np

from schedperf.dataset import generate_dataset, read_dataset, split_samples
from schedperf.features import fit_norm_stats
from schedperf.graph import PipelineGraph, normalize_adjacency
from schedperf.model import GraphBatch, forward, init_model_params

###############################################################################
# The normalized adjacency
# ------------------------
# Every convolution multiplies node embeddings by rownorm(A + I): each stage
# averages its own state with its producers' states.

chain = PipelineGraph(num_nodes=3, edges=((0, 1), (1, 2)))
print("rownorm(A + I) for a 3-stage chain:")
print(normalize_adjacency(chain).matrix)

###############################################################################
# A forward pass
# --------------

import tempfile, os
out = os.path.join(tempfile.mkdtemp(), "demo.jsonl")
generate_dataset(out, num_pipelines=8, schedules_per_pipeline=4, seed=3)
_, records = read_dataset(out)
train = split_samples(records, "train")

stats = fit_norm_stats(
    np.vstack([r.invariant for r in train]),
    np.vstack([r.dependent for r in train]),
)
batch_records = train[:5]
batch = GraphBatch.build(
    [r.graph for r in batch_records],
    [stats.normalize_invariant(r.invariant) for r in batch_records],
    [stats.normalize_dependent(r.dependent) for r in batch_records],
)
params = init_model_params(seed=0)
yhat, _ = forward(batch, params, mode="eval")
print("\nuntrained predictions (ms):", np.round(yhat, 3))
print("all positive:", bool((yhat > 0).all()))

###############################################################################
# Node-permutation invariance
# ---------------------------
# Sum-pooling makes the prediction independent of node numbering, as long
# as the adjacency and feature rows are permuted consistently.

r = batch_records[0]
perm = np.random.default_rng(0).permutation(r.graph.num_nodes)
permuted_graph = PipelineGraph(
    num_nodes=r.graph.num_nodes,
    edges=tuple((int(perm[p]), int(perm[c])) for p, c in r.graph.edges),
)
inv2 = np.empty_like(r.invariant); inv2[perm] = r.invariant
dep2 = np.empty_like(r.dependent); dep2[perm] = r.dependent
single = GraphBatch.build(
    [r.graph], [stats.normalize_invariant(r.invariant)], [stats.normalize_dependent(r.dependent)]
)
shuffled = GraphBatch.build(
    [permuted_graph], [stats.normalize_invariant(inv2)], [stats.normalize_dependent(dep2)]
)
y1, _ = forward(single, params, mode="eval")
y2, _ = forward(shuffled, params, mode="eval")
print(f"\npermutation invariance: |delta| = {abs(y1[0] - y2[0]):.2e}")

###############################################################################
# Batching equivalence
# --------------------
# Eval-mode predictions are identical whether graphs are run alone or
# stacked block-diagonally into one batch.

singles = np.concatenate([
    forward(GraphBatch.build(
        [r.graph],
        [stats.normalize_invariant(r.invariant)],
        [stats.normalize_dependent(r.dependent)],
    ), params, mode="eval")[0]
    for r in batch_records
])
print(f"batched vs single max |delta| = {np.abs(yhat - singles).max():.2e}")
