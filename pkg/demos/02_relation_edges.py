"""What the affinity edges look like and why there are four kinds.

Edges are unit-normalized pairwise differences between predictions:
within a view they relate samples (IS) or classes (IC); across the real
and virtual views they become the cross-view tensors (ISV/ICV) that the
distillation loss actually matches.

Run:  python demos/02_relation_edges.py
"""
import numpy as np

from vrm.graphs import (
    LogitBatch,
    brute_force_edges,
    build_icv_edges,
    build_inter_sample_edges,
    build_isv_edges,
    soften,
)

rng = np.random.default_rng(7)
B, C = 4, 3

logits = rng.standard_normal((B, C))
edges = build_inter_sample_edges(logits)
print("inter-sample edges:", edges.values.shape, "(one length-C fiber per ordered pair)")
print("fiber (0, 1):", np.round(edges.values.data[0, 1], 4))
print("fiber (1, 0):", np.round(edges.values.data[1, 0], 4), "  <- exact negation")
print("diagonal fiber:", edges.values.data[0, 0], " <- a sample has no relation to itself")

# Cross-view edges: the batch carries a real and a virtual (augmented)
# view; only real-virtual pairs are materialized, so the redundant
# symmetric half and the intra-view relations never exist.
batch = soften(LogitBatch(rng.standard_normal((B, C)), rng.standard_normal((B, C))), tau=4.0)
isv = build_isv_edges(batch)
icv = build_icv_edges(batch)
print("\ncross-view inter-sample edges:", isv.values.shape)
print("cross-view inter-class edges:", icv.values.shape, "(fibers run along the batch)")

# Everything is double-checked against a scalar-loop oracle.
slow = brute_force_edges(batch, "ISV")
dev = np.abs(isv.values.data - slow.values.data).max()
print("\nmax deviation from the scalar-loop oracle:", dev)

# Fibers are unit length wherever a relation exists.
norms = np.linalg.norm(isv.values.data, axis=2)
print("fiber norms (should be 1):", np.round(norms.ravel()[:6], 12), "...")
