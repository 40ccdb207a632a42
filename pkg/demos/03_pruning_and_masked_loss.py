"""Unreliable-edge pruning: score every cross-view pair by the entropy
of the mixture of its two endpoint distributions, then keep only the
pairs at or below a percentile cutoff.

Aligned, confident pairs score low (kept); disagreeing pairs score high
(pruned), which is exactly where a spurious prediction would inject a
misleading relation.

Run:  python demos/03_pruning_and_masked_loss.py
"""
import numpy as np

from vrm.graphs import LogitBatch, build_isv_edges, soften
from vrm.losses import loss_isv
from vrm.pruning import joint_entropy_matrix, mixture_entropy, uep_mask

rng = np.random.default_rng(3)
B, C = 6, 4

print("mixture entropy of two aligned one-hot predictions:",
      mixture_entropy([1, 0, 0, 0], [1, 0, 0, 0]))
print("mixture entropy of two clashing one-hot predictions:",
      mixture_entropy([1, 0, 0, 0], [0, 1, 0, 0]), "(= ln 2)")

student = soften(LogitBatch(rng.standard_normal((B, C)), rng.standard_normal((B, C))), tau=4.0)
je = joint_entropy_matrix(student, "ISV")
print("\njoint-entropy matrix (row i = virtual view i, col j = real view j):")
print(np.round(je, 3))

for m in (50.0, 95.0, 100.0):
    mask = uep_mask(je, m, "ISV")
    print(f"m={m:>5}: keep {mask.kept_count}/{mask.keep.size} edges, "
          f"cutoff {mask.threshold_value:.4f}")

# Pruned fibers contribute exactly zero loss and zero gradient.
teacher = soften(LogitBatch(rng.standard_normal((B, C)), rng.standard_normal((B, C))), tau=4.0)
e_s, e_t = build_isv_edges(student), build_isv_edges(teacher)
full = loss_isv(e_s, e_t, uep_mask(je, 100.0, "ISV"))
pruned = loss_isv(e_s, e_t, uep_mask(je, 75.0, "ISV"))
print("\nedge loss with every edge kept:   ", full.item())
print("edge loss keeping the calmest 75%:", pruned.item())
