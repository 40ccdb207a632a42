"""Reference relation encoders for head-to-head comparison with the
edge-tensor objective: inner-product Gram matrices and third-order
angular relations, matched with the same Huber metric."""
from __future__ import annotations

from enum import Enum

from . import autodiff as ad
from .autodiff import Tensor, _coerce
from .errors import InputError, UsageError
from .graphs import LogitBatch, build_icv_edges, build_inter_sample_edges, build_isv_edges
from .losses import loss_icv, loss_isv


class RelationKind(Enum):
    GRAM_INTER_SAMPLE = "gram_inter_sample"
    GRAM_INTER_CLASS = "gram_inter_class"
    ANGULAR = "angular"
    VRM_ISV_ICV = "vrm_isv_icv"


def gram_inter_sample(Z) -> Tensor:
    """Row-cosine Gram matrix [B, B]: unit-normalize each row, then the
    inner product of every pair.  Zero rows stay zero (diagonal 0)."""
    z = _coerce(Z)
    if z.ndim != 2 or z.shape[0] < 2:
        raise InputError("gram_inter_sample needs a [B >= 2, C] matrix")
    zn = ad.l2_normalize(z, axis=1)
    return zn @ zn.T


def gram_inter_class(Z) -> Tensor:
    """Column analog of :func:`gram_inter_sample`, shape [C, C]."""
    z = _coerce(Z)
    if z.ndim != 2 or z.shape[1] < 2:
        raise InputError("gram_inter_class needs a [B, C >= 2] matrix")
    zn = ad.l2_normalize(z, axis=0)
    return zn.T @ zn


def angular_relations(Z) -> Tensor:
    """Third-order relations [B, B, B]: entry (i, j, k) is the cosine of
    the angle at vertex j spanned by the differences Z_i - Z_j and
    Z_k - Z_j.  Degenerate (zero) differences contribute cosine 0."""
    z = _coerce(Z)
    if z.ndim != 2 or z.shape[0] < 3:
        raise InputError("angular relations need at least 3 samples")
    b, c = z.shape
    # unit difference vectors e[i, j] = unit(Z_i - Z_j), zero on the diagonal
    e = build_inter_sample_edges(z).values
    left = e.reshape(b, b, 1, c)
    right = e.transpose((1, 0, 2)).reshape(1, b, b, c)
    return (left * right).sum(axis=3)


def _relation(kind: RelationKind, batch: LogitBatch) -> Tensor:
    stacked = ad.concat([batch.real, batch.virtual], axis=0)
    if kind is RelationKind.GRAM_INTER_SAMPLE:
        return gram_inter_sample(stacked)
    if kind is RelationKind.GRAM_INTER_CLASS:
        return gram_inter_class(stacked)
    if kind is RelationKind.ANGULAR:
        return angular_relations(stacked)
    raise UsageError(f"no single-tensor relation for {kind}")


def baseline_relation_loss(kind, student: LogitBatch, teacher: LogitBatch,
                           delta: float = 1.0) -> Tensor:
    """Huber distance between the chosen relation representation of the
    student and the teacher, mean-reduced.

    Both views are stacked into one 2B-sample batch before encoding, so
    every baseline sees the same inputs as the edge-tensor objective.
    The ``vrm_isv_icv`` kind evaluates the unmasked pair of edge losses
    for a like-for-like comparison at the relation level.
    """
    kind = RelationKind(kind)
    teacher = teacher.detach()
    if kind is RelationKind.VRM_ISV_ICV:
        isv = loss_isv(build_isv_edges(student), build_isv_edges(teacher), None, delta)
        icv = loss_icv(build_icv_edges(student), build_icv_edges(teacher), None, delta)
        return isv + icv
    rel_s = _relation(kind, student)
    with ad.no_grad():
        rel_t = _relation(kind, teacher)
    return ad.huber(rel_s, rel_t.detach(), delta).mean()
