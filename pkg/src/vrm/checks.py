"""Self-verification suites: finite-difference gradient checks for every
differentiable op and oracle-equivalence checks for the vectorized edge
builders and masked losses.  These back the ``check`` command and double
as the release gate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graphs import (
    LogitBatch,
    brute_force_edges,
    build_icv_edges,
    build_inter_class_edges,
    build_inter_sample_edges,
    build_isv_edges,
    soften,
)
from .losses import VRMWeights, loss_isv, total_loss, uep_masks_for
from .pruning import joint_entropy_matrix, uep_mask

GRAD_TOL = 1e-4
ORACLE_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _grad_case(name, fn, shapes, n_instances, seed, tol=GRAD_TOL) -> CheckResult:
    worst = 0.0
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        x = rng.standard_normal(shapes)
        err = ad.finite_diff_check(fn, ad.Tensor(x))
        worst = max(worst, err)
        if not np.isfinite(err):
            worst = np.inf
            break
    passed = worst < tol
    return CheckResult(name, passed, f"max rel err {worst:.3e} (tol {tol:g})")


def gradient_checks(quick: bool = False, seed: int = 0) -> list[CheckResult]:
    n = 3 if quick else 20
    results = []
    results.append(_grad_case(
        "grad:softmax", lambda x: (ad.softmax(x, axis=1, tau=3.0) * ad.Tensor(
            np.random.default_rng(1).standard_normal((4, 5)))).sum(), (4, 5), n, seed))
    results.append(_grad_case(
        "grad:l2_normalize", lambda x: (ad.l2_normalize(x, axis=1) * ad.Tensor(
            np.random.default_rng(2).standard_normal((4, 5)))).sum(), (4, 5), n, seed + 1))
    results.append(_grad_case(
        "grad:huber", lambda x: ad.huber(x, ad.Tensor(np.zeros((3, 4))), 0.7).sum(),
        (3, 4), n, seed + 2))
    results.append(_grad_case(
        "grad:cross_entropy",
        lambda x: ad.cross_entropy(x, np.arange(4) % 3), (4, 3), n, seed + 3))
    results.append(_grad_case(
        "grad:kld", lambda x: ad.kld(ad.Tensor(
            np.random.default_rng(3).standard_normal((4, 5))), x, tau=2.0),
        (4, 5), n, seed + 4))
    results.append(_grad_case(
        "grad:entropy",
        lambda x: ad.entropy(ad.softmax(x, axis=1), axis=1).sum(), (4, 5), n, seed + 5))

    # full objective with frozen masks
    rng = np.random.default_rng(seed + 6)
    worst = 0.0
    for _ in range(2 if quick else 5):
        b, c = 4, 3
        weights = VRMWeights(alpha=8.0, beta=4.0)
        teacher = LogitBatch(rng.standard_normal((b, c)), rng.standard_normal((b, c)))
        base = rng.standard_normal((2 * b, c))
        labels = rng.integers(0, c, size=b)
        frozen = uep_masks_for(LogitBatch(base[:b], base[b:]), weights)

        def objective(x, frozen=frozen):
            student = LogitBatch(ad.row_slice(x, 0, b), ad.row_slice(x, b, 2 * b))
            return total_loss(student, teacher, labels, weights, masks=frozen).total

        worst = max(worst, ad.finite_diff_check(objective, ad.Tensor(base)))
    results.append(CheckResult(
        "grad:total_loss", worst < GRAD_TOL, f"max rel err {worst:.3e} (tol {GRAD_TOL:g})"))
    return results


def oracle_checks(quick: bool = False, seed: int = 100) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    n = 5 if quick else 50
    results = []
    builders = {
        "IS": lambda lb: build_inter_sample_edges(lb.real),
        "IC": lambda lb: build_inter_class_edges(lb.real),
        "ISV": build_isv_edges,
        "ICV": build_icv_edges,
    }
    for kind, builder in builders.items():
        worst = 0.0
        for _ in range(n):
            b = int(rng.integers(2, 9))
            c = int(rng.integers(2, 6))
            lb = LogitBatch(rng.standard_normal((b, c)), rng.standard_normal((b, c)))
            fast = builder(lb).values.data
            source = lb if kind in ("ISV", "ICV") else lb.real
            slow = brute_force_edges(source, kind).values.data
            worst = max(worst, float(np.abs(fast - slow).max()))
        results.append(CheckResult(
            f"oracle:{kind}", worst < ORACLE_TOL, f"max abs dev {worst:.3e}"))

    worst = 0.0
    for _ in range(n):
        b, c = int(rng.integers(2, 7)), int(rng.integers(2, 6))
        lb = soften(LogitBatch(rng.standard_normal((b, c)), rng.standard_normal((b, c))), 4.0)
        je = joint_entropy_matrix(lb, "ISV")
        mask = uep_mask(je, 75.0, "ISV")
        edges_s = build_isv_edges(lb)
        lb2 = soften(LogitBatch(rng.standard_normal((b, c)), rng.standard_normal((b, c))), 4.0)
        edges_t = build_isv_edges(lb2)
        fast = loss_isv(edges_s, edges_t, mask).item()
        slow = _scalar_masked_loss(edges_s.values.data, edges_t.values.data, mask.keep)
        worst = max(worst, abs(fast - slow))
    results.append(CheckResult(
        "oracle:masked_loss", worst < ORACLE_TOL, f"max abs dev {worst:.3e}"))
    return results


def _scalar_masked_loss(e_s, e_t, keep, delta=1.0):
    total = 0.0
    kept = 0
    n0, n1, fl = e_s.shape
    for i in range(n0):
        for j in range(n1):
            if not keep[i, j]:
                continue
            kept += 1
            for k in range(fl):
                r = e_s[i, j, k] - e_t[i, j, k]
                if abs(r) <= delta:
                    total += 0.5 * r * r
                else:
                    total += delta * (abs(r) - 0.5 * delta)
    return total / (kept * fl) if kept else 0.0


def structure_checks(seed: int = 200) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    z = rng.standard_normal((6, 4))
    e_is = build_inter_sample_edges(z).values.data
    anti = float(np.abs(e_is + e_is.transpose(1, 0, 2)).max())
    results.append(CheckResult("structure:antisymmetry", anti == 0.0,
                               f"max |E[i,j]+E[j,i]| = {anti:.3e}"))

    norms = np.sqrt((e_is * e_is).sum(axis=2))
    ok = np.all((norms == 0.0) | (np.abs(norms - 1.0) < 1e-9))
    results.append(CheckResult("structure:unit_norm", bool(ok),
                               "fibers unit length or exactly zero"))

    counts_ok = True
    for m in (50.0, 75.0, 90.0, 95.0, 100.0):
        je = rng.standard_normal((8, 8))  # distinct values, no threshold ties
        mask = uep_mask(je, m)
        expected = int(np.ceil(m / 100.0 * je.size))
        if mask.kept_count != expected:
            counts_ok = False
    results.append(CheckResult("structure:uep_retention", counts_ok,
                               "nearest-rank retention counts exact"))
    return results


def run_all_checks(quick: bool = False) -> list[CheckResult]:
    return gradient_checks(quick) + oracle_checks(quick) + structure_checks()
