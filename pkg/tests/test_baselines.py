import numpy as np
import pytest

from vrm.autodiff import Tensor, finite_diff_check
from vrm.baselines import (
    RelationKind,
    angular_relations,
    baseline_relation_loss,
    gram_inter_class,
    gram_inter_sample,
)
from vrm.errors import InputError
from vrm.graphs import LogitBatch, soften


def test_gram_inter_sample_orthonormal_rows():
    z = np.eye(3)
    g = gram_inter_sample(Tensor(z)).data
    assert np.allclose(g, np.eye(3), atol=1e-15)


def test_gram_inter_sample_duplicate_rows():
    z = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]])
    g = gram_inter_sample(Tensor(z)).data
    assert g[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_gram_zero_row_handling():
    z = np.array([[0.0, 0.0], [1.0, 0.0]])
    g = gram_inter_sample(Tensor(z)).data
    assert g[0, 0] == 0.0 and g[1, 1] == pytest.approx(1.0, abs=1e-15)


def test_gram_inter_sample_scalar_oracle():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((4, 3))
    g = gram_inter_sample(Tensor(z)).data
    for i in range(4):
        for j in range(4):
            want = float(z[i] @ z[j] / (np.linalg.norm(z[i]) * np.linalg.norm(z[j])))
            assert g[i, j] == pytest.approx(want, abs=1e-12)


def test_gram_inter_class_duplicate_column_and_oracle():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((5, 3))
    z[:, 2] = z[:, 0]
    g = gram_inter_class(Tensor(z)).data
    assert g[0, 2] == pytest.approx(1.0, abs=1e-12)
    for p in range(3):
        for q in range(3):
            want = float(z[:, p] @ z[:, q] / (np.linalg.norm(z[:, p]) * np.linalg.norm(z[:, q])))
            assert g[p, q] == pytest.approx(want, abs=1e-12)


def test_gram_symmetry_and_diagonal_property():
    rng = np.random.default_rng(2)
    for _ in range(10):
        z = rng.standard_normal((5, 4))
        g = gram_inter_sample(Tensor(z)).data
        assert np.abs(g - g.T).max() < 1e-12
        assert np.abs(np.diag(g) - 1.0).max() < 1e-12


def test_angular_zero_angle_and_right_angle():
    z = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    a = angular_relations(Tensor(z)).data
    # angle at vertex 0 between (z1 - z0) and (z2 - z0) is 90 degrees
    assert a[1, 0, 2] == pytest.approx(0.0, abs=1e-12)
    # i == k with distinct points: zero angle, cosine 1
    assert a[1, 0, 1] == pytest.approx(1.0, abs=1e-12)


def test_angular_collinear_points():
    # equally spaced points on a line: cosines are +/-1 by side
    z = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    a = angular_relations(Tensor(z)).data
    assert a[0, 1, 2] == pytest.approx(-1.0, abs=1e-12)  # opposite sides of vertex 1
    assert a[0, 2, 1] == pytest.approx(1.0, abs=1e-12)   # same side of vertex 2


def test_angular_degenerate_pair_maps_to_zero():
    z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    a = angular_relations(Tensor(z)).data
    assert a[0, 1, 2] == pytest.approx(0.0, abs=1e-15)  # z0 == z1 difference is zero


def test_angular_range_property():
    rng = np.random.default_rng(3)
    for _ in range(10):
        z = rng.standard_normal((5, 3))
        a = angular_relations(Tensor(z)).data
        assert a.min() >= -1.0 - 1e-9 and a.max() <= 1.0 + 1e-9


def test_relation_input_guards():
    with pytest.raises(InputError):
        gram_inter_sample(Tensor(np.zeros((1, 3))))
    with pytest.raises(InputError):
        gram_inter_class(Tensor(np.zeros((3, 1))))
    with pytest.raises(InputError):
        angular_relations(Tensor(np.zeros((2, 3))))


def softened_pair(rng, b, c):
    s = soften(LogitBatch(rng.standard_normal((b, c)), rng.standard_normal((b, c))), 4.0)
    t = soften(LogitBatch(rng.standard_normal((b, c)), rng.standard_normal((b, c))), 4.0)
    return s, t


@pytest.mark.parametrize("kind", list(RelationKind))
def test_baseline_losses_zero_at_equality_and_nonnegative(kind):
    rng = np.random.default_rng(4)
    s, t = softened_pair(rng, 4, 3)
    same = LogitBatch(s.real.data.copy(), s.virtual.data.copy(), softened=True)
    assert baseline_relation_loss(kind, s, same).item() == pytest.approx(0.0, abs=1e-15)
    assert baseline_relation_loss(kind, s, t).item() >= 0.0


def test_baseline_gram_loss_scalar_oracle():
    rng = np.random.default_rng(5)
    s, t = softened_pair(rng, 3, 4)
    got = baseline_relation_loss(RelationKind.GRAM_INTER_SAMPLE, s, t).item()
    zs = np.vstack([s.real.data, s.virtual.data])
    zt = np.vstack([t.real.data, t.virtual.data])

    def gram(z):
        zn = z / np.linalg.norm(z, axis=1, keepdims=True)
        return zn @ zn.T

    r = gram(zs) - gram(zt)
    hub = np.where(np.abs(r) <= 1.0, 0.5 * r * r, np.abs(r) - 0.5)
    assert got == pytest.approx(hub.mean(), abs=1e-12)


def test_baseline_losses_accept_string_kinds():
    rng = np.random.default_rng(6)
    s, t = softened_pair(rng, 4, 3)
    by_enum = baseline_relation_loss(RelationKind.VRM_ISV_ICV, s, t).item()
    by_str = baseline_relation_loss("vrm_isv_icv", s, t).item()
    assert by_enum == by_str


def test_baseline_angular_gradcheck():
    rng = np.random.default_rng(7)
    t_batch = soften(LogitBatch(rng.standard_normal((3, 3)), rng.standard_normal((3, 3))), 4.0)

    def objective(x):
        from vrm.autodiff import row_slice, softmax
        s = LogitBatch(softmax(row_slice(x, 0, 3), axis=1, tau=4.0),
                       softmax(row_slice(x, 3, 6), axis=1, tau=4.0), softened=True)
        return baseline_relation_loss(RelationKind.ANGULAR, s, t_batch)

    err = finite_diff_check(objective, Tensor(rng.standard_normal((6, 3))))
    assert err < 1e-4


def test_baseline_gram_gradcheck():
    rng = np.random.default_rng(8)
    t_batch = soften(LogitBatch(rng.standard_normal((4, 3)), rng.standard_normal((4, 3))), 4.0)

    def objective(x):
        from vrm.autodiff import row_slice, softmax
        s = LogitBatch(softmax(row_slice(x, 0, 4), axis=1, tau=4.0),
                       softmax(row_slice(x, 4, 8), axis=1, tau=4.0), softened=True)
        return baseline_relation_loss(RelationKind.GRAM_INTER_SAMPLE, s, t_batch)

    assert finite_diff_check(objective, Tensor(rng.standard_normal((8, 3)))) < 1e-4
