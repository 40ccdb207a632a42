import math

import numpy as np
import pytest

from vrm import autodiff as ad
from vrm.autodiff import Tensor, backward, finite_diff_check
from vrm.errors import InputError, ParameterError, UsageError


def test_tensor_rejects_non_finite():
    with pytest.raises(InputError):
        Tensor([1.0, np.inf])
    with pytest.raises(InputError):
        Tensor([np.nan])


def test_softmax_uniform_logits():
    p = ad.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
    assert np.allclose(p.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_softmax_closed_form_values():
    # exp(z/2)/sum for z=[2,0,0]: e/(e+2), 1/(e+2), 1/(e+2)
    p = ad.softmax(Tensor([2.0, 0.0, 0.0]), axis=0, tau=2.0)
    e = math.exp(1.0)
    expected = np.array([e, 1.0, 1.0]) / (e + 2.0)
    assert np.allclose(p.data, expected, atol=1e-15)


def test_softmax_temperature_flattens_monotonically():
    z = Tensor([1.0, 0.0])
    gaps = [ad.softmax(z, axis=0, tau=t).data[0] - 0.5 for t in (1.0, 4.0, 16.0, 64.0)]
    assert all(a > b > 0 for a, b in zip(gaps, gaps[1:]))


def test_softmax_sums_and_shift_invariance():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((5, 7))
    p = ad.softmax(Tensor(z), axis=1, tau=3.0)
    assert np.abs(p.data.sum(axis=1) - 1.0).max() < 1e-12
    shifted = ad.softmax(Tensor(z + 13.7), axis=1, tau=3.0)
    assert np.abs(p.data - shifted.data).max() < 1e-12


def test_softmax_rejects_bad_tau():
    with pytest.raises(ParameterError):
        ad.softmax(Tensor([1.0, 2.0]), axis=0, tau=0.0)
    with pytest.raises(ParameterError):
        ad.softmax(Tensor([1.0, 2.0]), axis=0, tau=-1.0)


def test_l2_normalize_examples():
    out = ad.l2_normalize(Tensor([3.0, 4.0]), axis=0)
    assert np.allclose(out.data, [0.6, 0.8], atol=1e-15)
    out = ad.l2_normalize(Tensor([1.0, -1.0]), axis=0)
    r = 1.0 / math.sqrt(2.0)
    assert np.allclose(out.data, [r, -r], atol=1e-15)
    out = ad.l2_normalize(Tensor([0.0, 0.0]), axis=0)
    assert np.array_equal(out.data, [0.0, 0.0])


def test_l2_normalize_zero_branch_has_zero_gradient():
    x = Tensor(np.zeros(3), requires_grad=True)
    backward(ad.l2_normalize(x, axis=0).sum())
    assert np.array_equal(x.grad, np.zeros(3))


def test_l2_normalize_rejects_bad_eps():
    with pytest.raises(ParameterError):
        ad.l2_normalize(Tensor([1.0, 2.0]), axis=0, eps=0.0)
    with pytest.raises(ParameterError):
        ad.huber(Tensor([1.0]), Tensor([0.0]), delta=-1.0)


def test_huber_branch_values():
    z = Tensor([0.0])
    assert ad.huber(Tensor([0.5]), z, 1.0).data[0] == pytest.approx(0.125, abs=1e-15)
    assert ad.huber(Tensor([2.0]), z, 1.0).data[0] == pytest.approx(1.5, abs=1e-15)
    same = Tensor(np.linspace(-2, 2, 9))
    assert np.array_equal(ad.huber(same, same, 1.0).data, np.zeros(9))


def test_huber_symmetry_and_mse_region():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(50), rng.standard_normal(50)
    d = 2.0
    ab = ad.huber(Tensor(a), Tensor(b), d).data
    ba = ad.huber(Tensor(b), Tensor(a), d).data
    assert np.array_equal(ab, ba)
    small = np.clip(a - b, -0.5, 0.5)
    inside = ad.huber(Tensor(b + small), Tensor(b), 1.0).data
    assert np.abs(inside - 0.5 * small**2).max() < 1e-15


def test_huber_gradient_branches():
    for value, expected in ((0.5, 0.5), (2.0, 1.0), (-3.0, -1.0)):
        x = Tensor([value], requires_grad=True)
        backward(ad.huber(x, Tensor([0.0]), 1.0).sum())
        assert x.grad[0] == pytest.approx(expected, abs=1e-15)


def test_cross_entropy_uniform_and_confident():
    logits = np.zeros((4, 10))
    val = ad.cross_entropy(Tensor(logits), np.array([3, 1, 0, 9])).item()
    assert val == pytest.approx(math.log(10.0), abs=1e-12)
    big = np.full((2, 3), -50.0)
    big[0, 1] = big[1, 2] = 50.0
    assert ad.cross_entropy(Tensor(big), np.array([1, 2])).item() < 1e-12


def test_cross_entropy_matches_per_sample_oracle():
    rng = np.random.default_rng(2)
    logits = rng.standard_normal((2, 3))
    labels = np.array([2, 0])
    total = 0.0
    for i in range(2):
        row = logits[i]
        total += -math.log(math.exp(row[labels[i]]) / np.exp(row).sum())
    got = ad.cross_entropy(Tensor(logits), labels).item()
    assert got == pytest.approx(total / 2.0, rel=1e-12)


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(InputError):
        ad.cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))
    with pytest.raises(InputError):
        ad.cross_entropy(Tensor(np.zeros((2, 3))), np.array([-1, 0]))


def test_kld_zero_at_identical_and_closed_form():
    rng = np.random.default_rng(3)
    z = rng.standard_normal((4, 6))
    assert ad.kld(Tensor(z), Tensor(z.copy()), tau=2.0).item() == pytest.approx(0.0, abs=1e-15)
    # two-class closed form: KL([1,0] vs [0,1] logits, tau=1) = tanh(1/2)
    v = ad.kld(Tensor([[1.0, 0.0]]), Tensor([[0.0, 1.0]]), tau=1.0).item()
    assert v == pytest.approx(math.tanh(0.5), rel=1e-12)


def test_kld_shift_invariance_and_nonnegativity():
    rng = np.random.default_rng(4)
    zt, zs = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
    base = ad.kld(Tensor(zt), Tensor(zs), tau=3.0).item()
    shifts = rng.standard_normal((5, 1))
    shifted = ad.kld(Tensor(zt + shifts), Tensor(zs), tau=3.0).item()
    assert shifted == pytest.approx(base, abs=1e-12)
    assert base >= 0.0


def test_entropy_examples():
    assert ad.entropy(Tensor([0.5, 0.5]), axis=0).item() == pytest.approx(math.log(2), abs=1e-12)
    assert ad.entropy(Tensor([1.0, 0.0]), axis=0).item() == pytest.approx(0.0, abs=1e-15)
    assert ad.entropy(Tensor([0.75, 0.25]), axis=0).item() == pytest.approx(0.5623351446188083, abs=1e-12)


def test_entropy_range_property():
    rng = np.random.default_rng(5)
    for _ in range(20):
        k = int(rng.integers(2, 9))
        p = rng.dirichlet(np.ones(k))
        h = ad.entropy(Tensor(p), axis=0).item()
        assert -1e-12 <= h <= math.log(k) + 1e-12


def test_entropy_rejects_negative_probabilities():
    with pytest.raises(InputError):
        ad.entropy(Tensor([1.1, -0.1]), axis=0)


def test_backward_sum_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    backward(x.sum())
    assert np.array_equal(x.grad, np.ones(3))


def test_backward_returns_gradient_map():
    x = Tensor([1.0, -1.0], requires_grad=True)
    y = Tensor([2.0, 3.0], requires_grad=True)
    grads = backward((x * y).sum())
    assert np.array_equal(grads[id(x)], y.data)
    assert np.array_equal(grads[id(y)], x.data)


def test_backward_shared_subexpression():
    # y = x*x + x: gradient 2x + 1, exercising gradient accumulation
    x = Tensor([0.5, -2.0], requires_grad=True)
    y = (x * x + x).sum()
    backward(y)
    assert np.allclose(x.grad, 2 * x.data + 1, atol=1e-15)


def test_backward_usage_errors():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(UsageError):
        backward(x * 2.0)  # non-scalar
    with pytest.raises(UsageError):
        backward(Tensor(3.0))  # no tape
    s = x.sum()
    backward(s)
    with pytest.raises(UsageError):
        backward(s)


def test_no_grad_suppresses_tape():
    x = Tensor([1.0], requires_grad=True)
    with ad.no_grad():
        y = x * 2.0
    assert y.node is None and not y.requires_grad


def test_tape_orders_inputs_before_consumers():
    x = Tensor([1.0], requires_grad=True)
    y = x * 3.0
    z = (y + x).sum()
    tape = ad.Tape.trace(z)
    pos = {id(t): i for i, t in enumerate(tape.nodes)}
    for t in tape.nodes:
        if t.node is not None:
            assert all(pos[id(i)] < pos[id(t)] for i in t.node.inputs if id(i) in pos)


def test_finite_diff_exact_quadratic():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(8)
    err = finite_diff_check(lambda t: (t * t).sum() * 0.5, Tensor(x))
    assert err < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_finite_diff_cross_entropy(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, size=4)
    err = finite_diff_check(lambda t: ad.cross_entropy(t, labels), Tensor(rng.standard_normal((4, 3))))
    assert err < 1e-5


def test_finite_diff_each_op_20_instances():
    # every exported differentiable op, 20 seeded instances each
    rng = np.random.default_rng(7)
    proj = rng.standard_normal((4, 5))
    kld_teacher = rng.standard_normal((4, 5))
    mat = rng.standard_normal((5, 2))
    cases = [
        lambda t: (ad.softmax(t, axis=1, tau=2.5) * Tensor(proj)).sum(),
        lambda t: (ad.l2_normalize(t, axis=1) * Tensor(proj)).sum(),
        lambda t: ad.huber(t, Tensor(np.zeros((4, 5))), 0.8).sum(),
        lambda t: ad.kld(Tensor(kld_teacher), t, tau=3.0),
        lambda t: ad.entropy(ad.softmax(t, axis=1), axis=1).sum(),
        lambda t: ad.tanh(t).sum(),
        lambda t: ad.relu(t + 0.123).sum(),
        lambda t: ((t @ Tensor(mat)) * (t @ Tensor(mat))).mean(),
        lambda t: (ad.concat([t, t * 2.0], axis=0).transpose() * 0.5).sum(),
        lambda t: (ad.row_slice(t, 1, 3) * ad.row_slice(t, 0, 2)).sum(),
    ]
    for fn in cases:
        for seed in range(20):
            x = np.random.default_rng(seed).standard_normal((4, 5))
            assert finite_diff_check(fn, Tensor(x)) < 1e-4


def test_matmul_gradients():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    err = finite_diff_check(lambda t: (t @ Tensor(b)).sum(), Tensor(a))
    assert err < 1e-8
    err = finite_diff_check(lambda t: (Tensor(a) @ t).sum(), Tensor(b))
    assert err < 1e-8


def test_broadcast_add_unbroadcasts_gradient():
    x = Tensor(np.ones((3, 4)), requires_grad=True)
    bias = Tensor(np.ones(4), requires_grad=True)
    backward((x + bias).sum())
    assert np.array_equal(bias.grad, np.full(4, 3.0))
    assert np.array_equal(x.grad, np.ones((3, 4)))
