"""Tour of the tensor engine: building losses, differentiating them, and
verifying every gradient against central differences.

Run:  python demos/01_autodiff_and_gradients.py
"""
import numpy as np

from vrm import autodiff as ad
from vrm.autodiff import Tensor, backward, finite_diff_check

rng = np.random.default_rng(0)

# Tensors wrap float64 numpy arrays. Ops build a tape; backward replays it.
x = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
loss = ad.huber(x @ w, Tensor(np.zeros((4, 2))), 1.0).mean()
backward(loss)
print("loss:", loss.item())
print("dL/dw:\n", w.grad)

# Softened probabilities: temperature flattens the distribution.
z = Tensor([2.0, 0.0, -1.0])
for tau in (1.0, 4.0, 16.0):
    print(f"softmax tau={tau:>4}:", np.round(ad.softmax(z, axis=0, tau=tau).data, 4))

# The softened KL divergence that classic distillation minimizes.
zt = Tensor(rng.standard_normal((5, 4)))
zs = Tensor(rng.standard_normal((5, 4)), requires_grad=True)
kd = ad.kld(zt, zs, tau=4.0)
print("\nsoftened KL(teacher || student):", kd.item())

# Every gradient in this library is checked against an independent
# central-difference oracle. Worst relative disagreement:
err = finite_diff_check(lambda t: ad.kld(zt, t, tau=4.0), zs)
print("finite-difference check on the KL gradient:", err)

err = finite_diff_check(
    lambda t: ad.cross_entropy(t, np.array([0, 2, 1, 0])),
    Tensor(rng.standard_normal((4, 3))))
print("finite-difference check on cross-entropy:", err)
