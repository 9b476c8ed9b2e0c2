"""
The reverse-mode engine behind training
=======================================

The package trains through its own tape-based autodiff rather than a
framework. This script records a small expression, pulls gradients back
through it, and checks one of them against central finite differences.
"""

import numpy as np

from hgsrec import autodiff as ad
from hgsrec.autodiff import Tensor

rng = np.random.default_rng(0)

# Tensors are plain float64 matrices. Only ops recorded under a Tape
# participate in backward.
w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
x = Tensor(rng.normal(size=(1, 3)))

with ad.Tape():
    hidden = ad.relu(ad.matmul(x, w))
    weights = ad.softmax(hidden)
    loss = ad.softplus(ad.dot(weights, hidden))
ad.backward(loss)

print(f"loss = {ad.scalar(loss):.6f}")
print("dloss/dw =")
print(w.grad)

# The same computation nudged elementwise, no tape involved.
def value():
    h = ad.relu(ad.matmul(x, w))
    return ad.scalar(ad.softplus(ad.dot(ad.softmax(h), h)))

step = 1e-6
numeric = np.zeros_like(w.values)
for i in range(3):
    for j in range(3):
        keep = w.values[i, j]
        w.values[i, j] = keep + step
        hi = value()
        w.values[i, j] = keep - step
        lo = value()
        w.values[i, j] = keep
        numeric[i, j] = (hi - lo) / (2 * step)

gap = np.abs(numeric - w.grad).max()
print(f"\nlargest |numeric - analytic| entry: {gap:.3e}")
assert gap < 1e-6
print("tape gradients agree with finite differences")
