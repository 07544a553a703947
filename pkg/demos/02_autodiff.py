"""The reverse-mode tape against central finite differences.

One GCN layer, relu(A_norm @ X @ W), summed against a random weighting.
"""
import numpy as np

from padel import tensor as T
from padel.tensor import Tape
from padel.vsubgae import normalize_adjacency

rng = np.random.default_rng(0)
A = np.array([[0, 1, 1, 0], [1, 0, 1, 0], [1, 1, 0, 1], [0, 0, 1, 0]], dtype=float)
A_norm = normalize_adjacency(A)
X = T.parameter(rng.normal(size=(4, 3)), name="X")
W = T.parameter(rng.normal(size=(3, 2)), name="W")
R = T.Tensor(rng.normal(size=(4, 2)))


def loss():
    H = T.relu(T.const_matmul(A_norm, T.matmul(X, W)))
    return T.sum_all(T.pointwise_mul(H, R))


with Tape() as tape:
    out = loss()
    grads = tape.backward(out)

h = 1e-6
numeric = np.zeros_like(W.data)
for idx in np.ndindex(W.shape):
    old = W.data[idx]
    W.data[idx] = old + h
    up = loss().item()
    W.data[idx] = old - h
    down = loss().item()
    W.data[idx] = old
    numeric[idx] = (up - down) / (2 * h)

print("tape gradient for W:\n", grads[W])
print("finite differences:\n", numeric)
print("max abs difference:", np.abs(grads[W] - numeric).max())
