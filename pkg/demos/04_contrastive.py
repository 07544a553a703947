"""InfoNCE with explore and exploit negatives.

For K anchors there is one positive score and 2(K-1) negatives each, so
with every score equal the loss is exactly ln(2K - 1).
"""
import math

import numpy as np

from padel.contrastive import info_nce, score
from padel.tensor import Tensor

for K in (2, 3, 8, 32):
    same = lambda cols: Tensor(np.full((K, cols), 0.3))
    print(f"K={K:2d}  loss {info_nce(same(1), same(K - 1), same(K - 1)).item():.6f}  ln(2K-1) {math.log(2 * K - 1):.6f}")

# a confident batch: positives well above negatives
pos = Tensor(np.full((3, 1), 2.0))
neg = Tensor(np.full((3, 2), -2.0))
print("separated scores:", round(info_nce(pos, neg, neg).item(), 6))

# the similarity used between two encoded subgraphs: cosine on each branch, summed
a = (np.array([1.0, 0.0]), np.array([0.5, 0.5]))
b = (np.array([0.8, 0.6]), np.array([0.5, 0.5]))
print("score(a, b) =", round(score(a, b), 4))
