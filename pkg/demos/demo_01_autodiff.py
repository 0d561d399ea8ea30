"""
Gradients through the ConvNet, checked by hand
==============================================

The engine is a small reverse-mode autodiff over numpy arrays.  Here we
build a feature extractor, take the gradient of a distribution-matching
loss with respect to the synthetic pixels, and compare one entry against a
central finite difference.
"""

import numpy as np

from flipdistill.convnet import init_params
from flipdistill.objectives import dm_distance
from flipdistill.tensor import Tensor, backward

rng = np.random.default_rng(0)
net = init_params(0, (1, 16, 16), 10, blocks=2, width=8)
real = rng.standard_normal((6, 1, 16, 16))
syn0 = rng.standard_normal((2, 1, 16, 16))

# analytic gradient
syn = Tensor(syn0, requires_grad=True)
backward(dm_distance(net, real, syn))

# finite difference on a single pixel
h = 1e-5
up, down = syn0.copy(), syn0.copy()
up[0, 0, 7, 3] += h
down[0, 0, 7, 3] -= h
fd = (dm_distance(net, real, up).item() - dm_distance(net, real, down).item()) / (2 * h)
print(f"analytic {syn.grad[0, 0, 7, 3]:.10f}")
print(f"numeric  {fd:.10f}")
