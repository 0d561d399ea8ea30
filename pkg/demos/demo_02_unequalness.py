"""
How left-right balanced is a set of images?
===========================================

The unequalness score compares the mean random-network features of a set
with those of its mirror image.  A set that contains the mirror of every
member scores exactly zero; a single digit does not.  Pooling more real
digits evens out left and right, so the score falls steeply at first and
then levels off.  With only a few random networks the flat part is noisy.
"""

import numpy as np

from flipdistill.convnet import make_rng
from flipdistill.dataio import load_dataset, make_flip_closed
from flipdistill.diagnostics import median_score, score_curve, theta_pool
from flipdistill.harness import resolve_data_dir

train, _, meta = load_dataset("mnist", resolve_data_dir("data/mnist-subset"))
thetas = theta_pool(10, (1, 32, 32), 10, seed=0)  # full-width networks, about two minutes

# %%
# The score shrinks as the sample grows.
for n, score in score_curve(train.images, [1, 10, 100, 1000], thetas, make_rng(0)):
    print(f"N={n:5d}  median score {score:.4f}")

# %%
# Adding every mirror image makes the set flip-closed: the score is zero.
sample = train.subset(np.arange(200))
print("flip-closed sample:", median_score(thetas, make_flip_closed(sample).images))
