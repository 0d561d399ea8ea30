"""
Where does a trained network look?
==================================

Train a small ConvNet briefly on real digits, then count, per class, how
often each cell of the last feature grid lands in the top 10% of the class
activation map.  The counts are written as a heatmap for each class.
"""

from pathlib import Path

import numpy as np

from flipdistill.config import DistillConfig
from flipdistill.convnet import make_rng
from flipdistill.dataio import load_dataset
from flipdistill.diagnostics import attention_symmetry, write_heatmap
from flipdistill.harness import accuracy, resolve_data_dir, train_network

out = Path("demo_output")
out.mkdir(exist_ok=True)
train, test, meta = load_dataset("mnist", resolve_data_dir("data/mnist-subset"))
cfg = DistillConfig(epochs=3, width=32, retrain_aug=False, batch_train=64)
net = train_network(cfg, train.subset(np.arange(0, 4000, 4)), make_rng(0), meta.classes)
print(f"test accuracy after 3 epochs: {accuracy(net, test):.3f}")

for c in range(meta.classes):
    hist = attention_symmetry(net, train.images[train.labels == c][:100], c)
    left, right = hist[:, :4].sum(), hist[:, 4:].sum()
    write_heatmap(out / f"attention_{c}.pgm", hist)
    print(f"class {c}: {left:4d} hits on the left, {right:4d} on the right")
