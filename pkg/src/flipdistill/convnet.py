"""ConvNet feature extractor and classifier used for matching and retraining.

Each block is conv3x3 (128 filters, zero padding 1) -> ReLU -> 2x2 average
pooling; the flattened output of the last block is the feature vector and a
dense layer on top produces class logits.  An instance-normalisation layer
after each convolution is available behind a switch but off by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor, avg_pool2, conv2d, dense, log_softmax, relu

WIDTH = 128


def make_rng(seed: int) -> np.random.Generator:
    """Random stream for every stochastic choice in the package.

    PCG64 seeded directly with a 64-bit integer; the same seed yields the
    same stream on every platform for a given numpy release.
    """
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass
class NetworkParams:
    """One draw of ConvNet weights.

    ``conv_w[i]`` has shape [width, Cin, 3, 3], ``conv_b[i]`` [width];
    ``head_w`` is [D, K] and ``head_b`` [K].
    """

    conv_w: list[Tensor]
    conv_b: list[Tensor]
    head_w: Tensor
    head_b: Tensor
    input_shape: tuple[int, int, int]
    seed: int | None = None
    instance_norm: bool = False
    trained: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def blocks(self) -> int:
        return len(self.conv_w)

    @property
    def width(self) -> int:
        return self.conv_w[0].shape[0]

    @property
    def classes(self) -> int:
        return self.head_w.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.head_w.shape[0]

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.conv_w, self.conv_b):
            params += [w, b]
        return params + [self.head_w, self.head_b]

    def requires_grad_(self, flag: bool = True) -> "NetworkParams":
        for p in self.parameters():
            p.requires_grad = flag
            p.grad = None
        return self

    def copy(self) -> "NetworkParams":
        clone = lambda t: Tensor(t.data, requires_grad=t.requires_grad)  # noqa: E731
        return NetworkParams(
            [clone(w) for w in self.conv_w],
            [clone(b) for b in self.conv_b],
            clone(self.head_w),
            clone(self.head_b),
            self.input_shape,
            self.seed,
            self.instance_norm,
            self.trained,
        )


def default_blocks(height: int) -> int:
    """3 blocks for 32x32 inputs, 4 for 64x64, 5 for 128x128."""
    return {32: 3, 64: 4, 128: 5}.get(height, 3)


def init_params(
    rng: np.random.Generator | int,
    input_shape: tuple[int, int, int],
    classes: int,
    blocks: int | None = None,
    width: int = WIDTH,
    instance_norm: bool = False,
) -> NetworkParams:
    """Sample fresh ConvNet weights.

    Conv weights are He-uniform on fan-in, U(-sqrt(6/fan_in), sqrt(6/fan_in));
    the head is U(-1/sqrt(D), 1/sqrt(D)); all biases start at zero.
    """
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = make_rng(seed)
    c, h, w = input_shape
    blocks = default_blocks(h) if blocks is None else blocks
    if blocks < 1:
        raise ValueError(f"blocks must be >= 1, got {blocks}")
    if h % (2 ** blocks) or w % (2 ** blocks):
        raise ShapeError(f"input {h}x{w} is not divisible by 2**{blocks}")
    conv_w, conv_b = [], []
    cin = c
    for _ in range(blocks):
        bound = np.sqrt(6.0 / (cin * 9))
        conv_w.append(Tensor(rng.uniform(-bound, bound, size=(width, cin, 3, 3))))
        conv_b.append(Tensor(np.zeros(width)))
        cin = width
    d = width * (h >> blocks) * (w >> blocks)
    bound = 1.0 / np.sqrt(d)
    head_w = Tensor(rng.uniform(-bound, bound, size=(d, classes)))
    head_b = Tensor(np.zeros(classes))
    return NetworkParams(conv_w, conv_b, head_w, head_b, (c, h, w), seed, instance_norm)


def _instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    n, c, h, w = x.shape
    mu = x.mean(axis=(2, 3), keepdims=True).expand(x.shape)
    centred = x - mu
    var = (centred * centred).mean(axis=(2, 3), keepdims=True).expand(x.shape)
    return centred / (var + eps).sqrt()


def _as_batch(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=np.float64))


def _check_input(p: NetworkParams, x: Tensor) -> None:
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(p.input_shape):
        raise ShapeError(f"network expects N x {p.input_shape}, got {x.shape}")


def feature_maps(p: NetworkParams, x) -> tuple[Tensor, Tensor]:
    """Return (last conv activation before pooling, pooled output of last block)."""
    x = _as_batch(x)
    _check_input(p, x)
    act = pooled = x
    for w, b in zip(p.conv_w, p.conv_b):
        act = conv2d(pooled, w, b, pad=1)
        if p.instance_norm:
            act = _instance_norm(act)
        act = relu(act)
        pooled = avg_pool2(act)
    return act, pooled


def features(p: NetworkParams, x) -> Tensor:
    """Flattened convolutional features, [N, D]."""
    _, pooled = feature_maps(p, x)
    return pooled.reshape(pooled.shape[0], -1)


def logits(p: NetworkParams, x) -> Tensor:
    return dense(features(p, x), p.head_w, p.head_b)


def cross_entropy(logit: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(logit)."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, k = logit.shape
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    return -(log_softmax(logit) * onehot).sum() / n


def predict(p: NetworkParams, x: np.ndarray, batch: int = 500) -> np.ndarray:
    """Arg-max class for each image, evaluated without recording a graph."""
    from .tensor import no_grad

    out = []
    with no_grad():
        for i in range(0, len(x), batch):
            out.append(logits(p, x[i:i + batch]).data.argmax(axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
