"""Feature extractor, classifier head and pose head of the ATR network."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .nncore import Conv2d, ConvSpec, Linear, Module, Tensor, checkpoint, no_grad
from .nncore import functional as F

IMAGE_SIZE = 160
FEATURE_DIM = 256
HIDDEN = 64
N_CLASSES = 4
N_POSE_BINS = 180
FEATURE_SPECS = (
    ConvSpec(16, 20, 1, 0),
    ConvSpec(32, 3, 2, 1),
    ConvSpec(64, 3, 2, 1),
    ConvSpec(128, 3, 2, 1),
    ConvSpec(256, 3, 2, 1),
)


def pose_bin(theta: float | np.ndarray, n_bins: int = N_POSE_BINS):
    """Index of the angle bin holding ``theta`` (radians, wrapped to [0, 2 pi))."""
    width = 2 * math.pi / n_bins
    idx = np.floor(np.mod(theta, 2 * math.pi) / width).astype(np.int64)
    idx = np.minimum(idx, n_bins - 1)
    return int(idx) if np.ndim(idx) == 0 else idx


def feature_shapes(size: int = IMAGE_SIZE) -> list[tuple[int, int, int]]:
    shapes, h = [], size
    for spec in FEATURE_SPECS:
        h = spec.output_size(h)
        shapes.append((spec.n, h, h))
    return shapes


class FeatureExtractor(Module):
    def __init__(self, rng: np.random.Generator, dtype=np.float32):
        chans = [1] + [s.n for s in FEATURE_SPECS[:-1]]
        self.convs = [Conv2d(c, spec, rng, dtype) for c, spec in zip(chans, FEATURE_SPECS)]

    def __call__(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = F.relu(conv(x))
        return F.global_avg_pool(x)


class Head(Module):
    """L(64) -> ReLU -> L(out); returns logits."""

    def __init__(self, out_features: int, rng: np.random.Generator, dtype=np.float32):
        self.fc1 = Linear(FEATURE_DIM, HIDDEN, rng, dtype)
        self.fc2 = Linear(HIDDEN, out_features, rng, dtype)

    def __call__(self, h: Tensor) -> Tensor:
        return self.fc2(F.relu(self.fc1(h)))


def _as_batch(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        data = x
    else:
        arr = np.asarray(x, dtype=dtype)
        if arr.ndim == 2:
            arr = arr[None, None]
        elif arr.ndim == 3:
            arr = arr[:, None]
        data = Tensor(arr)
    if data.ndim != 4 or data.shape[1:] != (1, IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"expected images of shape (N, 1, {IMAGE_SIZE}, {IMAGE_SIZE}), "
                         f"got {data.shape}")
    return data


class ATRModel(Module):
    """f (features), c (classifier) and optional p (pose) networks."""

    def __init__(self, seed: int = 0, pose_head: bool = False, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.features = FeatureExtractor(rng, dtype)
        self.classifier = Head(N_CLASSES, rng, dtype)
        self.pose = Head(N_POSE_BINS, rng, dtype) if pose_head else None

    @property
    def dtype(self):
        return self.features.convs[0].weight.dtype

    def extract_features(self, x) -> Tensor:
        return self.features(_as_batch(x, self.dtype))

    def class_logits(self, h: Tensor) -> Tensor:
        return self.classifier(h)

    def pose_logits(self, h: Tensor) -> Tensor:
        if self.pose is None:
            raise ValueError("model was built without a pose head")
        return self.pose(h)

    def classify(self, h) -> np.ndarray:
        """Class probabilities for feature vectors ``h`` of shape (N, 256)."""
        with no_grad():
            return F.softmax(self.class_logits(_as_features(h, self.dtype))).data

    def estimate_pose(self, h) -> np.ndarray:
        with no_grad():
            return F.softmax(self.pose_logits(_as_features(h, self.dtype))).data

    # inference helpers -------------------------------------------------------

    def logits(self, images, batch_size: int = 64) -> np.ndarray:
        images = np.asarray(images)
        if images.ndim == 2:
            images = images[None]
        out = []
        with no_grad():
            for i in range(0, len(images), batch_size):
                h = self.extract_features(images[i:i + batch_size])
                out.append(self.class_logits(h).data)
        return np.concatenate(out, axis=0)

    def predict(self, images, batch_size: int = 64) -> np.ndarray:
        return np.argmax(self.logits(images, batch_size), axis=1)

    def input_gradients(self, images, directions=None) -> tuple[np.ndarray, np.ndarray]:
        """Logits and input gradients of weighted logit sums.

        ``directions`` has shape (D, N, C); direction ``d`` yields the gradient
        of ``sum_c directions[d, n, c] * logit[n, c]`` for every image ``n``.
        The default is one direction per class.  Returns logits (N, C) and
        gradients (N, D, H, W) from a single forward pass.
        """
        images = np.asarray(images, dtype=self.dtype)
        if images.ndim == 2:
            images = images[None]
        n = len(images)
        if directions is None:
            directions = np.broadcast_to(np.eye(N_CLASSES)[:, None, :], (N_CLASSES, n, N_CLASSES))
        directions = np.asarray(directions, dtype=self.dtype)
        flags = [p.requires_grad for p in self.parameters()]
        self.requires_grad_(False)
        try:
            x = Tensor(images[:, None], requires_grad=True)
            z = self.class_logits(self.extract_features(x))
            grads = []
            for d, seed in enumerate(directions):
                x.grad = None
                z.backward(seed, retain_graph=d < len(directions) - 1)
                grads.append(x.grad[:, 0])
        finally:
            for p, f in zip(self.parameters(), flags):
                p.requires_grad = f
        return z.data.copy(), np.stack(grads, axis=1)

    def loss_input_gradient(self, images, labels) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample cross-entropy and its gradient w.r.t. the images."""
        images = np.asarray(images, dtype=self.dtype)
        flags = [p.requires_grad for p in self.parameters()]
        self.requires_grad_(False)
        try:
            x = Tensor(images[:, None], requires_grad=True)
            logits = self.class_logits(self.extract_features(x))
            n = len(images)
            # summed loss so every sample gets the gradient of its own loss
            loss = F.cross_entropy(logits, labels) * float(n)
            loss.backward()
            per = _per_sample_ce(logits.data, labels)
        finally:
            for p, f in zip(self.parameters(), flags):
                p.requires_grad = f
        return per, x.grad[:, 0]

    # persistence ---------------------------------------------------------------

    def config(self) -> dict:
        return {
            "architecture": "C(16,20,1,0)-C(32,3,2,1)-C(64,3,2,1)-C(128,3,2,1)-C(256,3,2,1)-GAP",
            "feature_dim": FEATURE_DIM,
            "n_classes": N_CLASSES,
            "n_pose_bins": N_POSE_BINS if self.pose is not None else 0,
            "pose_head": self.pose is not None,
            "seed": self.seed,
        }

    def save(self, path: str | Path, extra: dict | None = None):
        state = self.state_dict()
        roles = {name: name.split(".", 1)[0] for name in state}
        cfg = self.config()
        if extra:
            cfg["extra"] = extra
        checkpoint.save(path, state, cfg, roles)

    @classmethod
    def load(cls, path: str | Path, dtype=np.float32) -> "ATRModel":
        cfg, tensors, _ = checkpoint.load(path)
        model = cls(seed=cfg.get("seed", 0), pose_head=cfg.get("pose_head", False), dtype=dtype)
        model.load_state_dict(tensors)
        return model


def _as_features(h, dtype) -> Tensor:
    if isinstance(h, Tensor):
        return h
    arr = np.asarray(h, dtype=dtype)
    return Tensor(arr[None] if arr.ndim == 1 else arr)


def _per_sample_ce(logits: np.ndarray, labels) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(logits)), np.asarray(labels)]
