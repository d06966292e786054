"""A deliberately tiny per-voxel segmentation model.

Three fixed local features (z-scored intensity, 6-neighborhood mean,
gradient magnitude) feed one tanh hidden layer and a per-class softmax
head. Just enough capacity to learn the phantom tasks, so the loss
function's effect is isolated from architecture effects.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .volumes import DomainError, ProbVolume, ScalarVolume, zscore_normalize

FEATURE_COUNT = 3

CHECKPOINT_MAGIC = b"CWM1"
CHECKPOINT_VERSION = 1


def _neighbor_mean(x: np.ndarray) -> np.ndarray:
    padded = np.pad(x, 1, mode="edge")
    acc = np.zeros_like(x)
    d, h, w = x.shape
    for dz, dy, dx in ((0, 1, 1), (2, 1, 1), (1, 0, 1), (1, 2, 1), (1, 1, 0), (1, 1, 2)):
        acc += padded[dz:dz + d, dy:dy + h, dx:dx + w]
    return acc / 6.0


def _gradient_magnitude(x: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(x)
    for axis in range(3):
        if x.shape[axis] > 1:
            g = np.gradient(x, axis=axis)
            acc += g * g
    return np.sqrt(acc)


def local_feature_stack(image: ScalarVolume) -> np.ndarray:
    """Per-voxel features of a raw image, shape (n_voxels, FEATURE_COUNT)."""
    x = zscore_normalize(image).values
    feats = np.stack([x, _neighbor_mean(x), _gradient_magnitude(x)])
    return feats.reshape(FEATURE_COUNT, -1).T.copy()


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backprop(probs: ProbVolume, grad_probs: np.ndarray) -> np.ndarray:
    """Pull a probability-space gradient back through the softmax.

    Per voxel: grad_logit_c = p_c * (grad_c - sum_k p_k * grad_k).
    The input must be voxel-normalized.
    """
    p = probs.values
    if grad_probs.shape != p.shape:
        raise DomainError(f"gradient shape {grad_probs.shape} does not match {p.shape}")
    sums = p.sum(axis=0)
    if p.size and np.abs(sums - 1.0).max() > 1e-5:
        raise DomainError("softmax_backprop requires voxel-normalized probabilities")
    dot = np.sum(p * grad_probs, axis=0)
    return p * (grad_probs - dot)


class TinyModel:
    """features -> tanh hidden layer -> per-class softmax, per voxel."""

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        if self.w1.shape != (FEATURE_COUNT, self.hidden):
            raise DomainError(f"w1 must be ({FEATURE_COUNT}, hidden), got {self.w1.shape}")
        if self.b1.shape != (self.hidden,) or self.w2.shape[0] != self.hidden:
            raise DomainError("inconsistent hidden-layer shapes")
        if self.b2.shape != (self.num_classes,):
            raise DomainError("inconsistent head shapes")

    @property
    def hidden(self) -> int:
        return self.w1.shape[1] if self.w1.ndim == 2 else 0

    @property
    def num_classes(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def initialize(cls, num_classes: int, hidden: int = 16, seed: int = 0) -> "TinyModel":
        # Half the units form a deterministic intensity ladder: tanh gates
        # at evenly spaced z-levels, so any two intensity populations are
        # separated by some unit regardless of the seed. The rest are
        # random mixing units with biases spread over the feature range.
        # The head starts at zero: argmax decisions then carry no initial
        # bias for gradient descent to overcome.
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, 0.6, (FEATURE_COUNT, hidden))
        b1 = rng.uniform(-2.5, 2.5, hidden)
        n_ladder = min(hidden, 8)
        thresholds = np.linspace(-1.0, 5.0, n_ladder)
        w1[:, :n_ladder] = 0.0
        w1[0, :n_ladder] = 1.5
        b1[:n_ladder] = -1.5 * thresholds
        return cls(w1, b1, np.zeros((hidden, num_classes)), np.zeros(num_classes))

    def copy(self) -> "TinyModel":
        return TinyModel(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def parameters(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (probs, hidden activations), both row-per-voxel."""
        z1 = feats @ self.w1 + self.b1
        a1 = np.tanh(z1)
        logits = a1 @ self.w2 + self.b2
        return _softmax_rows(logits), a1

    def backward(self, feats: np.ndarray, hidden_act: np.ndarray,
                 grad_logits: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients given d(loss)/d(logits), ordered like parameters()."""
        gw2 = hidden_act.T @ grad_logits
        gb2 = grad_logits.sum(axis=0)
        ga1 = grad_logits @ self.w2.T
        gz1 = ga1 * (1.0 - hidden_act * hidden_act)
        gw1 = feats.T @ gz1
        gb1 = gz1.sum(axis=0)
        return [gw1, gb1, gw2, gb2]

    def predict(self, image: ScalarVolume) -> ProbVolume:
        """Class probabilities for one image."""
        probs, _ = self.forward(local_feature_stack(image))
        values = probs.T.reshape((self.num_classes,) + image.dims.shape)
        return ProbVolume(image.dims, self.num_classes, values, normalized=True)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.reshape(-1) for p in self.parameters()])

    def set_flat(self, vec: np.ndarray) -> None:
        offset = 0
        for p in self.parameters():
            p[...] = vec[offset:offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != vec.size:
            raise DomainError("flat parameter vector has the wrong length")


def save_model(model: TinyModel, path: str) -> None:
    """Write a checkpoint: magic, version, layer sizes, parameter count,
    then all parameters as little-endian float64. Atomic."""
    header = struct.pack(
        "<4sIIIIQ",
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        FEATURE_COUNT,
        model.hidden,
        model.num_classes,
        model.get_flat().size,
    )
    payload = b"".join(p.astype("<f8").tobytes(order="C") for p in model.parameters())
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(header + payload)
    os.replace(tmp, path)


def load_model(path: str) -> TinyModel:
    with open(path, "rb") as f:
        blob = f.read()
    head_size = struct.calcsize("<4sIIIIQ")
    if len(blob) < head_size:
        raise DomainError(f"checkpoint {path} is truncated")
    magic, version, k, hidden, num_classes, count = struct.unpack("<4sIIIIQ", blob[:head_size])
    if magic != CHECKPOINT_MAGIC:
        raise DomainError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise DomainError(f"unsupported checkpoint version {version}")
    if k != FEATURE_COUNT:
        raise DomainError(f"checkpoint has {k} features, expected {FEATURE_COUNT}")
    expected = k * hidden + hidden + hidden * num_classes + num_classes
    if count != expected:
        raise DomainError(f"checkpoint parameter count {count} does not match shapes")
    flat = np.frombuffer(blob[head_size:], dtype="<f8")
    if flat.size != count:
        raise DomainError(f"checkpoint payload holds {flat.size} values, header says {count}")
    model = TinyModel.initialize(num_classes, hidden)
    model.set_flat(flat.astype(np.float64))
    return model
