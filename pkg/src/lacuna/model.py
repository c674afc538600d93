"""Fusion classification model over a frozen feature extractor.

The model is a pipeline of four stages: a frozen backbone turns images into
feature maps; a configurable pooling branch (one of the lacunarity operators
or a plain avg/max/l2 baseline) reduces the features to one value per
channel; a global-average-pool branch does the same; and the two branch
outputs are multiplied elementwise and fed to a linear classifier.  Only the
scale-mixing weights (when the pooling branch has any) and the classifier
are ever trained.

The backbone comes in two flavors: a small fixed-seed stride-2 convolution
stack, or features precomputed elsewhere and loaded from a flat binary
feature file ("LACF" magic, little-endian uint32 dims, little-endian float64
payload, labels in a one-integer-per-line sidecar).
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from .lacunarity import (
    LacunarityConfig,
    base_lacunarity,
    dbc_scale_planes,
    multiscale_scale_planes,
)
from .tensor import (
    GroupedMixWeights,
    PoolSpec,
    ShapeMismatchError,
    as_feature_map,
    elementwise_mul,
    gap,
    global_spec,
    mix_scales,
    pool_avg,
    pool_l2,
    pool_max,
)

BASELINE_POOLS = ("avg", "max", "l2")

# local window used when a box-counting branch has no explicit window: the
# box-counting second stage needs a kernel no larger than the heights map,
# which rules out a single global window
DBC_DEFAULT_WINDOW = PoolSpec.square(3, stride=1)


class FeatureFileError(ValueError):
    """Malformed feature file: bad magic, dims, or truncated payload."""


# --------------------------------------------------------------- feature I/O

FEATURE_MAGIC = b"LACF"


def write_feature_file(path: str, features: np.ndarray,
                       labels: np.ndarray | None = None) -> None:
    """Write features as magic + <4 uint32 dims> + row-major <float64 payload.

    When `labels` is given, a sidecar text file at `path + ".labels"` gets
    one integer per line, aligned with the leading feature axis.
    """
    features = as_feature_map(features, "features")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<4I", *features.shape))
        fh.write(np.ascontiguousarray(features, dtype="<f8").tobytes())
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (features.shape[0],):
            raise ShapeMismatchError(
                f"labels shape {labels.shape} does not match N={features.shape[0]}"
            )
        with open(path + ".labels", "w") as fh:
            fh.writelines(f"{int(v)}\n" for v in labels)


def read_feature_file(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 20:
        raise FeatureFileError(f"{path}: truncated header")
    dims = struct.unpack("<4I", blob[4:20])
    count = int(np.prod([int(d) for d in dims], dtype=np.int64))
    payload = blob[20:]
    if len(payload) != count * 8:
        raise FeatureFileError(
            f"{path}: payload holds {len(payload)} bytes, dims {dims} need {count * 8}"
        )
    data = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    return as_feature_map(data, "features")


def read_label_sidecar(path: str) -> np.ndarray:
    with open(path + ".labels") as fh:
        return np.array([int(line) for line in fh if line.strip()], dtype=np.int64)


# ------------------------------------------------------------------ backbone

def _conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int,
            padding: int) -> np.ndarray:
    n, c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, c_out, out_h, out_w))
    for ki in range(kh):
        for kj in range(kw):
            view = xp[:, :,
                      ki:ki + (out_h - 1) * stride + 1:stride,
                      kj:kj + (out_w - 1) * stride + 1:stride]
            out += np.einsum("nihw,oi->nohw", view, w[:, :, ki, kj])
    return out + b[None, :, None, None]


@dataclass
class FrozenBackbone:
    """Immutable feature extractor: conv stub or precomputed feature tensor.

    The conv flavor is a fixed-seed stack of stride-2 3x3 convolutions with
    ReLU, mapping (N, 1, 56, 56) grayscale in [0, 255] to (N, C, 7, 7).  The
    file flavor carries a feature tensor loaded from disk and hands out rows
    by index.  Weight arrays are marked read-only; the checksum lets callers
    assert nothing trained through it.
    """

    weights: tuple[np.ndarray, ...] = ()
    biases: tuple[np.ndarray, ...] = ()
    stored: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        for arr in (*self.weights, *self.biases):
            arr.setflags(write=False)
        if self.stored is not None:
            self.stored.setflags(write=False)

    @classmethod
    def make(cls, seed: int = 0, channels: int = 16) -> "FrozenBackbone":
        if channels < 1:
            raise ValueError("channels must be >= 1")
        rng = np.random.default_rng(seed)
        # three stride-2 layers take 56x56 down to 7x7 regardless of width
        plan = [1, 8, 16, channels]
        weights, biases = [], []
        for c_in, c_out in zip(plan[:-1], plan[1:]):
            fan_in = c_in * 9
            weights.append(rng.standard_normal((c_out, c_in, 3, 3))
                           * np.sqrt(2.0 / fan_in))
            biases.append(np.zeros(c_out))
        return cls(weights=tuple(weights), biases=tuple(biases), seed=seed)

    @classmethod
    def from_feature_file(cls, path: str) -> "FrozenBackbone":
        return cls(stored=read_feature_file(path))

    @property
    def out_channels(self) -> int:
        if self.stored is not None:
            return self.stored.shape[1]
        return self.weights[-1].shape[0]

    def features(self, images: np.ndarray | None = None,
                 indices: np.ndarray | None = None) -> np.ndarray:
        """Feature maps for a batch; file-backed backbones ignore `images`."""
        if self.stored is not None:
            if indices is not None:
                return self.stored[np.asarray(indices)]
            return np.array(self.stored)
        if images is None:
            raise ValueError("conv backbone needs an image batch")
        x = as_feature_map(images, "images")
        if x.shape[1] != 1:
            raise ShapeMismatchError("backbone expects single-channel images")
        x = x / 255.0
        for w, b in zip(self.weights, self.biases):
            x = np.maximum(_conv2d(x, w, b, stride=2, padding=1), 0.0)
        return x

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for arr in (*self.weights, *self.biases):
            digest.update(np.ascontiguousarray(arr).tobytes())
        if self.stored is not None:
            digest.update(np.ascontiguousarray(self.stored).tobytes())
        return digest.hexdigest()


# ----------------------------------------------------------- classifier head

def linear_classifier(x: np.ndarray, weights: np.ndarray,
                      bias: np.ndarray) -> np.ndarray:
    """Logits = x @ weights.T + bias for (N, D) inputs and (K, D) weights."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ShapeMismatchError(
            f"classifier got features {x.shape} and weights {weights.shape}"
        )
    if bias.shape != (weights.shape[0],):
        raise ShapeMismatchError(f"classifier bias shape {bias.shape}")
    return x @ weights.T + bias


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true class under the softmax."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(
            f"loss got logits {logits.shape} and labels {labels.shape}"
        )
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("labels out of range for the logit width")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(len(labels)), labels]
    return float(np.mean(log_norm - picked))


# -------------------------------------------------------------- fusion model

@dataclass
class FusionModel:
    """Frozen backbone + pooling branch x GAP branch + linear classifier.

    `pooling` is either a LacunarityConfig or one of the baseline selector
    strings ("avg", "max", "l2").  `mix` is present exactly when the pooling
    branch stacks several scale planes (multiscale or box-counting); it and
    the classifier weights form the whole trainable set.
    """

    backbone: FrozenBackbone
    pooling: LacunarityConfig | str
    classifier_w: np.ndarray
    classifier_b: np.ndarray
    mix: GroupedMixWeights | None = None

    def __post_init__(self):
        if isinstance(self.pooling, str) and self.pooling not in BASELINE_POOLS:
            raise ValueError(
                f"baseline pooling must be one of {BASELINE_POOLS}, got {self.pooling!r}"
            )
        self.classifier_w = np.array(self.classifier_w, dtype=np.float64)
        self.classifier_b = np.array(self.classifier_b, dtype=np.float64)
        if self.mix is not None and self.mix.scales != self._scale_count():
            raise ShapeMismatchError(
                f"mix carries {self.mix.scales} scale slots, branch makes "
                f"{self._scale_count()}"
            )

    def _scale_count(self) -> int:
        if isinstance(self.pooling, str) or self.pooling.method == "base":
            return 1
        if self.pooling.method == "multiscale":
            return self.pooling.scales
        return len(self.pooling.dilation_set)

    @classmethod
    def build(cls, backbone: FrozenBackbone,
              pooling: LacunarityConfig | str,
              num_classes: int, seed: int = 0) -> "FusionModel":
        """Assemble with centered-uniform 1/sqrt(C) classifier init, bias 0."""
        if num_classes < 2:
            raise ValueError("need at least two classes")
        channels = backbone.out_channels
        rng = np.random.default_rng(seed)
        w = rng.uniform(-1.0, 1.0, size=(num_classes, channels)) / np.sqrt(channels)
        b = np.zeros(num_classes)
        mix = None
        if not isinstance(pooling, str) and pooling.method in ("multiscale", "dbc"):
            scales = (pooling.scales if pooling.method == "multiscale"
                      else len(pooling.dilation_set))
            mix = GroupedMixWeights.uniform(channels, scales)
        return cls(backbone=backbone, pooling=pooling,
                   classifier_w=w, classifier_b=b, mix=mix)

    def trainable_param_count(self) -> int:
        count = self.classifier_w.size + self.classifier_b.size
        if self.mix is not None:
            count += self.mix.param_count()
        return count

    # --- branch forwards -------------------------------------------------

    def scale_planes(self, feats: np.ndarray) -> np.ndarray | None:
        """Mix-independent stacked planes, or None when no mixing happens."""
        if isinstance(self.pooling, str) or self.pooling.method == "base":
            return None
        if self.pooling.method == "multiscale":
            return multiscale_scale_planes(feats, self.pooling)
        cfg = self.pooling
        if cfg.window is None:
            cfg = LacunarityConfig(
                method="dbc", window=DBC_DEFAULT_WINDOW, epsilon=cfg.epsilon,
                dilation_set=cfg.dilation_set, clamp_heights=cfg.clamp_heights,
            )
        return dbc_scale_planes(feats, cfg)

    def pooling_branch(self, feats: np.ndarray) -> np.ndarray:
        """Reduce features to (N, C, 1, 1) through the configured branch."""
        planes = self.scale_planes(feats)
        if planes is None:
            if isinstance(self.pooling, str):
                op = {"avg": pool_avg, "max": pool_max, "l2": pool_l2}[self.pooling]
                return op(feats, global_spec(feats))
            out = base_lacunarity(feats, self.pooling)
        else:
            out = mix_scales(planes, self.mix)
        if out.shape[2:] != (1, 1):
            out = gap(out)  # local windows collapse to one value per channel
        return out

    def head_logits(self, lac: np.ndarray, gapped: np.ndarray) -> np.ndarray:
        fused = elementwise_mul(lac, gapped)
        return linear_classifier(fused[:, :, 0, 0], self.classifier_w,
                                 self.classifier_b)

    def forward(self, images: np.ndarray | None = None,
                feats: np.ndarray | None = None) -> np.ndarray:
        """Class logits for an image batch (or precomputed feature batch)."""
        if feats is None:
            feats = self.backbone.features(images)
        feats = as_feature_map(feats, "features")
        return self.head_logits(self.pooling_branch(feats), gap(feats))

    def predict(self, images: np.ndarray | None = None,
                feats: np.ndarray | None = None) -> np.ndarray:
        return np.argmax(self.forward(images, feats=feats), axis=1)
