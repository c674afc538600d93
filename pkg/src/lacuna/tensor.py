"""Dense NCHW tensors and windowed reductions.

Everything downstream (lacunarity operators, the fusion model) is composed
from the primitives in this module.  Feature maps are plain numpy arrays of
shape (batch, channel, height, width), dtype float64; :func:`as_feature_map`
is the single entry point that enforces that contract.

All reductions accumulate window cells in row-major order within the window,
so results are bit-reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeMismatchError(ValueError):
    """Operand shapes or a PoolSpec are incompatible with the input."""


def as_feature_map(x, name: str = "x") -> np.ndarray:
    """Validate and coerce `x` to a contiguous float64 NCHW array.

    Raises ShapeMismatchError on wrong rank or empty dimensions, and
    ValueError if any value is non-finite.
    """
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise ShapeMismatchError(
            f"{name} must have shape (N, C, H, W), got ndim={arr.ndim}"
        )
    if min(arr.shape) < 1:
        raise ShapeMismatchError(f"{name} has an empty dimension: {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class PoolSpec:
    """Window geometry for the pooling reductions.

    `stride_*` defaults to the kernel (non-overlapping windows), `dilation`
    spaces the sampled cells, and `padding` grows both spatial borders.  Pad
    values are operation-specific: 0 for sum/avg, -inf for max, +inf for min,
    so padded cells never contaminate an extremum.  Padding is capped at half
    the effective kernel extent so every window covers at least one real cell.
    """

    kernel_h: int
    kernel_w: int
    stride_h: int = 0  # 0 sentinel: use kernel
    stride_w: int = 0
    dilation: int = 1
    padding: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stride_h", self.stride_h or self.kernel_h)
        object.__setattr__(self, "stride_w", self.stride_w or self.kernel_w)
        for field in ("kernel_h", "kernel_w", "stride_h", "stride_w", "dilation"):
            if getattr(self, field) < 1:
                raise ShapeMismatchError(f"PoolSpec.{field} must be >= 1")
        if self.padding < 0:
            raise ShapeMismatchError("PoolSpec.padding must be >= 0")
        eff = self.dilation * (max(self.kernel_h, self.kernel_w) - 1) + 1
        if self.padding > eff // 2:
            raise ShapeMismatchError(
                f"padding {self.padding} exceeds half the effective kernel {eff}"
            )

    @classmethod
    def square(cls, kernel: int, stride: int | None = None, dilation: int = 1,
               padding: int = 0) -> "PoolSpec":
        s = stride if stride is not None else kernel
        return cls(kernel, kernel, s, s, dilation, padding)

    @classmethod
    def global_window(cls, h: int, w: int) -> "PoolSpec":
        """Single window covering an entire h-by-w map."""
        return cls(h, w, h, w)

    @property
    def area(self) -> int:
        return self.kernel_h * self.kernel_w

    def effective_extent(self) -> tuple[int, int]:
        return (self.dilation * (self.kernel_h - 1) + 1,
                self.dilation * (self.kernel_w - 1) + 1)

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        """Output spatial dims for an h-by-w input; raises if any dim < 1."""
        eff_h, eff_w = self.effective_extent()
        out_h = (h + 2 * self.padding - eff_h) // self.stride_h + 1
        out_w = (w + 2 * self.padding - eff_w) // self.stride_w + 1
        if out_h < 1 or out_w < 1:
            raise ShapeMismatchError(
                f"window {self} does not fit a {h}x{w} input"
            )
        return out_h, out_w


def _padded(x: np.ndarray, pad: int, fill: float) -> np.ndarray:
    if pad == 0:
        return x
    n, c, h, w = x.shape
    out = np.full((n, c, h + 2 * pad, w + 2 * pad), fill, dtype=np.float64)
    out[:, :, pad:pad + h, pad:pad + w] = x
    return out


def _offset_view(xp: np.ndarray, spec: PoolSpec, out_h: int, out_w: int,
                 ki: int, kj: int) -> np.ndarray:
    """The cells that kernel offset (ki, kj) contributes to every window."""
    i0 = ki * spec.dilation
    j0 = kj * spec.dilation
    return xp[:, :,
              i0:i0 + (out_h - 1) * spec.stride_h + 1:spec.stride_h,
              j0:j0 + (out_w - 1) * spec.stride_w + 1:spec.stride_w]


def pool_sum(x: np.ndarray, spec: PoolSpec) -> np.ndarray:
    """Windowed sum; padded cells contribute 0."""
    x = as_feature_map(x)
    out_h, out_w = spec.out_size(x.shape[2], x.shape[3])
    xp = _padded(x, spec.padding, 0.0)
    out = np.zeros((x.shape[0], x.shape[1], out_h, out_w))
    for ki in range(spec.kernel_h):
        for kj in range(spec.kernel_w):
            out += _offset_view(xp, spec, out_h, out_w, ki, kj)
    return out


def pool_avg(x: np.ndarray, spec: PoolSpec) -> np.ndarray:
    """Windowed mean; the divisor is always the full kernel area."""
    return pool_sum(x, spec) / spec.area


def pool_max(x: np.ndarray, spec: PoolSpec) -> np.ndarray:
    """Windowed maximum over the dilated window positions."""
    x = as_feature_map(x)
    out_h, out_w = spec.out_size(x.shape[2], x.shape[3])
    xp = _padded(x, spec.padding, -np.inf)
    out = np.full((x.shape[0], x.shape[1], out_h, out_w), -np.inf)
    for ki in range(spec.kernel_h):
        for kj in range(spec.kernel_w):
            np.maximum(out, _offset_view(xp, spec, out_h, out_w, ki, kj), out=out)
    return out


def pool_min(x: np.ndarray, spec: PoolSpec) -> np.ndarray:
    """Windowed minimum over the dilated window positions."""
    x = as_feature_map(x)
    out_h, out_w = spec.out_size(x.shape[2], x.shape[3])
    xp = _padded(x, spec.padding, np.inf)
    out = np.full((x.shape[0], x.shape[1], out_h, out_w), np.inf)
    for ki in range(spec.kernel_h):
        for kj in range(spec.kernel_w):
            np.minimum(out, _offset_view(xp, spec, out_h, out_w, ki, kj), out=out)
    return out


def pool_l2(x: np.ndarray, spec: PoolSpec) -> np.ndarray:
    """Root-mean-square over each window (power-average pooling, p=2)."""
    x = as_feature_map(x)
    return np.sqrt(pool_sum(x * x, spec) / spec.area)


def _resample_axis(in_size: int, out_size: int):
    """Half-pixel-center source indices and weights for one axis."""
    scale = in_size / out_size
    src = (np.arange(out_size) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def upsample_bilinear(x: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers (align-corners false).

    On a constant input the result is the same constant; resampling to the
    input's own size returns the values unchanged.
    """
    x = as_feature_map(x)
    if target_h < 1 or target_w < 1:
        raise ShapeMismatchError("target dims must be >= 1")
    h, w = x.shape[2], x.shape[3]
    i0, i1, fi = _resample_axis(h, target_h)
    j0, j1, fj = _resample_axis(w, target_w)
    top = x[:, :, i0, :]
    bot = x[:, :, i1, :]
    rows = top * (1.0 - fi)[None, None, :, None] + bot * fi[None, None, :, None]
    left = rows[:, :, :, j0]
    right = rows[:, :, :, j1]
    return left * (1.0 - fj)[None, None, None, :] + right * fj[None, None, None, :]


@dataclass
class GroupedMixWeights:
    """Per-channel linear combination of S stacked scale-planes.

    `weights` has shape (C, S) and `bias` shape (C,): one independent
    S-to-1 linear map per channel, so the learnable parameter count is
    exactly C*S + C.
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeMismatchError("weights must have shape (C, S)")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatchError("bias must have shape (C,)")

    @classmethod
    def uniform(cls, channels: int, scales: int) -> "GroupedMixWeights":
        """Untrained default: average across scales (weights 1/S, bias 0)."""
        return cls(np.full((channels, scales), 1.0 / scales), np.zeros(channels))

    @classmethod
    def identity(cls, channels: int) -> "GroupedMixWeights":
        """S=1 pass-through."""
        return cls(np.ones((channels, 1)), np.zeros(channels))

    @property
    def channels(self) -> int:
        return self.weights.shape[0]

    @property
    def scales(self) -> int:
        return self.weights.shape[1]

    def param_count(self) -> int:
        return self.weights.size + self.bias.size


def mix_scales(stacked: np.ndarray, mix: GroupedMixWeights) -> np.ndarray:
    """Reduce C*S scale-planes back to C channels.

    `stacked` carries channel c's S planes contiguously at indices
    c*S .. c*S+S-1; output channel c is their mix-weighted sum plus bias.
    """
    stacked = as_feature_map(stacked, "stacked")
    c, s = mix.channels, mix.scales
    if stacked.shape[1] != c * s:
        raise ShapeMismatchError(
            f"expected {c * s} channels (C={c} groups of S={s}), got {stacked.shape[1]}"
        )
    n, _, h, w = stacked.shape
    grouped = stacked.reshape(n, c, s, h, w)
    out = (grouped * mix.weights[None, :, :, None, None]).sum(axis=2)
    return out + mix.bias[None, :, None, None]


def elementwise_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hadamard product; a 1x1-spatial operand broadcasts over the other."""
    a = as_feature_map(a, "a")
    b = as_feature_map(b, "b")
    if a.shape != b.shape:
        spatial_ok = (a.shape[2:] == (1, 1)) or (b.shape[2:] == (1, 1))
        if a.shape[:2] != b.shape[:2] or not spatial_ok:
            raise ShapeMismatchError(
                f"incompatible shapes for elementwise mul: {a.shape} vs {b.shape}"
            )
    return a * b


def global_spec(x: np.ndarray) -> PoolSpec:
    """PoolSpec whose single window covers all of x's spatial extent."""
    return PoolSpec.global_window(x.shape[2], x.shape[3])


def gap(x: np.ndarray) -> np.ndarray:
    """Global average pool: (N, C, H, W) -> (N, C, 1, 1)."""
    x = as_feature_map(x)
    return pool_avg(x, global_spec(x))
