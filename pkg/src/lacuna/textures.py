"""Synthetic binary gap textures with controlled heterogeneity.

Each texture is a two-valued image (background 224, gaps 32) built by
stamping gap disks and then trimming/padding to an exact gap pixel count.
Three arrangements with increasingly clumped gap placement are provided:

- lattice: disks of one radius on a regular grid,
- jitter:  grid positions perturbed per-site, two alternating radii,
- cluster: parent-child clusters with heavy-tailed radii.

Grades ("low" < "medium" < "high") differ only in their gap *fraction*
(23.04% / 24% / 24.96%, a +-4% area spread), which pins the global
lacunarity of each grade into a registered band regardless of arrangement;
``generate_texture`` verifies the band and retries with fresh draws.  The
heterogeneity dataset instead holds the gap count exactly equal across its
classes so that only the spatial arrangement separates them.

Band constants come from scripts/calibrate_bands.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lacunarity import LacunarityConfig, base_lacunarity

GAP_VALUE = 32.0
BACKGROUND_VALUE = 224.0

GRADES = ("low", "medium", "high")
GRADE_GAP_FRACTION = {"low": 0.2304, "medium": 0.24, "high": 0.2496}

# Registered acceptance bands for the global lacunarity of each grade
# (inner edges are midpoints between adjacent grade levels; outer edges
# mirror the same half-gap).  Regenerate with scripts/calibrate_bands.py.
GRADE_BANDS = {
    "low": (0.197211, 0.207345),
    "medium": (0.207345, 0.217560),
    "high": (0.217560, 0.227856),
}

_LATTICE_PERIOD = 8
_MAX_ATTEMPTS = 100


class TextureGenerationError(RuntimeError):
    """Raised when no draw lands inside the grade's lacunarity band."""


@dataclass(frozen=True)
class TextureSample:
    image: np.ndarray  # (H, W) float64, values {GAP_VALUE, BACKGROUND_VALUE}
    label: int         # index of the grade in GRADES
    grade: str
    seed: int


def global_lacunarity(image: np.ndarray) -> float:
    """Base lacunarity of the whole image, no input scaling."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, None]
    cfg = LacunarityConfig(method="base", normalize_input=False)
    return float(base_lacunarity(arr, cfg)[0, 0, 0, 0])


def _paint_disk(mask: np.ndarray, ci: float, cj: float, radius: float) -> None:
    reach = int(math.ceil(radius))
    i0, i1 = max(0, int(ci) - reach), min(mask.shape[0], int(ci) + reach + 1)
    j0, j1 = max(0, int(cj) - reach), min(mask.shape[1], int(cj) + reach + 1)
    if i0 >= i1 or j0 >= j1:
        return
    di = np.arange(i0, i1, dtype=np.float64)[:, None] - ci
    dj = np.arange(j0, j1, dtype=np.float64)[None, :] - cj
    mask[i0:i1, j0:j1] |= di * di + dj * dj <= radius * radius


def _lattice_mask(size: int, frac: float, rng: np.random.Generator) -> np.ndarray:
    # one radius sized so the per-cell disk area matches the target fraction
    radius = _LATTICE_PERIOD * math.sqrt(frac / math.pi)
    mask = np.zeros((size, size), dtype=bool)
    for ci in range(_LATTICE_PERIOD // 2, size, _LATTICE_PERIOD):
        for cj in range(_LATTICE_PERIOD // 2, size, _LATTICE_PERIOD):
            _paint_disk(mask, float(ci), float(cj), radius)
    return mask


def _jitter_mask(size: int, frac: float, rng: np.random.Generator) -> np.ndarray:
    period = _LATTICE_PERIOD
    mean_sq = frac * period * period / math.pi  # E[r^2] that hits the target
    r_small = math.sqrt(0.5 * mean_sq)
    r_large = math.sqrt(1.5 * mean_sq)
    slack = period / 2.0 - 1.0
    mask = np.zeros((size, size), dtype=bool)
    for bi in range(period // 2, size, period):
        for bj in range(period // 2, size, period):
            ci = bi + rng.uniform(-slack, slack)
            cj = bj + rng.uniform(-slack, slack)
            radius = r_small if rng.random() < 0.5 else r_large
            _paint_disk(mask, ci, cj, radius)
    return mask


def _cluster_mask(size: int, frac: float, rng: np.random.Generator) -> np.ndarray:
    target = frac * size * size
    mask = np.zeros((size, size), dtype=bool)
    radius_cap = size / 7.0
    for _ in range(4 * size):  # safety cap; coverage exits the loop first
        pi, pj = rng.uniform(0.0, size, size=2)
        for _ in range(int(rng.poisson(4)) + 1):
            ci = pi + rng.normal(0.0, size / 16.0)
            cj = pj + rng.normal(0.0, size / 16.0)
            radius = min(1.2 * (1.0 + rng.pareto(1.7)), radius_cap)
            _paint_disk(mask, ci, cj, radius)
        if mask.sum() >= target:
            break
    return mask


ARRANGEMENTS = ("lattice", "jitter", "cluster")
_PAINTERS = {"lattice": _lattice_mask, "jitter": _jitter_mask, "cluster": _cluster_mask}


def _match_count(mask: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Flip random pixels until exactly `count` gap pixels remain."""
    flat = mask.reshape(-1).copy()
    have = int(flat.sum())
    if have > count:
        on = np.flatnonzero(flat)
        flat[rng.choice(on, size=have - count, replace=False)] = False
    elif have < count:
        off = np.flatnonzero(~flat)
        flat[rng.choice(off, size=count - have, replace=False)] = True
    return flat.reshape(mask.shape)


def _render(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, GAP_VALUE, BACKGROUND_VALUE)


def _grade_arrangement(grade: str) -> str:
    return ARRANGEMENTS[GRADES.index(grade)]


def generate_texture(grade: str, size: int = 56, seed: int = 0) -> TextureSample:
    """One texture of the requested grade, validated against its band.

    Deterministic in (grade, size, seed).  Draws are retried (bounded) until
    the measured global lacunarity falls inside the grade's registered band.
    """
    if grade not in GRADES:
        raise ValueError(f"grade must be one of {GRADES}, got {grade!r}")
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    if seed < 0:
        raise ValueError(f"seed must be >= 0, got {seed}")
    frac = GRADE_GAP_FRACTION[grade]
    count = round(frac * size * size)
    lo, hi = GRADE_BANDS[grade]
    painter = _PAINTERS[_grade_arrangement(grade)]
    label = GRADES.index(grade)
    for attempt in range(_MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt, label])
        mask = _match_count(painter(size, frac, rng), count, rng)
        image = _render(mask)
        if lo <= global_lacunarity(image) <= hi:
            return TextureSample(image=image, label=label, grade=grade, seed=seed)
    raise TextureGenerationError(
        f"no {grade} draw hit band ({lo}, {hi}) in {_MAX_ATTEMPTS} attempts")


def heterogeneity_dataset(
    n_per_class: int, size: int = 56, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Three arrangement classes with *identical* gap pixel counts.

    First-order statistics match exactly across classes, so only the spatial
    gap structure carries label information.  Returns images (N, 1, H, W)
    and integer labels (class k = ARRANGEMENTS[k]).
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    count = round(GRADE_GAP_FRACTION["medium"] * size * size)
    images, labels = [], []
    for k, name in enumerate(ARRANGEMENTS):
        painter = _PAINTERS[name]
        for i in range(n_per_class):
            rng = np.random.default_rng([seed, k, i])
            mask = _match_count(painter(size, GRADE_GAP_FRACTION["medium"], rng),
                                count, rng)
            images.append(_render(mask)[None])
            labels.append(k)
    return np.stack(images), np.array(labels, dtype=np.int64)


def toy_dataset(
    classes: int = 3, n_per_class: int = 10, size: int = 56, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Trivially separable set: classes differ in gap fraction (0.05..0.65).

    Any pooled first-order statistic splits these, so simple baselines reach
    full accuracy.  Returns images (N, 1, H, W) and labels.
    """
    if classes < 2:
        raise ValueError("classes must be >= 2")
    images, labels = [], []
    for k in range(classes):
        frac = 0.05 + 0.60 * k / (classes - 1)
        count = round(frac * size * size)
        for i in range(n_per_class):
            rng = np.random.default_rng([seed, k, i])
            mask = _match_count(_jitter_mask(size, frac, rng), count, rng)
            images.append(_render(mask)[None])
            labels.append(k)
    return np.stack(images), np.array(labels, dtype=np.int64)
