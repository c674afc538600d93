"""Class-separability measurement for pooled feature vectors.

The Fisher discriminant ratio compares how far class means sit apart
(between-class scatter) with how much the classes spread internally
(within-class scatter).  The aggregate report is the natural log of the
scatter-sum ratio; being a ratio of scatter-matrix traces, it is invariant
under a common orthogonal rotation of all feature vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GUARD = 1e-12


@dataclass(frozen=True)
class FdrReport:
    """Scatter decomposition of one labeled feature set.

    `per_dimension` holds the guarded per-feature ratios; `log_fdr` is
    ln(between / (within + 1e-12)) over the summed scatters.  `flagged`
    marks the degenerate guards: zero within-class scatter (ratio blows up)
    or zero between-class scatter (log heads to -inf).
    """

    per_dimension: np.ndarray
    between: float
    within: float
    log_fdr: float
    flagged: bool


def fisher_discriminant_ratio(features: np.ndarray,
                              labels: np.ndarray) -> FdrReport:
    """Per-dimension and aggregate Fisher discriminant ratios.

    `features` is (N, D); needs >= 2 classes with >= 2 samples each.
    Per dimension d: sum_c n_c*(mu_cd - mu_d)^2 over sum_c sum_i (x - mu_cd)^2.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim == 4 and features.shape[2:] == (1, 1):
        features = features[:, :, 0, 0]
    if features.ndim != 2:
        raise ValueError(f"features must be (N, D), got {features.shape}")
    if labels.shape != (features.shape[0],):
        raise ValueError("labels must align with the feature rows")
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    if counts.min() < 2:
        raise ValueError("every class needs at least two samples")

    mu = features.mean(axis=0)
    between_d = np.zeros(features.shape[1])
    within_d = np.zeros(features.shape[1])
    for cls, n_c in zip(classes, counts):
        grp = features[labels == cls]
        mu_c = grp.mean(axis=0)
        between_d += n_c * (mu_c - mu) ** 2
        within_d += ((grp - mu_c) ** 2).sum(axis=0)

    between = float(between_d.sum())
    within = float(within_d.sum())
    log_fdr = math.log(between / (within + GUARD)) if between > 0 else -math.inf
    return FdrReport(
        per_dimension=between_d / (within_d + GUARD),
        between=between,
        within=within,
        log_fdr=log_fdr,
        flagged=(between == 0.0 or within == 0.0),
    )


def summarize_log_fdr(values) -> tuple[float, float]:
    """Mean and standard deviation of log-FDR values across runs."""
    arr = np.asarray([float(v) for v in values], dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to summarize")
    return float(arr.mean()), float(arr.std())
