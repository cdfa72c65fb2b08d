"""Synthetic embedding datasets for tests and acceptance runs.

Class centers sit at (separation / sqrt(2)) times orthonormal directions,
so every pair of centers is exactly `separation` apart regardless of the
class count. Token embeddings are isotropic unit-variance Gaussians around
the class center, which makes the task's difficulty a clean function of
the separation knob.
"""

from __future__ import annotations

import numpy as np

from .datastore import (Dataset, TokenEmbeddingSample, CLASSIFICATION,
                        REGRESSION)
from .errors import ConfigError


def class_centers(num_classes: int, dim: int, separation: float,
                  rng: np.random.Generator) -> np.ndarray:
    """num_classes x dim center matrix with exact pairwise separation."""
    if dim < num_classes:
        raise ConfigError(f"dim ({dim}) must be >= the class count "
                          f"({num_classes}) to place equidistant centers")
    gauss = rng.standard_normal((dim, num_classes))
    q, _ = np.linalg.qr(gauss)
    return (separation / np.sqrt(2.0)) * q.T


def generate(num_classes: int, samples_per_class: int, dim: int,
             separation: float, seed: int,
             t_range: tuple[int, int] = (3, 8)) -> Dataset:
    """Deterministic synthetic dataset; same arguments, same bytes."""
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    if num_classes < 1:
        raise ConfigError("num_classes must be >= 1")
    if samples_per_class < 1:
        raise ConfigError("samples_per_class must be >= 1")
    if separation < 0:
        raise ConfigError("separation must be nonnegative")
    t_lo, t_hi = t_range
    if not 1 <= t_lo <= t_hi:
        raise ConfigError(f"invalid token-count range {t_range}")
    rng = np.random.default_rng(seed)
    centers = class_centers(num_classes, dim, separation, rng)
    samples = []
    sid = 0
    for cls in range(num_classes):
        for _ in range(samples_per_class):
            t_count = int(rng.integers(t_lo, t_hi + 1))
            tokens = centers[cls] + rng.standard_normal((t_count, dim))
            samples.append(TokenEmbeddingSample(
                sample_id=sid, tokens=tokens, label=cls))
            sid += 1
    return Dataset(samples=samples, dim=dim, num_classes=num_classes,
                   mode=CLASSIFICATION)


def split(dataset: Dataset, train_per_class: int) -> tuple[Dataset, Dataset]:
    """Stratified deterministic split: first k of each class train, rest test.

    Samples keep their original sample_ids, so projections and reports
    stay traceable to the generating run.
    """
    by_class: dict[int, list] = {}
    for s in dataset.samples:
        by_class.setdefault(int(s.label), []).append(s)
    train, test = [], []
    for cls in sorted(by_class):
        group = by_class[cls]
        if len(group) <= train_per_class:
            raise ConfigError(f"class {cls} has {len(group)} samples, "
                              f"cannot hold out past {train_per_class}")
        train.extend(group[:train_per_class])
        test.extend(group[train_per_class:])
    make = lambda ss: Dataset(samples=ss, dim=dataset.dim,
                              num_classes=dataset.num_classes,
                              mode=dataset.mode)
    return make(train), make(test)


def as_regression(dataset: Dataset) -> Dataset:
    """Recast class labels as float targets; handy for regression tests."""
    samples = [TokenEmbeddingSample(sample_id=s.sample_id,
                                    tokens=s.tokens.copy(),
                                    label=float(s.label),
                                    token_texts=s.token_texts)
               for s in dataset.samples]
    return Dataset(samples=samples, dim=dataset.dim, num_classes=1,
                   mode=REGRESSION)
