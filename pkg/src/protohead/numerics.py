"""Dense numeric kernels and the optimizer.

All training math is float64. Arrays are row-major (C order); dimension
checks happen at every operation boundary so shape bugs surface where they
are made, not three calls later.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError


def as_matrix(data, rows: int | None = None, cols: int | None = None,
              name: str = "matrix") -> np.ndarray:
    """Validate external input as a finite float64 row-major matrix.

    Rejects NaN/Inf and, when `rows`/`cols` are given, shape mismatches.
    """
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name}: expected 2 dimensions, got {arr.ndim}")
    if rows is not None and arr.shape[0] != rows:
        raise DimensionError(f"{name}: expected {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(f"{name}: expected {cols} cols, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: non-finite entries rejected")
    return arr


def as_vector(data, length: int | None = None, name: str = "vector") -> np.ndarray:
    """Validate external input as a finite float64 vector."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name}: expected 1 dimension, got {arr.ndim}")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"{name}: expected length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: non-finite entries rejected")
    return arr


def softmax(v) -> np.ndarray:
    """Numerically safe softmax of a vector.

    The maximum is subtracted before exponentiation so that arbitrarily
    large inputs cannot overflow; the largest term is then exp(0) = 1 and
    the output sums to 1 within 1e-12.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError("softmax: input must be a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise NumericError("softmax: non-finite input")
    shifted = arr - arr.max()
    e = np.exp(shifted)
    return e / e.sum()


def l2_distance_sq(a, b) -> float:
    """Squared Euclidean distance between two equal-length vectors."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise DimensionError(
            f"l2_distance_sq: shape mismatch {av.shape} vs {bv.shape}")
    diff = av - bv
    return float(diff @ diff)


def ordered_colsum(contrib: np.ndarray) -> np.ndarray:
    """Sum a (rows, cols) array over rows in strict left-to-right row order.

    np.sum uses pairwise reduction, whose grouping depends on length; a
    cumulative sum is sequential by definition, which pins the rounding so
    that masked/unmasked logit comparisons are reproducible.
    """
    if contrib.shape[0] == 0:
        return np.zeros(contrib.shape[1:], dtype=np.float64)
    return np.cumsum(contrib, axis=0)[-1]


@dataclass
class AdamState:
    """Per-tensor Adam buffers. `step` counts completed updates."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float = 1e-3,
                  beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros_like(param, dtype=np.float64),
                   v=np.zeros_like(param, dtype=np.float64),
                   step=0, beta1=beta1, beta2=beta2, eps=eps, lr=lr)


def adam_step(param: np.ndarray, grad: np.ndarray,
              state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One Adam update; returns the new parameter and the advanced state.

    Standard bias-corrected recurrence:

        m <- b1*m + (1-b1)*g         v <- b2*v + (1-b2)*g^2
        m_hat = m / (1 - b1^t)       v_hat = v / (1 - b2^t)
        p <- p - lr * m_hat / (sqrt(v_hat) + eps)

    `state` is updated in place (step, m, v) and returned for convenience.
    Deterministic: identical inputs give bit-identical outputs.
    """
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise DimensionError(
            f"adam_step: shape mismatch param {param.shape}, grad {grad.shape}, "
            f"state {state.m.shape}")
    state.step += 1
    t = state.step
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    new_param = param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_param, state
