"""Dataset container and binary file formats.

Two little-endian formats live here. "PLM1" holds token embeddings plus
labels (and optional token strings) so encoder output can cross process and
language boundaries bit-exactly. "PLMC" holds a training checkpoint: a JSON
metadata block followed by raw float64 tensors.

Embeddings are stored as float32 on disk and widened to float64 in memory;
samples normalize their token matrix through float32 at construction so a
write/read cycle is the identity.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ValidationError

PLM1_MAGIC = b"PLM1"
PLMC_MAGIC = b"PLMC"
FORMAT_VERSION = 1

FLAG_REGRESSION = 1 << 0
FLAG_TOKEN_TEXTS = 1 << 1

CLASSIFICATION = "classification"
REGRESSION = "regression"


def _f32_exact(tokens: np.ndarray) -> np.ndarray:
    """Round to float32 precision, keep float64 dtype."""
    return np.asarray(tokens, dtype=np.float32).astype(np.float64)


@dataclass
class TokenEmbeddingSample:
    """One encoded text: a T x D matrix of frozen-encoder token vectors."""

    sample_id: int
    tokens: np.ndarray
    label: int | float
    token_texts: list[str] | None = None

    def __post_init__(self):
        arr = np.asarray(self.tokens, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(
                f"sample {self.sample_id}: tokens must be a nonempty 2-D "
                f"matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(
                f"sample {self.sample_id}: non-finite token embedding")
        self.tokens = _f32_exact(arr)
        if self.token_texts is not None and \
                len(self.token_texts) != arr.shape[0]:
            raise ValidationError(
                f"sample {self.sample_id}: {len(self.token_texts)} token "
                f"texts for {arr.shape[0]} tokens")

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]


@dataclass
class Dataset:
    """Immutable-after-load collection of embedded samples."""

    samples: list[TokenEmbeddingSample]
    dim: int
    num_classes: int
    mode: str = CLASSIFICATION

    def __post_init__(self):
        if self.mode not in (CLASSIFICATION, REGRESSION):
            raise ValidationError(f"unknown dataset mode {self.mode!r}")
        if self.mode == REGRESSION and self.num_classes != 1:
            raise ValidationError("regression datasets must declare a single "
                                  f"output, got {self.num_classes}")
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1")
        with_texts = sum(1 for s in self.samples if s.token_texts is not None)
        if with_texts not in (0, len(self.samples)):
            raise ValidationError("token texts must be present on all "
                                  "samples or none")
        for s in self.samples:
            if s.tokens.shape[1] != self.dim:
                raise ValidationError(
                    f"sample {s.sample_id}: dimension {s.tokens.shape[1]} "
                    f"does not match dataset dimension {self.dim}")
            if self.mode == CLASSIFICATION:
                lab = int(s.label)
                if lab != s.label or not (0 <= lab < self.num_classes):
                    raise ValidationError(
                        f"sample {s.sample_id}: label {s.label!r} outside "
                        f"[0, {self.num_classes})")
                s.label = lab
            else:
                s.label = float(np.float32(s.label))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def has_texts(self) -> bool:
        return bool(self.samples) and self.samples[0].token_texts is not None

    def labels(self) -> np.ndarray:
        if self.mode == CLASSIFICATION:
            return np.array([s.label for s in self.samples], dtype=np.int64)
        return np.array([s.label for s in self.samples], dtype=np.float64)


# --- PLM1 ---------------------------------------------------------------

def write_dataset(dataset: Dataset, path) -> None:
    """Serialize a dataset; see module docstring for the layout."""
    if not dataset.samples:
        raise FormatError("refusing to write a dataset with no samples")
    flags = 0
    if dataset.mode == REGRESSION:
        flags |= FLAG_REGRESSION
    if dataset.has_texts:
        flags |= FLAG_TOKEN_TEXTS
    parts = [
        PLM1_MAGIC,
        struct.pack("<IIIIQ", FORMAT_VERSION, flags, dataset.dim,
                    dataset.num_classes, len(dataset.samples)),
    ]
    for s in dataset.samples:
        if dataset.mode == REGRESSION:
            parts.append(struct.pack("<f", s.label))
        else:
            parts.append(struct.pack("<I", s.label))
        parts.append(struct.pack("<I", s.num_tokens))
        parts.append(s.tokens.astype("<f4").tobytes(order="C"))
        if dataset.has_texts:
            for text in s.token_texts:
                enc = text.encode("utf-8")
                parts.append(struct.pack("<I", len(enc)))
                parts.append(enc)
    blob = b"".join(parts)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise FormatError(f"cannot write dataset to {path}: {exc}") from exc


class _ByteReader:
    """Cursor over a bytes object that reports truncation offsets."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise FormatError(
                f"truncated file: needed {count} bytes for {what} at offset "
                f"{self.pos}, only {len(self.data) - self.pos} remain")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_dataset(path) -> Dataset:
    """Parse and validate a PLM1 file."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read dataset from {path}: {exc}") from exc
    r = _ByteReader(data)
    if r.take(4, "magic") != PLM1_MAGIC:
        raise FormatError(f"bad magic in {path}: not a PLM1 file")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported PLM1 version {version}")
    (flags,) = r.unpack("<I", "flags")
    dim, num_classes = r.unpack("<II", "header dims")
    (num_samples,) = r.unpack("<Q", "sample count")
    regression = bool(flags & FLAG_REGRESSION)
    has_texts = bool(flags & FLAG_TOKEN_TEXTS)
    if dim < 1:
        raise FormatError("header declares zero embedding dimension")
    samples = []
    for i in range(num_samples):
        if regression:
            (label,) = r.unpack("<f", f"sample {i} target")
            label = float(label)
        else:
            (label,) = r.unpack("<I", f"sample {i} label")
            if label >= num_classes:
                raise ValidationError(
                    f"sample {i}: label {label} outside [0, {num_classes})")
        (t_count,) = r.unpack("<I", f"sample {i} token count")
        if t_count < 1:
            raise FormatError(f"sample {i}: zero tokens")
        raw = r.take(4 * t_count * dim, f"sample {i} embeddings")
        tokens = np.frombuffer(raw, dtype="<f4").reshape(t_count, dim)
        texts = None
        if has_texts:
            texts = []
            for t in range(t_count):
                (n_bytes,) = r.unpack("<I", f"sample {i} token {t} length")
                texts.append(r.take(n_bytes, f"sample {i} token {t} text")
                             .decode("utf-8"))
        samples.append(TokenEmbeddingSample(
            sample_id=i, tokens=tokens, label=label, token_texts=texts))
    if r.pos != len(data):
        raise FormatError(
            f"{len(data) - r.pos} trailing bytes after sample payload")
    mode = REGRESSION if regression else CLASSIFICATION
    return Dataset(samples=samples, dim=dim, num_classes=num_classes,
                   mode=mode)


# --- batching -----------------------------------------------------------

def make_batches(dataset: Dataset, batch_size: int, seed,
                 shuffle: bool = True) -> list[np.ndarray]:
    """Partition sample indices into batches, covering each exactly once.

    `seed` is anything numpy's default_rng accepts, so callers can pass a
    derived seed sequence for per-epoch shuffles.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(dataset))
    if shuffle:
        np.random.default_rng(seed).shuffle(order)
    return [order[i:i + batch_size]
            for i in range(0, len(order), batch_size)]


# --- PLMC ---------------------------------------------------------------

def write_blob(path, meta: dict, tensors: list[np.ndarray]) -> None:
    """Write a PLMC checkpoint: JSON metadata then float64 tensor records.

    Tensor order is the caller's contract. Each record is ndim (u32),
    dims (u32 each), then row-major f64 payload, so readers need no shape
    table.
    """
    meta_enc = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [PLMC_MAGIC, struct.pack("<I", FORMAT_VERSION),
             struct.pack("<Q", len(meta_enc)), meta_enc]
    for t in tensors:
        arr = np.ascontiguousarray(t, dtype=np.float64)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8").tobytes(order="C"))
    blob = b"".join(parts)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise FormatError(f"cannot write checkpoint to {path}: {exc}") from exc


def read_blob(path) -> tuple[dict, list[np.ndarray]]:
    """Read a PLMC checkpoint back as (metadata, tensors)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint from {path}: {exc}") from exc
    r = _ByteReader(data)
    if r.take(4, "magic") != PLMC_MAGIC:
        raise FormatError(f"bad magic in {path}: not a PLMC checkpoint")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported PLMC version {version}")
    (meta_len,) = r.unpack("<Q", "metadata length")
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint metadata: {exc}") from exc
    tensors = []
    k = 0
    while r.pos < len(data):
        (ndim,) = r.unpack("<I", f"tensor {k} rank")
        dims = r.unpack(f"<{ndim}I", f"tensor {k} shape")
        count = int(np.prod(dims)) if ndim else 1
        raw = r.take(8 * count, f"tensor {k} payload")
        tensors.append(np.frombuffer(raw, dtype="<f8").reshape(dims).copy())
        k += 1
    return meta, tensors
