"""White-box diagnostics: projection, uniqueness, space export, clusters.

A prototype explains itself by pointing at the training sample whose
pooled encoding it sits closest to (restricted to its own class). The
other exports here reuse that machinery: uniqueness counts how many
prototypes point at distinct samples, the space export gives each sample
coordinates relative to two chosen prototypes, and the cluster
distribution reads a prototype as a soft clustering over the training
set with weights inversely proportional to distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datastore import Dataset, REGRESSION
from .errors import DiagnosticError, ProjectionError, ValidationError
from .model import HeadParameters, attend, forward, predict

SUBSAMPLE_LIMIT = 1000


def pooled_encodings(params: HeadParameters,
                     dataset: Dataset) -> np.ndarray:
    """Pooled encoding of every sample, row i for dataset.samples[i]."""
    out = np.empty((len(dataset), params.dim))
    for i, s in enumerate(dataset.samples):
        _, pooled, _, _ = attend(s, params)
        out[i] = pooled
    return out


def render_attended(texts: list[str], alpha: np.ndarray) -> str:
    """Token string with the highest-attention token highlighted."""
    top = int(np.argmax(alpha))
    return " ".join(f"**{t}**" if i == top else t
                    for i, t in enumerate(texts))


@dataclass
class ProjectionResult:
    """Nearest same-class training sample per prototype."""

    sample_ids: np.ndarray
    dist_sq: np.ndarray
    alphas: list[np.ndarray]
    texts: list[str | None]


def project_prototypes(params: HeadParameters,
                       train_set: Dataset) -> ProjectionResult:
    """Argmin of squared distance over same-class samples, per prototype.

    Ties go to the lowest sample_id. In regression mode the single class
    owns every sample, so the restriction is vacuous.
    """
    pooled = pooled_encodings(params, train_set)
    ids = np.array([s.sample_id for s in train_set.samples])
    labels = train_set.labels()
    n_proto = params.num_prototypes
    out_ids = np.empty(n_proto, dtype=np.int64)
    out_d = np.empty(n_proto)
    out_alpha: list[np.ndarray] = []
    out_text: list[str | None] = []
    for j in range(n_proto):
        if params.mode == REGRESSION:
            cand = np.arange(len(train_set))
        else:
            cand = np.flatnonzero(labels == params.proto_class[j])
            if cand.size == 0:
                raise ProjectionError(
                    f"class {int(params.proto_class[j])} has no training "
                    f"samples to project prototype {j} onto")
        diff = pooled[cand] - params.protos[j]
        d = np.einsum("id,id->i", diff, diff)
        best = cand[np.lexsort((ids[cand], d))[0]]
        out_ids[j] = ids[best]
        out_d[j] = d[np.flatnonzero(cand == best)[0]]
        sample = train_set.samples[best]
        alpha, _, _, _ = attend(sample, params)
        out_alpha.append(alpha)
        out_text.append(render_attended(sample.token_texts, alpha)
                        if sample.token_texts else None)
    return ProjectionResult(sample_ids=out_ids, dist_sq=out_d,
                            alphas=out_alpha, texts=out_text)


def uniqueness(projection: ProjectionResult) -> float:
    """Fraction of prototypes whose projected sample is theirs alone."""
    ids, counts = np.unique(projection.sample_ids, return_counts=True)
    solo = set(ids[counts == 1].tolist())
    n = len(projection.sample_ids)
    return sum(1 for s in projection.sample_ids if int(s) in solo) / n


def _mean_pairwise_distance(points: np.ndarray) -> float:
    gram = points @ points.T
    sq = np.diag(gram)[:, None] + np.diag(gram)[None, :] - 2.0 * gram
    iu = np.triu_indices(len(points), k=1)
    return float(np.mean(np.sqrt(np.maximum(sq[iu], 0.0))))


def mean_normalized_projection_distance(
        params: HeadParameters, train_set: Dataset,
        projection: ProjectionResult) -> float:
    """Mean prototype-to-projection L2, over the encoding spread.

    The normalizer is the mean pairwise distance among a fixed-seed
    subsample of at most SUBSAMPLE_LIMIT pooled encodings; values are
    comparable only under this same normalizer.
    """
    pooled = pooled_encodings(params, train_set)
    if len(pooled) < 2:
        raise DiagnosticError("need at least 2 samples to normalize")
    if len(pooled) > SUBSAMPLE_LIMIT:
        pick = np.random.default_rng(0).choice(
            len(pooled), size=SUBSAMPLE_LIMIT, replace=False)
        pooled = pooled[np.sort(pick)]
    normalizer = _mean_pairwise_distance(pooled)
    if normalizer == 0.0:
        raise DiagnosticError("all pooled encodings identical; normalized "
                              "projection distance undefined")
    return float(np.mean(np.sqrt(projection.dist_sq))) / normalizer


@dataclass
class SpaceRow:
    sample_id: int
    label: int | float
    prediction: int | float
    nsim_a: float
    nsim_b: float


def export_space(params: HeadParameters, dataset: Dataset, proto_a: int,
                 proto_b: int) -> list[SpaceRow]:
    """Two-prototype coordinates per sample: nsim = 1 / (1 + L2 distance).

    Values lie in (0, 1], hitting 1 exactly when the pooled encoding
    coincides with the prototype.
    """
    n = params.num_prototypes
    for idx in (proto_a, proto_b):
        if not 0 <= idx < n:
            raise IndexError(f"prototype index {idx} outside [0, {n})")
    if proto_a == proto_b:
        raise ValidationError("proto_a and proto_b must differ")
    rows = []
    for s in dataset.samples:
        tr = forward(s, params)
        d_a = np.sqrt(tr.dist_sq[proto_a])
        d_b = np.sqrt(tr.dist_sq[proto_b])
        rows.append(SpaceRow(
            sample_id=s.sample_id, label=s.label,
            prediction=predict(tr, params.mode),
            nsim_a=float(1.0 / (1.0 + d_a)),
            nsim_b=float(1.0 / (1.0 + d_b))))
    return rows


@dataclass
class ClusterDistribution:
    """Soft cluster of training samples around one prototype."""

    prototype: int
    sample_ids: np.ndarray
    pi: np.ndarray


def cluster_distribution(params: HeadParameters, train_set: Dataset,
                         j: int,
                         class_restricted: bool = False
                         ) -> ClusterDistribution:
    """Weights inversely proportional to plain L2 distance.

    Samples at distance exactly zero soak up all the mass, split evenly
    among themselves (the limit of 1/d). By default the distribution
    ranges over the whole training set; class_restricted narrows it to
    the prototype's own class.
    """
    if not 0 <= j < params.num_prototypes:
        raise IndexError(f"prototype index {j} outside "
                         f"[0, {params.num_prototypes})")
    pooled = pooled_encodings(params, train_set)
    ids = np.array([s.sample_id for s in train_set.samples])
    if class_restricted and params.mode != REGRESSION:
        keep = np.flatnonzero(train_set.labels() == params.proto_class[j])
        pooled, ids = pooled[keep], ids[keep]
    diff = pooled - params.protos[j]
    d = np.sqrt(np.einsum("id,id->i", diff, diff))
    zero = d == 0.0
    if np.any(zero):
        pi = np.where(zero, 1.0 / zero.sum(), 0.0)
    else:
        inv = 1.0 / d
        pi = inv / inv.sum()
    return ClusterDistribution(prototype=j, sample_ids=ids, pi=pi)


# --- CSV emitters -------------------------------------------------------

def _write_csv(path, header_lines, columns, rows) -> None:
    with open(path, "w") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def write_projection_csv(path, projection: ProjectionResult,
                         params: HeadParameters,
                         header_lines=None) -> None:
    cols = ("prototype", "class", "sample_id", "dist_sq", "attended_text")
    rows = []
    for j in range(len(projection.sample_ids)):
        text = projection.texts[j]
        rows.append((j, int(params.proto_class[j]),
                     int(projection.sample_ids[j]),
                     repr(projection.dist_sq[j]),
                     "" if text is None else f'"{text}"'))
    _write_csv(path, header_lines, cols, rows)


def write_space_csv(path, rows: list[SpaceRow], proto_a: int, proto_b: int,
                    header_lines=None) -> None:
    lines = list(header_lines or [])
    lines.append("nsim = 1/(1+L2); axes: prototypes "
                 f"{proto_a} and {proto_b}")
    cols = ("sample_id", "label", "prediction", "nsim_a", "nsim_b")
    _write_csv(path, lines, cols,
               [(r.sample_id, r.label, r.prediction, repr(r.nsim_a),
                 repr(r.nsim_b)) for r in rows])


def write_distribution_csv(path, dist: ClusterDistribution,
                           header_lines=None) -> None:
    lines = list(header_lines or [])
    lines.append("pi proportional to 1/L2-distance; zero distance takes "
                 "all mass")
    cols = ("prototype", "sample_id", "pi")
    _write_csv(path, lines, cols,
               [(dist.prototype, int(sid), repr(float(p)))
                for sid, p in zip(dist.sample_ids, dist.pi)])
