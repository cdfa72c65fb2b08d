"""Training objective and exact manual gradients.

The objective mixes three terms: a cross-entropy (or squared-error) fit
term, a cohesion term pulling each pooled encoding toward its class's K
most distant prototypes, and a separation term pushing it away from the K
nearest other-class prototypes. Weights lambda0/1/2 live on the unit
simplex.

The backward pass differentiates the whole chain by hand, treating the
top-K index selections as constants of the traced forward pass (the usual
subgradient for min/max compositions). Gradients stop at the token
embeddings: the encoder is frozen by design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig, LAMBDA_SUM_TOL
from .datastore import TokenEmbeddingSample, REGRESSION
from .errors import ConfigError, ConsistencyError
from .model import ForwardTrace, HeadParameters, forward, sim_grad
from .numerics import ordered_colsum

PROB_FLOOR = 1e-300


@dataclass
class LossBreakdown:
    """Batch-mean loss terms plus the per-sample top-K selections."""

    ce: float
    coh: float
    sep: float
    total: float
    selected_coh: list[np.ndarray]
    selected_sep: list[np.ndarray]


@dataclass
class Gradients:
    """One tensor per trainable parameter, same shapes."""

    w_psi: np.ndarray
    b_psi: np.ndarray
    w_nu: np.ndarray
    protos: np.ndarray
    w_out: np.ndarray

    def tensors(self) -> list[np.ndarray]:
        return [self.w_psi, self.b_psi, self.w_nu, self.protos, self.w_out]

    @classmethod
    def zeros_like(cls, params: HeadParameters) -> "Gradients":
        return cls(*[np.zeros_like(t) for t in params.tensors()])


def loss_ce(probs: np.ndarray, label: int) -> float:
    """Negative log-likelihood with a floor that avoids -inf."""
    if not 0 <= label < len(probs):
        raise IndexError(f"label {label} outside [0, {len(probs)})")
    return float(-np.log(max(float(probs[label]), PROB_FLOOR)))


def _top_k(values: np.ndarray, candidates: np.ndarray, k: int,
           largest: bool) -> np.ndarray:
    """K candidate indices by extreme value, ties to the lower index.

    `candidates` is ascending, so a stable sort on the value keeps
    lower-index entries first within ties.
    """
    keys = -values[candidates] if largest else values[candidates]
    order = np.argsort(keys, kind="stable")
    return candidates[order[:k]]


def loss_coh(dist_sq: np.ndarray, label: int, proto_class: np.ndarray,
             k: int) -> tuple[float, np.ndarray]:
    """Mean of the K largest same-class squared distances."""
    same = np.flatnonzero(proto_class == label)
    if k > same.size:
        raise ConfigError(f"cohesion K = {k} exceeds the {same.size} "
                          f"prototypes of class {label}")
    chosen = _top_k(dist_sq, same, k, largest=True)
    return float(np.mean(dist_sq[chosen])), chosen


def loss_sep(dist_sq: np.ndarray, label: int, proto_class: np.ndarray,
             k: int) -> tuple[float, np.ndarray]:
    """Negated mean of the K smallest other-class squared distances.

    With a single class there are no other-class prototypes; the term is
    identically zero then.
    """
    other = np.flatnonzero(proto_class != label)
    if other.size == 0:
        return 0.0, np.empty(0, dtype=np.int64)
    if k > other.size:
        raise ConfigError(f"separation K = {k} exceeds the {other.size} "
                          f"other-class prototypes")
    chosen = _top_k(dist_sq, other, k, largest=False)
    return float(-np.mean(dist_sq[chosen])), chosen


def _check_lambdas(config: TrainConfig) -> tuple[float, float, float]:
    lams = (config.lambda0, config.lambda1, config.lambda2)
    if any(l < 0 for l in lams) or abs(sum(lams) - 1.0) > LAMBDA_SUM_TOL:
        raise ConfigError(f"loss weights must be a point on the unit "
                          f"simplex, got {lams}")
    return lams


def _canonical_order(samples: list[TokenEmbeddingSample]) -> np.ndarray:
    """Reduction order for batch sums: ascending sample_id.

    Pins the floating-point accumulation so a reshuffled batch of the same
    samples produces bit-identical batch losses and gradients.
    """
    ids = np.array([s.sample_id for s in samples])
    return np.argsort(ids, kind="stable")


def total_loss(samples: list[TokenEmbeddingSample],
               traces: list[ForwardTrace], params: HeadParameters,
               config: TrainConfig) -> LossBreakdown:
    """Batch-mean objective, Eq. style: lam0*fit + lam1*coh + lam2*sep."""
    lam0, lam1, lam2 = _check_lambdas(config)
    if len(samples) != len(traces):
        raise ConsistencyError(f"{len(samples)} samples vs "
                               f"{len(traces)} traces")
    regression = params.mode == REGRESSION
    b = len(samples)
    ce_terms = np.zeros(b)
    coh_terms = np.zeros(b)
    sep_terms = np.zeros(b)
    sel_coh: list[np.ndarray] = [None] * b
    sel_sep: list[np.ndarray] = [None] * b
    for i, (s, tr) in enumerate(zip(samples, traces)):
        if regression:
            ce_terms[i] = (float(tr.logits[0]) - float(s.label)) ** 2
            cls = 0
        else:
            ce_terms[i] = loss_ce(tr.probs, s.label)
            cls = s.label
        coh_terms[i], sel_coh[i] = loss_coh(
            tr.dist_sq, cls, params.proto_class, config.top_k)
        sep_terms[i], sel_sep[i] = loss_sep(
            tr.dist_sq, cls, params.proto_class, config.top_k)
    order = _canonical_order(samples)
    ce = float(ordered_colsum(ce_terms[order, None])[0]) / b
    coh = float(ordered_colsum(coh_terms[order, None])[0]) / b
    sep = float(ordered_colsum(sep_terms[order, None])[0]) / b
    total = lam0 * ce + lam1 * coh + lam2 * sep
    return LossBreakdown(ce=ce, coh=coh, sep=sep, total=total,
                         selected_coh=sel_coh, selected_sep=sel_sep)


def _sample_backward(sample: TokenEmbeddingSample, trace: ForwardTrace,
                     sel_coh: np.ndarray, sel_sep: np.ndarray,
                     params: HeadParameters, lam0: float, lam1: float,
                     lam2: float, k: int) -> Gradients:
    """Gradient of one sample's weighted loss (no batch averaging here)."""
    tokens = sample.tokens
    t_count = tokens.shape[0]
    if trace.alpha.shape != (t_count,) or \
            trace.sims.shape != (params.num_prototypes,) or \
            trace.pooled.shape != (params.dim,):
        raise ConsistencyError(
            f"trace shapes stale for sample {sample.sample_id}")
    n_proto = params.num_prototypes

    # classifier head
    d_dist = np.zeros(n_proto)
    d_w_out = np.zeros_like(params.w_out)
    if lam0 > 0.0:
        if params.mode == REGRESSION:
            dz = np.array([lam0 * 2.0 *
                           (float(trace.logits[0]) - float(sample.label))])
        else:
            dz = trace.probs.copy()
            dz[sample.label] -= 1.0
            dz *= lam0
        d_w_out = np.outer(trace.sims, dz)
        d_sims = params.w_out @ dz
        d_dist = d_sims * sim_grad(trace.dist_sq, params.sim_activation,
                                   params.sim_eps)

    # distance terms act on the frozen selections only
    if lam1 > 0.0 and sel_coh.size:
        d_dist[sel_coh] += lam1 / k
    if lam2 > 0.0 and sel_sep.size:
        d_dist[sel_sep] -= lam2 / k

    # dist_sq_j = ||pooled - p_j||^2
    diff = params.protos - trace.pooled
    d_protos = (2.0 * d_dist)[:, None] * diff
    d_pooled = -2.0 * (d_dist @ diff)

    # pooled = alpha @ tokens; alpha = softmax(scores)
    d_alpha = tokens @ d_pooled
    d_scores = trace.alpha * (d_alpha - float(trace.alpha @ d_alpha))

    # scores = tanh(tokens W_psi^T + b_psi) @ w_nu
    d_w_nu = trace.activ.T @ d_scores
    d_activ = np.outer(d_scores, params.w_nu)
    d_pre = d_activ * (1.0 - trace.activ ** 2)
    d_w_psi = d_pre.T @ tokens
    d_b_psi = d_pre.sum(axis=0)

    return Gradients(w_psi=d_w_psi, b_psi=d_b_psi, w_nu=d_w_nu,
                     protos=d_protos, w_out=d_w_out)


def backward(samples: list[TokenEmbeddingSample],
             traces: list[ForwardTrace], breakdown: LossBreakdown,
             params: HeadParameters, config: TrainConfig) -> Gradients:
    """Batch-mean gradient under the breakdown's frozen selections.

    Accumulates per-sample gradients in ascending sample_id order (see
    _canonical_order) and divides by the batch size.
    """
    lam0, lam1, lam2 = _check_lambdas(config)
    total = Gradients.zeros_like(params)
    order = _canonical_order(samples)
    for i in order:
        g = _sample_backward(samples[i], traces[i],
                             breakdown.selected_coh[i],
                             breakdown.selected_sep[i], params,
                             lam0, lam1, lam2, config.top_k)
        for acc, part in zip(total.tensors(), g.tensors()):
            acc += part
    b = float(len(samples))
    for t in total.tensors():
        t /= b
    return total


def batch_loss(samples: list[TokenEmbeddingSample],
               params: HeadParameters,
               config: TrainConfig) -> LossBreakdown:
    """Forward every sample and reduce; convenience for eval and checks."""
    traces = [forward(s, params) for s in samples]
    return total_loss(samples, traces, params, config)


@dataclass
class GradCheckReport:
    """Per-tensor maximum relative error of analytic vs central difference."""

    per_tensor: dict[str, float]
    h: float
    tol: float

    @property
    def max_error(self) -> float:
        return max(self.per_tensor.values())

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def lines(self) -> list[str]:
        out = [f"gradient check: h={self.h:g} tol={self.tol:g}"]
        for name, err in self.per_tensor.items():
            mark = "ok" if err < self.tol else "FAIL"
            out.append(f"  {name:8s} max rel err {err:.3e}  {mark}")
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return out


def grad_check(params: HeadParameters,
               samples: list[TokenEmbeddingSample], config: TrainConfig,
               h: float = 1e-5, tol: float = 1e-4,
               gradients: Gradients | None = None) -> GradCheckReport:
    """Central finite differences against the analytic gradients.

    Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator so
    near-zero coordinates do not divide by zero. Keep instances small;
    cost is two full batch evaluations per parameter coordinate.
    """
    if gradients is None:
        traces = [forward(s, params) for s in samples]
        bd = total_loss(samples, traces, params, config)
        gradients = backward(samples, traces, bd, params, config)
    names = ("w_psi", "b_psi", "w_nu", "protos", "w_out")
    work = params.copy()
    errors: dict[str, float] = {}
    for name, tensor, grad in zip(names, work.tensors(),
                                  gradients.tensors()):
        worst = 0.0
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + h
            up = batch_loss(samples, work, config).total
            flat[j] = keep - h
            down = batch_loss(samples, work, config).total
            flat[j] = keep
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(gflat[j]), abs(numeric), 1e-6)
            worst = max(worst, abs(gflat[j] - numeric) / denom)
        errors[name] = worst
    return GradCheckReport(per_tensor=errors, h=h, tol=tol)
