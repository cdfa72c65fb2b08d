"""Forward pass of the prototype head.

The head sits on top of a frozen encoder: token embeddings come in, an
attention layer pools them into one vector S, S is compared against N
learned prototype vectors, and the similarity vector feeds a bias-free
linear classifier. Every intermediate is kept in the ForwardTrace so the
backward pass and the diagnostics can reuse them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .datastore import TokenEmbeddingSample, CLASSIFICATION, REGRESSION
from .errors import ConfigError, DimensionError, NumericError
from .numerics import ordered_colsum, softmax

LOG_RATIO = "log_ratio"
RECIPROCAL = "reciprocal"


def sim_value(dist_sq: np.ndarray, kind: str, eps: float) -> np.ndarray:
    """Similarity activation: large when the squared distance is small."""
    d = np.asarray(dist_sq, dtype=np.float64)
    if kind == LOG_RATIO:
        return np.log(d + 1.0) - np.log(d + eps)
    if kind == RECIPROCAL:
        return 1.0 / (1.0 + d)
    raise ConfigError(f"unknown similarity activation {kind!r}")


def sim_grad(dist_sq: np.ndarray, kind: str, eps: float) -> np.ndarray:
    """d(sim_value)/d(dist_sq); negative everywhere (similarity decays)."""
    d = np.asarray(dist_sq, dtype=np.float64)
    if kind == LOG_RATIO:
        return 1.0 / (d + 1.0) - 1.0 / (d + eps)
    if kind == RECIPROCAL:
        return -1.0 / (1.0 + d) ** 2
    raise ConfigError(f"unknown similarity activation {kind!r}")


@dataclass
class HeadParameters:
    """All trainable tensors plus the fixed prototype-to-class map.

    w_psi: D_a x D attention projection, b_psi: D_a bias, w_nu: D_a scorer.
    protos: N x D prototype matrix. w_out: N x C classifier, no bias (a bias
    would break the additive logit decomposition the diagnostics rely on).
    """

    w_psi: np.ndarray
    b_psi: np.ndarray
    w_nu: np.ndarray
    protos: np.ndarray
    proto_class: np.ndarray
    w_out: np.ndarray
    mode: str = CLASSIFICATION
    sim_activation: str = LOG_RATIO
    sim_eps: float = 1e-4

    def __post_init__(self):
        self.proto_class = np.asarray(self.proto_class, dtype=np.int64)
        self.validate()

    @property
    def dim(self) -> int:
        return self.protos.shape[1]

    @property
    def attention_dim(self) -> int:
        return self.w_psi.shape[0]

    @property
    def num_prototypes(self) -> int:
        return self.protos.shape[0]

    @property
    def num_classes(self) -> int:
        return self.w_out.shape[1]

    def validate(self) -> None:
        n_proto, dim = self.protos.shape
        d_a = self.w_psi.shape[0]
        if self.w_psi.shape != (d_a, dim):
            raise DimensionError(f"w_psi shape {self.w_psi.shape} does not "
                                 f"match ({d_a}, {dim})")
        if self.b_psi.shape != (d_a,) or self.w_nu.shape != (d_a,):
            raise DimensionError("attention vectors must have length "
                                 f"{d_a}, got {self.b_psi.shape} and "
                                 f"{self.w_nu.shape}")
        if self.w_out.shape[0] != n_proto:
            raise DimensionError(f"classifier rows {self.w_out.shape[0]} != "
                                 f"prototype count {n_proto}")
        if self.proto_class.shape != (n_proto,):
            raise DimensionError("proto_class length must equal the "
                                 "prototype count")
        for t in (self.w_psi, self.b_psi, self.w_nu, self.protos, self.w_out):
            if not np.all(np.isfinite(t)):
                raise NumericError("non-finite head parameter")
        counts = np.bincount(self.proto_class,
                             minlength=self.num_classes)
        if self.mode == CLASSIFICATION and len(set(counts.tolist())) != 1:
            raise ConfigError("prototypes must be split evenly across "
                              f"classes, got counts {counts.tolist()}")

    def tensors(self) -> list[np.ndarray]:
        """Trainable tensors in the fixed checkpoint/gradient order."""
        return [self.w_psi, self.b_psi, self.w_nu, self.protos, self.w_out]

    def copy(self) -> "HeadParameters":
        return HeadParameters(
            w_psi=self.w_psi.copy(), b_psi=self.b_psi.copy(),
            w_nu=self.w_nu.copy(), protos=self.protos.copy(),
            proto_class=self.proto_class.copy(), w_out=self.w_out.copy(),
            mode=self.mode, sim_activation=self.sim_activation,
            sim_eps=self.sim_eps)


@dataclass
class ForwardTrace:
    """Per-sample intermediates of one forward evaluation."""

    alpha: np.ndarray
    pooled: np.ndarray
    dist_sq: np.ndarray
    sims: np.ndarray
    logits: np.ndarray
    probs: np.ndarray | None
    pre_tanh: np.ndarray = field(repr=False, default=None)
    activ: np.ndarray = field(repr=False, default=None)


def init_params(config: TrainConfig, dim: int, num_classes: int,
                seed: int | None = None) -> HeadParameters:
    """Deterministic initialization.

    Classifier rows start at 1.0 for the prototype's own class and -0.5
    elsewhere; prototypes start uniform over [0, 1); the attention tensors
    start uniform over [-1/sqrt(D_a), 1/sqrt(D_a)). All draws come from a
    single derived stream in a fixed order (w_psi, b_psi, w_nu, protos) so
    a seed pins every tensor.
    """
    cfg = config.validated(num_classes)
    if seed is None:
        seed = cfg.seed
    n_proto = cfg.num_prototypes
    per_class = cfg.protos_per_class
    d_a = cfg.attention_dim if cfg.attention_dim is not None else dim
    rng = np.random.default_rng([seed, 0])
    bound = 1.0 / np.sqrt(d_a)
    w_psi = rng.uniform(-bound, bound, size=(d_a, dim))
    b_psi = rng.uniform(-bound, bound, size=d_a)
    w_nu = rng.uniform(-bound, bound, size=d_a)
    protos = rng.uniform(0.0, 1.0, size=(n_proto, dim))
    proto_class = np.arange(n_proto) // per_class
    w_out = np.full((n_proto, num_classes), -0.5)
    w_out[np.arange(n_proto), proto_class] = 1.0
    return HeadParameters(
        w_psi=w_psi, b_psi=b_psi, w_nu=w_nu, protos=protos,
        proto_class=proto_class, w_out=w_out, mode=cfg.loss_mode,
        sim_activation=cfg.sim_activation, sim_eps=cfg.sim_eps)


def attend(sample: TokenEmbeddingSample, params: HeadParameters):
    """Token attention pooling.

    Returns (alpha, pooled, pre_tanh, activ); the last two are the tanh
    pre-activation and activation, cached for the backward pass.
    """
    tokens = sample.tokens
    if tokens.shape[1] != params.dim:
        raise DimensionError(
            f"sample {sample.sample_id} has dimension {tokens.shape[1]}, "
            f"parameters expect {params.dim}")
    pre_tanh = tokens @ params.w_psi.T + params.b_psi
    activ = np.tanh(pre_tanh)
    scores = activ @ params.w_nu
    alpha = softmax(scores)
    pooled = alpha @ tokens
    return alpha, pooled, pre_tanh, activ


def similarities(pooled: np.ndarray, params: HeadParameters):
    """Squared L2 distances to every prototype and their similarities."""
    if pooled.shape != (params.dim,):
        raise DimensionError(f"pooled vector shape {pooled.shape} does not "
                             f"match dimension {params.dim}")
    diff = params.protos - pooled
    dist_sq = np.einsum("nd,nd->n", diff, diff)
    sims = sim_value(dist_sq, params.sim_activation, params.sim_eps)
    return dist_sq, sims


def logits(sims: np.ndarray, params: HeadParameters,
           mask=None) -> np.ndarray:
    """Classifier output; masked prototypes contribute exactly zero.

    Summation runs over prototype index in a fixed low-to-high order, so
    logits over complementary masks add up to the unmasked logits exactly,
    not merely approximately.
    """
    if sims.shape != (params.num_prototypes,):
        raise DimensionError(f"similarity vector shape {sims.shape} does "
                             f"not match N = {params.num_prototypes}")
    contrib = sims[:, None] * params.w_out
    if mask is not None:
        idx = np.asarray(list(mask), dtype=np.int64)
        if idx.size and (idx.min() < 0 or
                         idx.max() >= params.num_prototypes):
            raise IndexError(f"mask index out of range [0, "
                             f"{params.num_prototypes})")
        contrib = contrib.copy()
        contrib[idx] = 0.0
    return ordered_colsum(contrib)


def forward(sample: TokenEmbeddingSample,
            params: HeadParameters) -> ForwardTrace:
    """Full head evaluation: attend, compare to prototypes, classify."""
    alpha, pooled, pre_tanh, activ = attend(sample, params)
    dist_sq, sims = similarities(pooled, params)
    z = logits(sims, params)
    probs = softmax(z) if params.mode == CLASSIFICATION else None
    return ForwardTrace(alpha=alpha, pooled=pooled, dist_sq=dist_sq,
                        sims=sims, logits=z, probs=probs,
                        pre_tanh=pre_tanh, activ=activ)


def predict(trace: ForwardTrace, mode: str):
    """Predicted class index, or the raw scalar in regression mode."""
    if mode == REGRESSION:
        return float(trace.logits[0])
    return int(np.argmax(trace.logits))
