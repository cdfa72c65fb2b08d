"""Training configuration: validation, JSON round-trip, and hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, replace

from .errors import ConfigError

LAMBDA_SUM_TOL = 1e-9

SIM_ACTIVATIONS = ("log_ratio", "reciprocal")
LOSS_MODES = ("classification", "regression")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for the prototype head.

    `n` (prototypes per class) may be left as None and is derived as
    N / num_classes during validation. `attention_dim` is the hidden width
    of the token-attention map; None means "same as the embedding width".
    """

    num_prototypes: int = 10
    protos_per_class: int | None = None
    top_k: int = 1
    lambda0: float = 0.3
    lambda1: float = 0.35
    lambda2: float = 0.35
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    loss_mode: str = "classification"
    sim_activation: str = "log_ratio"
    sim_eps: float = 1e-4
    attention_dim: int | None = None

    def validated(self, num_classes: int) -> "TrainConfig":
        """Check invariants against a dataset's class count.

        Returns a copy with `protos_per_class` filled in. Raises ConfigError
        on any violation; nothing downstream re-checks these.
        """
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, "
                              f"got {self.loss_mode!r}")
        if self.sim_activation not in SIM_ACTIVATIONS:
            raise ConfigError(f"sim_activation must be one of {SIM_ACTIVATIONS}, "
                              f"got {self.sim_activation!r}")
        if self.loss_mode == "regression" and num_classes != 1:
            raise ConfigError("regression mode requires a single output "
                              f"(got {num_classes} classes)")
        if num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if self.num_prototypes < 1:
            raise ConfigError("num_prototypes must be >= 1")
        if self.num_prototypes % num_classes != 0:
            raise ConfigError(
                f"num_prototypes ({self.num_prototypes}) must be divisible by "
                f"the class count ({num_classes})")
        n = self.num_prototypes // num_classes
        if self.protos_per_class is not None and self.protos_per_class != n:
            raise ConfigError(
                f"protos_per_class ({self.protos_per_class}) inconsistent with "
                f"num_prototypes/num_classes = {n}")
        if not (1 <= self.top_k <= n):
            raise ConfigError(f"top_k ({self.top_k}) must be in [1, {n}]")
        if self.loss_mode == "classification" and \
                self.top_k > self.num_prototypes - n:
            raise ConfigError(
                f"top_k ({self.top_k}) exceeds the other-class prototype count "
                f"({self.num_prototypes - n})")
        lams = (self.lambda0, self.lambda1, self.lambda2)
        if any(l < 0 for l in lams):
            raise ConfigError(f"loss weights must be nonnegative, got {lams}")
        if abs(sum(lams) - 1.0) > LAMBDA_SUM_TOL:
            raise ConfigError(
                f"loss weights must sum to 1 (got {sum(lams)!r}); "
                f"lambda0+lambda1+lambda2 = {lams}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.sim_eps <= 0 or self.sim_eps >= 1:
            raise ConfigError("sim_eps must lie in (0, 1)")
        if self.attention_dim is not None and self.attention_dim < 1:
            raise ConfigError("attention_dim must be >= 1")
        return replace(self, protos_per_class=n)

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        """Stable short hash used in output provenance headers."""
        blob = json.dumps(self.to_json_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]
