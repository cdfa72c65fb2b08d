"""Trainable, inherently interpretable prototype head over frozen
token embeddings: attention pooling, prototype similarities, a bias-free
linear classifier, and the diagnostics that make the result explainable.
"""

from .config import TrainConfig
from .datastore import (Dataset, TokenEmbeddingSample, make_batches,
                        read_dataset, write_dataset)
from .faithfulness import (comp, faithfulness_report, suff,
                           top_k_prototypes)
from .interpret import (cluster_distribution, export_space,
                        mean_normalized_projection_distance,
                        project_prototypes, uniqueness)
from .model import (ForwardTrace, HeadParameters, attend, forward,
                    init_params, logits, similarities)
from .objective import (Gradients, LossBreakdown, backward, grad_check,
                        loss_ce, loss_coh, loss_sep, total_loss)
from .synth import generate
from .training import (TrainHistory, evaluate, load_checkpoint,
                       save_checkpoint, train)

__all__ = [
    "TrainConfig", "Dataset", "TokenEmbeddingSample", "make_batches",
    "read_dataset", "write_dataset", "comp", "faithfulness_report",
    "suff", "top_k_prototypes", "cluster_distribution", "export_space",
    "mean_normalized_projection_distance", "project_prototypes",
    "uniqueness", "ForwardTrace", "HeadParameters", "attend", "forward",
    "init_params", "logits", "similarities", "Gradients",
    "LossBreakdown", "backward", "grad_check", "loss_ce", "loss_coh",
    "loss_sep", "total_loss", "generate", "TrainHistory", "evaluate",
    "load_checkpoint", "save_checkpoint", "train",
]

__version__ = "0.1.0"
