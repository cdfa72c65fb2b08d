"""Deterministic training loop with Adam, checkpoints, and metric logs.

Randomness discipline: every stochastic step draws from its own derived
stream — parameter init from (seed, 0), the epoch-e shuffle from
(seed, 1 + e). Streams never share state, so resuming from an epoch-e
checkpoint replays exactly the batches an uninterrupted run would have
seen, and final checkpoints are byte-identical either way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .config import TrainConfig
from .datastore import (Dataset, REGRESSION, make_batches, read_blob,
                        write_blob)
from .errors import ConfigError, FormatError
from .model import HeadParameters, forward, init_params, predict
from .numerics import AdamState, adam_step
from .objective import backward, loss_ce, total_loss

PARAM_NAMES = ("w_psi", "b_psi", "w_nu", "protos", "w_out")


@dataclass
class EpochRecord:
    epoch: int
    ce: float
    coh: float
    sep: float
    total: float
    eval_metric: float | None = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def totals(self) -> list[float]:
        return [r.total for r in self.records]

    def jsonl_lines(self) -> list[str]:
        return [json.dumps(asdict(r)) for r in self.records]


def new_adam_states(params: HeadParameters, lr: float) -> list[AdamState]:
    return [AdamState.for_param(t, lr=lr) for t in params.tensors()]


def save_checkpoint(params: HeadParameters, adam: list[AdamState],
                    config: TrainConfig, epoch: int, path) -> None:
    """PLMC checkpoint: config + epoch in metadata, tensors after.

    Tensor order: the five parameter tensors, then the Adam (m, v) pair
    for each in the same order.
    """
    meta = {
        "config": config.to_json_dict(),
        "config_digest": config.digest(),
        "epoch": epoch,
        "mode": params.mode,
        "proto_class": params.proto_class.tolist(),
        "sim_activation": params.sim_activation,
        "sim_eps": params.sim_eps,
        "adam_steps": [st.step for st in adam],
        "tensor_order": list(PARAM_NAMES) + [
            f"adam_{w}_{n}" for n in PARAM_NAMES for w in ("m", "v")],
    }
    tensors = list(params.tensors())
    for st in adam:
        tensors.append(st.m)
        tensors.append(st.v)
    write_blob(path, meta, tensors)


def load_checkpoint(path):
    """Inverse of save_checkpoint: (params, adam states, config, epoch)."""
    meta, tensors = read_blob(path)
    try:
        config = TrainConfig.from_json_dict(meta["config"])
        epoch = int(meta["epoch"])
        proto_class = np.asarray(meta["proto_class"], dtype=np.int64)
        mode = meta["mode"]
        steps = meta["adam_steps"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"checkpoint metadata incomplete: {exc}") from exc
    if len(tensors) != 3 * len(PARAM_NAMES):
        raise FormatError(f"checkpoint holds {len(tensors)} tensors, "
                          f"expected {3 * len(PARAM_NAMES)}")
    params = HeadParameters(
        w_psi=tensors[0], b_psi=tensors[1], w_nu=tensors[2],
        protos=tensors[3], w_out=tensors[4], proto_class=proto_class,
        mode=mode, sim_activation=meta["sim_activation"],
        sim_eps=float(meta["sim_eps"]))
    adam = []
    for i in range(len(PARAM_NAMES)):
        st = AdamState(m=tensors[5 + 2 * i], v=tensors[6 + 2 * i],
                       step=int(steps[i]), lr=config.lr)
        adam.append(st)
    return params, adam, config, epoch


def _epoch_metrics(batch_sizes, batch_breakdowns) -> dict:
    """Sample-weighted means of the per-batch loss terms."""
    total_n = float(sum(batch_sizes))
    agg = {"ce": 0.0, "coh": 0.0, "sep": 0.0, "total": 0.0}
    for n, bd in zip(batch_sizes, batch_breakdowns):
        w = n / total_n
        agg["ce"] += w * bd.ce
        agg["coh"] += w * bd.coh
        agg["sep"] += w * bd.sep
        agg["total"] += w * bd.total
    return agg


def evaluate(params: HeadParameters, dataset: Dataset) -> dict:
    """Accuracy (or MSE) plus mean fit loss and per-class tallies."""
    if dataset.mode != params.mode:
        raise ConfigError(f"dataset mode {dataset.mode!r} does not match "
                          f"parameter mode {params.mode!r}")
    if params.mode == REGRESSION:
        sq_err = 0.0
        for s in dataset.samples:
            tr = forward(s, params)
            sq_err += (predict(tr, params.mode) - s.label) ** 2
        mse = sq_err / len(dataset)
        return {"mse": mse, "metric": mse}
    correct = np.zeros(dataset.num_classes, dtype=np.int64)
    seen = np.zeros(dataset.num_classes, dtype=np.int64)
    ce_sum = 0.0
    for s in dataset.samples:
        tr = forward(s, params)
        ce_sum += loss_ce(tr.probs, s.label)
        seen[s.label] += 1
        if predict(tr, params.mode) == s.label:
            correct[s.label] += 1
    acc = float(correct.sum()) / len(dataset)
    return {"accuracy": acc, "metric": acc,
            "mean_ce": ce_sum / len(dataset),
            "per_class_correct": correct.tolist(),
            "per_class_total": seen.tolist()}


def train(config: TrainConfig, train_set: Dataset,
          eval_set: Dataset | None = None, checkpoint_path=None,
          metrics_path=None, resume_from=None):
    """Run the full loop; returns (params, TrainHistory).

    With `resume_from`, parameters, Adam state, and the epoch counter come
    from the checkpoint and training continues to config.epochs. Every
    epoch overwrites `checkpoint_path` (when given) so a crash loses at
    most the epoch in flight.
    """
    cfg = config.validated(train_set.num_classes)
    if eval_set is not None and (eval_set.dim != train_set.dim or
                                 eval_set.num_classes !=
                                 train_set.num_classes):
        raise ConfigError("eval set dimensions do not match the train set")
    if resume_from is not None:
        params, adam, saved_cfg, start_epoch = load_checkpoint(resume_from)
        if saved_cfg.validated(train_set.num_classes) != cfg:
            raise ConfigError("checkpoint config does not match the "
                              "requested config")
        if params.dim != train_set.dim:
            raise ConfigError(f"checkpoint dimension {params.dim} does not "
                              f"match dataset dimension {train_set.dim}")
    else:
        params = init_params(cfg, train_set.dim, train_set.num_classes)
        adam = new_adam_states(params, cfg.lr)
        start_epoch = 0

    history = TrainHistory()
    metrics_fh = None
    if metrics_path is not None:
        metrics_fh = open(metrics_path, "a" if resume_from else "w")
        if not resume_from:
            metrics_fh.write(json.dumps(
                {"provenance": {"config_digest": cfg.digest(),
                                "seed": cfg.seed}}) + "\n")
    try:
        for epoch in range(start_epoch, cfg.epochs):
            batches = make_batches(train_set, cfg.batch_size,
                                   [cfg.seed, 1 + epoch], shuffle=True)
            sizes, breakdowns = [], []
            for batch in batches:
                samples = [train_set.samples[i] for i in batch]
                traces = [forward(s, params) for s in samples]
                bd = total_loss(samples, traces, params, cfg)
                grads = backward(samples, traces, bd, params, cfg)
                for name, grad, st in zip(PARAM_NAMES, grads.tensors(),
                                          adam):
                    updated, _ = adam_step(getattr(params, name), grad, st)
                    setattr(params, name, updated)
                sizes.append(len(samples))
                breakdowns.append(bd)
            agg = _epoch_metrics(sizes, breakdowns)
            metric = None
            if eval_set is not None:
                metric = evaluate(params, eval_set)["metric"]
            rec = EpochRecord(epoch=epoch, ce=agg["ce"], coh=agg["coh"],
                              sep=agg["sep"], total=agg["total"],
                              eval_metric=metric)
            history.records.append(rec)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(asdict(rec)) + "\n")
                metrics_fh.flush()
            if checkpoint_path is not None:
                save_checkpoint(params, adam, cfg, epoch + 1,
                                checkpoint_path)
        if checkpoint_path is not None:
            save_checkpoint(params, adam, cfg, cfg.epochs, checkpoint_path)
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    return params, history
