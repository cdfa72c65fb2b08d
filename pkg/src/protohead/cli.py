"""Command-line surface.

Exit codes are a scripting contract: 0 success, 1 for configuration or
validation problems, 2 for I/O or file-format problems. Configuration
merges in three layers, later winning: JSON config file, positional
key=value overrides, named flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import faithfulness as faith
from . import interpret
from .config import TrainConfig
from .datastore import read_dataset, write_dataset
from .errors import (ConfigError, ConsistencyError, DiagnosticError,
                     DimensionError, FormatError, NumericError,
                     ProjectionError, ValidationError)
from .model import init_params
from .objective import grad_check
from .synth import as_regression, generate
from .training import evaluate, load_checkpoint, train

USER_ERRORS = (ConfigError, ValidationError, NumericError, DimensionError,
               ConsistencyError, ProjectionError, DiagnosticError,
               IndexError)
IO_ERRORS = (FormatError, OSError)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as config errors (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def _add_config_flags(p: _Parser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1,
                   help="reserved; only 1 is implemented")
    p.add_argument("--lambda0", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--N", type=int, dest="num_prototypes")
    p.add_argument("--K", type=int, dest="top_k")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--sim-activation", choices=("log_ratio", "reciprocal"))
    p.add_argument("overrides", nargs="*", metavar="key=value",
                   help="config field overrides")


def build_parser() -> _Parser:
    p = _Parser(prog="protohead",
                description="train and inspect a prototype classification "
                            "head over precomputed token embeddings")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a head on a PLM1 dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--eval-data")
    t.add_argument("--out", default=".", help="output directory")
    t.add_argument("--checkpoint", help="resume from this checkpoint")
    _add_config_flags(t)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", help="write metrics JSON here too")

    pr = sub.add_parser("project",
                        help="project prototypes onto training samples")
    pr.add_argument("--data", required=True)
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--out", required=True, help="projection CSV path")

    f = sub.add_parser("faithfulness",
                       help="comprehensiveness/sufficiency sweep")
    f.add_argument("--data", required=True)
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--out", required=True, help="report CSV path")
    f.add_argument("--k-list", default="1,5,10,20,50")

    x = sub.add_parser("export-space",
                       help="two-prototype similarity coordinates")
    x.add_argument("--data", required=True)
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--proto-a", type=int, required=True)
    x.add_argument("--proto-b", type=int, required=True)

    g = sub.add_parser("gradcheck",
                       help="finite-difference gradient verification")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sim-activation", default="log_ratio",
                   choices=("log_ratio", "reciprocal"))
    g.add_argument("--loss-mode", default="classification",
                   choices=("classification", "regression"))

    s = sub.add_parser("synth", help="generate a synthetic PLM1 dataset")
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--samples", type=int, default=100,
                   help="samples per class")
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--separation", type=float, default=4.0)
    s.add_argument("--t-min", type=int, default=3)
    s.add_argument("--t-max", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    return p


def assemble_config(args) -> TrainConfig:
    d: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        d.update(loaded)
    for kv in args.overrides:
        if "=" not in kv:
            raise ConfigError(f"override {kv!r} is not key=value")
        key, _, value = kv.partition("=")
        try:
            d[key] = json.loads(value)
        except json.JSONDecodeError:
            d[key] = value
    for key in ("seed", "lambda0", "lambda1", "lambda2", "num_prototypes",
                "top_k", "epochs", "lr", "sim_activation"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    return TrainConfig.from_json_dict(d)


def _provenance(cfg: TrainConfig) -> list[str]:
    return [f"config_digest {cfg.digest()}",
            f"seed {cfg.seed}",
            f"sim_activation {cfg.sim_activation} sim_eps {cfg.sim_eps}"]


def _cmd_train(args) -> int:
    cfg = assemble_config(args)
    train_set = read_dataset(args.data)
    eval_set = read_dataset(args.eval_data) if args.eval_data else None
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "checkpoint.plmc")
    metrics = os.path.join(args.out, "metrics.jsonl")
    params, history = train(cfg, train_set, eval_set=eval_set,
                            checkpoint_path=ckpt, metrics_path=metrics,
                            resume_from=args.checkpoint)
    last = history.records[-1] if history.records else None
    print(json.dumps({
        "checkpoint": ckpt, "metrics": metrics,
        "epochs_run": len(history.records),
        "final_total": None if last is None else last.total,
        "final_eval": None if last is None else last.eval_metric}))
    return 0


def _cmd_eval(args) -> int:
    params, _, cfg, _ = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.data)
    metrics = evaluate(params, dataset)
    metrics["provenance"] = {"config_digest": cfg.digest(),
                             "seed": cfg.seed}
    blob = json.dumps(metrics)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(blob + "\n")
    print(blob)
    return 0


def _cmd_project(args) -> int:
    params, _, cfg, _ = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.data)
    proj = interpret.project_prototypes(params, dataset)
    interpret.write_projection_csv(args.out, proj, params,
                                   header_lines=_provenance(cfg))
    print(json.dumps({
        "out": args.out,
        "uniqueness": interpret.uniqueness(proj),
        "mean_normalized_projection_distance":
            interpret.mean_normalized_projection_distance(
                params, dataset, proj)}))
    return 0


def _cmd_faithfulness(args) -> int:
    params, _, cfg, _ = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.data)
    try:
        k_values = tuple(float(k) for k in args.k_list.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --k-list: {exc}")
    report = faith.faithfulness_report(params, dataset, k_values)
    faith.write_faithfulness_csv(args.out, report,
                                 header_lines=_provenance(cfg))
    means = {f"{direction}@{k:g}": report.mean(k, direction)
             for k in k_values for direction in (faith.TOP, faith.BOTTOM)}
    print(json.dumps({"out": args.out, "skipped": report.skipped,
                      "means": means}))
    return 0


def _cmd_export_space(args) -> int:
    params, _, cfg, _ = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.data)
    rows = interpret.export_space(params, dataset, args.proto_a,
                                  args.proto_b)
    interpret.write_space_csv(args.out, rows, args.proto_a, args.proto_b,
                              header_lines=_provenance(cfg))
    print(json.dumps({"out": args.out, "rows": len(rows)}))
    return 0


def _cmd_gradcheck(args) -> int:
    data = generate(num_classes=2, samples_per_class=4, dim=8,
                    separation=2.0, seed=args.seed, t_range=(2, 6))
    cfg = TrainConfig(num_prototypes=6, top_k=2, lambda0=0.4, lambda1=0.3,
                      lambda2=0.3, seed=args.seed,
                      loss_mode=args.loss_mode,
                      sim_activation=args.sim_activation)
    if args.loss_mode == "regression":
        data = as_regression(data)
    cfg = cfg.validated(data.num_classes)
    params = init_params(cfg, data.dim, data.num_classes)
    report = grad_check(params, data.samples, cfg)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def _cmd_synth(args) -> int:
    data = generate(num_classes=args.classes,
                    samples_per_class=args.samples, dim=args.dim,
                    separation=args.separation, seed=args.seed,
                    t_range=(args.t_min, args.t_max))
    write_dataset(data, args.out)
    print(json.dumps({"out": args.out, "samples": len(data),
                      "dim": data.dim, "classes": data.num_classes}))
    return 0


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "project": _cmd_project,
    "faithfulness": _cmd_faithfulness,
    "export-space": _cmd_export_space,
    "gradcheck": _cmd_gradcheck,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IO_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
