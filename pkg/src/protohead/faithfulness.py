"""Faithfulness metrics via prototype masking.

Comprehensiveness asks how much predicted-class confidence drops when a
chosen prototype set is silenced (its classifier rows zeroed);
sufficiency asks how much survives when only that set is kept.
Confidence is the raw predicted-class logit. Because the classifier has
no bias and logits sum prototype contributions in a fixed order, the two
metrics for the same set add to exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datastore import Dataset
from .errors import ConfigError, DiagnosticError
from .model import ForwardTrace, HeadParameters, forward, logits, predict

TOP = "top"
BOTTOM = "bottom"
DEFAULT_K_VALUES = (1, 5, 10, 20, 50)


def top_k_prototypes(sims: np.ndarray, k_percent: float,
                     which: str) -> np.ndarray:
    """Indices of the k% most (or least) similar prototypes.

    Count is max(1, floor(k_percent * N / 100)); ties go to the lower
    index via a stable sort.
    """
    if not 0 < k_percent <= 100:
        raise ConfigError(f"k_percent must be in (0, 100], got {k_percent}")
    if which not in (TOP, BOTTOM):
        raise ConfigError(f"selection must be '{TOP}' or '{BOTTOM}', "
                          f"got {which!r}")
    n = len(sims)
    count = max(1, int(np.floor(k_percent * n / 100.0)))
    keys = -sims if which == TOP else sims
    order = np.argsort(keys, kind="stable")
    return np.sort(order[:count])


def _confidence(trace: ForwardTrace) -> tuple[int, float]:
    pred = int(np.argmax(trace.logits))
    pr = float(trace.logits[pred])
    if pr == 0.0:
        raise DiagnosticError("predicted-class logit is exactly zero; "
                              "relative confidence change undefined")
    return pred, pr


def comp(trace: ForwardTrace, params: HeadParameters,
         proto_set: np.ndarray) -> float:
    """Relative confidence drop when proto_set is masked out."""
    pred, pr = _confidence(trace)
    masked = float(logits(trace.sims, params, mask=proto_set)[pred])
    return (pr - masked) / pr


def suff(trace: ForwardTrace, params: HeadParameters,
         proto_set: np.ndarray) -> float:
    """Relative confidence drop when only proto_set is kept."""
    pred, pr = _confidence(trace)
    keep = set(int(i) for i in proto_set)
    complement = np.array([i for i in range(params.num_prototypes)
                           if i not in keep], dtype=np.int64)
    retained = float(logits(trace.sims, params, mask=complement)[pred])
    return (pr - retained) / pr


@dataclass
class FaithRow:
    sample_id: int
    k: float
    direction: str
    comp: float
    suff: float
    pr: float
    pred: int
    label: int | float


@dataclass
class FaithfulnessReport:
    k_values: tuple
    rows: list[FaithRow] = field(default_factory=list)
    skipped: int = 0

    def mean(self, k: float, direction: str) -> tuple[float, float]:
        """(mean comp, mean suff) over the evaluated samples."""
        cs = [(r.comp, r.suff) for r in self.rows
              if r.k == k and r.direction == direction]
        if not cs:
            raise DiagnosticError(f"no rows for k={k} direction={direction}")
        arr = np.array(cs)
        return float(arr[:, 0].mean()), float(arr[:, 1].mean())


def faithfulness_report(params: HeadParameters, dataset: Dataset,
                        k_values=DEFAULT_K_VALUES) -> FaithfulnessReport:
    """Per-sample comp/suff for top and bottom k% sets at every k.

    Samples whose predicted-class logit is exactly zero cannot be scored
    (the metrics divide by it); they are counted in `skipped` and left out
    of all means.
    """
    if not dataset.samples:
        raise ConfigError("faithfulness needs a nonempty dataset")
    report = FaithfulnessReport(k_values=tuple(k_values))
    for s in dataset.samples:
        trace = forward(s, params)
        try:
            pred, pr = _confidence(trace)
        except DiagnosticError:
            report.skipped += 1
            continue
        for k in k_values:
            for direction in (TOP, BOTTOM):
                chosen = top_k_prototypes(trace.sims, k, direction)
                report.rows.append(FaithRow(
                    sample_id=s.sample_id, k=k, direction=direction,
                    comp=comp(trace, params, chosen),
                    suff=suff(trace, params, chosen),
                    pr=pr, pred=pred, label=s.label))
    return report


def write_faithfulness_csv(path, report: FaithfulnessReport,
                           header_lines=None) -> None:
    lines = list(header_lines or [])
    lines.append("confidence = raw predicted-class logit; masking zeroes "
                 "classifier rows")
    lines.append(f"skipped_zero_logit_samples = {report.skipped}")
    cols = ("sample_id", "k", "direction", "comp", "suff", "pr", "pred",
            "label")
    rows = [(r.sample_id, r.k, r.direction, repr(r.comp), repr(r.suff),
             repr(r.pr), r.pred, r.label) for r in report.rows]
    with open(path, "w") as fh:
        for line in lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
