"""Scoring samples with a trained network and summarising detection quality."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Hashable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import EmptyInput, LengthMismatch
from .features import FeatureRow, FlowInfo, LabeledSample, window_count
from .neuralnet import Network, forward

log = logging.getLogger(__name__)

METRICS_HEADER = ("connections", "dr_recall", "dr_paper", "tp", "fp", "tn", "fn", "rmse")


@dataclass(frozen=True)
class Verdict:
    unit: Hashable
    score: float
    attack: bool

    @property
    def label(self) -> str:
        return "attack" if self.attack else "normal"


def _check_threshold(threshold: float) -> None:
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")


def classify(net: Network, sample: LabeledSample, threshold: float = 0.5) -> Verdict:
    _check_threshold(threshold)
    score, _ = forward(net, sample.x)
    return Verdict((sample.node, sample.window_index), score, score >= threshold)


def classify_all(net: Network, samples: Sequence[LabeledSample], threshold: float = 0.5) -> list[Verdict]:
    """Same rule as :func:`classify`, one verdict per sample."""
    return [classify(net, s, threshold) for s in samples]


def aggregate_connection(verdicts: Sequence[Verdict], unit: Hashable = None) -> Verdict:
    """Strict-majority vote over a connection's window verdicts."""
    if not verdicts:
        raise EmptyInput("a connection needs at least one window verdict")
    n_attack = sum(v.attack for v in verdicts)
    score = float(np.mean([v.score for v in verdicts]))
    return Verdict(unit, score, 2 * n_attack > len(verdicts))


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def attacks(self) -> int:
        return self.tp + self.fn


def _flags(verdicts: Sequence[Union[Verdict, bool]]) -> list[bool]:
    return [bool(v.attack) if isinstance(v, Verdict) else bool(v) for v in verdicts]


def confusion(verdicts: Sequence[Union[Verdict, bool]], labels: Sequence[int]) -> ConfusionCounts:
    pred = _flags(verdicts)
    if len(pred) != len(labels):
        raise LengthMismatch(f"{len(pred)} verdicts vs {len(labels)} labels")
    tp = fp = tn = fn = 0
    for p, y in zip(pred, labels):
        if y:
            tp += p
            fn += not p
        else:
            fp += p
            tn += not p
    return ConfusionCounts(tp, fp, tn, fn)


@dataclass(frozen=True)
class DetectionRate:
    dr_recall: float
    dr_paper: float


def rates(c: ConfusionCounts) -> DetectionRate:
    """Recall-style and all-units detection rates; recall is NaN with no attacks."""
    recall = c.tp / c.attacks if c.attacks else float("nan")
    overall = c.tp / c.total if c.total else float("nan")
    return DetectionRate(recall, overall)


def detection_rate(verdicts: Sequence[Union[Verdict, bool]], labels: Sequence[int]) -> DetectionRate:
    c = confusion(verdicts, labels)
    if c.attacks == 0:
        log.warning("no attack units among %d; dr_recall is undefined", c.total)
    return rates(c)


# -- connections ------------------------------------------------------------


@dataclass(frozen=True)
class Connection:
    """One CBR flow viewed as the receiver's windows while the flow is active."""

    index: int
    flow: FlowInfo
    windows: tuple[int, ...]

    @property
    def dst(self) -> int:
        return self.flow.dst


def connection_windows(flow: FlowInfo, window: float, n_windows: int) -> tuple[int, ...]:
    lo = int(flow.start // window)
    hi = math.ceil(flow.stop / window)
    return tuple(range(max(lo, 0), min(hi, n_windows)))


def connections(flows: Sequence[FlowInfo], window: float, duration: float) -> list[Connection]:
    n_win = window_count(duration, window)
    return [Connection(i, f, connection_windows(f, window, n_win)) for i, f in enumerate(flows)]


def connection_label(conn: Connection, labels: dict) -> int:
    """Strict majority of the receiver's window labels, the same rule as verdicts."""
    votes = [labels[(conn.dst, w)] for w in conn.windows]
    return int(2 * sum(votes) > len(votes))


def score_connections(
    conns: Sequence[Connection],
    window_verdicts: dict,
    window_labels: dict,
) -> tuple[list[Verdict], list[int]]:
    """Aggregate per-window verdicts, keyed by ``(node, window)``, per connection."""
    verdicts, labels = [], []
    for c in conns:
        if not c.windows:
            continue
        verdicts.append(aggregate_connection([window_verdicts[(c.dst, w)] for w in c.windows], unit=c.index))
        labels.append(connection_label(c, window_labels))
    return verdicts, labels


# -- metrics table ----------------------------------------------------------


@dataclass(frozen=True)
class MetricsRow:
    connections: int
    dr_recall: float
    dr_paper: float
    counts: ConfusionCounts
    rmse: float

    def cells(self) -> list[str]:
        c = self.counts
        return [
            str(self.connections), _fmt(self.dr_recall), _fmt(self.dr_paper),
            str(c.tp), str(c.fp), str(c.tn), str(c.fn), _fmt(self.rmse),
        ]


def _fmt(v: float) -> str:
    return "nan" if v != v else f"{v:.6f}"


def metrics_row(n_connections: int, verdicts, labels, rmse: float) -> MetricsRow:
    c = confusion(verdicts, labels)
    dr = rates(c)
    return MetricsRow(n_connections, dr.dr_recall, dr.dr_paper, c, rmse)


def write_metrics(rows: Iterable[MetricsRow], out: Union[str, Path, IO[str]]) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_metrics(rows, fh)
            return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow(r.cells())


def write_verdicts(verdicts: Iterable[Verdict], labels: Iterable[int], out: Union[str, Path, IO[str]], kind: str = "window") -> None:
    """One line per scored unit: unit, score, predicted class, true label."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_verdicts(verdicts, labels, fh, kind)
            return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("kind", "unit", "score", "verdict", "label"))
    for v, y in zip(verdicts, labels):
        unit = v.unit if not isinstance(v.unit, tuple) else ":".join(str(u) for u in v.unit)
        w.writerow((kind, unit, repr(v.score), v.label, int(y)))


def window_maps(rows: Sequence[FeatureRow], verdicts: Sequence[Verdict]) -> tuple[dict, dict]:
    """Index verdicts and labels by ``(node, window)``."""
    if len(rows) != len(verdicts):
        raise LengthMismatch(f"{len(rows)} rows vs {len(verdicts)} verdicts")
    by_key = {(r.node, r.window): v for r, v in zip(rows, verdicts)}
    labels = {(r.node, r.window): r.label for r in rows}
    return by_key, labels
