"""Per-(node, window) traffic features and the train/test split.

Each sample holds four raw counters taken from a trace:

* ``ps`` packets the node sent (``s`` events)
* ``pr`` packets it received (``r`` events)
* ``pl`` packets it dropped (``d`` events)
* ``ec`` joules it spent, read off the ``-Ne`` energy column

and is labelled 1 when an attack was running during the window and the node
received at least one packet originated by that attacker.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import EmptyInput
from .trace import ENERGY_UNTRACKED, TraceRecord

log = logging.getLogger(__name__)

FEATURES = ("ps", "pr", "pl", "ec")
CSV_HEADER = ("node", "window", "ps", "pr", "pl", "ec", "label")


@dataclass(frozen=True)
class AttackInterval:
    node: int
    kind: str
    start: float
    stop: float

    def overlaps(self, lo: float, hi: float) -> bool:
        return self.start < hi and self.stop > lo


@dataclass(frozen=True)
class FlowInfo:
    src: int
    dst: int
    start: float
    stop: float
    rate: float = 4.0


@dataclass(frozen=True)
class GroundTruth:
    node_count: int
    duration: float
    initial_energy: Optional[float] = None
    attackers: tuple[AttackInterval, ...] = ()
    flows: tuple[FlowInfo, ...] = ()
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            node_count=int(d["node_count"]),
            duration=float(d["duration"]),
            initial_energy=d.get("initial_energy"),
            attackers=tuple(
                AttackInterval(int(a["node"]), a.get("kind", "dos"), float(a["start"]), float(a["stop"]))
                for a in d.get("attackers", ())
            ),
            flows=tuple(
                FlowInfo(int(f["src"]), int(f["dst"]), float(f["start"]), float(f["stop"]), float(f.get("rate", 4.0)))
                for f in d.get("flows", ())
            ),
            seed=d.get("seed"),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GroundTruth":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def save_ground_truth(truth: dict, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class FeatureVector:
    ps: int
    pr: int
    pl: int
    ec: float


@dataclass(frozen=True)
class FeatureRow:
    node: int
    window: int
    ps: int
    pr: int
    pl: int
    ec: float
    label: int

    @property
    def vector(self) -> FeatureVector:
        return FeatureVector(self.ps, self.pr, self.pl, self.ec)

    def values(self) -> tuple[float, float, float, float]:
        return (self.ps, self.pr, self.pl, self.ec)


def window_count(duration: float, window: float) -> int:
    return max(1, math.ceil(duration / window - 1e-12))


def extract(records: Iterable[TraceRecord], window: float, truth: GroundTruth) -> list[FeatureRow]:
    """One labelled feature row per (node, window), in node-major order.

    Energy per window is the sum of drops in the node's ``-Ne`` reading,
    starting from the initial energy in ``truth``; an untracked energy
    column yields ``ec = 0``.
    """
    if not window > 0:
        raise ValueError(f"window must be > 0, got {window}")
    n_nodes = truth.node_count
    n_win = window_count(truth.duration, window)
    counts = np.zeros((n_nodes, n_win, 3), dtype=np.int64)
    ec_uj = np.zeros((n_nodes, n_win), dtype=np.int64)
    contact = np.zeros((len(truth.attackers), n_nodes, n_win), dtype=bool)
    attacker_slot = {a.node: i for i, a in enumerate(truth.attackers)}
    tracked = truth.initial_energy is not None
    start_uj = round(truth.initial_energy * 1e6) if tracked else 0
    last_uj = [start_uj] * n_nodes
    column = {"s": 0, "r": 1, "d": 2}

    seen_any = False
    for r in records:
        seen_any = True
        node = r.ni
        w = min(int(r.time // window), n_win - 1)
        col = column.get(r.event)
        if col is not None:
            counts[node, w, col] += 1
        if tracked and r.ne != ENERGY_UNTRACKED:
            uj = round(r.ne * 1e6)
            ec_uj[node, w] += last_uj[node] - uj
            last_uj[node] = uj
        if r.event == "r":
            origin = r.ip.src if r.ip is not None else r.hs
            slot = attacker_slot.get(origin)
            if slot is not None:
                contact[slot, node, w] = True
    if not seen_any:
        return []

    attack_window = np.zeros((len(truth.attackers), n_win), dtype=bool)
    for i, a in enumerate(truth.attackers):
        for w in range(n_win):
            attack_window[i, w] = a.overlaps(w * window, (w + 1) * window)
    labels = (contact & attack_window[:, None, :]).any(axis=0)

    rows = []
    for node in range(n_nodes):
        for w in range(n_win):
            ps, pr, pl = (int(v) for v in counts[node, w])
            rows.append(FeatureRow(node, w, ps, pr, pl, int(ec_uj[node, w]) / 1e6, int(labels[node, w])))
    return rows


# -- normalisation and splitting -------------------------------------------


@dataclass(frozen=True)
class LabeledSample:
    node: int
    window_index: int
    x: tuple[float, float, float, float]
    label: int


@dataclass
class Scaler:
    """Per-feature min-max scaling fitted on training rows only."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or len(X) == 0:
            raise EmptyInput("cannot fit a scaler on no samples")
        return cls(X.min(axis=0), X.max(axis=0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        span = self.hi - self.lo
        flat = span == 0
        out = (X - self.lo) / np.where(flat, 1.0, span)
        out = np.clip(out, 0.0, 1.0)
        out[..., flat] = 0.5
        return out

    def to_text(self) -> str:
        return "\n".join(
            [" ".join(repr(float(v)) for v in self.lo), " ".join(repr(float(v)) for v in self.hi)]
        ) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Scaler":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        lo, hi = (np.array([float(v) for v in ln.split()]) for ln in lines[:2])
        return cls(lo, hi)


@dataclass
class Dataset:
    samples: list[LabeledSample]
    normalization: Scaler
    split_seed: Optional[int] = None
    train_idx: list[int] = field(default_factory=list)
    test_idx: list[int] = field(default_factory=list)

    def arrays(self, idx: Optional[Sequence[int]] = None) -> tuple[np.ndarray, np.ndarray]:
        chosen = self.samples if idx is None else [self.samples[i] for i in idx]
        X = np.array([s.x for s in chosen], dtype=float).reshape(-1, len(FEATURES))
        y = np.array([s.label for s in chosen], dtype=float)
        return X, y

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.arrays(self.train_idx)

    @property
    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self.arrays(self.test_idx)


def _matrix(rows: Sequence[FeatureRow]) -> np.ndarray:
    return np.array([r.values() for r in rows], dtype=float).reshape(-1, len(FEATURES))


def normalize(train: Sequence[FeatureRow], samples: Sequence[FeatureRow]) -> Dataset:
    """Min-max scale ``samples`` with statistics from ``train``.

    A feature that is constant on the training rows maps to 0.5; values
    outside the training range are clamped into [0, 1].
    """
    if len(train) == 0:
        raise EmptyInput("training portion is empty")
    scaler = Scaler.fit(_matrix(train))
    X = scaler.transform(_matrix(samples))
    out = [
        LabeledSample(r.node, r.window, tuple(float(v) for v in x), r.label)
        for r, x in zip(samples, X)
    ]
    return Dataset(out, scaler)


def split(samples: Sequence, ratio: float = 0.65, seed: int = 0) -> tuple[list, list]:
    """Random train/test partition; the training part holds round(ratio * n) items."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(samples)
    if n == 0:
        raise EmptyInput("nothing to split")
    n_train = math.floor(ratio * n + 0.5)
    if n_train == n or n_train == 0:
        log.warning("split of %d samples leaves an empty %s set", n, "test" if n_train == n else "train")
    order = np.random.default_rng(seed).permutation(n)
    train = [samples[i] for i in sorted(order[:n_train])]
    test = [samples[i] for i in sorted(order[n_train:])]
    return train, test


def prepare(rows: Sequence[FeatureRow], ratio: float = 0.65, seed: int = 0) -> Dataset:
    """Split ``rows`` and normalise everything with the training statistics."""
    idx = list(range(len(rows)))
    train_idx, test_idx = split(idx, ratio, seed)
    ds = normalize([rows[i] for i in train_idx], rows)
    ds.split_seed = seed
    ds.train_idx = train_idx
    ds.test_idx = test_idx
    return ds


# -- CSV -----------------------------------------------------------------


def write_dataset(rows: Iterable[FeatureRow], out: Union[str, Path, IO[str]]) -> int:
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            return write_dataset(rows, fh)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_HEADER)
    n = 0
    for r in rows:
        w.writerow([r.node, r.window, r.ps, r.pr, r.pl, f"{r.ec:.6f}", r.label])
        n += 1
    return n


def read_dataset(src: Union[str, Path, IO[str]]) -> list[FeatureRow]:
    if isinstance(src, (str, Path)):
        with open(src, newline="") as fh:
            return read_dataset(fh)
    reader = csv.DictReader(src)
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"dataset header must be {','.join(CSV_HEADER)}")
    return [
        FeatureRow(
            int(d["node"]), int(d["window"]), int(d["ps"]), int(d["pr"]), int(d["pl"]),
            float(d["ec"]), int(d["label"]),
        )
        for d in reader
    ]


def truth_dict(truth: GroundTruth) -> dict:
    return {
        "node_count": truth.node_count,
        "duration": truth.duration,
        "initial_energy": truth.initial_energy,
        "seed": truth.seed,
        "attackers": [asdict(a) for a in truth.attackers],
        "flows": [asdict(f) for f in truth.flows],
    }
