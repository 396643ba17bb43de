"""Full pipeline: simulate, extract, train, evaluate, and tabulate.

Every output lands under one directory::

    out/
      manifest.txt              resolved spec; feed it back with --config
      table3.{txt,csv}          training RMSE and epochs per model
      table4.{txt,csv}          train/test RMSE per model
      table5.{txt,csv}          connection-level detection per connection count
      metrics.csv               same numbers as table5 in the metrics layout
      attack_effect.{txt,csv}   flooding vs paired baseline
      seed_<s>/                 traces, truth files, datasets, models, verdicts
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import detect, features, netsim
from . import neuralnet as nn
from .config import ExperimentSpec, derive_seed, render_experiment, spec_hash
from .errors import SingleClassDataset
from .trace import write_file

log = logging.getLogger(__name__)

TRAIN_TAG, EVAL_TAG = 0, 1


# -- plain-text tables ------------------------------------------------------


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(header), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def write_table(stem: Path, header: Sequence[str], rows: Sequence[Sequence[str]], notes: Sequence[str] = ()) -> None:
    import csv

    text = format_table(header, rows)
    if notes:
        text += "\n" + "\n".join(notes) + "\n"
    stem.with_suffix(".txt").write_text(text)
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _f(v: float, digits: int = 4) -> str:
    return "nan" if v != v else f"{v:.{digits}f}"


# -- one seed ---------------------------------------------------------------


@dataclass
class ModelResult:
    arch: str
    transfer: str
    seed: int
    train_rmse: float
    test_rmse: float
    epochs: int
    stop_reason: str
    test_mae: float
    test_r2: float
    epochs_to_01: Optional[int]
    path: str = ""


@dataclass
class EffectRow:
    seed: int
    connections: int
    rreq_attack: int
    rreq_baseline: int
    pdr_attack: list[float]
    pdr_baseline: list[float]
    energy_conserved: bool
    baseline_false_alarms: int = 0
    baseline_windows: int = 0


@dataclass
class EvalCell:
    connections: int
    counts: detect.ConfusionCounts
    sq_err: float
    n_windows: int


@dataclass
class SeedResult:
    seed: int
    models: list[ModelResult] = field(default_factory=list)
    effects: list[EffectRow] = field(default_factory=list)
    evals: list[EvalCell] = field(default_factory=list)
    best: str = ""
    train_seconds: float = 0.0
    n_train: int = 0
    n_test: int = 0


def energy_conserved(res: netsim.RunResult) -> bool:
    """Initial energy = remaining + spent, exactly, for every node."""
    initial = round(res.config.energy.initial * 1e9)
    return all(
        initial == final + c.energy_used_nj
        for final, c in zip(res.final_energy_nj, res.counters)
    )


def _pdrs(res: netsim.RunResult) -> list[float]:
    return [f.delivery_ratio for f in res.flow_stats]


def _save_run(res: netsim.RunResult, stem: Path, spec: ExperimentSpec) -> list[features.FeatureRow]:
    truth = netsim.ground_truth(res.config)
    features.save_ground_truth(truth, stem.with_suffix(".truth.json"))
    if spec.traces != "none":
        write_file(res.records, stem.with_suffix(".tr.gz" if spec.traces == "gzip" else ".tr"))
    rows = features.extract(res.records, spec.window, features.GroundTruth.from_dict(truth))
    features.write_dataset(rows, stem.with_suffix(".csv"))
    return rows


def training_phase(spec: ExperimentSpec, seed: int, out: Path) -> tuple[SeedResult, features.Dataset, dict]:
    """Simulate the paired runs, build the dataset, and train every model."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "models").mkdir(exist_ok=True)
    t0 = time.perf_counter()
    result = SeedResult(seed)
    pooled: list[features.FeatureRow] = []
    baseline_rows: dict[int, list[features.FeatureRow]] = {}
    for c in spec.connection_counts:
        cfg = spec.scenario.build(derive_seed(seed, TRAIN_TAG, c), c)
        res = netsim.run(cfg)
        pooled += _save_run(res, out / f"attack_c{c}", spec)
        eff = EffectRow(seed, c, res.rreq_receives(), 0, _pdrs(res), [], energy_conserved(res))
        del res
        base = netsim.run(cfg.without_attackers())
        baseline_rows[c] = _save_run(base, out / f"baseline_c{c}", spec)
        eff.rreq_baseline = base.rreq_receives()
        eff.pdr_baseline = _pdrs(base)
        eff.energy_conserved = eff.energy_conserved and energy_conserved(base)
        result.effects.append(eff)
        del base

    labels = {r.label for r in pooled}
    if len(labels) < 2:
        raise SingleClassDataset(f"seed {seed}: every sample is labelled {labels.pop() if labels else '-'}")
    ds = features.prepare(pooled, spec.split_ratio, seed)
    Xtr, ytr = ds.train
    Xte, yte = ds.test
    result.n_train, result.n_test = len(ytr), len(yte)
    for arch_name in spec.architectures:
        for tf in spec.transfers:
            arch = nn.Architecture.parse(arch_name, tf, spec.output_transfer)
            net, rep = nn.train(nn.init(arch, seed), Xtr, ytr, spec.train)
            pred = net.predict(Xte)
            path = out / "models" / f"{arch_name}_{tf}.net"
            net.save(path)
            path.with_suffix(".scale").write_text(ds.normalization.to_text())
            result.models.append(ModelResult(
                arch_name, tf, seed, rep.final_rmse, nn.rmse(pred, yte), rep.final_epoch, rep.stop_reason,
                nn.mae(pred, yte), nn.r_squared(pred, yte), rep.epochs_to(0.1), str(path),
            ))
    result.train_seconds = time.perf_counter() - t0
    return result, ds, baseline_rows


def _window_verdicts(net: nn.Network, scaler: features.Scaler, rows, threshold: float):
    X = scaler.transform(np.array([r.values() for r in rows], dtype=float).reshape(-1, 4))
    samples = [features.LabeledSample(r.node, r.window, tuple(x), r.label) for r, x in zip(rows, X)]
    return detect.classify_all(net, samples, threshold)


def evaluation_phase(spec: ExperimentSpec, seed: int, out: Path, result: SeedResult, ds: features.Dataset, baseline_rows: dict) -> None:
    """Score fresh attack runs per connection count with the best model."""
    best = min(result.models, key=lambda m: m.test_rmse)
    result.best = f"{best.arch} {best.transfer}"
    net = nn.Network.load(best.path)
    scaler = ds.normalization
    (out / "eval").mkdir(exist_ok=True)
    conn_verdicts: list[detect.Verdict] = []
    conn_labels: list[int] = []
    for c in spec.connection_counts:
        verdicts_c: list[detect.Verdict] = []
        labels_c: list[int] = []
        sq, n = 0.0, 0
        for k in range(spec.eval_runs):
            cfg = spec.scenario.build(derive_seed(seed, EVAL_TAG, c, k), c)
            res = netsim.run(cfg)
            truth = netsim.ground_truth(cfg)
            gt = features.GroundTruth.from_dict(truth)
            rows = features.extract(res.records, spec.window, gt)
            del res
            features.write_dataset(rows, out / "eval" / f"c{c}_run{k}.csv")
            features.save_ground_truth(truth, out / "eval" / f"c{c}_run{k}.truth.json")
            wv = _window_verdicts(net, scaler, rows, spec.threshold)
            scores = np.array([v.score for v in wv])
            y = np.array([r.label for r in rows], dtype=float)
            sq += float(np.sum((y - scores) ** 2))
            n += len(rows)
            by_key, lab = detect.window_maps(rows, wv)
            conns = detect.connections(gt.flows, spec.window, gt.duration)
            v, l = detect.score_connections(conns, by_key, lab)
            verdicts_c += [detect.Verdict(f"c{c}:run{k}:conn{x.unit}", x.score, x.attack) for x in v]
            labels_c += l
        result.evals.append(EvalCell(c, detect.confusion(verdicts_c, labels_c), sq, n))
        conn_verdicts += verdicts_c
        conn_labels += labels_c
    detect.write_verdicts(conn_verdicts, conn_labels, out / "verdicts.csv", kind="connection")
    detect.write_metrics(
        [detect.MetricsRow(e.connections, *_rates(e.counts), e.counts, math.sqrt(e.sq_err / e.n_windows)) for e in result.evals],
        out / "metrics.csv",
    )
    for eff in result.effects:
        rows = baseline_rows[eff.connections]
        wv = _window_verdicts(net, scaler, rows, spec.threshold)
        eff.baseline_false_alarms = sum(v.attack for v in wv)
        eff.baseline_windows = len(wv)


def _rates(c: detect.ConfusionCounts) -> tuple[float, float]:
    r = detect.rates(c)
    return r.dr_recall, r.dr_paper


def run_seed(spec: ExperimentSpec, seed: int, out_dir: str) -> SeedResult:
    out = Path(out_dir) / f"seed_{seed}"
    result, ds, baseline_rows = training_phase(spec, seed, out)
    evaluation_phase(spec, seed, out, result, ds, baseline_rows)
    return result


# -- whole experiment -------------------------------------------------------


@dataclass
class ExperimentResult:
    seeds: list[SeedResult]
    out: Path

    def models(self) -> list[ModelResult]:
        return [m for s in self.seeds for m in s.models]

    def pooled(self, connections: int) -> tuple[detect.ConfusionCounts, float]:
        cells = [e for s in self.seeds for e in s.evals if e.connections == connections]
        tp = sum(e.counts.tp for e in cells)
        fp = sum(e.counts.fp for e in cells)
        tn = sum(e.counts.tn for e in cells)
        fn = sum(e.counts.fn for e in cells)
        sq = sum(e.sq_err for e in cells)
        n = sum(e.n_windows for e in cells)
        return detect.ConfusionCounts(tp, fp, tn, fn), math.sqrt(sq / n) if n else float("nan")


def run_experiment(spec: ExperimentSpec, out_dir: str | Path) -> ExperimentResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = spec.workers or min(len(spec.seeds), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            seeds = list(ex.map(run_seed, [spec] * len(spec.seeds), spec.seeds, [str(out)] * len(spec.seeds)))
    else:
        seeds = [run_seed(spec, s, str(out)) for s in spec.seeds]
    result = ExperimentResult(seeds, out)
    write_tables(spec, result)
    write_manifest(spec, out)
    return result


def write_tables(spec: ExperimentSpec, result: ExperimentResult) -> None:
    out = result.out
    models = sorted(result.models(), key=lambda m: (spec.architectures.index(m.arch), spec.transfers.index(m.transfer), m.seed))

    def layers(a: str) -> str:
        return str(len(a.split("-")) - 2)

    write_table(
        out / "table3",
        ("Network", "Layers", "Transfer", "Seed", "RMSE", "Epoch", "Stop"),
        [(m.arch, layers(m.arch), m.transfer, str(m.seed), _f(m.train_rmse, 6), str(m.epochs), m.stop_reason) for m in models],
    )
    write_table(
        out / "table4",
        ("Network", "Transfer", "Seed", "Train RMSE", "Test RMSE", "Test MAE", "Test R2"),
        [(m.arch, m.transfer, str(m.seed), _f(m.train_rmse, 6), _f(m.test_rmse, 6), _f(m.test_mae, 6), _f(m.test_r2, 6)) for m in models],
    )
    metrics = []
    rows5 = []
    for c in spec.connection_counts:
        counts, rmse = result.pooled(c)
        recall, overall = _rates(counts)
        metrics.append(detect.MetricsRow(c, recall, overall, counts, rmse))
        rows5.append((str(c), _f(100 * recall, 2), _f(100 * overall, 2), str(counts.tp), str(counts.fp), str(counts.tn), str(counts.fn), _f(rmse, 6)))
    best = ", ".join(f"seed {s.seed}: {s.best}" for s in result.seeds)
    write_table(
        out / "table5",
        ("No. of connections", "DR (recall) %", "DR (all units) %", "TP", "FP", "TN", "FN", "Window RMSE"),
        rows5,
        notes=[f"Models used: {best}."],
    )
    detect.write_metrics(metrics, out / "metrics.csv")

    effect_rows = []
    for s in result.seeds:
        for e in s.effects:
            worst = max((a - b for a, b in zip(e.pdr_attack, e.pdr_baseline)), default=0.0)
            effect_rows.append((
                str(e.seed), str(e.connections), str(e.rreq_attack), str(e.rreq_baseline),
                _f(e.rreq_attack / e.rreq_baseline if e.rreq_baseline else float("nan"), 2),
                _f(float(np.mean(e.pdr_attack)) if e.pdr_attack else float("nan")),
                _f(float(np.mean(e.pdr_baseline)) if e.pdr_baseline else float("nan")),
                _f(worst, 6), "yes" if e.energy_conserved else "NO",
                f"{e.baseline_false_alarms}/{e.baseline_windows}",
            ))
    write_table(
        out / "attack_effect",
        ("Seed", "Connections", "RREQ recv attack", "RREQ recv baseline", "Ratio", "PDR attack",
         "PDR baseline", "Max PDR gain", "Energy exact", "Baseline alarms"),
        effect_rows,
        notes=["Baseline runs have no attacker, so every window is labelled normal and the detection rate is undefined there; only false alarms are reported."],
    )


def write_manifest(spec: ExperimentSpec, out: Path) -> None:
    from . import __version__

    head = [
        "# experiment manifest; run again with: manetids experiment --config manifest.txt --out DIR",
        f"# spec_sha256 {spec_hash(spec)}",
        f"# manetids {__version__}, numpy {np.__version__}",
    ]
    (out / "manifest.txt").write_text("\n".join(head) + "\n" + render_experiment(spec))
