"""Command-line entry point: ``manetids <verb> ...``.

Verbs: simulate, extract, train, evaluate, experiment. Errors are printed
as ``error: <Code>: <message>`` and give exit status 2.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import detect, experiment, features, netsim
from . import neuralnet as nn
from .config import ExperimentSpec, load_experiment, with_overrides
from .errors import IoFailure, ManetIdsError, SingleClassDataset
from .trace import open_text, parse_file, write_file

log = logging.getLogger("manetids")


def sidecar(path: Path, suffix: str = ".truth.json") -> Path:
    """``run.tr.gz`` -> ``run.truth.json``; ``data.csv`` -> ``data.truth.json``."""
    name = path.name
    for ext in (".gz", ".tr", ".csv", ".net"):
        if name.endswith(ext):
            name = name[: -len(ext)]
    return path.with_name(name + suffix)


def _spec(args) -> ExperimentSpec:
    spec = load_experiment(args.config) if args.config else ExperimentSpec()
    return with_overrides(spec, seed=args.seed, ni_tag=args.compat_ni_tag)


def _need_out(args) -> Path:
    if not args.out:
        raise ManetIdsError("--out is required")
    return Path(args.out)


# -- verbs ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    spec = _spec(args)
    out = _need_out(args)
    cfg = spec.scenario.build(connections=args.connections)
    if args.no_attack:
        cfg = cfg.without_attackers()
    res = netsim.run(cfg)
    write_file(res.records, out)
    features.save_ground_truth(netsim.ground_truth(cfg), sidecar(out))
    print(f"{len(res.records)} records -> {out}")
    print(f"{'node':>4} {'sent':>7} {'recv':>8} {'fwd':>7} {'drop':>7} {'energy_J':>10}")
    for i, c in enumerate(res.counters):
        print(f"{i:>4} {c.sent:>7} {c.received:>8} {c.forwarded:>7} {c.dropped:>7} {c.energy_used:>10.6f}")
    for i, f in enumerate(res.flow_stats):
        print(f"flow {i}: generated {f.generated} delivered {f.delivered} pdr {f.delivery_ratio:.4f}")
    return 0


def cmd_extract(args) -> int:
    trace_path = Path(args.trace)
    truth_path = Path(args.truth) if args.truth else sidecar(trace_path)
    out = _need_out(args)
    truth = features.GroundTruth.load(truth_path)
    with open_text(trace_path) as fh:
        rows = features.extract(parse_file(fh, strict=args.strict), args.window, truth)
    if not rows:
        log.warning("trace %s holds no records; writing an empty dataset", trace_path)
    features.write_dataset(rows, out)
    if sidecar(out) != truth_path:
        features.save_ground_truth(features.truth_dict(truth), sidecar(out))
    n_attack = sum(r.label for r in rows)
    print(f"{len(rows)} samples ({n_attack} attack, {len(rows) - n_attack} normal) -> {out}")
    return 0


def cmd_train(args) -> int:
    spec = _spec(args)
    out = _need_out(args)
    out.mkdir(parents=True, exist_ok=True)
    rows = features.read_dataset(args.dataset)
    if len({r.label for r in rows}) < 2:
        raise SingleClassDataset(f"{args.dataset} holds a single class; nothing to learn")
    results = []
    for seed in spec.seeds:
        ds = features.prepare(rows, spec.split_ratio, seed)
        Xtr, ytr = ds.train
        Xte, yte = ds.test
        for arch_name in spec.architectures:
            for tf in spec.transfers:
                arch = nn.Architecture.parse(arch_name, tf, spec.output_transfer)
                net, rep = nn.train(nn.init(arch, seed), Xtr, ytr, spec.train)
                path = out / f"{arch_name}_{tf}_s{seed}.net"
                net.save(path)
                path.with_suffix(".scale").write_text(ds.normalization.to_text())
                test = nn.rmse(net.predict(Xte), yte) if len(yte) else float("nan")
                results.append(experiment.ModelResult(
                    arch_name, tf, seed, rep.final_rmse, test, rep.final_epoch, rep.stop_reason,
                    float("nan"), float("nan"), rep.epochs_to(0.1), str(path),
                ))
    rows3 = [
        (m.arch, str(len(m.arch.split("-")) - 2), m.transfer, str(m.seed), experiment._f(m.train_rmse, 6), str(m.epochs), m.stop_reason)
        for m in results
    ]
    experiment.write_table(out / "report", ("Network", "Layers", "Transfer", "Seed", "RMSE", "Epoch", "Stop"), rows3)
    print((out / "report.txt").read_text(), end="")
    return 0


def cmd_evaluate(args) -> int:
    out = _need_out(args)
    out.mkdir(parents=True, exist_ok=True)
    model_path = Path(args.model)
    net = nn.Network.load(model_path)
    scale_path = model_path.with_suffix(".scale")
    scaler = features.Scaler.from_text(scale_path.read_text())
    if net.arch.input_dim != len(features.FEATURES):
        from .errors import DimensionMismatch

        raise DimensionMismatch(f"model takes {net.arch.input_dim} inputs, datasets carry {len(features.FEATURES)}")
    truths = args.truth or [None] * len(args.dataset)
    if len(truths) != len(args.dataset):
        raise ManetIdsError("give one --truth per --dataset, or none")

    cells = defaultdict(lambda: {"v": [], "l": [], "sq": 0.0, "n": 0})
    all_scores, all_labels = [], []
    window_verdicts, window_labels = [], []
    for ds_path, tr in zip(args.dataset, truths):
        ds_path = Path(ds_path)
        truth = features.GroundTruth.load(tr or sidecar(ds_path))
        rows = features.read_dataset(ds_path)
        if not rows:
            log.warning("%s is empty; skipped", ds_path)
            continue
        wv = experiment._window_verdicts(net, scaler, rows, args.threshold)
        scores = np.array([v.score for v in wv])
        y = np.array([r.label for r in rows], dtype=float)
        all_scores.append(scores)
        all_labels.append(y)
        window_verdicts += [detect.Verdict(f"{ds_path.name}:{r.node}:{r.window}", v.score, v.attack) for r, v in zip(rows, wv)]
        window_labels += [r.label for r in rows]
        by_key, lab = detect.window_maps(rows, wv)
        conns = detect.connections(truth.flows, args.window, truth.duration)
        v, l = detect.score_connections(conns, by_key, lab)
        cell = cells[len(truth.flows)]
        cell["v"] += v
        cell["l"] += l
        cell["sq"] += float(np.sum((y - scores) ** 2))
        cell["n"] += len(rows)

    metrics = []
    for c in sorted(cells):
        cell = cells[c]
        rmse = math.sqrt(cell["sq"] / cell["n"])
        if not any(cell["l"]):
            log.warning("no attack connections among the %d-connection datasets; dr_recall is undefined", c)
        metrics.append(detect.metrics_row(c, cell["v"], cell["l"], rmse))
    detect.write_metrics(metrics, out / "metrics.csv")
    detect.write_verdicts(window_verdicts, window_labels, out / "verdicts.csv")

    if all_scores:
        s, y = np.concatenate(all_scores), np.concatenate(all_labels)
        row4 = (net.arch.name, net.arch.layers[0].transfer, experiment._f(nn.rmse(s, y), 6),
                experiment._f(nn.mae(s, y), 6), experiment._f(nn.r_squared(s, y), 6))
        experiment.write_table(out / "table4", ("Network", "Transfer", "Test RMSE", "Test MAE", "Test R2"), [row4])
    experiment.write_table(
        out / "table5",
        ("No. of connections", "DR (recall) %", "DR (all units) %", "TP", "FP", "TN", "FN", "Window RMSE"),
        [(str(m.connections), experiment._f(100 * m.dr_recall, 2), experiment._f(100 * m.dr_paper, 2),
          str(m.counts.tp), str(m.counts.fp), str(m.counts.tn), str(m.counts.fn), experiment._f(m.rmse, 6))
         for m in metrics],
    )
    print((out / "table5.txt").read_text(), end="")
    return 0


def cmd_experiment(args) -> int:
    spec = _spec(args)
    out = _need_out(args)
    result = experiment.run_experiment(spec, out)
    for name in ("table3", "table4", "table5", "attack_effect"):
        print(f"== {name}")
        print((out / f"{name}.txt").read_text())
    for s in result.seeds:
        print(f"seed {s.seed}: training phase {s.train_seconds:.1f} s")
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="override the seed (a single seed for experiments)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--strict", action="store_true", help="fail on the first malformed trace line")
    common.add_argument("--compat-ni-tag", action="store_true", help="write the level field as -NI instead of -Nl")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="manetids", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run one scenario and write its trace")
    s.add_argument("--connections", type=int, help="number of random flows (default from config)")
    s.add_argument("--no-attack", action="store_true", help="drop the attackers (paired baseline)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("extract", parents=[common], help="turn a trace into a feature dataset")
    s.add_argument("trace")
    s.add_argument("--truth", help="ground-truth file (default: sidecar next to the trace)")
    s.add_argument("--window", type=float, default=10.0)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", parents=[common], help="train every architecture x transfer x seed")
    s.add_argument("dataset")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="score datasets with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", action="append", required=True)
    s.add_argument("--truth", action="append")
    s.add_argument("--window", type=float, default=10.0)
    s.add_argument("--threshold", type=float, default=0.5)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("experiment", parents=[common], help="run the whole pipeline")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ManetIdsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"error: {IoFailure(where + str(exc.strerror or exc))}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
