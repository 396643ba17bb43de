"""Simulate, extract, train and score one short scenario through the library API.

Run with ``python3 demos/walkthrough.py``; it prints each stage's headline numbers.
"""

from __future__ import annotations

import dataclasses

from manetids import config, detect, experiment, features, netsim
from manetids import neuralnet as nn


def main() -> None:
    spec = dataclasses.replace(config.ExperimentSpec(), seeds=(7,))
    cfg = spec.scenario.build(seed=7, connections=5)

    attack = netsim.run(cfg)
    base = netsim.run(cfg.without_attackers())
    print(f"attack run: {len(attack.records)} trace records, {attack.rreq_receives()} RREQ receptions")
    print(f"baseline:   {len(base.records)} trace records, {base.rreq_receives()} RREQ receptions")
    print(f"energy conserved: {experiment.energy_conserved(attack)}")

    truth = features.GroundTruth.from_dict(netsim.ground_truth(cfg))
    rows = features.extract(attack.records, spec.window, truth)
    print(f"{len(rows)} windows, {sum(r.label for r in rows)} labelled attack")

    ds = features.prepare(rows, spec.split_ratio, 7)
    X, y = ds.train
    Xt, yt = ds.test
    for tf in ("logsig", "tansig"):
        arch = nn.Architecture.parse("4-15-10-1", tf, "logsig")
        net, rep = nn.train(nn.init(arch, 7), X, y, spec.train)
        print(f"{arch.name} {tf}: train RMSE {rep.final_rmse:.3e} after {rep.final_epoch} epochs, "
              f"test RMSE {nn.rmse(net.predict(Xt), yt):.3e}")

    verdicts = experiment._window_verdicts(net, ds.normalization, rows, spec.threshold)
    dr = detect.detection_rate(verdicts, [r.label for r in rows])
    print(f"window detection rate {100 * dr.dr_recall:.1f}% (all-unit rate {100 * dr.dr_paper:.1f}%)")


if __name__ == "__main__":
    main()
