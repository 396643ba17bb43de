import io
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, strategies as st

from manetids import features, netsim
from manetids.errors import EmptyInput
from manetids.features import AttackInterval, FeatureRow, GroundTruth, Scaler
from manetids.trace import IpInfo, TraceRecord


def rec(event, t, node, src=0, ne=-1.0):
    return TraceRecord(event, t, node, -1, node, 0.0, 0.0, 0.0, ne, ip=IpInfo(src, -1, "rreq", 48, 1))


@pytest.fixture(scope="module")
def attack_run():
    cfg = netsim.ScenarioConfig(
        flows=netsim.generate_flows(15, 5, 9, exclude=[14]),
        attackers=(netsim.AttackerSpec(14, netsim.DosFlood(15)),),
        seed=9,
    )
    res = netsim.run(cfg)
    return res, GroundTruth.from_dict(netsim.ground_truth(cfg))


def test_empty_trace_gives_no_rows():
    assert features.extract([], 10.0, GroundTruth(15, 200.0)) == []


def test_counts_in_one_window():
    recs = [rec("s", 1.0, 3)] * 100 + [rec("r", 2.0, 3)] * 93 + [rec("d", 3.0, 3)] * 7
    rows = features.extract(recs, 10.0, GroundTruth(5, 10.0))
    row = next(r for r in rows if r.node == 3)
    assert (row.ps, row.pr, row.pl) == (100, 93, 7)
    assert len(rows) == 5


def test_window_larger_than_duration():
    rows = features.extract([rec("s", 5.0, 0)], 500.0, GroundTruth(15, 200.0))
    assert len(rows) == 15 and {r.window for r in rows} == {0}


def test_energy_from_ne_column():
    recs = [rec("s", 1.0, 0, ne=99.998), rec("r", 12.0, 0, ne=99.997), rec("s", 13.0, 0, ne=99.995)]
    rows = features.extract(recs, 10.0, GroundTruth(1, 20.0, initial_energy=100.0))
    assert [r.ec for r in rows] == [pytest.approx(0.002), pytest.approx(0.003)]


def test_label_needs_attack_window_and_contact():
    truth = GroundTruth(3, 30.0, attackers=(AttackInterval(2, "dos", 10.0, 20.0),))
    recs = [
        rec("r", 5.0, 0, src=2),    # contact but outside the attack
        rec("r", 15.0, 0, src=2),   # contact during the attack
        rec("r", 15.0, 1, src=0),   # traffic, but not from the attacker
    ]
    labels = {(r.node, r.window): r.label for r in features.extract(recs, 10.0, truth)}
    assert labels[(0, 0)] == 0 and labels[(0, 1)] == 1
    assert labels[(1, 1)] == 0


def test_sums_match_simulator_counters(attack_run):
    res, truth = attack_run
    rows = features.extract(res.records, 10.0, truth)
    assert len(rows) == 300
    for node, c in enumerate(res.counters):
        mine = [r for r in rows if r.node == node]
        assert sum(r.ps for r in mine) == c.sent
        assert sum(r.pr for r in mine) == c.received
        assert sum(r.pl for r in mine) == c.dropped
        assert sum(r.ec for r in mine) == pytest.approx(c.energy_used, abs=1e-9)


def test_labels_match_brute_force_rescan(attack_run):
    res, truth = attack_run
    rows = features.extract(res.records, 10.0, truth)
    a = truth.attackers[0]
    contact = defaultdict(bool)
    for r in res.records:
        if r.event == "r" and r.ip.src == a.node:
            w = min(int(r.time // 10.0), 19)
            contact[(r.ni, w)] = True
    for row in rows:
        lo, hi = row.window * 10.0, row.window * 10.0 + 10.0
        want = int(contact[(row.node, row.window)] and a.start < hi and a.stop > lo)
        assert row.label == want
    assert 0 < sum(r.label for r in rows) < len(rows)


def test_minmax_definition_and_degenerate():
    s = Scaler.fit(np.array([[0, 5, 1, 1], [50, 5, 2, 2], [100, 5, 3, 3]], dtype=float))
    out = s.transform(np.array([[0, 5, 1, 1], [50, 5, 2, 2], [100, 5, 3, 3], [150, 9, 0, 3]], dtype=float))
    assert list(out[:3, 0]) == [0.0, 0.5, 1.0]
    assert (out[:, 1] == 0.5).all()
    assert out[3, 0] == 1.0 and out[3, 2] == 0.0


def test_normalize_uses_training_rows_only():
    train = [FeatureRow(0, 0, 0, 0, 0, 0.0, 0), FeatureRow(0, 1, 10, 10, 10, 1.0, 1)]
    every = train + [FeatureRow(1, 0, 20, 5, 0, 2.0, 1)]
    ds = features.normalize(train, every)
    assert ds.samples[2].x == (1.0, 0.5, 0.0, 1.0)
    with pytest.raises(EmptyInput):
        features.normalize([], every)


def test_split_paper_sizes():
    train, test = features.split(list(range(200)), 0.65, seed=1)
    assert (len(train), len(test)) == (130, 70)


def test_split_single_item_warns(caplog):
    train, test = features.split([7], 0.65, seed=0)
    assert (train, test) == ([7], [])
    assert "empty test" in caplog.text


def test_split_empty_and_bad_ratio():
    with pytest.raises(EmptyInput):
        features.split([], 0.65, 0)
    with pytest.raises(ValueError):
        features.split([1, 2], 1.0, 0)


@given(st.integers(1, 500), st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_split_partition_properties(n, seed, ratio):
    train, test = features.split(list(range(n)), ratio, seed)
    assert sorted(train + test) == list(range(n))
    assert not set(train) & set(test)
    assert len(train) == int(np.floor(ratio * n + 0.5))
    assert (train, test) == features.split(list(range(n)), ratio, seed)


def test_prepare_train_features_in_unit_box(attack_run):
    res, truth = attack_run
    ds = features.prepare(features.extract(res.records, 10.0, truth), 0.65, 3)
    X, _ = ds.train
    assert X.min() >= 0.0 and X.max() <= 1.0
    Xt, _ = ds.test
    assert Xt.min() >= 0.0 and Xt.max() <= 1.0


def test_dataset_csv_round_trip():
    rows = [FeatureRow(1, 2, 3, 4, 5, 0.123456, 1), FeatureRow(0, 0, 0, 0, 0, 0.0, 0)]
    buf = io.StringIO()
    features.write_dataset(rows, buf)
    assert buf.getvalue().splitlines()[0] == "node,window,ps,pr,pl,ec,label"
    buf.seek(0)
    assert features.read_dataset(buf) == rows


def test_ground_truth_json(tmp_path):
    d = {"node_count": 15, "duration": 200.0, "initial_energy": 100.0, "seed": 3,
         "attackers": [{"node": 14, "kind": "dos", "start": 50.0, "stop": 150.0, "target_addr": 15}],
         "flows": [{"src": 0, "dst": 1, "start": 0.0, "stop": 50.0, "rate": 4.0}]}
    features.save_ground_truth(d, tmp_path / "t.json")
    gt = GroundTruth.load(tmp_path / "t.json")
    assert gt.attackers[0] == AttackInterval(14, "dos", 50.0, 150.0)
    assert GroundTruth.from_dict(features.truth_dict(gt)) == gt
