import io

import pytest
from hypothesis import given, settings, strategies as st

from manetids import netsim, trace
from manetids.errors import MalformedLine
from manetids.trace import IpInfo, TraceRecord, format_record, parse_file, parse_record

FIG5 = "s -t 2.556838879 -Hs 1 -Hd 2 -Ni 1 -Nx 342.47 -Ny 4.35 -Nz 0.00 -Ne -1.000000 -NI RTR -Nw --- -Ma 0 -Md 0 -Ms 0 -Mt 0"


def test_fig5_byte_round_trip():
    rec = parse_record(FIG5)
    assert rec.time == 2.556838879
    assert (rec.hs, rec.hd, rec.ni) == (1, 2, 1)
    assert (rec.nx, rec.ny, rec.ne) == (342.47, 4.35, -1.0)
    assert rec.level_tag == "NI" and rec.ip is None
    assert format_record(rec) == FIG5


def test_nl_variant_parses_to_same_record():
    rec = parse_record(FIG5.replace("-NI", "-Nl"))
    assert rec.level_tag == "Nl"
    assert rec._replace(level_tag="NI") == parse_record(FIG5)


def test_time_zero_formatting():
    line = format_record(TraceRecord("r", 0.0, 0, -1, 0, 0.0, 0.0))
    assert line.startswith("r -t 0.000000000 ")


def test_extra_whitespace_tolerated():
    assert parse_record("  " + FIG5.replace(" ", "   ") + "\n") == parse_record(FIG5)


@pytest.mark.parametrize(
    "line, pos",
    [
        ("", 0),
        ("x -t 1.0", 0),
        (FIG5.replace("-Hs", "-Hx"), 3),
        (FIG5.replace("342.47", "abc"), 10),
        (FIG5.replace("2.556838879", "nan"), 2),
        (FIG5.replace("2.556838879", "-1.0"), 2),
        (FIG5 + " junk", 29),
    ],
)
def test_malformed_lines(line, pos):
    with pytest.raises(MalformedLine) as exc:
        parse_record(line)
    assert exc.value.position == pos


def test_parse_file_lenient_and_strict():
    lines = [FIG5, "garbage", FIG5]
    errors = []
    recs = list(parse_file(lines, errors=errors))
    assert len(recs) == 2
    assert len(errors) == 1 and errors[0].lineno == 2
    with pytest.raises(MalformedLine, match="line 2"):
        list(parse_file(lines, strict=True))


def test_parse_file_is_lazy():
    pulled = []

    def source():
        for i in range(5):
            pulled.append(i)
            yield FIG5

    it = parse_file(source())
    next(it)
    assert pulled == [0]
    assert sum(1 for _ in it) == 4


def _q(places):
    return st.integers(-10**7, 10**7).map(lambda i: i / 10**places)


records = st.builds(
    TraceRecord,
    event=st.sampled_from(trace.EVENTS),
    time=st.integers(0, 10**12).map(lambda i: i / 10**9),
    hs=st.integers(-2, 300),
    hd=st.integers(-2, 300),
    ni=st.integers(0, 300),
    nx=_q(2),
    ny=_q(2),
    nz=st.just(0.0),
    ne=st.one_of(st.just(-1.0), st.integers(0, 10**9).map(lambda i: i / 10**6)),
    level_tag=st.sampled_from(trace.LEVEL_TAGS),
    level=st.sampled_from(["RTR", "AGT", "MAC"]),
    nw=st.sampled_from(["---", "link-break", "energy", "duplicate"]),
    ma=st.just("0"), md=st.just("0"), ms=st.just("0"), mt=st.just("0"),
    ip=st.one_of(st.none(), st.builds(IpInfo, st.integers(0, 300), st.integers(-1, 300),
                                      st.sampled_from(["cbr", "rreq", "rrep", "rerr"]),
                                      st.integers(1, 2048), st.integers(0, 10**7))),
)


@given(records)
@settings(max_examples=1000, deadline=None)
def test_round_trip_random_records(rec):
    line = format_record(rec)
    assert parse_record(line) == rec
    assert format_record(parse_record(line)) == line


def test_simulation_trace_reparses_exactly(tmp_path):
    cfg = netsim.ScenarioConfig(
        duration=40.0, flows=netsim.generate_flows(15, 3, 2, exclude=[14], duration=40.0, flow_duration=20.0),
        attackers=(netsim.AttackerSpec(14, netsim.DosFlood(15, 10.0, 10.0, 30.0)),), seed=2, level_tag="NI",
    )
    res = netsim.run(cfg)
    path = tmp_path / "run.tr"
    trace.write_file(res.records, path)
    assert trace.read_file(path, strict=True) == res.records
    gz = tmp_path / "run.tr.gz"
    trace.write_file(res.records, gz)
    assert trace.read_file(gz, strict=True) == res.records
    assert all(" -NI " in line for line in path.read_text().splitlines()[:50])


def test_write_records_newline_terminated():
    buf = io.StringIO()
    assert trace.write_records([parse_record(FIG5)] * 2, buf) == 2
    assert buf.getvalue() == FIG5 + "\n" + FIG5 + "\n"
