"""NS-2 "new wireless" trace lines: formatting and streaming parsing.

A line looks like::

    s -t 2.556838879 -Hs 1 -Hd 2 -Ni 1 -Nx 342.47 -Ny 4.35 -Nz 0.00 -Ne -1.000000 -NI RTR -Nw --- -Ma 0 -Md 0 -Ms 0 -Mt 0

optionally followed by the IP-level fields ``-Is -Id -It -Il -Ii`` that
NS-2 prints after the MAC block. The simulator always writes them; lines
without them (such as the excerpt above) parse to a record whose ``ip`` is
``None``.
"""

from __future__ import annotations

import gzip
import io
import logging
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Optional, TextIO, Union

from .errors import MalformedLine

log = logging.getLogger(__name__)

EVENTS = ("s", "r", "d", "f")
LEVEL_TAGS = ("Nl", "NI")
NO_REASON = "---"
ENERGY_UNTRACKED = -1.0


class IpInfo(NamedTuple):
    src: int
    dst: int
    ptype: str
    size: int
    uid: int


class TraceRecord(NamedTuple):
    event: str
    time: float
    hs: int
    hd: int
    ni: int
    nx: float
    ny: float
    nz: float = 0.0
    ne: float = ENERGY_UNTRACKED
    level_tag: str = "Nl"
    level: str = "RTR"
    nw: str = NO_REASON
    ma: str = "0"
    md: str = "0"
    ms: str = "0"
    mt: str = "0"
    ip: Optional[IpInfo] = None


def format_record(r: TraceRecord) -> str:
    line = (
        f"{r.event} -t {r.time:.9f} -Hs {r.hs} -Hd {r.hd} -Ni {r.ni} "
        f"-Nx {r.nx:.2f} -Ny {r.ny:.2f} -Nz {r.nz:.2f} -Ne {r.ne:.6f} "
        f"-{r.level_tag} {r.level} -Nw {r.nw} -Ma {r.ma} -Md {r.md} -Ms {r.ms} -Mt {r.mt}"
    )
    if r.ip is not None:
        ip = r.ip
        line += f" -Is {ip.src} -Id {ip.dst} -It {ip.ptype} -Il {ip.size} -Ii {ip.uid}"
    return line


class _Tokens:
    def __init__(self, line: str) -> None:
        self.toks = line.split()
        self.pos = 0

    def done(self) -> bool:
        return self.pos >= len(self.toks)

    def tag(self, *names: str) -> str:
        if self.done() or self.toks[self.pos] not in names:
            raise MalformedLine(self.pos, " or ".join(names))
        self.pos += 1
        return self.toks[self.pos - 1]

    def value(self, name: str, conv=str):
        if self.done():
            raise MalformedLine(self.pos, f"value of {name}")
        tok = self.toks[self.pos]
        try:
            v = conv(tok)
        except ValueError:
            raise MalformedLine(self.pos, f"{conv.__name__} value of {name}") from None
        self.pos += 1
        return v

    def field(self, name: str, conv=str):
        self.tag(name)
        return self.value(name, conv)


def _finite(tok: str) -> float:
    v = float(tok)
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError(tok)
    return v


_finite.__name__ = "float"


def parse_record(line: str) -> TraceRecord:
    tk = _Tokens(line)
    if tk.done() or tk.toks[0] not in EVENTS:
        raise MalformedLine(0, "event letter s/r/d/f")
    event = tk.toks[0]
    tk.pos = 1
    time = tk.field("-t", _finite)
    if time < 0:
        raise MalformedLine(2, "non-negative time")
    hs = tk.field("-Hs", int)
    hd = tk.field("-Hd", int)
    ni = tk.field("-Ni", int)
    nx = tk.field("-Nx", _finite)
    ny = tk.field("-Ny", _finite)
    nz = tk.field("-Nz", _finite)
    ne = tk.field("-Ne", _finite)
    level_tag = tk.tag("-Nl", "-NI")[1:]
    level = tk.value(level_tag)
    nw = tk.field("-Nw")
    ma = tk.field("-Ma")
    md = tk.field("-Md")
    ms = tk.field("-Ms")
    mt = tk.field("-Mt")
    ip = None
    if not tk.done():
        ip = IpInfo(
            src=tk.field("-Is", int),
            dst=tk.field("-Id", int),
            ptype=tk.field("-It"),
            size=tk.field("-Il", int),
            uid=tk.field("-Ii", int),
        )
    if not tk.done():
        raise MalformedLine(tk.pos, "end of line")
    return TraceRecord(event, time, hs, hd, ni, nx, ny, nz, ne, level_tag, level, nw, ma, md, ms, mt, ip)


def parse_file(
    lines: Iterable[str],
    strict: bool = False,
    errors: Optional[list[MalformedLine]] = None,
) -> Iterator[TraceRecord]:
    """Lazily parse trace lines, one record per input line.

    In lenient mode a bad line is logged, appended to ``errors`` when a
    list is given, and skipped. In strict mode the first bad line raises.
    Line numbers start at 1.
    """
    for lineno, line in enumerate(lines, start=1):
        try:
            yield parse_record(line)
        except MalformedLine as exc:
            located = exc.at_line(lineno)
            if strict:
                raise located from None
            log.warning("skipping malformed trace line: %s", located)
            if errors is not None:
                errors.append(located)


def write_records(records: Iterable[TraceRecord], out: TextIO) -> int:
    n = 0
    for r in records:
        out.write(format_record(r))
        out.write("\n")
        n += 1
    return n


def open_text(path: Union[str, Path], mode: str = "r") -> TextIO:
    """Open a trace for text I/O, gzip-compressed when the name ends in ``.gz``.

    Compressed output carries no timestamp so identical traces give
    identical files.
    """
    path = Path(path)
    if path.suffix != ".gz":
        return open(path, mode, newline="\n" if "w" in mode else None)
    if "w" in mode:
        raw = gzip.GzipFile(filename="", mode="wb", fileobj=open(path, "wb"), compresslevel=1, mtime=0)
        return _OwningWrapper(raw)
    return io.TextIOWrapper(gzip.open(path, "rb"))


class _OwningWrapper(io.TextIOWrapper):
    # GzipFile does not close a fileobj it was handed, so close it here
    def __init__(self, raw: gzip.GzipFile) -> None:
        super().__init__(raw, newline="\n")
        self._inner = raw.fileobj

    def close(self) -> None:
        inner = self._inner
        super().close()
        if inner is not None:
            inner.close()


def write_file(records: Iterable[TraceRecord], path: Union[str, Path]) -> int:
    with open_text(path, "w") as fh:
        return write_records(records, fh)


def read_file(
    path: Union[str, Path],
    strict: bool = False,
    errors: Optional[list[MalformedLine]] = None,
) -> list[TraceRecord]:
    with open_text(path) as fh:
        return list(parse_file(fh, strict=strict, errors=errors))
