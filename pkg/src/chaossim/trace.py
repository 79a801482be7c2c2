"""Raw event trace: append-only, tab-separated, one event per line.

File layout::

    # chaossim-trace 1
    # <key>=<value>        (run metadata, e.g. protocol, n_validators, runtime)
    time<TAB>node<TAB>kind<TAB>round<TAB>block_number<TAB>block_id<TAB>phase<TAB>detail
    ...events...

Times are written with ``repr`` so they parse back to the identical float.
Empty fields are empty strings.  ``detail`` holds ``key=value`` pairs
separated by ``;``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

MAGIC = "# chaossim-trace 1"
COLUMNS = ("time", "node", "kind", "round", "block_number", "block_id", "phase", "detail")
HEADER = "\t".join(COLUMNS)


class TraceRecorder:
    """In-memory trace; ``write`` dumps it to disk."""

    def __init__(self):
        self.meta: dict[str, str] = {}
        self.lines: list[str] = []

    def record(self, time, node, kind, round="", number="", block_id="", phase="", detail=""):
        self.lines.append(
            f"{time!r}\t{node}\t{kind}\t{round}\t{number}\t{block_id}\t{phase}\t{detail}"
        )

    def record_batch(self, lines):
        self.lines.extend(lines)

    def render(self) -> str:
        head = [MAGIC]
        head.extend(f"# {k}={v}" for k, v in self.meta.items())
        head.append(HEADER)
        return "\n".join(head + self.lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.render())
        return path


@dataclass(frozen=True)
class TraceEvent:
    time: float
    node: str
    kind: str
    round: str
    block_number: str
    block_id: str
    phase: str
    detail: str

    def details(self) -> dict[str, str]:
        if not self.detail:
            return {}
        out = {}
        for part in self.detail.split(";"):
            k, _, v = part.partition("=")
            out[k] = v
        return out


class TraceFormatError(ValueError):
    pass


def read_trace(path_or_text) -> tuple[dict[str, str], list[TraceEvent]]:
    """Parse a trace file (path) or trace text into ``(meta, events)``."""
    if isinstance(path_or_text, Path) or (
        isinstance(path_or_text, str) and "\n" not in path_or_text
    ):
        text = Path(path_or_text).read_text(encoding="utf-8")
    else:
        text = path_or_text
    return parse_trace(text)


def parse_trace(text: str) -> tuple[dict[str, str], list[TraceEvent]]:
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise TraceFormatError("missing trace magic line")
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i].startswith("# "):
        k, _, v = lines[i][2:].partition("=")
        meta[k] = v
        i += 1
    if i >= len(lines) or lines[i] != HEADER:
        raise TraceFormatError("missing column header")
    events = list(_events(lines[i + 1 :], i + 2))
    return meta, events


def _events(lines, first_lineno) -> Iterator[TraceEvent]:
    for n, line in enumerate(lines, first_lineno):
        parts = line.split("\t")
        if len(parts) != len(COLUMNS):
            raise TraceFormatError(f"line {n}: expected {len(COLUMNS)} fields, got {len(parts)}")
        yield TraceEvent(float(parts[0]), *parts[1:])
