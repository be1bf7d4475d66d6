"""Parsers that turn observation files into snapshots.

Two tabular formats are supported: plain canonical rows
(``time,network,label``) and the catchment-list table
(``time,prefix,site``) where a prefix missing from one round is unknown
for that round.  Traceroute records and NSID mapping rules have their own
line formats, documented on the parsers below.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .core import (
    OTHER,
    UNKNOWN,
    CatchmentLabel,
    Snapshot,
    parse_label,
)

__all__ = [
    "SnapshotFormat",
    "ParseError",
    "DuplicateEntryError",
    "EmptyInputError",
    "load_snapshots",
    "NsidRule",
    "load_nsid_rules",
    "map_nsid",
    "TracerouteRecord",
    "parse_traceroutes",
    "extract_hop_catchment",
    "hop_snapshot",
]

MAX_HOPS = 10
UNRESPONSIVE = "*"


class SnapshotFormat(Enum):
    CANONICAL_ROWS = "canonical_rows"
    VERFPLOETER_TABLE = "verfploeter_table"


class ParseError(ValueError):
    """Malformed input; carries the offending file and line number."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class DuplicateEntryError(ParseError):
    pass


class EmptyInputError(ParseError):
    pass


def _read_rows(path, expected_header: Sequence[str]):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(path, 1, "file is empty") from None
        if [h.strip() for h in header] != list(expected_header):
            raise ParseError(
                path, 1, f"expected header {','.join(expected_header)!r}, got {','.join(header)!r}"
            )
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if row]
    if not rows:
        raise EmptyInputError(path, 2, "no data rows")
    return rows


def _parse_time(path, lineno, token: str) -> int:
    try:
        return int(token.strip())
    except ValueError:
        raise ParseError(path, lineno, f"bad epoch time {token!r}") from None


def load_snapshots(path, fmt: SnapshotFormat = SnapshotFormat.CANONICAL_ROWS) -> list[Snapshot]:
    """Parse one observation file into time-ordered snapshots.

    Duplicate (time, network) rows and malformed rows are rejected with
    the line number; a file without data rows is an error.
    """
    if fmt is SnapshotFormat.CANONICAL_ROWS:
        rows = _read_rows(path, ("time", "network", "label"))
    elif fmt is SnapshotFormat.VERFPLOETER_TABLE:
        rows = _read_rows(path, ("time", "prefix", "site"))
    else:
        raise ValueError(f"unsupported format {fmt!r}")

    per_time: dict[int, dict[str, CatchmentLabel]] = {}
    for lineno, row in rows:
        if len(row) != 3:
            raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
        time = _parse_time(path, lineno, row[0])
        network = row[1].strip()
        if not network:
            raise ParseError(path, lineno, "empty network key")
        try:
            label = parse_label(row[2])
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        bucket = per_time.setdefault(time, {})
        if network in bucket:
            raise DuplicateEntryError(path, lineno, f"duplicate entry for ({time}, {network!r})")
        bucket[network] = label

    if fmt is SnapshotFormat.VERFPLOETER_TABLE:
        universe = set()
        for bucket in per_time.values():
            universe.update(bucket)
        for bucket in per_time.values():
            for key in universe - bucket.keys():
                bucket[key] = UNKNOWN

    return [Snapshot(time, per_time[time]) for time in sorted(per_time)]


# -- NSID rules ---------------------------------------------------------------


@dataclass(frozen=True)
class NsidRule:
    """Maps server identifier strings to a site; lower priority wins."""

    priority: int
    pattern: str
    site: CatchmentLabel
    compiled: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.site.is_site:
            raise ValueError("rule target must be a site label")
        try:
            compiled = re.compile(self.pattern)
        except re.error as exc:
            raise ValueError(f"bad pattern {self.pattern!r}: {exc}") from None
        object.__setattr__(self, "compiled", compiled)


def load_nsid_rules(path) -> list[NsidRule]:
    """Read ``priority,pattern,site`` rows; a literal header line is skipped."""
    rules = []
    with open(path, newline="", encoding="utf-8") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row:
                continue
            if lineno == 1 and [c.strip() for c in row] == ["priority", "pattern", "site"]:
                continue
            if len(row) != 3:
                raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
            try:
                priority = int(row[0].strip())
            except ValueError:
                raise ParseError(path, lineno, f"bad priority {row[0]!r}") from None
            label = parse_label(row[2])
            if not label.is_site:
                raise ParseError(path, lineno, f"rule target {row[2]!r} is not a site")
            try:
                rules.append(NsidRule(priority, row[1], label))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    if not rules:
        raise EmptyInputError(path, 1, "no rules")
    return rules


def map_nsid(identifier: str, rules: Sequence[NsidRule]) -> CatchmentLabel:
    """Resolve a server identifier to a site via the first matching rule.

    An answered query whose identifier matches no rule is ``other``, never
    unknown: the server did respond, we just cannot place it.
    """
    if not rules:
        raise ValueError("rules must be nonempty")
    ordered = sorted(enumerate(rules), key=lambda item: (item[1].priority, item[0]))
    for _, rule in ordered:
        if rule.compiled.search(identifier):
            return rule.site
    return OTHER


# -- traceroutes --------------------------------------------------------------


@dataclass(frozen=True)
class TracerouteRecord:
    """First hops toward one target; each hop is (index, responder, label)."""

    target: str
    hops: tuple[tuple[int, str, CatchmentLabel], ...]

    def __post_init__(self) -> None:
        prev = 0
        for index, responder, label in self.hops:
            if not 1 <= index <= MAX_HOPS:
                raise ValueError(f"hop index {index} outside 1..{MAX_HOPS}")
            if index <= prev:
                raise ValueError("hop indexes must be strictly increasing")
            prev = index
            if not isinstance(label, CatchmentLabel):
                raise TypeError("hop label must be a CatchmentLabel")
            if not responder:
                raise ValueError("empty responder; use '*' for unresponsive hops")


def parse_traceroutes(path) -> list[TracerouteRecord]:
    """Parse ``target|hop,responder,label|...`` records, one per line."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("|")
            target = parts[0].strip()
            if not target:
                raise ParseError(path, lineno, "empty target")
            hops = []
            for chunk in parts[1:]:
                fields = chunk.split(",")
                if len(fields) != 3:
                    raise ParseError(path, lineno, f"bad hop {chunk!r}")
                try:
                    index = int(fields[0].strip())
                except ValueError:
                    raise ParseError(path, lineno, f"bad hop index {fields[0]!r}") from None
                responder = fields[1].strip()
                try:
                    label = parse_label(fields[2])
                except ValueError as exc:
                    raise ParseError(path, lineno, str(exc)) from None
                hops.append((index, responder, label))
            try:
                records.append(TracerouteRecord(target, tuple(hops)))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    if not records:
        raise EmptyInputError(path, 1, "no traceroute records")
    return records


def _viable(hop: tuple[int, str, CatchmentLabel]) -> bool:
    _, responder, label = hop
    return responder != UNRESPONSIVE and not label.is_unknown


def extract_hop_catchment(record: TracerouteRecord, focus_hop: int) -> CatchmentLabel:
    """Catchment at the focus hop, falling back to the nearest viable hop.

    Distance ties break toward the lower hop index; a record with no
    viable hop is unknown.
    """
    if not 1 <= focus_hop <= MAX_HOPS:
        raise ValueError(f"focus hop {focus_hop} outside 1..{MAX_HOPS}")
    best: tuple[int, int, CatchmentLabel] | None = None
    for hop in record.hops:
        if not _viable(hop):
            continue
        index, _, label = hop
        if index == focus_hop:
            return label
        rank = (abs(index - focus_hop), index)
        if best is None or rank < (best[0], best[1]):
            best = (rank[0], rank[1], label)
    return best[2] if best else UNKNOWN


def hop_snapshot(records: Iterable[TracerouteRecord], focus_hop: int, time: int = 0) -> Snapshot:
    """Snapshot of all targets as seen at one focus hop."""
    entries = {}
    for record in records:
        if record.target in entries:
            raise ValueError(f"duplicate traceroute target {record.target!r}")
        entries[record.target] = extract_hop_catchment(record, focus_hop)
    return Snapshot(time, entries)
