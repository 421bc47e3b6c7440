"""Ingestion of edit-event streams into quarterly per-user activity records.

Input is line-oriented TSV (``user_id <TAB> iso8601_timestamp <TAB> namespace_name``)
plus a namespace map (``name=id`` lines). Events aggregate into one record per
(user, quarter) holding dense per-namespace edit counts.
"""

from __future__ import annotations

import calendar
import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

logger = logging.getLogger(__name__)

#: First day of the platform's first quarter; quarter boundaries are this date
#: shifted by whole 3-calendar-month steps.
DEFAULT_EPOCH = date(2001, 1, 15)

#: Default 28-namespace vocabulary, ordered by id.
DEFAULT_NAMESPACES = (
    "main", "article_talk", "user", "user_talk",
    "wikipedia", "wikipedia_talk", "file", "file_talk",
    "mediawiki", "mediawiki_talk", "template", "template_talk",
    "help", "help_talk", "category", "category_talk",
    "portal", "portal_talk", "book", "book_talk",
    "draft", "draft_talk", "education_program", "education_program_talk",
    "timedtext", "timedtext_talk", "module", "module_talk",
)


@dataclass(frozen=True)
class EditEvent:
    """A single edit: who, when (seconds since the epoch), which namespace."""

    user_id: str
    timestamp: int
    namespace_id: int

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")
        if self.namespace_id < 0:
            raise ValueError(f"namespace_id must be >= 0, got {self.namespace_id}")


@dataclass(frozen=True)
class ActivityRecord:
    """One user's edit counts across all namespaces for one quarter.

    Records with all-zero counts are never materialized.
    """

    user_id: str
    quarter: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.quarter < 0:
            raise ValueError(f"quarter must be >= 0, got {self.quarter}")
        if not any(c > 0 for c in self.counts):
            raise ValueError(f"record for {self.user_id!r} q{self.quarter} has no activity")
        if any(c < 0 for c in self.counts):
            raise ValueError(f"record for {self.user_id!r} q{self.quarter} has negative counts")

    @property
    def total_edits(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class ParseError:
    """A recoverable per-line ingestion failure."""

    line_number: int
    reason: str
    line: str


@dataclass(frozen=True)
class LifespanHistogram:
    """Bucket per active-quarter count -> number of users with that lifespan."""

    buckets: tuple[tuple[int, int], ...]

    @property
    def total_users(self) -> int:
        return sum(n for _, n in self.buckets)

    def as_dict(self) -> dict[int, int]:
        return dict(self.buckets)


def _log_parse_error(err: ParseError) -> None:
    logger.warning("skipping line %d: %s", err.line_number, err.reason)


def _parse_timestamp(text: str, epoch_dt: datetime) -> int:
    iso = text.strip()
    if iso.endswith(("Z", "z")):
        iso = iso[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError:
        raise ValueError(f"unparseable timestamp {text!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor((dt - epoch_dt).total_seconds())


def parse_events(
    lines: Iterable[str],
    namespace_map: dict[str, int],
    epoch: date = DEFAULT_EPOCH,
    on_error: Callable[[ParseError], None] | None = None,
) -> Iterator[EditEvent]:
    """Parse TSV event lines, yielding events in stream order.

    Malformed lines, pre-epoch timestamps and unknown namespace names are
    reported through ``on_error`` (default: logged warning) and skipped.
    """
    if on_error is None:
        on_error = _log_parse_error
    epoch_dt = datetime.combine(epoch, time.min, tzinfo=timezone.utc)
    for line_number, raw in enumerate(lines, start=1):
        stripped = raw.rstrip("\r\n")
        if not stripped:
            continue
        parts = stripped.split("\t")
        if len(parts) != 3:
            on_error(ParseError(line_number,
                                f"expected 3 tab-separated fields, got {len(parts)}",
                                stripped))
            continue
        user_id, ts_text, ns_name = parts
        if not user_id:
            on_error(ParseError(line_number, "empty user id", stripped))
            continue
        try:
            seconds = _parse_timestamp(ts_text, epoch_dt)
        except ValueError as exc:
            on_error(ParseError(line_number, str(exc), stripped))
            continue
        if seconds < 0:
            on_error(ParseError(line_number,
                                f"timestamp {ts_text!r} precedes epoch {epoch.isoformat()}",
                                stripped))
            continue
        ns_id = namespace_map.get(ns_name)
        if ns_id is None:
            on_error(ParseError(line_number, f"unknown namespace {ns_name!r}", stripped))
            continue
        yield EditEvent(user_id, seconds, ns_id)


def quarter_start(epoch: date, quarter: int) -> date:
    """First day of a quarter: the epoch date shifted by 3*quarter calendar months."""
    total_months = epoch.month - 1 + 3 * quarter
    year = epoch.year + total_months // 12
    month = total_months % 12 + 1
    day = min(epoch.day, calendar.monthrange(year, month)[1])
    return date(year, month, day)


def quarter_index(timestamp: int, epoch: date = DEFAULT_EPOCH) -> int:
    """Number of whole 3-calendar-month periods elapsed since the epoch."""
    epoch_dt = datetime.combine(epoch, time.min, tzinfo=timezone.utc)
    day = (epoch_dt + timedelta(seconds=timestamp)).date()
    months = (day.year - epoch.year) * 12 + (day.month - epoch.month)
    # Anchor day clamped to the current month's length so that month-end
    # epochs (e.g. the 31st) stay consistent with quarter_start's clamping.
    anchor = min(epoch.day, calendar.monthrange(day.year, day.month)[1])
    if day.day < anchor:
        months -= 1
    return months // 3


def quarterize(
    events: Iterable[EditEvent],
    epoch: date = DEFAULT_EPOCH,
    n_namespaces: int = len(DEFAULT_NAMESPACES),
) -> list[ActivityRecord]:
    """Aggregate events into one record per (user, quarter) with activity.

    The total of all counts equals the number of input events. Output is
    sorted by (user_id, quarter).
    """
    tallies: dict[tuple[str, int], Counter] = defaultdict(Counter)
    n_events = 0
    for event in events:
        if event.namespace_id >= n_namespaces:
            raise ValueError(
                f"event namespace id {event.namespace_id} out of range "
                f"for vocabulary of size {n_namespaces}")
        q = quarter_index(event.timestamp, epoch)
        tallies[(event.user_id, q)][event.namespace_id] += 1
        n_events += 1
    records = []
    for (user_id, q) in sorted(tallies):
        tally = tallies[(user_id, q)]
        counts = tuple(tally.get(ns, 0) for ns in range(n_namespaces))
        records.append(ActivityRecord(user_id, q, counts))
    assert sum(r.total_edits for r in records) == n_events
    return records


def sample_population(
    records: Iterable[ActivityRecord],
    single_quarter_fraction: float = 0.2,
    seed: int = 0,
) -> list[ActivityRecord]:
    """Keep all multi-quarter users plus a seeded random fraction of single-quarter users.

    Exactly ``round(fraction * n_single)`` single-quarter users are retained,
    each with all their records. Deterministic for a fixed seed.
    """
    if not 0.0 <= single_quarter_fraction <= 1.0:
        raise ValueError(
            f"single_quarter_fraction must be in [0, 1], got {single_quarter_fraction}")
    by_user: dict[str, list[ActivityRecord]] = defaultdict(list)
    for record in records:
        by_user[record.user_id].append(record)
    singles = sorted(u for u, recs in by_user.items()
                     if len({r.quarter for r in recs}) == 1)
    n_keep = int(round(single_quarter_fraction * len(singles)))
    rng = np.random.default_rng(seed)
    kept_singles = set()
    if n_keep:
        idx = rng.choice(len(singles), size=n_keep, replace=False)
        kept_singles = {singles[i] for i in idx}
    dropped = set(singles) - kept_singles
    out = [r for r in records if r.user_id not in dropped]
    out.sort(key=lambda r: (r.user_id, r.quarter))
    return out


def lifespan_stats(records: Iterable[ActivityRecord]) -> LifespanHistogram:
    """Histogram of users by number of active quarters."""
    quarters_by_user: dict[str, set[int]] = defaultdict(set)
    for record in records:
        quarters_by_user[record.user_id].add(record.quarter)
    counts = Counter(len(qs) for qs in quarters_by_user.values())
    return LifespanHistogram(tuple(sorted(counts.items())))


def default_namespace_map() -> dict[str, int]:
    return {name: i for i, name in enumerate(DEFAULT_NAMESPACES)}


def load_namespace_map(path: str | Path) -> dict[str, int]:
    """Read a ``name=id`` map file; ids must cover exactly 0..V-1."""
    mapping: dict[str, int] = {}
    for line_number, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_number}: expected name=id, got {line!r}")
        name, _, id_text = line.partition("=")
        name = name.strip()
        try:
            ns_id = int(id_text.strip())
        except ValueError:
            raise ValueError(f"{path}:{line_number}: non-integer id {id_text!r}")
        if name in mapping:
            raise ValueError(f"{path}:{line_number}: duplicate namespace {name!r}")
        mapping[name] = ns_id
    if not mapping:
        raise ValueError(f"{path}: empty namespace map")
    ids = sorted(mapping.values())
    if ids != list(range(len(mapping))):
        raise ValueError(f"{path}: namespace ids must cover exactly 0..{len(mapping) - 1}")
    return mapping


def write_namespace_map(mapping: dict[str, int], path: str | Path) -> None:
    lines = [f"{name}={ns_id}" for name, ns_id in sorted(mapping.items(), key=lambda kv: kv[1])]
    Path(path).write_text("\n".join(lines) + "\n")


def write_records_csv(records: Iterable[ActivityRecord], path: str | Path,
                      n_namespaces: int) -> None:
    """Write records as CSV with header ``user,quarter,ns_0,...,ns_{V-1}``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user", "quarter"] + [f"ns_{i}" for i in range(n_namespaces)])
        for record in records:
            if len(record.counts) != n_namespaces:
                raise ValueError(
                    f"record for {record.user_id!r} q{record.quarter} has "
                    f"{len(record.counts)} counts, expected {n_namespaces}")
            writer.writerow([record.user_id, record.quarter, *record.counts])


def read_records_csv(path: str | Path) -> tuple[list[ActivityRecord], int]:
    """Read a records CSV; returns (records, vocabulary size)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["user", "quarter"]:
            raise ValueError(f"{path}: missing records header")
        n_namespaces = len(header) - 2
        records = []
        for row in reader:
            if not row:
                continue
            user_id, quarter = row[0], int(row[1])
            counts = tuple(int(c) for c in row[2:])
            records.append(ActivityRecord(user_id, quarter, counts))
    return records, n_namespaces


def write_lifespan_csv(histogram: LifespanHistogram, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["active_quarters", "user_count"])
        for active_quarters, user_count in histogram.buckets:
            writer.writerow([active_quarters, user_count])
