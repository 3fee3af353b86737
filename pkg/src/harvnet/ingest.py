"""Event-log parsing, monthly windowing and per-harvester aggregates."""

from __future__ import annotations

import calendar
import csv
import io
import ipaddress
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import EmptyWindowError, EventFormatError, ReportError

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
CSV_FIELDS = ("timestamp", "harvester_ip", "server_ip", "subject", "addresses_acquired_delta")
MAX_MALFORMED_FRACTION = 0.10


@dataclass(frozen=True)
class EmailEvent:
    timestamp: datetime
    harvester_ip: str
    server_ip: str
    subject: str
    addresses_acquired_delta: int = 0

    @property
    def month(self) -> str:
        return f"{self.timestamp.year:04d}-{self.timestamp.month:02d}"


class EventList(list):
    """A list of events that also remembers the malformed input lines.

    ``malformed`` holds ``(line_number, reason)`` pairs, 1-based.
    """

    def __init__(self, events=(), malformed=()):
        super().__init__(events)
        self.malformed = list(malformed)


@dataclass
class EventWindow:
    month: str
    events: list[EmailEvent]
    harvesters: dict[str, int]
    servers: dict[str, int]
    addresses_acquired: list[int] = field(default_factory=list)

    @property
    def M(self) -> int:
        return len(self.harvesters)

    @property
    def N(self) -> int:
        return len(self.servers)

    @property
    def harvester_ips(self) -> list[str]:
        return list(self.harvesters)

    @property
    def server_ips(self) -> list[str]:
        return list(self.servers)

    def month_bounds(self) -> tuple[datetime, datetime]:
        return month_bounds(self.month)


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text.strip(), TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)


def _ipv4(text: str) -> str:
    # ip_address accepts IPv6 too; IPv4Address rejects it
    return str(ipaddress.IPv4Address(text.strip()))


def parse_month(month) -> tuple[int, int]:
    """Accept ``"YYYY-MM"`` or a ``(year, month)`` pair."""
    if isinstance(month, tuple):
        year, mon = month
    else:
        parts = str(month).split("-")
        if len(parts) != 2 or len(parts[0]) != 4 or len(parts[1]) != 2:
            raise ValueError(f"invalid month {month!r}; expected YYYY-MM")
        year, mon = int(parts[0]), int(parts[1])
    if not 1 <= mon <= 12:
        raise ValueError(f"invalid month {month!r}; expected YYYY-MM")
    return year, mon


def month_key(month) -> str:
    year, mon = parse_month(month)
    return f"{year:04d}-{mon:02d}"


def month_bounds(month) -> tuple[datetime, datetime]:
    """Half-open UTC interval ``[start, end)`` covering the month."""
    year, mon = parse_month(month)
    start = datetime(year, mon, 1, tzinfo=timezone.utc)
    days = calendar.monthrange(year, mon)[1]
    if mon == 12:
        end = datetime(year + 1, 1, 1, tzinfo=timezone.utc)
    else:
        end = datetime(year, mon + 1, 1, tzinfo=timezone.utc)
    assert (end - start).days == days
    return start, end


def _record_to_event(record: dict) -> EmailEvent:
    delta_raw = record.get("addresses_acquired_delta")
    if delta_raw is None or delta_raw == "":
        delta = 0
    else:
        delta = int(delta_raw)
        if delta < 0:
            raise ValueError("addresses_acquired_delta must be nonnegative")
    subject = record.get("subject")
    if subject is None:
        raise ValueError("missing subject")
    return EmailEvent(
        timestamp=parse_timestamp(str(record["timestamp"])),
        harvester_ip=_ipv4(str(record["harvester_ip"])),
        server_ip=_ipv4(str(record["server_ip"])),
        subject=str(subject),
        addresses_acquired_delta=delta,
    )


def _iter_csv(text: str):
    reader = csv.reader(io.StringIO(text, newline=""))
    header = None
    for row in reader:
        line_no = reader.line_num
        if header is None:
            if not row:
                continue
            header = [h.strip() for h in row]
            missing = [f for f in CSV_FIELDS[:4] if f not in header]
            if missing:
                raise EventFormatError(f"CSV header missing columns: {', '.join(missing)}")
            continue
        if not row or row == [""]:
            continue
        if len(row) != len(header):
            yield line_no, None, f"expected {len(header)} fields, got {len(row)}"
            continue
        yield line_no, dict(zip(header, row)), None


def _iter_jsonl(text: str):
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            yield line_no, None, f"invalid JSON: {exc.msg}"
            continue
        if not isinstance(record, dict):
            yield line_no, None, "not a JSON object"
            continue
        yield line_no, record, None


def parse_event_log(stream, fmt: str = "csv") -> EventList:
    """Parse an event log from a binary or text stream.

    Malformed lines are skipped and recorded on the returned list's
    ``malformed`` attribute; more than 10% malformed raises
    :class:`EventFormatError`.
    """
    data = stream.read()
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    if text.startswith("\ufeff"):
        text = text[1:]
    if fmt == "csv":
        rows = _iter_csv(text)
    elif fmt == "jsonl":
        rows = _iter_jsonl(text)
    else:
        raise ValueError(f"unknown event log format {fmt!r}")

    events, malformed = [], []
    for line_no, record, problem in rows:
        if problem is None:
            try:
                events.append(_record_to_event(record))
                continue
            except (KeyError, ValueError, TypeError) as exc:
                problem = f"{type(exc).__name__}: {exc}"
        malformed.append((line_no, problem))

    total = len(events) + len(malformed)
    if total and len(malformed) > MAX_MALFORMED_FRACTION * total:
        listing = "; ".join(f"line {n}: {why}" for n, why in malformed[:10])
        raise EventFormatError(
            f"{len(malformed)} of {total} lines malformed (first offenders: {listing})",
            offenders=malformed[:10],
        )
    return EventList(events, malformed)


def read_event_log(path, fmt: str | None = None) -> EventList:
    path = str(path)
    if fmt is None:
        fmt = "jsonl" if path.endswith((".jsonl", ".ndjson")) else "csv"
    with open(path, "rb") as fh:
        return parse_event_log(fh, fmt)


def write_event_csv(events, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for ev in events:
        writer.writerow([
            format_timestamp(ev.timestamp),
            ev.harvester_ip,
            ev.server_ip,
            ev.subject,
            ev.addresses_acquired_delta,
        ])


def window_by_month(events, month) -> EventWindow:
    """Restrict events to one UTC calendar month and index them.

    Events are ordered by timestamp (stable), and harvesters/servers get
    dense indices in order of first appearance.  ``addresses_acquired[i]``
    is the in-month total of ``addresses_acquired_delta`` for harvester
    ``i``, or 1 when that total is zero.
    """
    key = month_key(month)
    start, end = month_bounds(key)
    selected = sorted(
        (ev for ev in events if start <= ev.timestamp < end),
        key=lambda ev: ev.timestamp,
    )
    if not selected:
        raise EmptyWindowError(f"no events in month {key}")

    harvesters: dict[str, int] = {}
    servers: dict[str, int] = {}
    acquired: list[int] = []
    for ev in selected:
        if ev.harvester_ip not in harvesters:
            harvesters[ev.harvester_ip] = len(harvesters)
            acquired.append(0)
        servers.setdefault(ev.server_ip, len(servers))
        acquired[harvesters[ev.harvester_ip]] += ev.addresses_acquired_delta
    acquired = [a if a > 0 else 1 for a in acquired]
    return EventWindow(key, selected, harvesters, servers, acquired)


def events_per_harvester(window: EventWindow) -> list[int]:
    counts = [0] * window.M
    for ev in window.events:
        counts[window.harvesters[ev.harvester_ip]] += 1
    return counts


def monthly_volume_report(events, addresses_by_month) -> list[tuple[str, float]]:
    """Emails received per address collected, one row per month present."""
    emails: dict[str, int] = {}
    for ev in events:
        emails[ev.month] = emails.get(ev.month, 0) + 1
    addresses = {month_key(m): n for m, n in addresses_by_month.items()}
    rows = []
    for month in sorted(emails):
        n_addr = addresses.get(month)
        if not n_addr or n_addr <= 0:
            raise ReportError(f"no positive address count for month {month}")
        rows.append((month, emails[month] / n_addr))
    return rows
