"""Record types and JSONL ingestion for GPS fixes and WiFi scan logs.

The on-disk formats are one JSON object per line:

* ``gps.jsonl``  -- ``{"user": str, "ts_ms": int, "lat": float, "lon": float,
  "acc_m": float?}``
* ``wifi.jsonl`` -- ``{"user": str, "ts_ms": int, "aps": [{"bssid": str,
  "ssid": str?, "rssi": int?}, ...]}``

Timestamps are integer milliseconds since the Unix epoch, UTC. All records
are sorted by ``(user, ts)`` after ingestion, with a content-based tiebreak
so that shuffled input files produce identical trace sets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

TimestampMs = int
UserId = str
BssidId = str

_HEX_DIGITS = frozenset("0123456789abcdef")


class TraceError(ValueError):
    """Trace input that violates the data model."""


class BssidParseError(TraceError):
    """A token that cannot be canonicalized into a hardware address."""


def normalize_bssid(raw: str) -> BssidId:
    """Canonicalize a MAC address to lowercase, colon-separated octets.

    Accepts upper or lower case hex digits separated by ``:`` or ``-``, or a
    bare 12-digit hex string. Idempotent on canonical input.
    """
    token = raw.strip().lower().replace("-", "").replace(":", "")
    if len(token) != 12 or not _HEX_DIGITS.issuperset(token):
        raise BssidParseError(f"not a MAC address: {raw!r}")
    return ":".join(token[i : i + 2] for i in range(0, 12, 2))


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """A WGS84 coordinate, range-checked at construction."""

    lat_deg: float
    lon_deg: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat_deg) and math.isfinite(self.lon_deg)):
            raise TraceError(f"non-finite coordinate ({self.lat_deg}, {self.lon_deg})")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise TraceError(f"latitude out of range: {self.lat_deg}")
        if not -180.0 < self.lon_deg <= 180.0:
            raise TraceError(f"longitude out of range: {self.lon_deg}")


@dataclass(slots=True)
class GpsFix:
    user: UserId
    ts: TimestampMs
    pos: GeoPoint
    accuracy_m: Optional[float] = None

    def __post_init__(self) -> None:
        if self.ts < 0:
            raise TraceError(f"negative timestamp: {self.ts}")
        if self.accuracy_m is not None:
            if not math.isfinite(self.accuracy_m) or self.accuracy_m < 0:
                raise TraceError(f"bad accuracy: {self.accuracy_m}")


@dataclass(frozen=True, slots=True)
class ApSighting:
    bssid: BssidId
    ssid: Optional[str] = None
    rssi_dbm: Optional[int] = None

    def __post_init__(self) -> None:
        if self.rssi_dbm is not None and not -120 <= self.rssi_dbm <= 0:
            raise TraceError(f"rssi out of range: {self.rssi_dbm}")


@dataclass(slots=True)
class WifiScan:
    """One scan event: a possibly empty list of sighted access points.

    Duplicate BSSIDs within a scan are merged at parse time, keeping the
    first occurrence.
    """

    user: UserId
    ts: TimestampMs
    sightings: list[ApSighting]

    def __post_init__(self) -> None:
        if self.ts < 0:
            raise TraceError(f"negative timestamp: {self.ts}")


@dataclass(slots=True)
class TraceSet:
    """Immutable-by-convention container of sorted fixes and scans."""

    fixes: list[GpsFix]
    scans: list[WifiScan]

    @classmethod
    def from_records(
        cls, fixes: Iterable[GpsFix], scans: Iterable[WifiScan]
    ) -> "TraceSet":
        """Sort records into canonical order and wrap them.

        The sort key includes the serialized record content so that input
        order (including ties on ``(user, ts)``) never leaks into the result.
        """
        fx = sorted(fixes, key=lambda f: (f.user, f.ts, _fix_line(f)))
        sc = sorted(scans, key=lambda s: (s.user, s.ts, _scan_line(s)))
        return cls(fixes=fx, scans=sc)

    def users(self) -> list[UserId]:
        seen = {f.user for f in self.fixes} | {s.user for s in self.scans}
        return sorted(seen)

    def span_ms(self) -> tuple[TimestampMs, TimestampMs]:
        """(min, max) timestamp over all records; (0, 0) when empty."""
        ts = [f.ts for f in self.fixes] + [s.ts for s in self.scans]
        if not ts:
            return (0, 0)
        return (min(ts), max(ts))


@dataclass(slots=True)
class FileIngestStats:
    path: str
    total_lines: int = 0
    parsed: int = 0
    malformed: int = 0
    first_errors: list[str] = field(default_factory=list)

    def note_error(self, line_no: int, message: str, keep: int = 10) -> None:
        self.malformed += 1
        if len(self.first_errors) < keep:
            self.first_errors.append(f"{self.path}:{line_no}: {message}")


@dataclass(slots=True)
class IngestReport:
    gps: FileIngestStats
    wifi: FileIngestStats

    def summary(self) -> str:
        parts = []
        for stats in (self.gps, self.wifi):
            parts.append(
                f"{stats.path}: {stats.parsed} parsed, {stats.malformed} malformed"
            )
        return "; ".join(parts)


# A file is considered "wrong" (hard error) when malformed lines are both a
# non-trivial fraction and a non-trivial count; tiny files with a stray bad
# line are reported but still ingested.
_MALFORMED_FRACTION_LIMIT = 0.01
_MALFORMED_COUNT_FLOOR = 10


def _parse_gps_line(obj: dict) -> GpsFix:
    if not isinstance(obj, dict):
        raise TraceError("not an object")
    user = obj["user"]
    if not isinstance(user, str) or not user:
        raise TraceError("bad user id")
    ts = obj["ts_ms"]
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise TraceError("ts_ms must be an integer")
    pos = GeoPoint(float(obj["lat"]), float(obj["lon"]))
    acc = obj.get("acc_m")
    return GpsFix(user=user, ts=ts, pos=pos, accuracy_m=None if acc is None else float(acc))


def _parse_wifi_line(obj: dict) -> WifiScan:
    if not isinstance(obj, dict):
        raise TraceError("not an object")
    user = obj["user"]
    if not isinstance(user, str) or not user:
        raise TraceError("bad user id")
    ts = obj["ts_ms"]
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise TraceError("ts_ms must be an integer")
    aps = obj.get("aps", [])
    if not isinstance(aps, list):
        raise TraceError("aps must be a list")
    sightings: list[ApSighting] = []
    seen: set[BssidId] = set()
    for ap in aps:
        bssid = normalize_bssid(ap["bssid"])
        if bssid in seen:
            continue  # duplicates merged, first occurrence wins
        seen.add(bssid)
        ssid = ap.get("ssid")
        rssi = ap.get("rssi")
        if rssi is not None and (not isinstance(rssi, int) or isinstance(rssi, bool)):
            raise TraceError("rssi must be an integer")
        sightings.append(ApSighting(bssid=bssid, ssid=ssid, rssi_dbm=rssi))
    return WifiScan(user=user, ts=ts, sightings=sightings)


def _ingest_file(path: Path, parse, stats: FileIngestStats) -> list:
    records = []
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot read {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            stats.total_lines += 1
            try:
                records.append(parse(json.loads(line)))
                stats.parsed += 1
            except (TraceError, KeyError, TypeError, ValueError) as exc:
                stats.note_error(line_no, str(exc) or type(exc).__name__)
    if stats.total_lines:
        frac = stats.malformed / stats.total_lines
        if frac > _MALFORMED_FRACTION_LIMIT and stats.malformed > _MALFORMED_COUNT_FLOOR:
            raise TraceError(
                f"{path}: {stats.malformed}/{stats.total_lines} lines malformed; "
                "this does not look like the right file"
            )
    return records


def ingest_traces_verbose(gps_path, wifi_path) -> tuple[TraceSet, IngestReport]:
    """Ingest both trace files, returning the traces and a malformed-line report."""
    gps_path, wifi_path = Path(gps_path), Path(wifi_path)
    report = IngestReport(
        gps=FileIngestStats(path=str(gps_path)),
        wifi=FileIngestStats(path=str(wifi_path)),
    )
    fixes = _ingest_file(gps_path, _parse_gps_line, report.gps)
    scans = _ingest_file(wifi_path, _parse_wifi_line, report.wifi)
    return TraceSet.from_records(fixes, scans), report


def ingest_traces(gps_path, wifi_path) -> TraceSet:
    """Ingest both trace files; see :func:`ingest_traces_verbose` for the report."""
    traces, _ = ingest_traces_verbose(gps_path, wifi_path)
    return traces


def _json_number(x: float):
    # integers that arrived as floats stay floats only if they carry a fraction
    return x


def _fix_line(fix: GpsFix) -> str:
    obj: dict = {
        "user": fix.user,
        "ts_ms": fix.ts,
        "lat": fix.pos.lat_deg,
        "lon": fix.pos.lon_deg,
    }
    if fix.accuracy_m is not None:
        obj["acc_m"] = fix.accuracy_m
    return json.dumps(obj, separators=(",", ":"))


def _scan_line(scan: WifiScan) -> str:
    aps = []
    for s in scan.sightings:
        ap: dict = {"bssid": s.bssid}
        if s.ssid is not None:
            ap["ssid"] = s.ssid
        if s.rssi_dbm is not None:
            ap["rssi"] = s.rssi_dbm
        aps.append(ap)
    return json.dumps(
        {"user": scan.user, "ts_ms": scan.ts, "aps": aps}, separators=(",", ":")
    )


def write_traces(traces: TraceSet, gps_path, wifi_path) -> None:
    """Write a trace set back out in canonical JSONL form."""
    with Path(gps_path).open("w", encoding="utf-8") as out:
        for fix in traces.fixes:
            out.write(_fix_line(fix))
            out.write("\n")
    with Path(wifi_path).open("w", encoding="utf-8") as out:
        for scan in traces.scans:
            out.write(_scan_line(scan))
            out.write("\n")


def iter_user_scans(traces: TraceSet) -> Iterator[tuple[UserId, list[WifiScan]]]:
    """Yield ``(user, scans)`` groups in user order; scans stay time-sorted."""
    current: Optional[UserId] = None
    bucket: list[WifiScan] = []
    for scan in traces.scans:
        if scan.user != current:
            if current is not None:
                yield current, bucket
            current, bucket = scan.user, []
        bucket.append(scan)
    if current is not None:
        yield current, bucket
