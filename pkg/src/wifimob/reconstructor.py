"""Turning WiFi scans plus a located-AP database into position estimates.

A scan resolves to a position when at least one sighted access point has a
usable position at the scan's timestamp. With several hits the estimate is
the geometric median of the access-point positions, which keeps one badly
placed router from dragging the estimate far off.

Timelines bin estimates into fixed-width time bins (ten minutes by default);
the first resolvable scan in a bin provides the bin's estimate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .ap_locator import ApDatabase, geometric_median
from .coverage_metrics import DEFAULT_BIN_MS
from .trace_model import BssidId, GeoPoint, TimestampMs, UserId, WifiScan


@dataclass(slots=True)
class PositionEstimate:
    user: UserId
    ts: TimestampMs
    pos: GeoPoint
    support: list[BssidId]


@dataclass(slots=True)
class BinnedTimeline:
    user: UserId
    bin_ms: int = DEFAULT_BIN_MS
    # bin index -> estimate, only for bins that resolved
    bins: dict[int, PositionEstimate] = field(default_factory=dict)
    # every bin that saw any scan at all, resolved or not
    bins_with_data: set[int] = field(default_factory=set)

    def coverage_counts(self) -> tuple[int, int]:
        return len(self.bins_with_data), len(self.bins)


def resolve_scan(scan: WifiScan, db: ApDatabase) -> Optional[PositionEstimate]:
    """Position estimate for one scan, or None when nothing resolves."""
    hits: list[tuple[BssidId, GeoPoint]] = []
    for sighting in scan.sightings:
        rec = db.get(sighting.bssid)
        if rec is None:
            continue
        pos = rec.position_at(scan.ts)
        if pos is not None:
            hits.append((sighting.bssid, pos))
    if not hits:
        return None
    hits.sort(key=lambda h: h[0])
    support = [bssid for bssid, _ in hits]
    if len(hits) == 1:
        pos = hits[0][1]
    else:
        pos = geometric_median([p for _, p in hits])
    return PositionEstimate(user=scan.user, ts=scan.ts, pos=pos, support=support)


def build_timeline(
    scans: Iterable[WifiScan],
    db: ApDatabase,
    bin_ms: int = DEFAULT_BIN_MS,
) -> dict[UserId, BinnedTimeline]:
    """Per-user binned timelines; scans must be sorted by timestamp per user."""
    timelines: dict[UserId, BinnedTimeline] = {}
    for scan in scans:
        tl = timelines.get(scan.user)
        if tl is None:
            tl = timelines[scan.user] = BinnedTimeline(user=scan.user, bin_ms=bin_ms)
        bin_idx = scan.ts // bin_ms
        tl.bins_with_data.add(bin_idx)
        if bin_idx in tl.bins:
            continue  # first resolvable scan already owns this bin
        est = resolve_scan(scan, db)
        if est is not None:
            tl.bins[bin_idx] = est
    return timelines


def write_timeline_csv(timelines: dict[UserId, BinnedTimeline], path) -> None:
    """One row per bin with WiFi data; unresolved bins have empty lat/lon."""
    with Path(path).open("w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["user", "bin_index", "bin_start_ms", "lat", "lon", "support_count"])
        for user in sorted(timelines):
            tl = timelines[user]
            for bin_idx in sorted(tl.bins_with_data):
                est = tl.bins.get(bin_idx)
                if est is None:
                    writer.writerow([user, bin_idx, bin_idx * tl.bin_ms, "", "", 0])
                else:
                    writer.writerow(
                        [
                            user,
                            bin_idx,
                            bin_idx * tl.bin_ms,
                            repr(est.pos.lat_deg),
                            repr(est.pos.lon_deg),
                            len(est.support),
                        ]
                    )


def read_timeline_csv(path) -> dict[UserId, BinnedTimeline]:
    timelines: dict[UserId, BinnedTimeline] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            user = row["user"]
            tl = timelines.setdefault(user, BinnedTimeline(user=user))
            bin_idx = int(row["bin_index"])
            tl.bins_with_data.add(bin_idx)
            if row["lat"]:
                tl.bins[bin_idx] = PositionEstimate(
                    user=user,
                    ts=int(row["bin_start_ms"]),
                    pos=GeoPoint(float(row["lat"]), float(row["lon"])),
                    support=[],
                )
    return timelines
