"""Binding GPS fixes to their nearest-in-time WiFi scan.

For every fix, the scan of the same user minimizing the absolute time gap is
selected, provided the gap is at most ``window_ms`` (boundaries inclusive;
equidistant candidates resolve to the earlier scan). Every sighting in the
selected scan then yields one paired observation carrying the fix position.

A scan may serve several fixes when fixes arrive closer together than the
window; that only duplicates consistent evidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .trace_model import (
    BssidId,
    GeoPoint,
    GpsFix,
    TimestampMs,
    TraceSet,
    UserId,
    WifiScan,
)


@dataclass(frozen=True, slots=True)
class PairingConfig:
    window_ms: int = 1000
    # Fixes with worse reported accuracy than this are skipped; off by default.
    max_accuracy_m: Optional[float] = None

    def __post_init__(self) -> None:
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")


@dataclass(slots=True)
class PairedObservation:
    bssid: BssidId
    pos: GeoPoint
    ts: TimestampMs
    user: UserId


def pair_time_indices(
    fix_ts: np.ndarray, scan_ts: np.ndarray, window_ms: int
) -> np.ndarray:
    """For each fix timestamp, index of its chosen scan or -1.

    Both arrays must be sorted ascending. The chosen scan minimizes |dt|
    within the closed window; ties go to the earlier scan.
    """
    n_fix = fix_ts.shape[0]
    if n_fix == 0 or scan_ts.shape[0] == 0:
        return np.full(n_fix, -1, dtype=np.int64)

    right = np.searchsorted(scan_ts, fix_ts, side="left")
    left = right - 1

    n_scan = scan_ts.shape[0]
    left_ok = left >= 0
    right_ok = right < n_scan
    big = np.int64(np.iinfo(np.int64).max)
    left_dt = np.where(left_ok, fix_ts - scan_ts[np.clip(left, 0, n_scan - 1)], big)
    right_dt = np.where(right_ok, scan_ts[np.clip(right, 0, n_scan - 1)] - fix_ts, big)

    # <= keeps the earlier scan on exact ties
    take_left = left_dt <= right_dt
    chosen = np.where(take_left, left, right)
    best_dt = np.where(take_left, left_dt, right_dt)
    chosen = np.where(best_dt <= window_ms, chosen, -1)
    return chosen.astype(np.int64)


def pair_observations(
    traces: TraceSet, cfg: PairingConfig = PairingConfig()
) -> list[PairedObservation]:
    """Produce paired observations for a whole trace set.

    Output is sorted by (bssid, ts, user); the same input always produces
    the same list.
    """
    scans_by_user: dict[UserId, list[WifiScan]] = {}
    for scan in traces.scans:
        scans_by_user.setdefault(scan.user, []).append(scan)
    fixes_by_user: dict[UserId, list[GpsFix]] = {}
    for fix in traces.fixes:
        fixes_by_user.setdefault(fix.user, []).append(fix)

    out: list[PairedObservation] = []
    for user, fixes in fixes_by_user.items():
        scans = scans_by_user.get(user)
        if not scans:
            continue
        if cfg.max_accuracy_m is not None:
            fixes = [
                f
                for f in fixes
                if f.accuracy_m is None or f.accuracy_m <= cfg.max_accuracy_m
            ]
            if not fixes:
                continue
        fix_ts = np.array([f.ts for f in fixes], dtype=np.int64)
        scan_ts = np.array([s.ts for s in scans], dtype=np.int64)
        chosen = pair_time_indices(fix_ts, scan_ts, cfg.window_ms)
        for fix, idx in zip(fixes, chosen):
            if idx < 0:
                continue
            for sighting in scans[idx].sightings:
                out.append(
                    PairedObservation(
                        bssid=sighting.bssid, pos=fix.pos, ts=fix.ts, user=user
                    )
                )
    out.sort(key=lambda o: (o.bssid, o.ts, o.user))
    return out


def write_pairs_csv(pairs: list[PairedObservation], path) -> None:
    """Debugging dump, one row per paired observation."""
    import csv
    from pathlib import Path

    with Path(path).open("w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["bssid", "lat", "lon", "ts_ms", "user"])
        for p in pairs:
            writer.writerow([p.bssid, repr(p.pos.lat_deg), repr(p.pos.lon_deg), p.ts, p.user])
