"""Access-point classification and position estimation.

Each access point's paired observations are clustered with DBSCAN under a
great-circle metric. The outcome decides its class:

* fewer observations than ``min_sightings``          -> insufficient
* clustered fraction below ``clustered_fraction_min`` -> mobile
* exactly one cluster                                 -> static, positioned at
  the geometric median of the cluster's points
* several clusters whose time intervals are pairwise
  disjoint                                            -> relocated (one
  positioned segment per cluster)
* several clusters overlapping in time                -> mobile

The DBSCAN here is deliberately order-free so results never depend on
scheduling: a point is core when its closed eps-neighborhood (including
itself) holds at least ``min_pts`` points; clusters are the connected
components of core points under the eps relation; a non-core point joins the
cluster of its lowest-index core neighbor, scanning indices ascending.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .trace_model import (
    BssidId,
    GeoPoint,
    TimestampMs,
    UserId,
    WifiScan,
)

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True, slots=True)
class LocatorConfig:
    eps_m: float = 100.0
    min_sightings: int = 5
    min_cluster_pts: int = 5
    clustered_fraction_min: float = 0.95
    earth_radius_m: float = EARTH_RADIUS_M

    def __post_init__(self) -> None:
        if self.eps_m <= 0:
            raise ValueError("eps_m must be positive")
        if not 0 < self.clustered_fraction_min <= 1:
            raise ValueError("clustered_fraction_min must be in (0, 1]")


@dataclass(frozen=True, slots=True)
class TimeInterval:
    start: TimestampMs
    end: TimestampMs

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"interval start {self.start} > end {self.end}")

    def contains(self, ts: TimestampMs) -> bool:
        return self.start <= ts <= self.end

    def overlaps(self, other: "TimeInterval") -> bool:
        return self.start <= other.end and other.start <= self.end


class ApClass(str, Enum):
    STATIC = "static"
    RELOCATED = "relocated"
    MOBILE = "mobile"
    INSUFFICIENT = "insufficient"


@dataclass(frozen=True, slots=True)
class ApSegment:
    pos: GeoPoint
    interval: TimeInterval


@dataclass(slots=True)
class ApRecord:
    bssid: BssidId
    ap_class: ApClass
    n_sightings: int
    pos: Optional[GeoPoint] = None
    segments: list[ApSegment] = field(default_factory=list)
    contributors: frozenset[UserId] = frozenset()

    def position_at(self, ts: TimestampMs) -> Optional[GeoPoint]:
        """Usable position at ``ts``, or None for mobile/insufficient records
        and for relocated records outside every segment interval."""
        if self.ap_class is ApClass.STATIC:
            return self.pos
        if self.ap_class is ApClass.RELOCATED:
            for seg in self.segments:
                if seg.interval.contains(ts):
                    return seg.pos
        return None

    def label_at(self, ts: TimestampMs) -> Optional[str]:
        """Stable location-label for entropy accounting."""
        if self.ap_class is ApClass.STATIC:
            return self.bssid
        if self.ap_class is ApClass.RELOCATED:
            for i, seg in enumerate(self.segments):
                if seg.interval.contains(ts):
                    return f"{self.bssid}#{i}"
        return None


@dataclass(slots=True)
class ApDatabase:
    records: dict[BssidId, ApRecord]
    built_from: str = ""

    def get(self, bssid: BssidId) -> Optional[ApRecord]:
        return self.records.get(bssid)

    def census(self) -> dict[str, int]:
        counts = {c.value: 0 for c in ApClass}
        for rec in self.records.values():
            counts[rec.ap_class.value] += 1
        counts["total"] = len(self.records)
        return counts


def haversine_m(a: GeoPoint, b: GeoPoint, radius_m: float = EARTH_RADIUS_M) -> float:
    """Great-circle distance in meters between two points."""
    return float(
        _haversine_rad(
            math.radians(a.lat_deg),
            math.radians(a.lon_deg),
            math.radians(b.lat_deg),
            math.radians(b.lon_deg),
            radius_m,
        )
    )


def _haversine_rad(lat1, lon1, lat2, lon2, radius_m):
    """Vectorized haversine on radian inputs. Shared by every distance check
    in this package so boundary comparisons are bit-identical everywhere."""
    sdlat = np.sin((lat2 - lat1) * 0.5)
    sdlon = np.sin((lon2 - lon1) * 0.5)
    h = sdlat * sdlat + np.cos(lat1) * np.cos(lat2) * sdlon * sdlon
    return 2.0 * radius_m * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def haversine_m_arrays(
    lat1_deg, lon1_deg, lat2_deg, lon2_deg, radius_m: float = EARTH_RADIUS_M
):
    """Elementwise great-circle distance over degree arrays."""
    return _haversine_rad(
        np.radians(lat1_deg),
        np.radians(lon1_deg),
        np.radians(lat2_deg),
        np.radians(lon2_deg),
        radius_m,
    )


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the smaller root so component ids are stable
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def dbscan(
    points: Sequence[tuple[GeoPoint, TimestampMs]],
    eps_m: float,
    min_pts: int,
    radius_m: float = EARTH_RADIUS_M,
) -> tuple[list[set[int]], set[int]]:
    """Cluster timestamped points; returns (clusters, noise) as index sets.

    Clusters are ordered by their smallest member index. The timestamps ride
    along untouched; callers use them for the relocation test.
    """
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    n = len(points)
    if n == 0:
        return [], set()
    lat = np.array([p.lat_deg for p, _ in points], dtype=np.float64)
    lon = np.array([p.lon_deg for p, _ in points], dtype=np.float64)
    return dbscan_arrays(lat, lon, eps_m, min_pts, radius_m)


def dbscan_arrays(
    lat_deg: np.ndarray,
    lon_deg: np.ndarray,
    eps_m: float,
    min_pts: int,
    radius_m: float = EARTH_RADIUS_M,
) -> tuple[list[set[int]], set[int]]:
    n = lat_deg.shape[0]
    if n == 0:
        return [], set()

    lat = np.radians(lat_deg)
    lon = np.radians(lon_deg)

    # Fast path: when the whole set fits inside one eps ball, every point is
    # mutually reachable. Tight single-building point clouds hit this almost
    # always.
    if n >= min_pts:
        diag = _haversine_rad(lat.min(), lon.min(), lat.max(), lon.max(), radius_m)
        if diag <= eps_m:
            return [set(range(n))], set()

    cos_all = np.cos(lat)
    cos_min, cos_max = float(cos_all.min()), float(cos_all.max())
    lat_span = float(lat.max() - lat.min())
    lon_span = float(lon.max() - lon.min())
    # the grid path needs a locally flat cosine and no date-line wrap
    gridable = cos_min > 0.05 and cos_max / cos_min < 1.2 and lon_span < math.pi / 2

    if gridable and n > 64:
        counts, assignment = _dbscan_grid(lat, lon, eps_m, min_pts, radius_m, cos_max)
    else:
        counts, assignment = _dbscan_brute(lat, lon, eps_m, min_pts, radius_m)

    clusters_by_root: dict[int, set[int]] = {}
    noise: set[int] = set()
    for i in range(n):
        if assignment[i] < 0:
            noise.add(i)
        else:
            clusters_by_root.setdefault(int(assignment[i]), set()).add(i)
    clusters = sorted(clusters_by_root.values(), key=min)
    return clusters, noise


def _finalize_assignment(n, core, uf, border_core_neighbor) -> np.ndarray:
    """Cluster id per point (-1 noise): cores via union-find, borders via
    their lowest-index core neighbor."""
    assignment = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if core[i]:
            assignment[i] = uf.find(i)
        elif border_core_neighbor[i] >= 0:
            assignment[i] = uf.find(int(border_core_neighbor[i]))
    return assignment


def _dbscan_brute(lat, lon, eps_m, min_pts, radius_m):
    """Exact quadratic path for small or oddly spread inputs."""
    n = lat.shape[0]
    adj = []
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        d = _haversine_rad(lat[i], lon[i], lat, lon, radius_m)
        nb = np.nonzero(d <= eps_m)[0]
        adj.append(nb)
        counts[i] = nb.size
    core = counts >= min_pts
    uf = _UnionFind(n)
    border_nb = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        core_nb = adj[i][core[adj[i]]]
        if core[i]:
            for j in core_nb:
                uf.union(i, int(j))
        elif core_nb.size:
            border_nb[i] = core_nb[0]
    return counts, _finalize_assignment(n, core, uf, border_nb)


def _dbscan_grid(lat, lon, eps_m, min_pts, radius_m, cos_max):
    """Exact grid path: cells a hair under eps/sqrt(2) make same-cell points
    mutually reachable, so one representative union per connected cell pair
    suffices. Distances are evaluated per cell pair in vectorized shots;
    pass one accumulates neighbor counts, pass two wires up components.
    """
    n = lat.shape[0]
    cell_rad = eps_m / radius_m / math.sqrt(2.0) * (1.0 - 1e-6)
    ci = np.floor(lat / cell_rad).astype(np.int64)
    cj = np.floor(lon * cos_max / cell_rad).astype(np.int64)

    order = np.lexsort((np.arange(n), cj, ci))
    keys = np.column_stack([ci[order], cj[order]])
    change = np.nonzero(np.any(np.diff(keys, axis=0) != 0, axis=1))[0] + 1
    starts = np.concatenate([[0], change, [n]])
    cells: dict[tuple[int, int], np.ndarray] = {}
    for a, b in zip(starts[:-1], starts[1:]):
        members = np.sort(order[a:b])
        cells[(int(keys[a, 0]), int(keys[a, 1]))] = members

    # points within eps are never more than two cells apart on either axis
    window = [(di, dj) for di in range(-2, 3) for dj in range(-2, 3)]

    def cell_pairs():
        for key, members in cells.items():
            for di, dj in window:
                other = (key[0] + di, key[1] + dj)
                if other < key:
                    continue  # each unordered pair once; key==other is the self pair
                cand = cells.get(other)
                if cand is None:
                    continue
                d = _haversine_rad(
                    lat[members][:, None], lon[members][:, None],
                    lat[cand][None, :], lon[cand][None, :], radius_m,
                )
                mask = d <= eps_m
                if mask.any():
                    yield members, cand, mask

    counts = np.zeros(n, dtype=np.int64)
    for members, cand, mask in cell_pairs():
        counts[members] += mask.sum(axis=1)
        if cand is not members:
            counts[cand] += mask.sum(axis=0)

    core = counts >= min_pts
    uf = _UnionFind(n)
    # same-cell cores are mutually reachable: chain them to the first core
    for members in cells.values():
        mc = members[core[members]]
        for j in mc[1:]:
            uf.union(int(mc[0]), int(j))

    border_nb = np.full(n, -1, dtype=np.int64)
    big = np.int64(np.iinfo(np.int64).max)

    def note_borders(pts, cand, mask):
        sub = ~core[pts]
        cand_core = core[cand]
        if not sub.any() or not cand_core.any():
            return
        m = mask[sub][:, cand_core]
        if not m.any():
            return
        cand_ids = cand[cand_core]
        best = np.where(m, cand_ids[None, :], big).min(axis=1)
        rows = pts[sub]
        cur = border_nb[rows]
        upd = np.where((cur < 0) | (best < cur), best, cur)
        border_nb[rows] = np.where(best < big, upd, cur)

    for members, cand, mask in cell_pairs():
        a_core = core[members]
        b_core = core[cand]
        if a_core.any() and b_core.any() and mask[a_core][:, b_core].any():
            uf.union(int(members[a_core][0]), int(cand[b_core][0]))
        note_borders(members, cand, mask)
        if cand is not members:
            note_borders(cand, members, mask.T)

    return counts, _finalize_assignment(n, core, uf, border_nb)


def _local_plane(lat_deg: np.ndarray, lon_deg: np.ndarray, radius_m: float):
    """Equirectangular projection about the centroid; returns (x, y, unproject)."""
    lat0 = float(np.mean(lat_deg))
    lon0 = float(np.mean(lon_deg))
    coslat = math.cos(math.radians(lat0))
    x = np.radians(lon_deg - lon0) * radius_m * coslat
    y = np.radians(lat_deg - lat0) * radius_m

    def unproject(px: float, py: float) -> GeoPoint:
        lat = lat0 + math.degrees(py / radius_m)
        lon = lon0 + math.degrees(px / (radius_m * coslat))
        return GeoPoint(lat, lon)

    return x, y, unproject


def geometric_median(
    points: Sequence[GeoPoint],
    radius_m: float = EARTH_RADIUS_M,
    tol_m: float = 1e-6,
    max_iter: int = 20000,
) -> GeoPoint:
    """Point minimizing the summed distance to ``points``.

    Runs Weiszfeld iterations on a local planar projection about the
    centroid, which is exact to well under a centimeter at the sub-kilometer
    scales clusters have here. The stop threshold is deliberately tight:
    near-degenerate point sets give the iteration a long flat valley, and a
    loose step cutoff can park it tens of meters from the minimizer. Two
    points return their midpoint (one of the infinitely many minimizers); an
    iterate landing exactly on an input point is nudged 1 cm east.
    """
    if not points:
        raise ValueError("geometric_median of empty point set")
    if len(points) == 1:
        return points[0]
    lat = np.array([p.lat_deg for p in points], dtype=np.float64)
    lon = np.array([p.lon_deg for p in points], dtype=np.float64)
    x, y, unproject = _local_plane(lat, lon, radius_m)
    if len(points) == 2:
        return unproject(float(x.mean()), float(y.mean()))

    px, py = float(x.mean()), float(y.mean())
    for _ in range(max_iter):
        dx = x - px
        dy = y - py
        d = np.hypot(dx, dy)
        dmin_idx = int(np.argmin(d))
        if d[dmin_idx] < 0.5:
            # close to a data point: when that point satisfies the vertex
            # optimality condition it IS the median, and iterating further
            # would only creep toward it sublinearly
            dj = np.hypot(x - x[dmin_idx], y - y[dmin_idx])
            others = dj > 1e-9
            multiplicity = int((~others).sum())
            pull_x = ((x[others] - x[dmin_idx]) / dj[others]).sum()
            pull_y = ((y[others] - y[dmin_idx]) / dj[others]).sum()
            if math.hypot(pull_x, pull_y) <= multiplicity:
                return unproject(float(x[dmin_idx]), float(y[dmin_idx]))
        if np.any(d < 1e-9):
            px += 0.01  # sits on a non-optimal data point; nudge east and retry
            continue
        w = 1.0 / d
        wsum = w.sum()
        nx = float((x * w).sum() / wsum)
        ny = float((y * w).sum() / wsum)
        step = math.hypot(nx - px, ny - py)
        px, py = nx, ny
        if step < tol_m:
            break
    return unproject(px, py)


@dataclass(slots=True)
class Observation:
    """Minimal view of a paired observation used by the classifier."""

    pos: GeoPoint
    ts: TimestampMs
    user: UserId


def classify_ap(
    bssid: BssidId,
    obs: Sequence,
    cfg: LocatorConfig = LocatorConfig(),
) -> ApRecord:
    """Classify one access point from its paired observations.

    ``obs`` items need ``pos``, ``ts`` and ``user`` attributes; all must
    belong to ``bssid``. Observation order never affects the result.
    """
    n = len(obs)
    contributors = frozenset(o.user for o in obs)
    if n < cfg.min_sightings:
        return ApRecord(
            bssid=bssid,
            ap_class=ApClass.INSUFFICIENT,
            n_sightings=n,
            contributors=contributors,
        )

    order = sorted(range(n), key=lambda i: (obs[i].ts, obs[i].pos.lat_deg, obs[i].pos.lon_deg))
    pts = [(obs[i].pos, obs[i].ts) for i in order]
    clusters, noise = dbscan(
        pts, eps_m=cfg.eps_m, min_pts=cfg.min_cluster_pts, radius_m=cfg.earth_radius_m
    )

    clustered = n - len(noise)
    if not clusters or clustered / n < cfg.clustered_fraction_min:
        return ApRecord(
            bssid=bssid,
            ap_class=ApClass.MOBILE,
            n_sightings=n,
            contributors=contributors,
        )

    if len(clusters) == 1:
        member_pts = [pts[i][0] for i in sorted(clusters[0])]
        pos = geometric_median(member_pts, radius_m=cfg.earth_radius_m)
        return ApRecord(
            bssid=bssid,
            ap_class=ApClass.STATIC,
            n_sightings=n,
            pos=pos,
            contributors=contributors,
        )

    intervals = []
    for cluster in clusters:
        ts = [pts[i][1] for i in cluster]
        intervals.append(TimeInterval(min(ts), max(ts)))
    for i in range(len(intervals)):
        for j in range(i + 1, len(intervals)):
            if intervals[i].overlaps(intervals[j]):
                return ApRecord(
                    bssid=bssid,
                    ap_class=ApClass.MOBILE,
                    n_sightings=n,
                    contributors=contributors,
                )

    segments = []
    for cluster, interval in zip(clusters, intervals):
        member_pts = [pts[i][0] for i in sorted(cluster)]
        segments.append(
            ApSegment(
                pos=geometric_median(member_pts, radius_m=cfg.earth_radius_m),
                interval=interval,
            )
        )
    segments.sort(key=lambda s: s.interval.start)
    return ApRecord(
        bssid=bssid,
        ap_class=ApClass.RELOCATED,
        n_sightings=n,
        segments=segments,
        contributors=contributors,
    )


def group_by_bssid(obs: Iterable) -> dict[BssidId, list]:
    grouped: dict[BssidId, list] = {}
    for o in obs:
        grouped.setdefault(o.bssid, []).append(o)
    return grouped


def build_database(
    obs: Iterable,
    cfg: LocatorConfig = LocatorConfig(),
    threads: int = 1,
    built_from: str = "",
) -> ApDatabase:
    """Classify every access point appearing in ``obs``.

    Classification is independent per BSSID; with ``threads > 1`` the work is
    fanned out and reassembled in BSSID order, so thread count never changes
    the result.
    """
    grouped = group_by_bssid(obs)
    bssids = sorted(grouped)
    if threads > 1 and len(bssids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(
                pool.map(lambda b: classify_ap(b, grouped[b], cfg), bssids)
            )
    else:
        records = [classify_ap(b, grouped[b], cfg) for b in bssids]
    return ApDatabase(records={r.bssid: r for r in records}, built_from=built_from)


def build_simple_database(obs: Iterable, built_from: str = "") -> ApDatabase:
    """Position every sighted access point, no questions asked.

    Every BSSID with at least one paired observation becomes a static record
    at the geometric median of its observation positions. This is the naive
    locator behind the sampling experiments, where being known at all is what
    matters; :func:`build_database` is the quality-filtered variant.
    """
    grouped = group_by_bssid(obs)
    records = {}
    for bssid in sorted(grouped):
        group = grouped[bssid]
        pos = geometric_median([o.pos for o in group])
        records[bssid] = ApRecord(
            bssid=bssid,
            ap_class=ApClass.STATIC,
            n_sightings=len(group),
            pos=pos,
            contributors=frozenset(o.user for o in group),
        )
    return ApDatabase(records=records, built_from=built_from)


@dataclass(slots=True)
class SsidValidationCounts:
    """How labeled-SSID devices came out of classification."""

    mobile: int = 0
    static: int = 0
    relocated: int = 0
    insufficient: int = 0
    unseen: int = 0

    @property
    def classified(self) -> int:
        return self.mobile + self.static + self.relocated

    @property
    def recall(self) -> Optional[float]:
        """Fraction of classified labeled devices that came out mobile."""
        if self.classified == 0:
            return None
        return self.mobile / self.classified


def validate_against_named_ssids(
    db: ApDatabase,
    scans: Iterable[WifiScan],
    mobile_ssids: set[str],
) -> SsidValidationCounts:
    """Check classification against devices whose SSID marks them as mobile.

    Devices with too few sightings to classify are tallied separately and
    excluded from recall.
    """
    if not mobile_ssids:
        raise ValueError("mobile_ssids must be non-empty")
    flagged: set[BssidId] = set()
    for scan in scans:
        for s in scan.sightings:
            if s.ssid is not None and s.ssid in mobile_ssids:
                flagged.add(s.bssid)
    counts = SsidValidationCounts()
    for bssid in sorted(flagged):
        rec = db.get(bssid)
        if rec is None:
            counts.unseen += 1
        elif rec.ap_class is ApClass.MOBILE:
            counts.mobile += 1
        elif rec.ap_class is ApClass.STATIC:
            counts.static += 1
        elif rec.ap_class is ApClass.RELOCATED:
            counts.relocated += 1
        else:
            counts.insufficient += 1
    return counts


_APDB_COLUMNS = [
    "bssid",
    "class",
    "lat",
    "lon",
    "n_sightings",
    "segments_json",
    "contributors_count",
]


def write_apdb_csv(db: ApDatabase, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(_APDB_COLUMNS)
        for bssid in sorted(db.records):
            rec = db.records[bssid]
            lat = lon = ""
            segments = ""
            if rec.ap_class is ApClass.STATIC and rec.pos is not None:
                lat, lon = repr(rec.pos.lat_deg), repr(rec.pos.lon_deg)
            elif rec.ap_class is ApClass.RELOCATED:
                segments = json.dumps(
                    [
                        {
                            "lat": seg.pos.lat_deg,
                            "lon": seg.pos.lon_deg,
                            "start_ms": seg.interval.start,
                            "end_ms": seg.interval.end,
                        }
                        for seg in rec.segments
                    ],
                    separators=(",", ":"),
                )
            writer.writerow(
                [bssid, rec.ap_class.value, lat, lon, rec.n_sightings, segments, len(rec.contributors)]
            )


def read_apdb_csv(path) -> ApDatabase:
    """Load a database written by :func:`write_apdb_csv`.

    Contributor identities are not stored in the CSV, only their count, so
    loaded records carry empty contributor sets.
    """
    records: dict[BssidId, ApRecord] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            ap_class = ApClass(row["class"])
            pos = None
            segments: list[ApSegment] = []
            if ap_class is ApClass.STATIC and row["lat"]:
                pos = GeoPoint(float(row["lat"]), float(row["lon"]))
            elif ap_class is ApClass.RELOCATED and row["segments_json"]:
                for seg in json.loads(row["segments_json"]):
                    segments.append(
                        ApSegment(
                            pos=GeoPoint(seg["lat"], seg["lon"]),
                            interval=TimeInterval(seg["start_ms"], seg["end_ms"]),
                        )
                    )
            records[row["bssid"]] = ApRecord(
                bssid=row["bssid"],
                ap_class=ap_class,
                n_sightings=int(row["n_sightings"]),
                pos=pos,
                segments=segments,
            )
    return ApDatabase(records=records, built_from=str(path))
