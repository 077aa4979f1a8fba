"""Synthetic city, access-point deployment, and sensor-log generation.

The generator is the ground-truth oracle for everything else: it builds a
city with a population-density field, drops access points where people live
(a few per anchor building plus density-weighted street routers), gives every
user a home, a work place, and a handful of other anchor places, simulates
stay/commute schedules with heavy-tailed stay durations, and finally emits
WiFi scans and GPS fixes exactly as a logging phone would.

Visibility is a hard disc: a scan lists every access point within
``visibility_radius_m`` of the device's true position, except that a scan is
dropped entirely (emitted empty) with probability ``scan_dropout``, the way
real collections lose a slice of scans to sleeping radios.

All randomness flows through counter-based Philox streams keyed by
``(seed, stream, index)``, so per-user streams are independent and the same
spec always produces byte-identical traces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .trace_model import (
    ApSighting,
    GeoPoint,
    GpsFix,
    TraceSet,
    WifiScan,
    _fix_line,
    _scan_line,
)

DAY_MS = 86_400_000

# City frame: a fixed mid-latitude origin; all meter/degree conversions use
# the origin's cosine so they are exact inverses of each other.
CITY_LAT0 = 55.70
CITY_LON0 = 12.50
M_PER_DEG_LAT = math.pi * 6_371_000.0 / 180.0
M_PER_DEG_LON = M_PER_DEG_LAT * math.cos(math.radians(CITY_LAT0))


def _xy_to_latlon(x_m, y_m):
    return CITY_LAT0 + np.asarray(y_m) / M_PER_DEG_LAT, CITY_LON0 + np.asarray(x_m) / M_PER_DEG_LON


def _latlon_to_xy(lat, lon):
    return (np.asarray(lon) - CITY_LON0) * M_PER_DEG_LON, (np.asarray(lat) - CITY_LAT0) * M_PER_DEG_LAT


def _rng(seed: int, *stream) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed,) + stream)))


@dataclass(frozen=True, slots=True)
class WorldSpec:
    seed: int = 0
    n_users: int = 30
    n_days: int = 30
    extent_km: float = 8.0
    density_cells: int = 8
    # row-major density weights (density_cells x density_cells); None = radial
    density_weights: Optional[tuple] = None

    # access-point deployment: each anchor building hosts a guaranteed
    # minimum plus a density-scaled Poisson count, so busy districts carry
    # visibly more radios per scan than the outskirts
    ap_per_anchor_min: int = 1
    ap_anchor_base: float = 0.6
    ap_anchor_density_scale: float = 9.5
    ap_anchor_radius_m: float = 10.0
    campus_extra_aps: int = 8
    background_aps_per_km2: float = 38.0
    ap_density_noise_sigma: float = 0.5
    mobile_ap_fraction: float = 0.01
    # anchors spread flatter than raw density, the way homes sprawl outward
    anchor_density_power: float = 0.35

    # sensors
    visibility_radius_m: float = 100.0
    wifi_scan_period_s: float = 16.0
    gps_period_s: float = 600.0
    gps_noise_m: float = 10.0
    scan_dropout: float = 0.08

    # mobility: anchors are repeatedly visited places; errands and excursion
    # stops are one-off locations that never repeat, which is what keeps a
    # slice of every user's time out of reach of sparse training samples
    colocated_fraction: float = 0.6
    minor_anchors_range: tuple[int, int] = (2, 6)
    anchor_sep_m: float = 250.0
    # one-off stops draw from a city-wide pool of venues (cafes, shops)
    venues_per_user: float = 20.0
    p_errand: float = 1.0
    errand_density_power: float = 0.22
    p_excursion: float = 0.20
    excursion_stops: tuple[int, int] = (3, 5)
    minor_visit_probs: tuple[float, ...] = (0.9, 0.5)
    stay_pareto_alpha: float = 1.1
    stay_min_h: float = 0.5
    stay_max_h: float = 6.0
    walk_speed_mps: float = 1.4
    bus_speed_mps: float = 8.5
    walk_max_m: float = 700.0
    routine_change_day: Optional[int] = None
    # phone hotspots broadcast only during tethering sessions; owners tether
    # around midday and again in the evening
    hotspot_day_session_prob: float = 0.35
    hotspot_evening_session_prob: float = 0.55
    hotspot_session_h: tuple[float, float] = (0.8, 2.5)

    def validate(self) -> None:
        if self.n_users < 1 or self.n_days < 1:
            raise ValueError("n_users and n_days must be positive")
        if self.extent_km <= 0:
            raise ValueError("extent_km must be positive")
        for name in ("mobile_ap_fraction", "colocated_fraction", "scan_dropout", "p_excursion"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.wifi_scan_period_s <= 0 or self.gps_period_s <= 0:
            raise ValueError("sensor periods must be positive")
        if self.visibility_radius_m <= 0:
            raise ValueError("visibility_radius_m must be positive")


MOBILE_HOTSPOT_SSIDS = ("AndroidAP", "iPhone")
MOBILE_TRANSIT_SSIDS = ("Commutenet", "Bedrebustur")


def mobile_ssid_names() -> set[str]:
    """SSIDs that mark a device as mobile in this world."""
    return set(MOBILE_HOTSPOT_SSIDS) | set(MOBILE_TRANSIT_SSIDS)


class _CityGrid:
    """Density field over the square city extent."""

    def __init__(self, spec: WorldSpec):
        n = spec.density_cells
        self.n = n
        self.extent_m = spec.extent_km * 1000.0
        self.cell_m = self.extent_m / n
        if spec.density_weights is not None:
            w = np.asarray(spec.density_weights, dtype=np.float64).reshape(n, n)
        else:
            idx = np.arange(n) + 0.5
            cy, cx = np.meshgrid(idx, idx, indexing="ij")
            d2 = (cx - n / 2.0) ** 2 + (cy - n / 2.0) ** 2
            w = np.exp(-d2 / (2.0 * (0.22 * n) ** 2)) + 0.03
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("density weights must be finite and non-negative")
        if w.sum() <= 0:
            raise ValueError("density field is zero everywhere; nowhere to put anyone")
        self.weights = w / w.max()

    def cell_of_xy(self, x_m, y_m):
        # x/y measured from the city center; cells clamp at the boundary
        j = np.clip(((np.asarray(x_m) + self.extent_m / 2) / self.cell_m).astype(np.int64), 0, self.n - 1)
        i = np.clip(((np.asarray(y_m) + self.extent_m / 2) / self.cell_m).astype(np.int64), 0, self.n - 1)
        return i, j

    def weight_at_xy(self, x_m, y_m):
        i, j = self.cell_of_xy(x_m, y_m)
        return self.weights[i, j]

    def sample_points_xy(
        self, rng: np.random.Generator, count: int, power: float = 1.0
    ) -> np.ndarray:
        """Weight^power-distributed points, uniform within their cell; (count, 2) meters."""
        w = self.weights ** power
        p = (w / w.sum()).ravel()
        cells = rng.choice(self.n * self.n, size=count, p=p)
        i, j = np.divmod(cells, self.n)
        x = (j + rng.random(count)) * self.cell_m - self.extent_m / 2
        y = (i + rng.random(count)) * self.cell_m - self.extent_m / 2
        return np.column_stack([x, y])


class _PointIndex:
    """Fixed-radius neighbor queries over static points, bucketed on a grid."""

    def __init__(self, x: np.ndarray, y: np.ndarray, radius_m: float):
        self.x, self.y, self.r = x, y, radius_m
        self.buckets: dict[tuple[int, int], np.ndarray] = {}
        if x.size:
            ci = np.floor(x / radius_m).astype(np.int64)
            cj = np.floor(y / radius_m).astype(np.int64)
            order = np.lexsort((np.arange(x.size), cj, ci))
            keys = np.column_stack([ci[order], cj[order]])
            change = np.nonzero(np.any(np.diff(keys, axis=0) != 0, axis=1))[0] + 1
            starts = np.concatenate([[0], change, [x.size]])
            for a, b in zip(starts[:-1], starts[1:]):
                self.buckets[(int(keys[a, 0]), int(keys[a, 1]))] = order[a:b]

    def query(self, px: float, py: float) -> np.ndarray:
        """Indices with planar distance <= radius, ascending."""
        if not self.buckets:
            return np.empty(0, dtype=np.int64)
        ci, cj = int(math.floor(px / self.r)), int(math.floor(py / self.r))
        parts = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                part = self.buckets.get((ci + di, cj + dj))
                if part is not None:
                    parts.append(part)
        if not parts:
            return np.empty(0, dtype=np.int64)
        cand = np.concatenate(parts)
        dx = self.x[cand] - px
        dy = self.y[cand] - py
        hit = cand[dx * dx + dy * dy <= self.r * self.r]
        hit.sort()
        return hit


@dataclass(slots=True)
class _UserSegments:
    """Piecewise trajectory: contiguous stay/move segments covering the span."""

    t0: np.ndarray  # ms
    t1: np.ndarray  # ms
    kind: np.ndarray  # 0 stay, 1 move
    x0: np.ndarray  # meters in the city frame
    y0: np.ndarray
    x1: np.ndarray
    y1: np.ndarray
    anchor: np.ndarray  # anchor id for stays; -1 one-off stay; -2 move
    is_bus: np.ndarray  # move segments ridden on the user's bus

    def position_xy(self, ts_ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx = np.clip(np.searchsorted(self.t1, ts_ms, side="right"), 0, len(self.t0) - 1)
        span = np.maximum(self.t1[idx] - self.t0[idx], 1)
        frac = np.clip((ts_ms - self.t0[idx]) / span, 0.0, 1.0)
        frac = np.where(self.kind[idx] == 1, frac, 0.0)
        x = self.x0[idx] + (self.x1[idx] - self.x0[idx]) * frac
        y = self.y0[idx] + (self.y1[idx] - self.y0[idx]) * frac
        return x, y


@dataclass(slots=True)
class UserAnchors:
    home: int
    work: int
    minors: list[int]


@dataclass(slots=True)
class MobileAp:
    ap_id: int  # global AP id (>= n_static)
    owner: int  # user index
    kind: str  # "hotspot" or "bus"
    ssid: str


@dataclass(slots=True)
class GroundTruth:
    """Everything the generator knows; the oracle the pipeline is tested against."""

    spec: WorldSpec
    grid: _CityGrid
    user_ids: list[str]
    # anchor pool
    anchor_x: np.ndarray
    anchor_y: np.ndarray
    campus_anchor: Optional[int]
    anchors_pre: list[UserAnchors]
    anchors_post: list[UserAnchors]  # == pre when no routine change
    # shared one-off venues
    venue_x: np.ndarray
    venue_y: np.ndarray
    # static access points
    ap_x: np.ndarray
    ap_y: np.ndarray
    ap_anchor: np.ndarray  # owning anchor id or -1 for street routers
    # mobile access points
    mobile_aps: list[MobileAp]
    # trajectories
    segments: list[_UserSegments]

    @property
    def n_static(self) -> int:
        return int(self.ap_x.size)

    @property
    def n_aps(self) -> int:
        return self.n_static + len(self.mobile_aps)

    def bssid(self, ap_id: int) -> str:
        if ap_id < self.n_static:
            base, tag = ap_id, "02"
        else:
            base, tag = ap_id - self.n_static, "0a"
        octets = [(base >> shift) & 0xFF for shift in (32, 24, 16, 8, 0)]
        return tag + ":" + ":".join(f"{o:02x}" for o in octets)

    def bssids(self) -> list[str]:
        return [self.bssid(i) for i in range(self.n_aps)]

    def ssid(self, ap_id: int) -> Optional[str]:
        if ap_id < self.n_static:
            return None
        return self.mobile_aps[ap_id - self.n_static].ssid

    def ap_position(self, ap_id: int) -> Optional[GeoPoint]:
        if ap_id >= self.n_static:
            return None
        lat, lon = _xy_to_latlon(self.ap_x[ap_id], self.ap_y[ap_id])
        return GeoPoint(float(lat), float(lon))

    def static_positions(self) -> dict[str, GeoPoint]:
        lat, lon = _xy_to_latlon(self.ap_x, self.ap_y)
        return {
            self.bssid(i): GeoPoint(float(lat[i]), float(lon[i]))
            for i in range(self.n_static)
        }

    def truth_class(self, ap_id: int) -> str:
        return "static" if ap_id < self.n_static else "mobile"

    def mobile_ssid_labels(self) -> dict[str, str]:
        return {self.bssid(m.ap_id): m.ssid for m in self.mobile_aps}

    def position_at(self, user: int, ts_ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.segments[user].position_xy(np.asarray(ts_ms, dtype=np.int64))
        return _xy_to_latlon(x, y)

    def stay_seconds_by_anchor(self, user: int, t0_ms: int, t1_ms: int) -> dict[int, float]:
        """Stay time per anchor id inside [t0, t1); one-off stops count as -1."""
        seg = self.segments[user]
        out: dict[int, float] = {}
        for i in range(len(seg.t0)):
            if seg.kind[i] != 0:
                continue
            lo = max(int(seg.t0[i]), t0_ms)
            hi = min(int(seg.t1[i]), t1_ms)
            if hi > lo:
                a = int(seg.anchor[i])
                out[a] = out.get(a, 0.0) + (hi - lo) / 1000.0
        return out


def _place_separated(
    rng: np.random.Generator,
    grid: _CityGrid,
    count: int,
    sep_m: float,
    taken_xy: list,
    power: float = 1.0,
) -> list[tuple[float, float]]:
    """Density-weighted points at least sep_m apart from taken ones (relaxing
    to sep/2 when the rejection budget runs out)."""
    placed: list[tuple[float, float]] = []
    for _ in range(count):
        best = None
        for attempt in range(60):
            pt = grid.sample_points_xy(rng, 1, power=power)[0]
            min_sep = sep_m if attempt < 40 else sep_m / 2
            ok = True
            for qx, qy in taken_xy:
                if (pt[0] - qx) ** 2 + (pt[1] - qy) ** 2 < min_sep * min_sep:
                    ok = False
                    break
            if ok:
                best = (float(pt[0]), float(pt[1]))
                break
        if best is None:
            best = (float(pt[0]), float(pt[1]))  # crowded world; accept overlap
        placed.append(best)
        taken_xy.append(best)
    return placed


def generate_world(spec: WorldSpec) -> GroundTruth:
    """Build the city, anchors, access points, and trajectories."""
    spec.validate()
    grid = _CityGrid(spec)
    n_users = spec.n_users
    user_ids = [f"u{i:03d}" for i in range(n_users)]

    rng_place = _rng(spec.seed, 0)

    # --- anchors ---------------------------------------------------------
    taken: list[tuple[float, float]] = []
    anchor_pts: list[tuple[float, float]] = []

    n_colocated = round(spec.colocated_fraction * n_users)
    colocated = set(range(n_colocated))

    pw = spec.anchor_density_power
    campus_anchor: Optional[int] = None
    if n_colocated > 0:
        # the shared campus sits in a busy district
        campus = _place_separated(rng_place, grid, 1, spec.anchor_sep_m, taken, power=4.0)[0]
        campus_anchor = 0
        anchor_pts.append(campus)

    # dorm pairs: some colocated users share one home point
    dorm_pairs = n_colocated // 3

    home_of: dict[int, int] = {}
    for pair in range(dorm_pairs):
        pt = _place_separated(rng_place, grid, 1, spec.anchor_sep_m, taken, power=pw)[0]
        anchor_id = len(anchor_pts)
        anchor_pts.append(pt)
        home_of[2 * pair] = anchor_id
        home_of[2 * pair + 1] = anchor_id
    for u in range(n_users):
        if u in home_of:
            continue
        pt = _place_separated(rng_place, grid, 1, spec.anchor_sep_m, taken, power=pw)[0]
        home_of[u] = len(anchor_pts)
        anchor_pts.append(pt)

    work_of: dict[int, int] = {}
    for u in range(n_users):
        if u in colocated and campus_anchor is not None:
            work_of[u] = campus_anchor
        else:
            pt = _place_separated(rng_place, grid, 1, spec.anchor_sep_m, taken, power=pw)[0]
            work_of[u] = len(anchor_pts)
            anchor_pts.append(pt)

    minors_of: dict[int, list[int]] = {}
    lo, hi = spec.minor_anchors_range
    for u in range(n_users):
        k = int(rng_place.integers(lo, hi + 1))
        ids = []
        for pt in _place_separated(rng_place, grid, k, spec.anchor_sep_m, taken, power=pw):
            ids.append(len(anchor_pts))
            anchor_pts.append(pt)
        minors_of[u] = ids

    anchor_x = np.array([p[0] for p in anchor_pts], dtype=np.float64)
    anchor_y = np.array([p[1] for p in anchor_pts], dtype=np.float64)

    # venues keep the same separation as anchors so no access point can be
    # sighted from two distinct stop locations
    n_venues = max(1, round(spec.venues_per_user * n_users))
    venue_pts = _place_separated(
        rng_place, grid, n_venues, spec.anchor_sep_m, taken, power=spec.errand_density_power
    )
    venue_x = np.array([p[0] for p in venue_pts], dtype=np.float64)
    venue_y = np.array([p[1] for p in venue_pts], dtype=np.float64)

    anchors_pre = [
        UserAnchors(home=home_of[u], work=work_of[u], minors=list(minors_of[u]))
        for u in range(n_users)
    ]

    # routine change: users adopt another user's home and minor places, so the
    # places are new to them but already frequented inside the population
    if spec.routine_change_day is not None and n_users >= 2:
        shift = max(1, n_users // 2)
        anchors_post = []
        for u in range(n_users):
            donor = (u + shift) % n_users
            anchors_post.append(
                UserAnchors(
                    home=anchors_pre[donor].home,
                    work=anchors_pre[u].work,
                    minors=list(anchors_pre[donor].minors),
                )
            )
    else:
        anchors_post = [
            UserAnchors(home=a.home, work=a.work, minors=list(a.minors))
            for a in anchors_pre
        ]

    # --- static access points -------------------------------------------
    rng_aps = _rng(spec.seed, 1)
    ap_xs: list[float] = []
    ap_ys: list[float] = []
    ap_anchor_ids: list[int] = []

    for aid in range(len(anchor_pts)):
        w = float(grid.weight_at_xy(anchor_x[aid], anchor_y[aid]))
        mean_ap = spec.ap_anchor_base + spec.ap_anchor_density_scale * w
        extra = max(0, round(rng_aps.normal(mean_ap, 0.9))) if mean_ap > 0 else 0
        n_ap = spec.ap_per_anchor_min + extra
        if campus_anchor is not None and aid == campus_anchor:
            n_ap += spec.campus_extra_aps
        for _ in range(n_ap):
            r = spec.ap_anchor_radius_m * math.sqrt(rng_aps.random())
            theta = rng_aps.random() * 2 * math.pi
            ap_xs.append(float(anchor_x[aid]) + r * math.cos(theta))
            ap_ys.append(float(anchor_y[aid]) + r * math.sin(theta))
            ap_anchor_ids.append(aid)

    # street routers: density-weighted with multiplicative lognormal noise
    area_km2 = spec.extent_km * spec.extent_km
    n_background = int(round(spec.background_aps_per_km2 * area_km2))
    if n_background > 0:
        noise = rng_aps.lognormal(mean=0.0, sigma=spec.ap_density_noise_sigma, size=grid.weights.shape)
        raw = grid.weights * noise
        p = (raw / raw.sum()).ravel()
        counts = rng_aps.multinomial(n_background, p).reshape(grid.weights.shape)
        for i in range(grid.n):
            for j in range(grid.n):
                c = int(counts[i, j])
                if c == 0:
                    continue
                x = (j + rng_aps.random(c)) * grid.cell_m - grid.extent_m / 2
                y = (i + rng_aps.random(c)) * grid.cell_m - grid.extent_m / 2
                ap_xs.extend(float(v) for v in x)
                ap_ys.extend(float(v) for v in y)
                ap_anchor_ids.extend([-1] * c)

    ap_x = np.array(ap_xs, dtype=np.float64)
    ap_y = np.array(ap_ys, dtype=np.float64)
    ap_anchor = np.array(ap_anchor_ids, dtype=np.int64)
    n_static = ap_x.size

    # --- mobile access points ---------------------------------------------
    rng_mob = _rng(spec.seed, 2)
    n_mobile = int(round(spec.mobile_ap_fraction * n_static))
    n_hotspots = min(n_users, (2 * n_mobile + 2) // 3)
    n_buses = min(n_users, n_mobile - n_hotspots)

    mobile_aps: list[MobileAp] = []
    # hotspot owners: dorm sharers first (their hotspots get sighted at two
    # distinct shared places), then loners whose hotspots nobody ever sees
    dorm_users = list(range(2 * dorm_pairs))
    isolated_users = [u for u in range(n_users) if u not in colocated]
    owner_pool = dorm_users + isolated_users
    hotspot_owners = sorted(owner_pool[:n_hotspots])
    for k, owner in enumerate(hotspot_owners):
        mobile_aps.append(
            MobileAp(
                ap_id=n_static + len(mobile_aps),
                owner=int(owner),
                kind="hotspot",
                ssid=MOBILE_HOTSPOT_SSIDS[k % len(MOBILE_HOTSPOT_SSIDS)],
            )
        )
    if n_buses:
        # the longest commutes ride buses
        dist = np.hypot(
            anchor_x[[a.home for a in anchors_pre]] - anchor_x[[a.work for a in anchors_pre]],
            anchor_y[[a.home for a in anchors_pre]] - anchor_y[[a.work for a in anchors_pre]],
        )
        riders = np.argsort(-dist, kind="stable")[:n_buses]
        for k, owner in enumerate(sorted(int(r) for r in riders)):
            mobile_aps.append(
                MobileAp(
                    ap_id=n_static + len(mobile_aps),
                    owner=owner,
                    kind="bus",
                    ssid=MOBILE_TRANSIT_SSIDS[k % len(MOBILE_TRANSIT_SSIDS)],
                )
            )

    # --- trajectories ------------------------------------------------------
    bus_owner = {m.owner for m in mobile_aps if m.kind == "bus"}
    segments = []
    for u in range(n_users):
        segments.append(
            _build_segments(
                spec,
                grid,
                _rng(spec.seed, 3, u),
                anchor_x,
                anchor_y,
                venue_x,
                venue_y,
                anchors_pre[u],
                anchors_post[u],
                has_bus=u in bus_owner,
            )
        )

    return GroundTruth(
        spec=spec,
        grid=grid,
        user_ids=user_ids,
        anchor_x=anchor_x,
        anchor_y=anchor_y,
        campus_anchor=campus_anchor,
        anchors_pre=anchors_pre,
        anchors_post=anchors_post,
        venue_x=venue_x,
        venue_y=venue_y,
        ap_x=ap_x,
        ap_y=ap_y,
        ap_anchor=ap_anchor,
        mobile_aps=mobile_aps,
        segments=segments,
    )


def _trunc_pareto_hours(rng, alpha: float, lo_h: float, hi_h: float) -> float:
    u = rng.random()
    # inverse-CDF of a Pareto truncated to [lo, hi]
    lo_a, hi_a = lo_h ** -alpha, hi_h ** -alpha
    return (lo_a - u * (lo_a - hi_a)) ** (-1.0 / alpha)


def _build_segments(
    spec: WorldSpec,
    grid: _CityGrid,
    rng: np.random.Generator,
    anchor_x: np.ndarray,
    anchor_y: np.ndarray,
    venue_x: np.ndarray,
    venue_y: np.ndarray,
    pre: UserAnchors,
    post: UserAnchors,
    has_bus: bool,
) -> _UserSegments:
    """Stay/commute schedule for one user across the whole span."""
    H = 3600.0
    span_s = spec.n_days * 86400.0
    change_s = (
        spec.routine_change_day * 86400.0 if spec.routine_change_day is not None else None
    )

    t0s: list[float] = []
    t1s: list[float] = []
    kinds: list[int] = []
    xs0: list[float] = []
    ys0: list[float] = []
    xs1: list[float] = []
    ys1: list[float] = []
    anchors: list[int] = []
    bus_flags: list[bool] = []

    def anchor_pos(aid: int) -> tuple[float, float]:
        return float(anchor_x[aid]), float(anchor_y[aid])

    def anchors_at(t_s: float) -> UserAnchors:
        if change_s is not None and t_s >= change_s:
            return post
        return pre

    cursor_t = 0.0
    cursor_pos = anchor_pos(pre.home)
    cursor_anchor = pre.home

    def stay_until(t_s: float, aid: int, pos: tuple[float, float]) -> None:
        nonlocal cursor_t, cursor_pos, cursor_anchor
        if t_s > cursor_t:
            t0s.append(cursor_t)
            t1s.append(t_s)
            kinds.append(0)
            xs0.append(pos[0])
            ys0.append(pos[1])
            xs1.append(pos[0])
            ys1.append(pos[1])
            anchors.append(aid)
            bus_flags.append(False)
            cursor_t = t_s
        cursor_pos = pos
        cursor_anchor = aid

    def move_to(pos: tuple[float, float], aid: int, bus_ok: bool) -> None:
        nonlocal cursor_t, cursor_pos, cursor_anchor
        dist = math.hypot(pos[0] - cursor_pos[0], pos[1] - cursor_pos[1])
        if dist < 1.0:
            cursor_anchor = aid
            cursor_pos = pos
            return
        speed = spec.walk_speed_mps if dist < spec.walk_max_m else spec.bus_speed_mps
        dur = dist / speed + 30.0
        t0s.append(cursor_t)
        t1s.append(cursor_t + dur)
        kinds.append(1)
        xs0.append(cursor_pos[0])
        ys0.append(cursor_pos[1])
        xs1.append(pos[0])
        ys1.append(pos[1])
        anchors.append(-2)
        bus_flags.append(bool(bus_ok and dist >= spec.walk_max_m))
        cursor_t += dur
        cursor_pos = pos
        cursor_anchor = aid

    for day in range(spec.n_days):
        base = day * 86400.0
        today = anchors_at(base)
        wake = base + float(np.clip(rng.normal(7.55, 0.5), 6.2, 9.3)) * H
        depart = wake + rng.uniform(0.4, 1.0) * H
        # overnight-at-home reaches to this morning's departure
        stay_until(depart, today.home, anchor_pos(today.home))
        day_end_cap = base + 23.3 * H

        def one_off_stop(min_h: float, max_h: float) -> None:
            v = int(rng.integers(0, venue_x.size))
            move_to((float(venue_x[v]), float(venue_y[v])), -1, bus_ok=False)
            dur = _trunc_pareto_hours(rng, spec.stay_pareto_alpha, min_h, max_h) * H
            stay_until(min(cursor_t + dur, day_end_cap), -1, cursor_pos)

        if rng.random() < spec.p_excursion:
            n_stops = int(rng.integers(spec.excursion_stops[0], spec.excursion_stops[1] + 1))
            for _ in range(n_stops):
                if cursor_t >= day_end_cap - 0.7 * H:
                    break
                one_off_stop(0.8, 5.0)
        else:
            move_to(anchor_pos(today.work), today.work, bus_ok=has_bus)
            work_end = max(
                cursor_t + 2.5 * H,
                base + float(np.clip(rng.normal(14.6, 0.9), 12.5, 17.5)) * H,
            )
            stay_until(min(work_end, day_end_cap), today.work, cursor_pos)
            if rng.random() < spec.p_errand and cursor_t < day_end_cap - 0.8 * H:
                one_off_stop(0.8, 3.0)
            if today.minors:
                weights = np.array(
                    [1.0 / (r + 1) ** 1.15 for r in range(len(today.minors))]
                )
                weights /= weights.sum()
                for p_visit in spec.minor_visit_probs:
                    if rng.random() >= p_visit:
                        break
                    if cursor_t >= day_end_cap - 0.6 * H:
                        break
                    target = int(rng.choice(len(today.minors), p=weights))
                    aid = today.minors[target]
                    move_to(anchor_pos(aid), aid, bus_ok=False)
                    dur = (
                        _trunc_pareto_hours(
                            rng, spec.stay_pareto_alpha, spec.stay_min_h, spec.stay_max_h
                        )
                        * H
                    )
                    stay_until(min(cursor_t + dur, day_end_cap), aid, cursor_pos)

        tonight = anchors_at(cursor_t)
        move_to(anchor_pos(tonight.home), tonight.home, bus_ok=has_bus and cursor_anchor == tonight.work)
        next_depart = span_s if day == spec.n_days - 1 else (day + 1) * 86400.0
        stay_until(next_depart, tonight.home, cursor_pos)

    # final fill is re-cut each morning by stay_until, so close the span now
    if cursor_t < span_s:
        stay_until(span_s, cursor_anchor, cursor_pos)

    return _UserSegments(
        t0=np.array([round(t * 1000) for t in t0s], dtype=np.int64),
        t1=np.array([round(t * 1000) for t in t1s], dtype=np.int64),
        kind=np.array(kinds, dtype=np.int8),
        x0=np.array(xs0, dtype=np.float64),
        y0=np.array(ys0, dtype=np.float64),
        x1=np.array(xs1, dtype=np.float64),
        y1=np.array(ys1, dtype=np.float64),
        anchor=np.array(anchors, dtype=np.int64),
        is_bus=np.array(bus_flags, dtype=bool),
    )


@dataclass(slots=True)
class SensorArrays:
    """Column-oriented sensor log; the compact twin of a record TraceSet."""

    user_ids: list[str]
    bssids: list[str]
    ssids: list[Optional[str]]
    n_static: int
    # GPS fixes
    fix_user: np.ndarray
    fix_ts: np.ndarray
    fix_lat: np.ndarray
    fix_lon: np.ndarray
    fix_acc: np.ndarray
    # WiFi scans (ragged sightings via offsets into scan_ap)
    scan_user: np.ndarray
    scan_ts: np.ndarray
    scan_off: np.ndarray
    scan_ap: np.ndarray
    scan_cell_w: np.ndarray  # density weight at the true scan position

    @property
    def n_scans(self) -> int:
        return int(self.scan_ts.size)

    def scan_counts(self) -> np.ndarray:
        return np.diff(self.scan_off)

    def nonempty_scan_fraction(self) -> float:
        if self.n_scans == 0:
            return 0.0
        return float((self.scan_counts() > 0).mean())


def simulate_sensor_arrays(gt: GroundTruth, spec: Optional[WorldSpec] = None) -> SensorArrays:
    """Emit the full sensor log as compact arrays."""
    spec = spec or gt.spec
    n_users = spec.n_users
    span_ms = spec.n_days * DAY_MS
    vis = spec.visibility_radius_m

    ap_index = _PointIndex(gt.ap_x, gt.ap_y, vis)

    hotspot_by_owner = {m.owner: m.ap_id for m in gt.mobile_aps if m.kind == "hotspot"}
    bus_by_owner = {m.owner: m.ap_id for m in gt.mobile_aps if m.kind == "bus"}

    # tethering sessions per hotspot owner, drawn from a dedicated stream so
    # every viewer sees the same session schedule
    sessions: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for owner in sorted(hotspot_by_owner):
        rng = _rng(spec.seed, 5, owner)
        s0, s1 = [], []
        for day in range(spec.n_days):
            for prob, lo_h, hi_h in (
                (spec.hotspot_day_session_prob, 9.5, 14.0),
                (spec.hotspot_evening_session_prob, 17.5, 21.5),
            ):
                if rng.random() < prob:
                    dur_h = rng.uniform(*spec.hotspot_session_h)
                    start_h = rng.uniform(lo_h, hi_h)
                    s0.append(round((day * 24.0 + start_h) * 3_600_000))
                    s1.append(round((day * 24.0 + min(start_h + dur_h, 24.0)) * 3_600_000))
        sessions[owner] = (np.array(s0, dtype=np.int64), np.array(s1, dtype=np.int64))

    def _intersect(t0a, t1a, t0b, t1b):
        out0, out1 = [], []
        i = j = 0
        while i < len(t0a) and j < len(t0b):
            lo = max(t0a[i], t0b[j])
            hi = min(t1a[i], t1b[j])
            if lo < hi:
                out0.append(lo)
                out1.append(hi)
            if t1a[i] <= t1b[j]:
                i += 1
            else:
                j += 1
        return np.array(out0, dtype=np.int64), np.array(out1, dtype=np.int64)

    # broadcast windows of hotspot owners at every multi-user anchor point,
    # so co-present users sight each other's hotspots while tethering is on
    anchor_users: dict[int, set[int]] = {}
    for u in range(n_users):
        seg = gt.segments[u]
        for aid in np.unique(seg.anchor[seg.kind == 0]):
            if aid >= 0:
                anchor_users.setdefault(int(aid), set()).add(u)
    shared_anchor_hotspots: dict[int, list[tuple[int, np.ndarray, np.ndarray]]] = {}
    for aid, users in anchor_users.items():
        if len(users) < 2:
            continue
        entries = []
        for owner in sorted(users):
            hid = hotspot_by_owner.get(owner)
            if hid is None:
                continue
            seg = gt.segments[owner]
            mask = (seg.kind == 0) & (seg.anchor == aid)
            if not mask.any():
                continue
            on0, on1 = _intersect(seg.t0[mask], seg.t1[mask], *sessions[owner])
            if on0.size:
                entries.append((owner, on0, on1))
        if entries:
            shared_anchor_hotspots[aid] = entries

    # stay locations repeat heavily (anchors and shared venues), so visible
    # sets are cached by quantized position
    visible_cache: dict[tuple[int, int], np.ndarray] = {}

    def visible_at(x: float, y: float) -> np.ndarray:
        key = (round(x * 100), round(y * 100))
        ids = visible_cache.get(key)
        if ids is None:
            ids = ap_index.query(x, y).astype(np.int32)
            visible_cache[key] = ids
        return ids

    all_fix = []
    all_scan = []

    for u in range(n_users):
        rng = _rng(spec.seed, 4, u)
        seg = gt.segments[u]

        # scan schedule: period jittered +-25%
        period_ms = spec.wifi_scan_period_s * 1000.0
        n_est = int(span_ms / (period_ms * 0.75)) + 2
        gaps = rng.uniform(0.75, 1.25, size=n_est) * period_ms
        ts = np.cumsum(gaps)
        ts = ts[ts < span_ms].astype(np.int64)
        n_scans = ts.size

        seg_idx = np.clip(np.searchsorted(seg.t1, ts, side="right"), 0, len(seg.t0) - 1)
        dropped = rng.random(n_scans) < spec.scan_dropout

        # a device never lists its own hotspot; the bus router is sighted by
        # its rider while aboard
        own_bus = bus_by_owner.get(u)

        sx, sy = seg.position_xy(ts)
        cell_w = gt.grid.weight_at_xy(sx, sy).astype(np.float32)

        parts: list[np.ndarray] = []
        counts = np.zeros(n_scans, dtype=np.int32)

        # walk scans in segment order; each segment contributes one block
        boundaries = np.nonzero(np.diff(seg_idx))[0] + 1
        starts = np.concatenate([[0], boundaries])
        ends = np.concatenate([boundaries, [n_scans]])
        for a, b in zip(starts, ends):
            si = int(seg_idx[a])
            keep = ~dropped[a:b]
            block_ts = ts[a:b]
            if seg.kind[si] == 0:
                aid = int(seg.anchor[si])
                static_ids = visible_at(float(seg.x0[si]), float(seg.y0[si]))
                extra_owner_ids = []
                extra_masks = []
                if aid >= 0 and aid in shared_anchor_hotspots:
                    for owner, iv0, iv1 in shared_anchor_hotspots[aid]:
                        if owner == u:
                            continue
                        pos = np.searchsorted(iv0, block_ts, side="right") - 1
                        inside = (pos >= 0) & (block_ts < iv1[np.clip(pos, 0, len(iv1) - 1)])
                        if inside.any():
                            extra_owner_ids.append(hotspot_by_owner[owner])
                            extra_masks.append(inside)
                row_ids = list(static_ids)
                row_ids.extend(extra_owner_ids)
                template = np.array(sorted(row_ids), dtype=np.int32)
                width = template.size
                if width == 0:
                    continue
                mask = np.ones((b - a, width), dtype=bool)
                col_of = {int(v): k for k, v in enumerate(template)}
                for owner_id, inside in zip(extra_owner_ids, extra_masks):
                    mask[:, col_of[owner_id]] = inside
                mask[~keep, :] = False
                counts[a:b] = mask.sum(axis=1)
                parts.append(np.broadcast_to(template, (b - a, width))[mask])
            else:
                bus_here = own_bus if (own_bus is not None and seg.is_bus[si]) else None
                for k in range(a, b):
                    if dropped[k]:
                        continue
                    ids = ap_index.query(float(sx[k]), float(sy[k]))
                    if bus_here is not None:
                        ids = np.concatenate([ids, np.array([bus_here], dtype=np.int64)])
                    counts[k] = ids.size
                    if ids.size:
                        parts.append(np.sort(ids).astype(np.int32))

        flat = np.concatenate(parts) if parts else np.empty(0, dtype=np.int32)
        off = np.concatenate([[0], np.cumsum(counts, dtype=np.int64)])

        # GPS fixes: strict period with a random phase, Gaussian position noise
        gps_ms = spec.gps_period_s * 1000.0
        phase = rng.uniform(0, gps_ms)
        fts = (phase + np.arange(int((span_ms - phase) / gps_ms) + 1) * gps_ms).astype(np.int64)
        fts = fts[fts < span_ms]
        fx, fy = seg.position_xy(fts)
        fx = fx + rng.normal(0.0, spec.gps_noise_m, size=fts.size)
        fy = fy + rng.normal(0.0, spec.gps_noise_m, size=fts.size)
        flat_lat, flat_lon = _xy_to_latlon(fx, fy)

        all_fix.append((np.full(fts.size, u, dtype=np.int32), fts, flat_lat, flat_lon))
        all_scan.append((np.full(n_scans, u, dtype=np.int32), ts, off, flat, cell_w))

    fix_user = np.concatenate([f[0] for f in all_fix])
    fix_ts = np.concatenate([f[1] for f in all_fix])
    fix_lat = np.concatenate([f[2] for f in all_fix])
    fix_lon = np.concatenate([f[3] for f in all_fix])

    scan_user = np.concatenate([s[0] for s in all_scan])
    scan_ts = np.concatenate([s[1] for s in all_scan])
    scan_cell_w = np.concatenate([s[4] for s in all_scan])
    counts_all = np.concatenate([np.diff(s[2]) for s in all_scan])
    scan_off = np.concatenate([[0], np.cumsum(counts_all, dtype=np.int64)])
    scan_ap = np.concatenate([s[3] for s in all_scan]) if all_scan else np.empty(0, np.int32)

    return SensorArrays(
        user_ids=gt.user_ids,
        bssids=gt.bssids(),
        ssids=[gt.ssid(i) for i in range(gt.n_aps)],
        n_static=gt.n_static,
        fix_user=fix_user,
        fix_ts=fix_ts,
        fix_lat=fix_lat,
        fix_lon=fix_lon,
        fix_acc=np.full(fix_ts.size, spec.gps_noise_m, dtype=np.float32),
        scan_user=scan_user,
        scan_ts=scan_ts,
        scan_off=scan_off,
        scan_ap=scan_ap,
        scan_cell_w=scan_cell_w,
    )


def arrays_to_traceset(arrays: SensorArrays) -> TraceSet:
    """Materialize record objects from the compact form.

    Identical sighting lists (the normal case while a user stays put) share
    one list object, which keeps large worlds affordable.
    """
    sighting_of = [
        ApSighting(bssid=arrays.bssids[i], ssid=arrays.ssids[i])
        for i in range(len(arrays.bssids))
    ]
    list_cache: dict[bytes, list[ApSighting]] = {}

    fixes = []
    for k in range(arrays.fix_ts.size):
        fixes.append(
            GpsFix(
                user=arrays.user_ids[arrays.fix_user[k]],
                ts=int(arrays.fix_ts[k]),
                pos=GeoPoint(float(arrays.fix_lat[k]), float(arrays.fix_lon[k])),
                accuracy_m=float(arrays.fix_acc[k]),
            )
        )

    scans = []
    off = arrays.scan_off
    ap = arrays.scan_ap
    for k in range(arrays.n_scans):
        ids = ap[off[k] : off[k + 1]]
        key = ids.tobytes()
        sightings = list_cache.get(key)
        if sightings is None:
            sightings = [sighting_of[i] for i in ids]
            list_cache[key] = sightings
        scans.append(
            WifiScan(
                user=arrays.user_ids[arrays.scan_user[k]],
                ts=int(arrays.scan_ts[k]),
                sightings=sightings,
            )
        )
    return TraceSet(fixes=fixes, scans=scans)


def simulate_sensors(gt: GroundTruth, spec: Optional[WorldSpec] = None) -> TraceSet:
    """Emit the sensor log as trace records."""
    return arrays_to_traceset(simulate_sensor_arrays(gt, spec))


def density_count_r2(arrays: SensorArrays) -> float:
    """r-squared of per-scan AP count against the density weight of the scan's cell."""
    counts = arrays.scan_counts().astype(np.float64)
    w = arrays.scan_cell_w.astype(np.float64)
    if counts.size < 2 or counts.std() == 0 or w.std() == 0:
        return 0.0
    r = np.corrcoef(w, counts)[0, 1]
    return float(r * r)


def write_dataset(gt: GroundTruth, arrays: SensorArrays, out_dir) -> dict[str, int]:
    """Write gps.jsonl / wifi.jsonl plus the ground-truth sidecar files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with (out / "gps.jsonl").open("w", encoding="utf-8") as fh:
        for k in range(arrays.fix_ts.size):
            fix = GpsFix(
                user=arrays.user_ids[arrays.fix_user[k]],
                ts=int(arrays.fix_ts[k]),
                pos=GeoPoint(float(arrays.fix_lat[k]), float(arrays.fix_lon[k])),
                accuracy_m=round(float(arrays.fix_acc[k]), 3),
            )
            fh.write(_fix_line(fix))
            fh.write("\n")

    sighting_of = [
        ApSighting(bssid=arrays.bssids[i], ssid=arrays.ssids[i])
        for i in range(len(arrays.bssids))
    ]
    line_cache: dict[bytes, str] = {}
    with (out / "wifi.jsonl").open("w", encoding="utf-8") as fh:
        off = arrays.scan_off
        for k in range(arrays.n_scans):
            ids = arrays.scan_ap[off[k] : off[k + 1]]
            key = ids.tobytes()
            tail = line_cache.get(key)
            if tail is None:
                scan = WifiScan(user="", ts=0, sightings=[sighting_of[i] for i in ids])
                line = _scan_line(scan)
                tail = line[line.index('"aps"') :]
                line_cache[key] = tail
            user = arrays.user_ids[arrays.scan_user[k]]
            fh.write('{"user":"%s","ts_ms":%d,%s\n' % (user, int(arrays.scan_ts[k]), tail))

    with (out / "truth_aps.csv").open("w", encoding="utf-8") as fh:
        fh.write("bssid,class,lat,lon,ssid\n")
        lat, lon = _xy_to_latlon(gt.ap_x, gt.ap_y)
        for i in range(gt.n_aps):
            if i < gt.n_static:
                fh.write(f"{gt.bssid(i)},static,{float(lat[i])!r},{float(lon[i])!r},\n")
            else:
                fh.write(f"{gt.bssid(i)},mobile,,,{gt.ssid(i)}\n")

    with (out / "truth_positions.csv").open("w", encoding="utf-8") as fh:
        fh.write("user,ts_ms,lat,lon\n")
        minute_ts = np.arange(0, gt.spec.n_days * DAY_MS, 60_000, dtype=np.int64)
        for u, uid in enumerate(gt.user_ids):
            lat, lon = gt.position_at(u, minute_ts)
            for k in range(minute_ts.size):
                fh.write(f"{uid},{int(minute_ts[k])},{float(lat[k])!r},{float(lon[k])!r}\n")

    spec_dict = asdict(gt.spec)
    with (out / "world.json").open("w", encoding="utf-8") as fh:
        json.dump(spec_dict, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")

    return {
        "users": len(gt.user_ids),
        "days": gt.spec.n_days,
        "static_aps": gt.n_static,
        "mobile_aps": len(gt.mobile_aps),
        "gps_fixes": int(arrays.fix_ts.size),
        "wifi_scans": arrays.n_scans,
    }
