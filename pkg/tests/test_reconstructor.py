import math

import numpy as np

from wifimob.ap_locator import (
    ApClass,
    ApDatabase,
    ApRecord,
    ApSegment,
    TimeInterval,
    build_database,
    haversine_m,
)
from wifimob.experiments import prepare_experiment_data
from wifimob.reconstructor import (
    build_timeline,
    read_timeline_csv,
    resolve_scan,
    write_timeline_csv,
)
from wifimob.synthgen import WorldSpec, generate_world, simulate_sensors
from wifimob.trace_model import ApSighting, GeoPoint, WifiScan

M_PER_DEG_LAT = 111194.92664455873


def _offset(east_m=0.0, north_m=0.0):
    return GeoPoint(
        55.7 + north_m / M_PER_DEG_LAT,
        12.5 + east_m / (M_PER_DEG_LAT * math.cos(math.radians(55.7))),
    )


def _static(bssid, pos):
    return ApRecord(bssid=bssid, ap_class=ApClass.STATIC, n_sightings=9, pos=pos)


def _scan(bssids, ts=0, user="u"):
    return WifiScan(user=user, ts=ts, sightings=[ApSighting(b) for b in bssids])


def test_single_known_ap_pins_position():
    db = ApDatabase(records={"a": _static("a", _offset(10, 10))})
    est = resolve_scan(_scan(["a"]), db)
    assert est.pos == _offset(10, 10)
    assert est.support == ["a"]


def test_unknown_aps_resolve_to_nothing():
    db = ApDatabase(records={})
    assert resolve_scan(_scan(["a", "b"]), db) is None
    assert resolve_scan(_scan([]), db) is None


def test_mobile_and_insufficient_records_do_not_resolve():
    db = ApDatabase(
        records={
            "a": ApRecord(bssid="a", ap_class=ApClass.MOBILE, n_sightings=9),
            "b": ApRecord(bssid="b", ap_class=ApClass.INSUFFICIENT, n_sightings=2),
        }
    )
    assert resolve_scan(_scan(["a", "b"]), db) is None


def test_four_corner_aps_resolve_to_center():
    db = ApDatabase(
        records={
            "a": _static("a", _offset(0, 0)),
            "b": _static("b", _offset(100, 0)),
            "c": _static("c", _offset(0, 100)),
            "d": _static("d", _offset(100, 100)),
        }
    )
    est = resolve_scan(_scan(["a", "b", "c", "d"]), db)
    assert haversine_m(est.pos, _offset(50, 50)) < 0.5
    assert est.support == ["a", "b", "c", "d"]


def test_relocated_resolves_only_inside_segment():
    rec = ApRecord(
        bssid="a",
        ap_class=ApClass.RELOCATED,
        n_sightings=20,
        segments=[
            ApSegment(pos=_offset(0, 0), interval=TimeInterval(0, 1000)),
            ApSegment(pos=_offset(500, 0), interval=TimeInterval(5000, 9000)),
        ],
    )
    db = ApDatabase(records={"a": rec})
    assert resolve_scan(_scan(["a"], ts=500), db).pos == _offset(0, 0)
    assert resolve_scan(_scan(["a"], ts=7000), db).pos == _offset(500, 0)
    assert resolve_scan(_scan(["a"], ts=3000), db) is None


def test_multi_ap_estimate_stays_in_hull():
    rng = np.random.default_rng(2)
    for _ in range(20):
        positions = [_offset(rng.uniform(0, 400), rng.uniform(0, 400)) for _ in range(4)]
        db = ApDatabase(records={f"b{i}": _static(f"b{i}", p) for i, p in enumerate(positions)})
        est = resolve_scan(_scan(sorted(db.records)), db)
        lats = [p.lat_deg for p in positions]
        lons = [p.lon_deg for p in positions]
        assert min(lats) - 1e-9 <= est.pos.lat_deg <= max(lats) + 1e-9
        assert min(lons) - 1e-9 <= est.pos.lon_deg <= max(lons) + 1e-9


def test_timeline_empty():
    assert build_timeline([], ApDatabase(records={})) == {}


def test_timeline_first_scan_in_bin_wins():
    db = ApDatabase(
        records={"a": _static("a", _offset(0, 0)), "b": _static("b", _offset(800, 0))}
    )
    scans = [
        _scan([], ts=0),
        _scan(["a"], ts=60_000),
        _scan(["b"], ts=500_000),  # same bin, later: ignored
        _scan(["b"], ts=700_000),  # next bin
    ]
    timelines = build_timeline(scans, db)
    tl = timelines["u"]
    assert tl.bins_with_data == {0, 1}
    assert tl.bins[0].pos == _offset(0, 0)
    assert tl.bins[0].ts == 60_000
    assert tl.bins[1].pos == _offset(800, 0)


def test_single_resolvable_scan_fills_one_bin():
    db = ApDatabase(records={"a": _static("a", _offset(0, 0))})
    timelines = build_timeline([_scan(["a"], ts=0)], db)
    tl = timelines["u"]
    assert set(tl.bins) == {0}
    assert tl.bins_with_data == {0}


def test_shrinking_database_never_adds_estimates():
    rng = np.random.default_rng(3)
    records = {f"b{i}": _static(f"b{i}", _offset(i * 120, 0)) for i in range(6)}
    scans = []
    for k in range(200):
        visible = [f"b{i}" for i in range(6) if rng.random() < 0.3]
        scans.append(_scan(visible, ts=k * 180_000))
    full_db = ApDatabase(records=records)
    small_db = ApDatabase(records={k: v for k, v in records.items() if k < "b3"})
    full = build_timeline(scans, full_db)["u"]
    small = build_timeline(scans, small_db)["u"]
    assert set(small.bins) <= set(full.bins)


def test_timeline_csv_roundtrip(tmp_path):
    db = ApDatabase(records={"a": _static("a", _offset(0, 0))})
    scans = [_scan(["a"], ts=0), _scan([], ts=700_000)]
    timelines = build_timeline(scans, db)
    path = tmp_path / "timeline.csv"
    write_timeline_csv(timelines, path)
    loaded = read_timeline_csv(path)
    assert loaded["u"].bins_with_data == {0, 1}
    assert set(loaded["u"].bins) == {0}
    assert haversine_m(loaded["u"].bins[0].pos, _offset(0, 0)) < 1e-6


def test_two_day_single_user_reconstruction_accuracy():
    """With the full quality-filtered database, nearly every WiFi-bearing bin
    lands within 150 m of the true position."""
    spec = WorldSpec(seed=21, n_users=1, n_days=2, colocated_fraction=0.0)
    gt = generate_world(spec)
    traces = simulate_sensors(gt, spec)
    # the single user needs company for pairing evidence: their own
    data = prepare_experiment_data(traces)
    db = build_database(data.paired_records())
    timelines = build_timeline(traces.scans, db)
    tl = timelines[gt.user_ids[0]]
    assert tl.bins, "nothing reconstructed"
    errors = []
    for est in tl.bins.values():
        lat, lon = gt.position_at(0, np.array([est.ts]))
        errors.append(haversine_m(est.pos, GeoPoint(float(lat[0]), float(lon[0]))))
    frac_close = np.mean([e <= 150 for e in errors])
    coverage = len(tl.bins) / len(tl.bins_with_data)
    assert frac_close >= 0.95
    assert coverage > 0.5
