"""WiFi access-point geolocation and mobility reconstruction toolkit."""

from .trace_model import (
    ApSighting,
    BssidId,
    GeoPoint,
    GpsFix,
    TimestampMs,
    TraceSet,
    UserId,
    WifiScan,
    ingest_traces,
    ingest_traces_verbose,
    normalize_bssid,
    write_traces,
)
from .pairing import PairedObservation, PairingConfig, pair_observations
from .ap_locator import (
    ApClass,
    ApDatabase,
    ApRecord,
    LocatorConfig,
    TimeInterval,
    build_database,
    build_simple_database,
    classify_ap,
    dbscan,
    geometric_median,
    haversine_m,
    validate_against_named_ssids,
)
from .reconstructor import BinnedTimeline, PositionEstimate, build_timeline, resolve_scan
from .coverage_metrics import (
    CoverageSeries,
    daily_population_mean,
    entropy_bits,
    time_coverage,
)
from .experiments import (
    ExperimentConfig,
    ExperimentResult,
    InitialPeriod,
    RandomFraction,
    Scenario,
    TopRouters,
    greedy_top_routers,
    prepare_experiment_data,
    run_experiment,
    select_training_pairs,
    stability_decline,
)
from .synthgen import (
    GroundTruth,
    SensorArrays,
    WorldSpec,
    generate_world,
    mobile_ssid_names,
    simulate_sensor_arrays,
    simulate_sensors,
)

__version__ = "0.1.0"
