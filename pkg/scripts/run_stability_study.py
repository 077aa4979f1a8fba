#!/usr/bin/env python3
"""Long-run stability study: week-one training against a mid-period routine change.

Simulates 200 days with every user adopting another user's home and minor
places at day 90, trains on the first week, and compares how personal-only
and shared router knowledge age. Writes a coverage-vs-day plot plus the
decline statistics.

Usage: python scripts/run_stability_study.py [--out results/stability]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from wifimob.experiments import (
    InitialPeriod,
    Scenario,
    prepare_experiment_data,
    run_experiment,
    stability_decline,
    write_experiment_grid_csv,
)
from wifimob.svgplot import write_line_plot
from wifimob.synthgen import WorldSpec, generate_world, simulate_sensor_arrays


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/stability")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--users", type=int, default=12)
    parser.add_argument("--days", type=int, default=200)
    parser.add_argument("--change-day", type=int, default=90)
    parser.add_argument("--training-days", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    spec = WorldSpec(
        seed=args.seed,
        n_users=args.users,
        n_days=args.days,
        wifi_scan_period_s=60.0,
        routine_change_day=args.change_day,
    )
    print(f"simulating {spec.n_users} users x {spec.n_days} days "
          f"(routine change at day {spec.routine_change_day})...")
    gt = generate_world(spec)
    arrays = simulate_sensor_arrays(gt, spec)
    data = prepare_experiment_data(arrays)

    strategy = InitialPeriod(days=args.training_days)
    results = []
    series = {}
    for scenario in Scenario:
        res = run_experiment(data, strategy, scenario)
        results.append(res)
        series[scenario.value] = sorted(res.coverage.daily_means().items())
        stats = stability_decline(res)
        if stats is not None:
            print(f"  {scenario.value}: day {stats.early_day} mean "
                  f"{stats.early_mean:.3f} -> day {stats.late_day} mean "
                  f"{stats.late_mean:.3f} (drop {100 * stats.decline:.1f} pts)")
        else:
            print(f"  {scenario.value}: mean coverage "
                  f"{res.summary['mean_coverage']:.3f} (span too short for decline stats)")

    write_experiment_grid_csv(results, out / "experiment_grid.csv")
    write_line_plot(
        out / "stability.svg",
        series,
        title=f"first {args.training_days} days as training",
        x_label="day",
        y_label="mean coverage",
        y_range=(0.0, 1.0),
    )
    print(f"wrote {out}/experiment_grid.csv and stability.svg")
    return 0


if __name__ == "__main__":
    sys.exit(main())
