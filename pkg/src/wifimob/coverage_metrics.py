"""Time-coverage and location-entropy metrics.

Time coverage for a user-day is the fraction of ten-minute bins containing
any WiFi data (even an empty scan) in which at least one known router was
sighted. User-days without WiFi data are excluded from population averages,
so gaps in collection cannot deflate the metric.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence

from .trace_model import UserId

DAY_MS = 86_400_000
DEFAULT_BIN_MS = 600_000


class CoverageContractError(ValueError):
    """Covered-bin count exceeding the bins-with-data count."""


def time_coverage(bins_with_data: int, bins_covered: int) -> Optional[float]:
    """Covered fraction for one user-day; None when there is no WiFi data."""
    if bins_covered < 0 or bins_with_data < 0:
        raise CoverageContractError("negative bin count")
    if bins_covered > bins_with_data:
        raise CoverageContractError(
            f"covered bins ({bins_covered}) exceed bins with data ({bins_with_data})"
        )
    if bins_with_data == 0:
        return None
    return bins_covered / bins_with_data


@dataclass(slots=True)
class CoverageSeries:
    """Per-(user, day) coverage fractions plus day-level aggregates."""

    per_user_day: dict[tuple[UserId, int], float] = field(default_factory=dict)

    def add(self, user: UserId, day: int, bins_with_data: int, bins_covered: int) -> None:
        cov = time_coverage(bins_with_data, bins_covered)
        if cov is not None:
            self.per_user_day[(user, day)] = cov

    def days(self) -> list[int]:
        return sorted({day for _, day in self.per_user_day})

    def users_on_day(self, day: int) -> list[UserId]:
        return sorted(u for (u, d) in self.per_user_day if d == day)

    def day_values(self, day: int) -> list[float]:
        return [v for (u, d), v in sorted(self.per_user_day.items()) if d == day]

    def daily_means(self) -> dict[int, float]:
        sums: dict[int, float] = {}
        counts: dict[int, int] = {}
        for (_, day), cov in self.per_user_day.items():
            sums[day] = sums.get(day, 0.0) + cov
            counts[day] = counts.get(day, 0) + 1
        return {day: sums[day] / counts[day] for day in sums}

    def mean(self) -> Optional[float]:
        """Mean of daily means across the whole span."""
        means = self.daily_means()
        if not means:
            return None
        return sum(means.values()) / len(means)


def daily_population_mean(series: CoverageSeries, day: int) -> Optional[float]:
    """Mean coverage over users contributing WiFi data on ``day``."""
    values = series.day_values(day)
    if not values:
        return None
    return sum(values) / len(values)


def entropy_bits(labels: Sequence[Hashable]) -> Optional[float]:
    """Shannon entropy, base 2, of the empirical label distribution.

    ``labels`` is one location label per time bin; bins without a resolved
    location must already be excluded. Returns None for an empty sequence.
    """
    counts = Counter(labels)
    total = sum(counts.values())
    if total == 0:
        return None
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h


def coverage_histogram(values: Iterable[float], bin_width: float = 0.1) -> list[int]:
    """Histogram of coverage fractions over [0, 1]; the top edge is inclusive."""
    n_bins = round(1.0 / bin_width)
    counts = [0] * n_bins
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"coverage fraction out of range: {v}")
        idx = min(int(v / bin_width), n_bins - 1)
        counts[idx] += 1
    return counts
