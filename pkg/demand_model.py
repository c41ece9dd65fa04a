"""
Synthetic booking demand and campus room inventory.

Group sizes follow a Gamma distribution (shape 5.86, scale 5.72: mean 33.6 beds,
variance 197) and stay lengths are drawn from a duration histogram. The
histogram shipped here is synthetic: the source data is only described as
peaking around 3 and 5 days with a tail of long training camps.

Streams are stored as CSV with columns id,start_day,duration,beds.
"""
import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from errors import ArgumentError, ConfigurationError

BEDS_PER_UNIT = 57

# Synthetic stand-in for the unpublished duration histogram (days -> probability).
DEFAULT_DURATION_HISTOGRAM = {
    1: 0.08,
    2: 0.10,
    3: 0.22,
    4: 0.10,
    5: 0.20,
    6: 0.06,
    7: 0.09,
    10: 0.06,
    14: 0.06,
    21: 0.03,
}

# Rooms per scale unit, capacity -> count: 5x1 + 10x2 + 4x4 + 2x8 = 57 beds.
DEFAULT_ROOM_MIX = {1: 5, 2: 10, 4: 4, 8: 2}

STREAM_COLUMNS = ["id", "start_day", "duration", "beds"]


@dataclass(frozen=True)
class RoomSpec:
    id: int
    capacity: int

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigurationError(f"Room {self.id} has capacity {self.capacity}; must be >= 1")


@dataclass(frozen=True)
class CampusConfig:
    rooms: tuple
    scaling_factor: int

    def __post_init__(self):
        object.__setattr__(self, "rooms", tuple(self.rooms))
        if self.scaling_factor < 1:
            raise ConfigurationError("scaling_factor must be >= 1")
        if self.total_beds != BEDS_PER_UNIT * self.scaling_factor:
            raise ConfigurationError(
                f"Campus has {self.total_beds} beds, expected {BEDS_PER_UNIT * self.scaling_factor} "
                f"for scaling factor {self.scaling_factor}"
            )

    @property
    def total_beds(self) -> int:
        return sum(room.capacity for room in self.rooms)

    @property
    def max_capacity(self) -> int:
        return max((room.capacity for room in self.rooms), default=0)


@dataclass(frozen=True)
class BookingRequest:
    id: int
    beds_requested: int
    start_day: int
    duration: int

    def __post_init__(self):
        if self.duration < 1:
            raise ArgumentError(f"Request {self.id}: duration must be >= 1")
        if self.beds_requested < 1:
            raise ArgumentError(f"Request {self.id}: beds_requested must be >= 1")

    @property
    def end_day(self) -> int:
        """First day after the stay (dates are half-open)."""
        return self.start_day + self.duration

    @property
    def days(self) -> range:
        return range(self.start_day, self.end_day)

    def overlaps(self, other: "BookingRequest") -> bool:
        return self.start_day < other.end_day and other.start_day < self.end_day


@dataclass(frozen=True)
class DemandModel:
    gamma_shape: float = 5.86
    gamma_scale: float = 5.72
    duration_histogram: dict = field(default_factory=lambda: dict(DEFAULT_DURATION_HISTOGRAM))
    horizon_days: int = 30
    # Expected arrivals per day for one scale unit (57 beds).
    arrival_rate: float = 0.6

    def __post_init__(self):
        if not self.duration_histogram:
            raise ConfigurationError("Duration histogram is empty")
        if self.gamma_shape <= 0 or self.gamma_scale <= 0:
            raise ConfigurationError("Gamma shape and scale must be positive")
        if any(int(d) < 1 for d in self.duration_histogram):
            raise ConfigurationError("Histogram durations must be >= 1 day")
        if any(p < 0 for p in self.duration_histogram.values()):
            raise ConfigurationError("Histogram probabilities must be non-negative")
        total = math.fsum(self.duration_histogram.values())
        if abs(total - 1.0) > 1e-12:
            raise ConfigurationError(f"Histogram probabilities sum to {total!r}, not 1")
        if self.arrival_rate < 0:
            raise ConfigurationError("arrival_rate must be non-negative")
        if self.horizon_days < 1:
            raise ConfigurationError("horizon_days must be >= 1")

    @property
    def mean_group_size(self) -> float:
        return self.gamma_shape * self.gamma_scale

    @property
    def group_size_variance(self) -> float:
        return self.gamma_shape * self.gamma_scale ** 2

    def duration_table(self) -> tuple[np.ndarray, np.ndarray]:
        durations = np.array(sorted(int(d) for d in self.duration_histogram), dtype=np.int64)
        probs = np.array([self.duration_histogram[d] for d in sorted(self.duration_histogram)], dtype=float)
        return durations, probs / probs.sum()


def draw_group_sizes(model: DemandModel, rng: np.random.Generator, size) -> np.ndarray:
    """Raw (unrounded) Gamma draws of group size."""
    return rng.gamma(model.gamma_shape, model.gamma_scale, size=size)


def sample_bed_counts(model: DemandModel, rng: np.random.Generator, size) -> np.ndarray:
    """Rounded group sizes, clamped to at least one bed."""
    return np.maximum(1, np.rint(draw_group_sizes(model, rng, size))).astype(np.int64)


def sample_request(model: DemandModel, day: int, rng: np.random.Generator, request_id: int = 0) -> BookingRequest:
    """Draw one booking that starts on `day`."""
    if not model.duration_histogram:
        raise ConfigurationError("Duration histogram is empty")
    beds = max(1, int(np.rint(rng.gamma(model.gamma_shape, model.gamma_scale))))
    durations, probs = model.duration_table()
    duration = int(rng.choice(durations, p=probs))
    return BookingRequest(id=request_id, beds_requested=beds, start_day=int(day), duration=duration)


def generate_stream(model: DemandModel, days: int | None, rng: np.random.Generator,
                    scale: int = 1) -> list[BookingRequest]:
    """
    Reservation stream over `days` days (model.horizon_days when None), ordered by arrival.

    Arrivals per day are Poisson with mean arrival_rate * scale. Stays running past
    the last day are cut at the horizon.
    """
    days = model.horizon_days if days is None else days
    if days < 1:
        raise ArgumentError("days must be >= 1")
    stream = []
    for day in range(days):
        for _ in range(int(rng.poisson(model.arrival_rate * scale))):
            request = sample_request(model, day, rng, request_id=len(stream))
            if request.end_day > days:
                request = BookingRequest(
                    id=request.id,
                    beds_requested=request.beds_requested,
                    start_day=request.start_day,
                    duration=days - request.start_day,
                )
            stream.append(request)
    return stream


def build_campus(room_mix: dict, s: int) -> CampusConfig:
    """Campus with `s` copies of the per-unit room mix (capacity -> count)."""
    if s < 1:
        raise ArgumentError("Scaling factor must be >= 1")
    unit_beds = sum(int(cap) * int(count) for cap, count in room_mix.items())
    if unit_beds != BEDS_PER_UNIT:
        raise ConfigurationError(f"Room mix has {unit_beds} beds per unit, expected {BEDS_PER_UNIT}")
    rooms = []
    for capacity in sorted(room_mix, reverse=True):
        for _ in range(int(room_mix[capacity]) * s):
            rooms.append(RoomSpec(id=len(rooms), capacity=int(capacity)))
    return CampusConfig(rooms=tuple(rooms), scaling_factor=s)


def scale_campus(base: CampusConfig, s: int) -> CampusConfig:
    """Rescale `base` to 57*s beds keeping its room-size proportions."""
    if s < 1:
        raise ArgumentError("Scaling factor must be >= 1")
    base_counts = Counter(room.capacity for room in base.rooms)
    counts = {cap: int(round(count * s / base.scaling_factor)) for cap, count in base_counts.items()}
    target = BEDS_PER_UNIT * s
    total = sum(cap * n for cap, n in counts.items())
    # Fix rounding drift: drop the largest rooms that fit in the excess, then pad with single beds.
    for cap in sorted(counts, reverse=True):
        while total > target and counts[cap] > 0 and cap <= total - target:
            counts[cap] -= 1
            total -= cap
    if total < target:
        counts[1] = counts.get(1, 0) + (target - total)
    rooms = []
    for capacity in sorted(counts, reverse=True):
        for _ in range(counts[capacity]):
            rooms.append(RoomSpec(id=len(rooms), capacity=capacity))
    return CampusConfig(rooms=tuple(rooms), scaling_factor=s)


def write_stream(stream: list[BookingRequest], path) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(STREAM_COLUMNS)
        for request in stream:
            writer.writerow([request.id, request.start_day, request.duration, request.beds_requested])
    return out_path


def read_stream(path) -> list[BookingRequest]:
    in_path = Path(path)
    if not in_path.exists():
        raise ConfigurationError(f"Stream file not found: {in_path}")
    stream = []
    with in_path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or any(col not in reader.fieldnames for col in STREAM_COLUMNS):
            raise ConfigurationError(f"{in_path}: expected columns {','.join(STREAM_COLUMNS)}")
        for line_no, row in enumerate(reader, start=2):
            try:
                stream.append(
                    BookingRequest(
                        id=int(row["id"]),
                        beds_requested=int(row["beds"]),
                        start_day=int(row["start_day"]),
                        duration=int(row["duration"]),
                    )
                )
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"{in_path}:{line_no}: {e}") from e
    return stream
