"""Tests for demand_model.py: group sizes, durations, streams and campus layouts."""
import numpy as np
import pytest
from scipy import stats

from demand_model import (
    BEDS_PER_UNIT,
    DEFAULT_ROOM_MIX,
    BookingRequest,
    DemandModel,
    build_campus,
    draw_group_sizes,
    generate_stream,
    read_stream,
    sample_bed_counts,
    sample_request,
    scale_campus,
    write_stream,
)
from errors import ArgumentError, ConfigurationError
from seeding import rng_for


class TestGroupSizes:
    def test_moments_match_fitted_gamma(self):
        draws = draw_group_sizes(DemandModel(), np.random.default_rng(1), 1_000_000)
        assert abs(draws.mean() - 33.6) / 33.6 < 0.02
        assert abs(draws.var() - 197) / 197 < 0.05

    def test_gamma_ks_distance(self):
        model = DemandModel()
        draws = draw_group_sizes(model, np.random.default_rng(2), 100_000)
        result = stats.kstest(draws, stats.gamma(model.gamma_shape, scale=model.gamma_scale).cdf)
        assert result.statistic < 0.01

    def test_bed_counts_are_clamped_to_one(self):
        tiny = DemandModel(gamma_shape=0.05, gamma_scale=0.1)
        counts = sample_bed_counts(tiny, np.random.default_rng(3), 10_000)
        assert counts.min() == 1
        assert counts.dtype.kind == "i"

    def test_model_moments(self):
        model = DemandModel()
        assert model.mean_group_size == pytest.approx(33.6, rel=0.01)
        assert model.group_size_variance == pytest.approx(197, rel=0.05)


class TestSampleRequest:
    def test_degenerate_histogram(self, rng):
        model = DemandModel(duration_histogram={3: 1.0})
        assert {sample_request(model, 4, rng).duration for _ in range(50)} == {3}

    def test_start_day_is_the_given_day(self, rng):
        request = sample_request(DemandModel(), 11, rng, request_id=9)
        assert request.start_day == 11
        assert request.id == 9
        assert request.beds_requested >= 1

    def test_empty_histogram_is_a_configuration_error(self):
        with pytest.raises(ConfigurationError):
            DemandModel(duration_histogram={})

    def test_histogram_must_sum_to_one(self):
        with pytest.raises(ConfigurationError):
            DemandModel(duration_histogram={1: 0.5, 2: 0.4})


class TestStream:
    def test_requests_fall_inside_horizon(self):
        stream = generate_stream(DemandModel(), 30, rng_for(0, "stream"), scale=2)
        assert stream
        assert all(0 <= r.start_day < 30 for r in stream)
        assert all(r.end_day <= 30 for r in stream)
        assert [r.start_day for r in stream] == sorted(r.start_day for r in stream)
        assert [r.id for r in stream] == list(range(len(stream)))

    def test_single_day_stream(self):
        model = DemandModel(duration_histogram={1: 1.0}, arrival_rate=3.0)
        stream = generate_stream(model, 1, rng_for(4, "stream"))
        assert all(r.duration == 1 and r.start_day == 0 for r in stream)

    def test_same_seed_same_stream(self):
        first = generate_stream(DemandModel(), 60, rng_for(7, "stream"), scale=2)
        second = generate_stream(DemandModel(), 60, rng_for(7, "stream"), scale=2)
        assert first == second

    def test_different_seeds_differ(self):
        first = generate_stream(DemandModel(), 60, rng_for(7, "stream"), scale=2)
        second = generate_stream(DemandModel(), 60, rng_for(8, "stream"), scale=2)
        assert first != second

    def test_scale_two_gives_about_35_requests_per_month(self):
        sizes = [len(generate_stream(DemandModel(), 30, rng_for(seed, "stream"), scale=2)) for seed in range(20)]
        assert 28 <= np.mean(sizes) <= 44

    def test_horizon_is_the_default_length(self):
        model = DemandModel(horizon_days=5, arrival_rate=3.0)
        stream = generate_stream(model, None, rng_for(2, "stream"))
        assert stream
        assert all(r.start_day < 5 and r.end_day <= 5 for r in stream)
        assert stream == generate_stream(model, 5, rng_for(2, "stream"))

    def test_horizon_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            DemandModel(horizon_days=0)

    def test_days_must_be_positive(self, rng):
        with pytest.raises(ArgumentError):
            generate_stream(DemandModel(), 0, rng)

    def test_csv_round_trip(self, tmp_path):
        stream = generate_stream(DemandModel(), 20, rng_for(1, "stream"))
        path = write_stream(stream, tmp_path / "stream.csv")
        assert read_stream(path) == stream
        assert path.read_text().splitlines()[0] == "id,start_day,duration,beds"

    def test_missing_stream_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_stream(tmp_path / "nope.csv")


class TestBookingRequest:
    def test_half_open_overlap(self):
        a = BookingRequest(0, 2, 0, 2)
        assert a.overlaps(BookingRequest(1, 2, 1, 3))
        assert not a.overlaps(BookingRequest(2, 2, 2, 2))

    def test_invalid_duration(self):
        with pytest.raises(ArgumentError):
            BookingRequest(0, 2, 0, 0)


class TestCampus:
    @pytest.mark.parametrize("s", range(1, 10))
    def test_scaled_campus_has_57s_beds(self, s):
        base = build_campus(DEFAULT_ROOM_MIX, 1)
        campus = scale_campus(base, s)
        assert campus.total_beds == BEDS_PER_UNIT * s
        assert campus.scaling_factor == s

    def test_full_campus(self):
        assert build_campus(DEFAULT_ROOM_MIX, 9).total_beds == 513

    def test_proportional_mix(self):
        campus = scale_campus(build_campus(DEFAULT_ROOM_MIX, 1), 3)
        eights = sum(1 for room in campus.rooms if room.capacity == 8)
        assert eights == 6

    def test_scale_below_one(self, campus_s1):
        with pytest.raises(ArgumentError):
            scale_campus(campus_s1, 0)

    def test_mix_must_fill_a_unit(self):
        with pytest.raises(ConfigurationError):
            build_campus({1: 5, 2: 10}, 1)

    def test_rooms_ordered_by_capacity(self, campus_s1):
        capacities = [room.capacity for room in campus_s1.rooms]
        assert capacities == sorted(capacities, reverse=True)
        assert campus_s1.max_capacity == 8
