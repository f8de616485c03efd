import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jscc_lqg import codec
from jscc_lqg.channel import ChannelModel
from jscc_lqg.codecs import CodecSpec, Decoder, calibrate
from jscc_lqg.errors import SampleSizeError, UncalibratedCodecError
from jscc_lqg.maps import CodecFamily
from jscc_lqg.sdr_lab import (
    GridPoint,
    SdrReport,
    best_point,
    linear_sdr,
    measure_sdr,
    opta_sdr,
    optimize_spiral,
    sdr_curve,
    search_spiral_grid,
    threshold_events,
)
from jscc_lqg.streams import RandomStreams


def measured(spec, snr_db, n=200_000, seed=0):
    streams = RandomStreams(seed)
    ch = ChannelModel.from_db(snr_db)
    spec = calibrate(spec, ch, max(n, 100_000), streams.stream("calibration"))
    return spec, measure_sdr(spec, ch, n, streams.stream("source"))


class TestBenchmarks:
    @pytest.mark.parametrize("snr, kc, expected", [(15.0, 2, 255.0), (3.0, 2, 15.0), (7.0, 1, 7.0)])
    def test_opta(self, snr, kc, expected):
        assert opta_sdr(snr, kc, 1) == pytest.approx(expected)

    @pytest.mark.parametrize("snr, expected", [(4.0, 8.0), (0.5, 1.0)])
    def test_linear(self, snr, expected):
        assert linear_sdr(snr) == expected

    @given(st.floats(min_value=1e-3, max_value=1e4))
    def test_opta_dominates_linear(self, snr):
        assert opta_sdr(snr) >= linear_sdr(snr)

    @pytest.mark.parametrize("snr", [0.0, -2.0])
    def test_non_positive_snr(self, snr):
        with pytest.raises(ValueError):
            opta_sdr(snr)
        with pytest.raises(ValueError):
            linear_sdr(snr)


class TestMeasureSdr:
    @pytest.mark.parametrize("snr_db", [0.0, 10.0, 20.0])
    def test_linear_codec_matches_snr(self, snr_db):
        _, report = measured(codec.linear.build(), snr_db, n=1_000_000)
        assert report.sdr_unbiased == pytest.approx(10 ** (snr_db / 10), rel=0.02)

    @pytest.mark.parametrize("snr_db", [0.0, 10.0, 20.0])
    def test_repetition_matches_linear_benchmark(self, snr_db):
        _, report = measured(codec.repetition.build(), snr_db, n=1_000_000)
        assert report.sdr_unbiased == pytest.approx(linear_sdr(10 ** (snr_db / 10)), rel=0.02)

    def test_report_fields(self):
        _, report = measured(codec.repetition.build(), 10.0, n=50_000)
        assert isinstance(report, SdrReport)
        assert report.n_samples == 50_000
        assert report.threshold_event_rate == 0.0
        assert report.fallback_rate == 0.0
        assert report.sdr_ci_halfwidth > 0
        assert abs(report.orthogonality) < 4 * report.orthogonality_stderr + 1e-3

    def test_minimum_samples(self):
        spec = calibrate(codec.linear.build(), ChannelModel(1.0), 100_000, np.random.default_rng(0))
        with pytest.raises(SampleSizeError):
            measure_sdr(spec, ChannelModel(1.0), 9_999, np.random.default_rng(1))

    def test_needs_calibration(self):
        with pytest.raises(UncalibratedCodecError):
            measure_sdr(codec.linear.build(), ChannelModel(1.0), 10_000, np.random.default_rng(0))

    def test_needs_matching_snr(self):
        spec = calibrate(codec.linear.build(), ChannelModel(1.0), 100_000, np.random.default_rng(0))
        with pytest.raises(ValueError, match="calibrated at"):
            measure_sdr(spec, ChannelModel(2.0), 10_000, np.random.default_rng(1))


class TestSpiralSdr:
    @pytest.mark.parametrize("snr_db", [13.0, 20.0])
    def test_beats_linear_below_opta(self, snr_db):
        snr = 10 ** (snr_db / 10)
        _, report = measured(codec.spiral.rotation(2.0).build(), snr_db)
        assert linear_sdr(snr) < report.sdr_unbiased <= opta_sdr(snr)

    def test_mmse_not_worse_than_ml(self):
        _, ml = measured(codec.spiral.rotation(2.0).build(), 13.0)
        _, mmse = measured(codec.spiral.rotation(2.0).mmse.build(), 13.0)
        assert mmse.sdr_unbiased >= ml.sdr_unbiased - (ml.sdr_ci_halfwidth + mmse.sdr_ci_halfwidth)

    def test_threshold_regime(self):
        _, report = measured(codec.spiral.rotation(8.0).build(), 0.0, n=100_000)
        assert report.threshold_event_rate > 0
        assert report.sdr_unbiased < linear_sdr(1.0)

    def test_threshold_events(self):
        spec = CodecSpec(CodecFamily.SPIRAL, delta=2.0)
        s = np.array([1.0, 1.0, -0.5])
        decoded = np.array([1.5, 1.9, -0.5])
        np.testing.assert_array_equal(threshold_events(spec, s, decoded), [False, True, False])

    def test_no_threshold_events_off_spiral(self):
        spec = CodecSpec(CodecFamily.REPETITION)
        assert not threshold_events(spec, np.array([0.0]), np.array([5.0])).any()

    def test_snr_universality(self):
        spec = calibrate(codec.spiral.rotation(2.0).build(), ChannelModel.from_db(15.0), 100_000,
                         np.random.default_rng(0))
        low, high = sdr_curve(spec, [ChannelModel.from_db(15.0), ChannelModel.from_db(20.0)],
                              200_000, np.random.default_rng(1))
        assert high.sdr_unbiased / low.sdr_unbiased >= 0.9 * (high.snr / low.snr)


class TestGridSearch:
    def test_degenerate_grid(self):
        ch = ChannelModel.from_db(20.0)
        spec, report = optimize_spiral(ch, [1.0], [2.0], 1.0, Decoder.ML, 10_000, np.random.default_rng(0))
        assert (spec.lam, spec.delta, spec.beta) == (1.0, 2.0, 1.0)
        assert report.n_samples == 10_000

    def test_points_in_grid_order(self):
        ch = ChannelModel.from_db(20.0)
        points = search_spiral_grid(ch, [0.5, 1.0], [2.0, 4.0], 1.0, Decoder.ML, 10_000, np.random.default_rng(0))
        assert [(p.spec.lam, p.spec.delta) for p in points] == [(0.5, 2.0), (0.5, 4.0), (1.0, 2.0), (1.0, 4.0)]

    def test_parallel_matches_serial(self):
        ch = ChannelModel.from_db(20.0)
        args = (ch, [1.0], [2.0, 4.0], 1.0, Decoder.ML, 10_000)
        serial = search_spiral_grid(*args, np.random.default_rng(3))
        parallel = search_spiral_grid(*args, np.random.default_rng(3), workers=2)
        assert [p.report for p in serial] == [p.report for p in parallel]

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            search_spiral_grid(ChannelModel(1.0), [], [1.0], 1.0, Decoder.ML, 10_000, np.random.default_rng(0))

    def test_tie_break(self):
        def point(lam, delta, sdr):
            spec = CodecSpec(CodecFamily.SPIRAL, lam=lam, delta=delta)
            return GridPoint(spec, SdrReport(1.0, sdr, 0.1, 0.0, 10_000, sdr, 0.0, 0.0))

        points = [point(1.0, 4.0, 9.0), point(1.0, 2.0, 9.0), point(0.5, 2.0, 9.0), point(0.5, 1.0, 5.0)]
        best = best_point(points)
        assert (best.spec.lam, best.spec.delta) == (0.5, 2.0)

    @pytest.mark.slow
    def test_optimised_spiral_beats_linear(self):
        ch = ChannelModel.from_db(13.0)
        _, report = optimize_spiral(ch, [0.5, 1.0], [1.0, 2.0, 4.0], 1.0, Decoder.ML, 100_000,
                                    np.random.default_rng(8))
        assert linear_sdr(ch.snr) < report.sdr_unbiased <= opta_sdr(ch.snr)
        assert not math.isnan(report.sdr_ci_halfwidth)
