"""
Decoder tests: ML against a brute-force dense-grid search, MMSE against
closed-form posterior means where they exist.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from jscc_lqg.codecs import CodecSpec, Decoder
from jscc_lqg.decoders import SEARCH_LIMIT, decode, decode_ml, decode_mmse, golden_section_min
from jscc_lqg.errors import UncalibratedCodecError
from jscc_lqg.maps import CodecFamily
from jscc_lqg.presets import BOUNDED_BETA, DEFAULT_DELTA_GRID, DEFAULT_LAMBDA_GRID


# ── Helpers ─────────────────────────────────────────────────────────

def spiral(lam=1.0, delta=2.0, beta=1.0, decoder=Decoder.ML, design_snr=None):
    spec = CodecSpec(CodecFamily.SPIRAL, lam=lam, delta=delta, beta=beta, decoder=decoder)
    return replace(spec, design_snr=design_snr).with_power_scale()


def brute_force_distance(spec, b, points=1_000_001):
    """Squared distance from b to the nearest of a dense set of curve points."""
    grid = np.linspace(-SEARCH_LIMIT, SEARCH_LIMIT, points)
    curve = spec.curve().points(grid)
    best = np.empty(b.shape[0])
    for i, row in enumerate(b):
        diff = curve - row
        best[i] = np.min(np.einsum("ij,ij->i", diff, diff))
    return best


def distance_to(spec, s, b):
    diff = spec.curve().points(s) - b
    return np.sum(diff * diff, axis=-1)


def noisy_blocks(spec, n, snr, seed):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal(n)
    return spec.curve().points(s) + rng.standard_normal((n, 2)) / math.sqrt(snr)


def random_instances(n, seed):
    """(spec, blocks) groups for n received blocks, each drawn at its own
    lambda, delta, beta and SNR across the search grids."""
    rng = np.random.default_rng(seed)
    lams = rng.choice(DEFAULT_LAMBDA_GRID, size=n)
    deltas = rng.choice(DEFAULT_DELTA_GRID, size=n)
    betas = rng.choice([1.0, BOUNDED_BETA], size=n)
    snrs = 10 ** (rng.uniform(0.0, 30.0, size=n) / 10)
    s = rng.standard_normal(n)
    noise = rng.standard_normal((n, 2))
    groups = {}
    for i in range(n):
        groups.setdefault((lams[i], deltas[i], betas[i]), []).append(i)
    for (lam, delta, beta), idx in groups.items():
        spec = spiral(lam, delta, beta)
        idx = np.array(idx)
        yield spec, spec.curve().points(s[idx]) + noise[idx] / np.sqrt(snrs[idx])[:, np.newaxis]


# ── Golden section ──────────────────────────────────────────────────

class TestGoldenSection:
    def test_quadratic(self):
        lo, hi = np.array([-1.0, 0.0]), np.array([2.0, 5.0])
        out = golden_section_min(lambda x: (x - np.array([0.3, 4.2])) ** 2, lo, hi, 1e-9)
        np.testing.assert_allclose(out, [0.3, 4.2], atol=1e-8)

    def test_boundary_minimum(self):
        out = golden_section_min(lambda x: x, np.array([1.0]), np.array([2.0]), 1e-8)
        assert out[0] == pytest.approx(1.0, abs=1e-7)

    def test_already_narrow(self):
        out = golden_section_min(lambda x: x * x, np.array([0.5]), np.array([0.5 + 1e-9]), 1e-6)
        assert out[0] == pytest.approx(0.5)


# ── ML ──────────────────────────────────────────────────────────────

class TestMlClosedForm:
    def test_linear(self):
        spec = CodecSpec(CodecFamily.LINEAR).with_power_scale()
        np.testing.assert_allclose(decode_ml(spec, np.array([[0.5], [-2.0]])).value, [0.5, -2.0])

    def test_repetition_averages(self):
        spec = CodecSpec(CodecFamily.REPETITION).with_power_scale()
        assert decode_ml(spec, np.array([1.0, 3.0])).value == pytest.approx(2.0)

    def test_closed_form_is_not_clipped(self):
        spec = CodecSpec(CodecFamily.LINEAR).with_power_scale()
        assert decode_ml(spec, np.array([[100.0]])).value[0] == pytest.approx(100.0)
        repetition = CodecSpec(CodecFamily.REPETITION).with_power_scale()
        assert decode_ml(repetition, np.array([-12.0, -12.0])).value == pytest.approx(-12.0)

    def test_estimate_is_biased(self):
        spec = CodecSpec(CodecFamily.LINEAR).with_power_scale()
        assert decode_ml(spec, np.array([[0.1]])).biased


class TestMlSpiral:
    def test_noiseless_points_decode_exactly(self):
        spec = spiral(lam=0.5, delta=4.0)
        s = np.array([-3.1, -0.7, 0.0, 0.2, 1.0, 2.5])
        np.testing.assert_allclose(decode_ml(spec, spec.curve().points(s)).value, s, atol=1e-5)

    def test_single_block_gives_scalar(self):
        spec = spiral()
        value = decode_ml(spec, spec.curve().points(1.25)).value
        assert np.ndim(value) == 0
        assert value == pytest.approx(1.25, abs=1e-5)

    @pytest.mark.parametrize(
        "lam, delta, beta, snr",
        [(1.0, 2.0, 1.0, 20.0), (0.5, 4.0, 1.0, 5.0), (1.0, 3.0, 1.2, 100.0)],
        ids=["regular", "stretched", "bounded"],
    )
    def test_matches_brute_force(self, lam, delta, beta, snr):
        spec = spiral(lam, delta, beta)
        b = noisy_blocks(spec, 100, snr, seed=5)
        decoded = decode_ml(spec, b).value
        np.testing.assert_array_less(distance_to(spec, decoded, b), brute_force_distance(spec, b) + 1e-7)

    @pytest.mark.parametrize("instances, seed", [
        pytest.param(100, 7, id="hundred"),
        pytest.param(1000, 8, id="thousand", marks=pytest.mark.slow),
    ])
    def test_random_operating_points_match_brute_force(self, instances, seed):
        for spec, b in random_instances(instances, seed):
            decoded = decode_ml(spec, b).value
            np.testing.assert_array_less(distance_to(spec, decoded, b), brute_force_distance(spec, b) + 1e-7)

    def test_wrong_block_width(self):
        with pytest.raises(ValueError, match="channel uses"):
            decode_ml(spiral(), np.zeros((3, 1)))

    def test_uncalibrated(self):
        with pytest.raises(UncalibratedCodecError):
            decode_ml(CodecSpec(CodecFamily.SPIRAL), np.zeros(2))


# ── MMSE ────────────────────────────────────────────────────────────

class TestMmse:
    @pytest.mark.parametrize("snr", [0.5, 4.0, 50.0])
    def test_linear_posterior_mean(self, snr):
        spec = CodecSpec(CodecFamily.LINEAR, decoder=Decoder.MMSE, power_scale=1.0, design_snr=snr)
        b = np.linspace(-3.0, 3.0, 13)[:, np.newaxis]
        np.testing.assert_allclose(decode_mmse(spec, b).value, b[:, 0] * snr / (1.0 + snr), atol=1e-6)

    def test_repetition_posterior_mean(self):
        snr = 3.0
        spec = CodecSpec(CodecFamily.REPETITION, decoder=Decoder.MMSE, power_scale=1.0, design_snr=snr)
        b = np.array([[1.0, 0.0], [-0.5, -1.5], [2.0, 2.5]])
        expected = b.sum(axis=1) * snr / (1.0 + 2.0 * snr)
        np.testing.assert_allclose(decode_mmse(spec, b).value, expected, atol=1e-6)

    def test_spiral_near_noiseless(self):
        spec = spiral(decoder=Decoder.MMSE, design_snr=1000.0)
        s = np.array([-2.0, -1.0, 0.5, 1.0, 1.5, 2.0])
        np.testing.assert_allclose(decode_mmse(spec, spec.curve().points(s)).value, s, atol=1e-3)

    def test_underflow_falls_back_to_ml(self):
        spec = spiral(decoder=Decoder.MMSE, design_snr=1000.0)
        b = np.array([[1000.0, 1000.0], [0.0, 0.0]])
        est = decode_mmse(spec, b)
        np.testing.assert_array_equal(est.fallback, [True, False])
        assert est.value[0] == pytest.approx(decode_ml(spec, b[:1]).value[0])

    def test_needs_design_snr(self):
        with pytest.raises(UncalibratedCodecError):
            decode_mmse(spiral(decoder=Decoder.MMSE), np.zeros((1, 2)))

    def test_single_block_gives_scalar(self):
        spec = CodecSpec(CodecFamily.REPETITION, decoder=Decoder.MMSE, power_scale=1.0, design_snr=1.0)
        assert np.ndim(decode_mmse(spec, np.array([1.0, 1.0])).value) == 0


class TestDispatch:
    def test_decode_uses_spec_decoder(self):
        spec = CodecSpec(CodecFamily.LINEAR, decoder=Decoder.MMSE, power_scale=1.0, design_snr=1.0)
        assert decode(spec, np.array([[2.0]])).value[0] == pytest.approx(1.0, abs=1e-6)

    def test_decode_ml_default(self):
        spec = CodecSpec(CodecFamily.LINEAR, power_scale=1.0)
        assert decode(spec, np.array([[2.0]])).value[0] == 2.0
