from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from jscc_lqg.channel import ChannelModel, SymbolBlock
from jscc_lqg.errors import SampleSizeError, UncalibratedCodecError
from jscc_lqg.maps import (
    CHANNEL_USES,
    ENERGY_FACTOR,
    CodecFamily,
    Curve,
    LinearMap,
    RepetitionMap,
    SpiralMap,
    gaussian_abs_moment,
)

logger = logging.getLogger(__name__)

MIN_CALIBRATION_SAMPLES = 10**5
WORST_CASE_MAGNITUDES = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)


class Decoder(Enum):
    ML = "ml"
    MMSE = "mmse"


@dataclass(frozen=True)
class CodecSpec:
    """A 1:kc analog codec and, once calibrated, its operating point.

    ``power_scale`` is the constant c that puts the per-use power at 1,
    ``cube_factor`` turns the decoder output into a CUBE and ``sdr0`` is the
    measured unbiased SDR at ``design_snr``. ``sdr0_worst`` is the smallest
    conditional SDR over |s| and is only measured for beta > 1.
    """

    family: CodecFamily
    lam: float = 1.0
    delta: float = 1.0
    beta: float = 1.0
    decoder: Decoder = Decoder.ML
    ks: int = 1
    power_scale: float | None = None
    cube_factor: float | None = None
    sdr0: float | None = None
    sdr0_worst: float | None = None
    design_snr: float | None = None

    def __post_init__(self) -> None:
        if self.ks != 1:
            raise ValueError("only one source sample per block is supported")
        if self.family is not CodecFamily.SPIRAL and (self.lam != 1.0 or self.beta != 1.0):
            raise ValueError(f"{self.family.value} codec has lambda = beta = 1")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.beta >= 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if self.power_scale is not None and not self.power_scale > 0:
            raise ValueError(f"power scale must be positive, got {self.power_scale}")

    @property
    def kc(self) -> int:
        return CHANNEL_USES[self.family]

    @property
    def calibrated(self) -> bool:
        return self.power_scale is not None and self.cube_factor is not None and self.sdr0 is not None

    @property
    def loop_sdr(self) -> float:
        """SDR0 to schedule a control loop with: worst case for bounded codecs."""
        if self.sdr0 is None:
            raise UncalibratedCodecError("codec has no measured sdr0; calibrate it first")
        if self.beta > 1 and self.sdr0_worst is not None:
            return min(self.sdr0, self.sdr0_worst)
        return self.sdr0

    def curve(self) -> Curve:
        if self.power_scale is None:
            raise UncalibratedCodecError("codec has no power scale; calibrate it first")
        if self.family is CodecFamily.LINEAR:
            return LinearMap(self.power_scale)
        if self.family is CodecFamily.REPETITION:
            return RepetitionMap(self.power_scale)
        return SpiralMap(self.power_scale, self.lam, self.delta, self.beta)

    def with_power_scale(self) -> CodecSpec:
        """Sets c analytically so a unit-variance Gaussian source uses unit power per channel use."""
        moment = gaussian_abs_moment(2.0 * self.lam * self.beta)
        scale = float(np.sqrt(self.kc / (ENERGY_FACTOR[self.family] * moment)))
        return replace(self, power_scale=scale)


@dataclass(frozen=True)
class Estimate:
    """Decoder output in source units; ``fallback`` marks MMSE rows decoded by ML."""

    value: np.ndarray
    biased: bool = True
    fallback: np.ndarray | None = None


def signal_to_distortion(power: float, distortion: float) -> float:
    """power / distortion, infinite for an error-free reconstruction."""
    return power / distortion if distortion > 0 else math.inf


def encode(spec: CodecSpec, s: np.ndarray | float) -> SymbolBlock:
    return spec.curve().points(np.asarray(s, dtype=float))


def cube_correct(spec: CodecSpec, est: Estimate) -> Estimate:
    if spec.cube_factor is None:
        raise UncalibratedCodecError("codec has no cube factor; calibrate it first")
    if not est.biased:
        raise ValueError("estimate is already correlation-sense unbiased")
    return Estimate(spec.cube_factor * np.asarray(est.value), biased=False, fallback=est.fallback)


def calibrate(spec: CodecSpec, ch: ChannelModel, n: int, rng: np.random.Generator) -> CodecSpec:
    """Power scale from Gaussian moments, CUBE factor and SDR0 by Monte Carlo.

    The CUBE factor is the ratio sum(s^2) / sum(s * s_hat) over the same
    ``n`` unit-variance samples that give sdr0, so the calibration sample is
    exactly orthogonal. Bounded codecs (beta > 1) also get the worst
    conditional SDR over |s| in WORST_CASE_MAGNITUDES.
    """
    from jscc_lqg.link import run_link
    from jscc_lqg.sdr_lab import conditional_mse

    if n < MIN_CALIBRATION_SAMPLES:
        raise SampleSizeError(f"calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {n}")

    spec = replace(spec.with_power_scale(), design_snr=ch.snr, cube_factor=None, sdr0=None, sdr0_worst=None)
    source_rng, worst_rng = rng.spawn(2)

    s = source_rng.standard_normal(n)
    outcome = run_link(spec, ch, s, source_rng)
    raw = outcome.raw.value
    power = float(np.dot(s, s))
    cube_factor = power / float(np.dot(s, raw))
    error = s - cube_factor * raw
    sdr0 = signal_to_distortion(power, float(np.dot(error, error)))
    spec = replace(spec, cube_factor=cube_factor, sdr0=sdr0)

    if spec.beta > 1:
        per_magnitude = max(n // len(WORST_CASE_MAGNITUDES), 1)
        mse = conditional_mse(spec, ch, WORST_CASE_MAGNITUDES, per_magnitude, worst_rng)
        spec = replace(spec, sdr0_worst=signal_to_distortion(1.0, float(np.max(mse))))

    logger.info(
        "calibrated %s codec (lambda=%g, delta=%g, beta=%g, %s) at snr=%g: c=%.6g cube=%.6g sdr0=%.6g worst=%s",
        spec.family.value, spec.lam, spec.delta, spec.beta, spec.decoder.value,
        ch.snr, spec.power_scale, cube_factor, sdr0, spec.sdr0_worst,
    )
    return spec
