from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import stats

from jscc_lqg.channel import ChannelModel
from jscc_lqg.codecs import (
    MIN_CALIBRATION_SAMPLES,
    CodecSpec,
    Decoder,
    calibrate,
    signal_to_distortion,
)
from jscc_lqg.errors import SampleSizeError, UncalibratedCodecError
from jscc_lqg.link import run_link
from jscc_lqg.maps import CodecFamily, stretch
from jscc_lqg.parallel import map_ordered

logger = logging.getLogger(__name__)

MIN_MEASURE_SAMPLES = 10**4
BATCHES = 100


@dataclass(frozen=True)
class SdrReport:
    snr: float
    sdr_unbiased: float
    sdr_ci_halfwidth: float
    threshold_event_rate: float
    n_samples: int
    sdr_biased: float
    orthogonality: float
    orthogonality_stderr: float
    fallback_rate: float = 0.0


def opta_sdr(snr: float, kc: int = 2, ks: int = 1) -> float:
    """(1 + snr)^(kc/ks) - 1, the SDR no scheme can beat."""
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    return (1.0 + snr) ** (kc / ks) - 1.0


def linear_sdr(snr: float) -> float:
    """Unbiased SDR of sending the source as is over both of two channel uses."""
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    return 2.0 * snr


def threshold_events(spec: CodecSpec, s: np.ndarray, decoded: np.ndarray) -> np.ndarray:
    """Decodes that landed on another spiral arm than the one sent."""
    if spec.family is not CodecFamily.SPIRAL:
        return np.zeros(np.shape(s), dtype=bool)
    half_spacing = 0.5 * math.pi / spec.delta
    return np.abs(stretch(s, spec.lam) - stretch(decoded, spec.lam)) > half_spacing


def _require_operating_point(spec: CodecSpec, ch: ChannelModel) -> None:
    if not spec.calibrated:
        raise UncalibratedCodecError("measure a calibrated codec")
    if spec.design_snr != ch.snr:
        raise ValueError(f"codec calibrated at snr={spec.design_snr}, channel has snr={ch.snr}")


def measure_sdr(spec: CodecSpec, ch: ChannelModel, n: int, rng: np.random.Generator) -> SdrReport:
    """Unbiased SDR P_S / D over n unit-variance Gaussian samples.

    The confidence interval is 95% over BATCHES batch means of the per-batch SDR.
    """
    if n < MIN_MEASURE_SAMPLES:
        raise SampleSizeError(f"measure_sdr needs at least {MIN_MEASURE_SAMPLES} samples, got {n}")
    _require_operating_point(spec, ch)

    s = rng.standard_normal(n)
    outcome = run_link(spec, ch, s, rng)
    error = s - outcome.estimate.value
    biased_error = s - outcome.raw.value
    power = float(np.dot(s, s))

    batch_power = np.array([np.dot(part, part) for part in np.array_split(s, BATCHES)])
    batch_distortion = np.array([np.dot(part, part) for part in np.array_split(error, BATCHES)])
    with np.errstate(divide="ignore"):
        batch_sdr = batch_power / batch_distortion
    halfwidth = float(stats.t.ppf(0.975, BATCHES - 1) * np.std(batch_sdr, ddof=1) / math.sqrt(BATCHES))

    cross = s * error
    fallback = outcome.raw.fallback
    return SdrReport(
        snr=ch.snr,
        sdr_unbiased=signal_to_distortion(power, float(np.dot(error, error))),
        sdr_ci_halfwidth=halfwidth,
        threshold_event_rate=float(np.mean(threshold_events(spec, s, outcome.raw.value))),
        n_samples=n,
        sdr_biased=signal_to_distortion(power, float(np.dot(biased_error, biased_error))),
        orthogonality=float(np.mean(cross)),
        orthogonality_stderr=float(np.std(cross, ddof=1) / math.sqrt(n)),
        fallback_rate=float(np.mean(fallback)) if fallback is not None else 0.0,
    )


def conditional_mse(
    spec: CodecSpec,
    ch: ChannelModel,
    magnitudes: Sequence[float],
    n_per: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mean squared CUBE error given |s| = m, with a random sign, for each m."""
    if spec.cube_factor is None:
        raise UncalibratedCodecError("conditional distortion needs a cube factor")
    out = np.empty(len(magnitudes))
    for i, m in enumerate(magnitudes):
        s = m * rng.choice([-1.0, 1.0], size=n_per)
        error = s - run_link(spec, ch, s, rng).estimate.value
        out[i] = float(np.mean(error * error))
    return out


@dataclass(frozen=True)
class GridPoint:
    spec: CodecSpec
    report: SdrReport


def _grid_point(task: tuple) -> GridPoint:
    lam, delta, beta, decoder, ch, n, rng = task
    cal_rng, measure_rng = rng.spawn(2)
    spec = CodecSpec(CodecFamily.SPIRAL, lam=lam, delta=delta, beta=beta, decoder=decoder)
    spec = calibrate(spec, ch, max(n, MIN_CALIBRATION_SAMPLES), cal_rng)
    report = measure_sdr(spec, ch, n, measure_rng)
    logger.debug("snr=%g lambda=%g delta=%g beta=%g: sdr=%.4g", ch.snr, lam, delta, beta, report.sdr_unbiased)
    return GridPoint(spec, report)


def search_spiral_grid(
    ch: ChannelModel,
    lambda_grid: Sequence[float],
    delta_grid: Sequence[float],
    beta: float,
    decoder: Decoder,
    n: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> list[GridPoint]:
    """Calibrates and measures every (lambda, delta); one spawned stream per point."""
    if not lambda_grid or not delta_grid:
        raise ValueError("lambda and delta grids must be nonempty")
    combos = [(lam, delta) for lam in lambda_grid for delta in delta_grid]
    streams = rng.spawn(len(combos))
    tasks = [(lam, delta, beta, decoder, ch, n, r) for (lam, delta), r in zip(combos, streams)]
    return map_ordered(_grid_point, tasks, workers)


def best_point(points: Sequence[GridPoint]) -> GridPoint:
    """Highest unbiased SDR; ties go to the smallest delta, then the smallest lambda."""
    return min(points, key=lambda p: (-p.report.sdr_unbiased, p.spec.delta, p.spec.lam))


def optimize_spiral(
    ch: ChannelModel,
    lambda_grid: Sequence[float],
    delta_grid: Sequence[float],
    beta: float,
    decoder: Decoder,
    n: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> tuple[CodecSpec, SdrReport]:
    best = best_point(search_spiral_grid(ch, lambda_grid, delta_grid, beta, decoder, n, rng, workers))
    logger.info(
        "snr=%g best spiral lambda=%g delta=%g beta=%g: sdr=%.4g",
        ch.snr, best.spec.lam, best.spec.delta, beta, best.report.sdr_unbiased,
    )
    return best.spec, best.report


def sdr_curve(
    spec: CodecSpec,
    channels: Sequence[ChannelModel],
    n: int,
    rng: np.random.Generator,
) -> list[SdrReport]:
    """Fixed (lambda, delta, beta) across SNRs; only the CUBE factor and SDR0 are recalibrated."""
    reports = []
    for ch, stream in zip(channels, rng.spawn(len(channels))):
        cal_rng, measure_rng = stream.spawn(2)
        base = replace(spec, power_scale=None, cube_factor=None, sdr0=None, sdr0_worst=None, design_snr=None)
        point = calibrate(base, ch, max(n, MIN_CALIBRATION_SAMPLES), cal_rng)
        reports.append(measure_sdr(point, ch, n, measure_rng))
    return reports
