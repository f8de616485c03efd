"""Experiment runners behind the CLI subcommands and the figure presets.

Every runner returns ``(rows, columns)``; rows echo the parameters they
were produced with so each CSV line stands on its own.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from jscc_lqg.bounds import max_stable_alpha, thm1_upper, thm2_lower
from jscc_lqg.builder import CodecBuilder
from jscc_lqg.channel import ChannelModel
from jscc_lqg.codecs import MIN_CALIBRATION_SAMPLES, CodecSpec, Decoder, calibrate
from jscc_lqg.config import ExperimentConfig
from jscc_lqg.control_loop import LqgWeights, PlantParams, build_schedule, run_trials
from jscc_lqg.csv_output import to_db
from jscc_lqg.maps import CodecFamily
from jscc_lqg.sdr_lab import (
    best_point,
    linear_sdr,
    measure_sdr,
    opta_sdr,
    search_spiral_grid,
)
from jscc_lqg.streams import RandomStreams

logger = logging.getLogger(__name__)

Rows = list[dict[str, Any]]

DEFAULT_LAMBDA_GRID = (0.5, 1.0)
DEFAULT_DELTA_GRID = tuple(float(d) for d in np.geomspace(0.25, 16.0, 13))
BOUNDED_BETA = 1.2

FIG3_SNR_DB = tuple(float(s) for s in range(0, 31, 3))
FIG4_SNRS = (2.0, 4.0)
FIG4_PLANT = PlantParams(alpha=2.0, w_var=1.0, v_var=1.0, p0=1.0)
FIG5_SNR_DB = tuple(float(s) for s in range(0, 21, 2))
FIG5_PLANT = PlantParams(alpha=3.0, w_var=1.0, v_var=0.0, p0=1.0)


@dataclass(frozen=True)
class SpiralVariant:
    name: str
    lambda_grid: tuple[float, ...]
    beta: float


FIG3_VARIANTS = (
    SpiralVariant("stretched", (0.5,), 1.0),
    SpiralVariant("regular", (1.0,), 1.0),
    SpiralVariant("bounded", DEFAULT_LAMBDA_GRID, BOUNDED_BETA),
)


def codec_from_config(cfg: ExperimentConfig) -> CodecSpec:
    builder = getattr(CodecBuilder(), cfg.codec)
    if cfg.codec == "spiral":
        builder = builder.stretch(cfg.lam).rotation(cfg.delta).bounded(cfg.beta)
    return getattr(builder, cfg.decoder).build()


def plant_from_config(cfg: ExperimentConfig) -> PlantParams:
    return PlantParams(alpha=cfg.alpha, w_var=cfg.w, v_var=cfg.v, p0=cfg.p0)


def weights_from_config(cfg: ExperimentConfig) -> LqgWeights:
    return LqgWeights(q=cfg.q, r=cfg.r, f=cfg.f, horizon=cfg.horizon)


def _calibration_samples(cfg: ExperimentConfig) -> int:
    return max(cfg.samples, MIN_CALIBRATION_SAMPLES)


def _codec_columns(spec: CodecSpec) -> dict[str, Any]:
    return {
        "family": spec.family.value,
        "lambda": spec.lam,
        "delta": spec.delta if spec.family is CodecFamily.SPIRAL else None,
        "beta": spec.beta,
        "decoder": spec.decoder.value,
    }


def _plant_columns(plant: PlantParams, weights: LqgWeights) -> dict[str, Any]:
    return {
        "alpha": plant.alpha, "w": plant.w_var, "v": plant.v_var, "p0": plant.p0,
        "q": weights.q, "r": weights.r, "f": weights.f, "horizon": weights.horizon,
    }


# ── sdr ─────────────────────────────────────────────────────────────

SDR_COLUMNS = [
    "snr_db", "family", "lambda", "delta", "beta", "decoder",
    "sdr_db", "sdr_biased_db", "sdr_ci_halfwidth", "sdr_linear_db", "sdr_opta_db",
    "threshold_rate", "power_scale", "cube_factor", "sdr0_worst_db", "n", "seed",
]


def run_sdr(cfg: ExperimentConfig) -> tuple[Rows, list[str]]:
    streams = RandomStreams(cfg.seed)
    base = codec_from_config(cfg)
    rows = []
    for i, snr_db in enumerate(cfg.snr_db):
        ch = ChannelModel.from_db(snr_db)
        spec = calibrate(base, ch, _calibration_samples(cfg), streams.stream("calibration", i))
        report = measure_sdr(spec, ch, cfg.samples, streams.stream("source", i))
        rows.append({
            "snr_db": snr_db,
            **_codec_columns(spec),
            "sdr_db": to_db(report.sdr_unbiased),
            "sdr_biased_db": to_db(report.sdr_biased),
            "sdr_ci_halfwidth": report.sdr_ci_halfwidth,
            "sdr_linear_db": to_db(spec.kc * ch.snr),
            "sdr_opta_db": to_db(opta_sdr(ch.snr, spec.kc, spec.ks)),
            "threshold_rate": report.threshold_event_rate,
            "power_scale": spec.power_scale,
            "cube_factor": spec.cube_factor,
            "sdr0_worst_db": to_db(spec.sdr0_worst) if spec.sdr0_worst is not None else None,
            "n": report.n_samples,
            "seed": cfg.seed,
        })
    return rows, SDR_COLUMNS


# ── loop ────────────────────────────────────────────────────────────

TRACE_COLUMNS = [
    "snr_db", "t", "x", "y", "u", "s", "s_hat", "x_hat_enc", "x_hat_dec", "stage_cost",
    "alpha", "w", "v", "p0", "q", "r", "f", "horizon", "family", "lambda", "delta", "beta", "decoder", "seed",
]
SUMMARY_COLUMNS = [
    "snr_db", "trial", "avg_stage_cost", "diverged", "cost_ci_halfwidth", "sdr0", "j_upper", "j_lower",
    "alpha", "w", "v", "p0", "q", "r", "f", "horizon", "steady",
    "family", "lambda", "delta", "beta", "decoder", "seed",
]


def run_loop(cfg: ExperimentConfig) -> tuple[Rows, list[str], Rows, list[str]]:
    """Per-step trace of the first trial and one summary row per trial."""
    streams = RandomStreams(cfg.seed)
    plant, weights = plant_from_config(cfg), weights_from_config(cfg)
    base = codec_from_config(cfg)
    trace_rows: Rows = []
    summary_rows: Rows = []
    for i, snr_db in enumerate(cfg.snr_db):
        ch = ChannelModel.from_db(snr_db)
        spec = calibrate(base, ch, _calibration_samples(cfg), streams.stream("calibration", i))
        schedule = build_schedule(plant, weights, spec.loop_sdr, steady=cfg.steady)
        summary = run_trials(
            plant, weights, spec, ch, schedule, streams.stream("loop", i),
            trials=cfg.trials, workers=cfg.workers, keep_traces=True,
        )
        echo = {**_plant_columns(plant, weights), **_codec_columns(spec), "seed": cfg.seed}
        first = summary.results[0]
        for t in range(first.stage_costs.size):
            trace_rows.append({
                "snr_db": snr_db, "t": t + 1,
                "x": first.state_trace[t], "y": first.observation_trace[t], "u": first.control_trace[t],
                "s": first.source_trace[t], "s_hat": first.source_estimate_trace[t],
                "x_hat_enc": first.encoder_estimate_trace[t], "x_hat_dec": first.decoder_estimate_trace[t],
                "stage_cost": first.stage_costs[t], **echo,
            })
        upper = thm1_upper(plant, weights, spec.loop_sdr)
        lower = thm2_lower(plant, weights, ch.snr, spec.kc, spec.ks)
        for trial, result in enumerate(summary.results):
            summary_rows.append({
                "snr_db": snr_db, "trial": trial, "avg_stage_cost": result.avg_stage_cost,
                "diverged": result.diverged, "cost_ci_halfwidth": result.cost_ci_halfwidth,
                "sdr0": spec.loop_sdr, "j_upper": upper, "j_lower": lower, "steady": cfg.steady, **echo,
            })
        logger.info("snr=%g dB: mean cost %s over %d trials, %d diverged",
                    snr_db, summary.mean_cost, cfg.trials, summary.diverged)
    return trace_rows, TRACE_COLUMNS, summary_rows, SUMMARY_COLUMNS


# ── bounds ──────────────────────────────────────────────────────────

BOUNDS_COLUMNS = [
    "snr_db", "j_lower", "j_upper_linear", "j_upper_spiral", "alpha_max_opta", "alpha_max_linear",
    "sdr0_spiral", "alpha", "w", "v", "p0", "q", "r", "f", "horizon",
    "family", "lambda", "delta", "beta", "decoder", "seed",
]


def run_bounds(cfg: ExperimentConfig) -> tuple[Rows, list[str]]:
    """Closed-form bounds; the codec column is calibrated to give its SDR0."""
    streams = RandomStreams(cfg.seed)
    plant, weights = plant_from_config(cfg), weights_from_config(cfg)
    base = codec_from_config(cfg)
    rows = []
    for i, snr_db in enumerate(cfg.snr_db):
        ch = ChannelModel.from_db(snr_db)
        spec = calibrate(base, ch, _calibration_samples(cfg), streams.stream("calibration", i))
        rows.append({
            "snr_db": snr_db,
            "j_lower": thm2_lower(plant, weights, ch.snr, 2, 1),
            "j_upper_linear": thm1_upper(plant, weights, linear_sdr(ch.snr)),
            "j_upper_spiral": thm1_upper(plant, weights, spec.loop_sdr),
            "alpha_max_opta": max_stable_alpha(opta_sdr(ch.snr, 2, 1)),
            "alpha_max_linear": max_stable_alpha(linear_sdr(ch.snr)),
            "sdr0_spiral": spec.loop_sdr,
            **_plant_columns(plant, weights),
            **_codec_columns(spec),
            "seed": cfg.seed,
        })
    return rows, BOUNDS_COLUMNS


# ── preset fig3: SDR of optimised spirals ───────────────────────────

FIG3_COLUMNS = [
    "snr_db", "family", "variant", "lambda", "delta", "beta", "decoder",
    "sdr_db", "sdr_ci_halfwidth", "sdr_linear_db", "sdr_opta_db", "threshold_rate", "n", "selected", "seed",
]


def preset_fig3(
    snrs_db: Sequence[float],
    decoder: Decoder,
    n: int,
    seed: int,
    workers: int = 1,
    all_points: bool = False,
    delta_grid: Sequence[float] = DEFAULT_DELTA_GRID,
) -> Rows:
    streams = RandomStreams(seed)
    rows = []
    for i, snr_db in enumerate(snrs_db):
        ch = ChannelModel.from_db(snr_db)
        common = {
            "snr_db": snr_db,
            "sdr_linear_db": to_db(linear_sdr(ch.snr)),
            "sdr_opta_db": to_db(opta_sdr(ch.snr, 2, 1)),
            "seed": seed,
        }
        for j, variant in enumerate(FIG3_VARIANTS):
            points = search_spiral_grid(
                ch, variant.lambda_grid, delta_grid, variant.beta, decoder, n,
                streams.stream("fig3", i, j), workers,
            )
            best = best_point(points)
            for point in points if all_points else [best]:
                rows.append({
                    **common,
                    **_codec_columns(point.spec),
                    "variant": variant.name,
                    "sdr_db": to_db(point.report.sdr_unbiased),
                    "sdr_ci_halfwidth": point.report.sdr_ci_halfwidth,
                    "threshold_rate": point.report.threshold_event_rate,
                    "n": n,
                    "selected": point is best,
                })
            logger.info("fig3 snr=%g dB %s: %.3f dB", snr_db, variant.name, to_db(best.report.sdr_unbiased))

        repetition = CodecSpec(CodecFamily.REPETITION, decoder=decoder)
        repetition = calibrate(repetition, ch, max(n, MIN_CALIBRATION_SAMPLES), streams.stream("fig3-repetition", i))
        report = measure_sdr(repetition, ch, n, streams.stream("fig3-repetition-measure", i))
        rows.append({
            **common,
            **_codec_columns(repetition),
            "variant": "repetition",
            "sdr_db": to_db(report.sdr_unbiased),
            "sdr_ci_halfwidth": report.sdr_ci_halfwidth,
            "threshold_rate": report.threshold_event_rate,
            "n": n,
            "selected": True,
        })
    return rows


# ── preset fig4: rate-matched loop, stabilizable vs not ─────────────

FIG4_COLUMNS = [
    "snr", "snr_db", "t", "j_single", "j_ensemble", "j_theory", "trials",
    "alpha", "w", "v", "p0", "q", "r", "f", "horizon", "seed",
]


def preset_fig4(horizon: int, trials: int, n: int, seed: int, workers: int = 1) -> Rows:
    """Running normalised cost J_t of one run and of the ensemble, for SNR 2 and 4."""
    streams = RandomStreams(seed)
    plant = FIG4_PLANT
    weights = LqgWeights(q=1.0, r=1.0, f=1.0, horizon=horizon)
    rows = []
    for i, snr in enumerate(FIG4_SNRS):
        ch = ChannelModel(snr)
        spec = calibrate(CodecSpec(CodecFamily.LINEAR), ch, max(n, MIN_CALIBRATION_SAMPLES),
                         streams.stream("calibration", i))
        schedule = build_schedule(plant, weights, spec.loop_sdr)
        summary = run_trials(plant, weights, spec, ch, schedule, streams.stream("loop", i), trials, workers)

        single = _running_with_divergence(summary.results[0], horizon)
        stacked = np.array([_padded_costs(r, horizon) for r in summary.results])
        with np.errstate(invalid="ignore"):
            ensemble = np.cumsum(stacked.mean(axis=0)) / np.arange(1, horizon + 1)
        theory = thm1_upper(plant, weights, snr)
        echo = {**_plant_columns(plant, weights), "seed": seed, "trials": trials}
        for t in range(horizon):
            rows.append({
                "snr": snr, "snr_db": ch.snr_db, "t": t + 1,
                "j_single": single[t], "j_ensemble": ensemble[t], "j_theory": theory, **echo,
            })
    return rows


def _padded_costs(result, horizon: int) -> np.ndarray:
    costs = np.full(horizon, math.inf)
    if result.diverged:
        costs[: result.steps] = result.stage_costs[: result.steps]
    else:
        costs[: result.stage_costs.size] = result.stage_costs
    return costs


def _running_with_divergence(result, horizon: int) -> np.ndarray:
    costs = _padded_costs(result, horizon)
    return np.cumsum(costs) / np.arange(1, horizon + 1)


# ── preset fig5: bounds and the spiral loop for a fully observed plant ──

FIG5_COLUMNS = [
    "snr_db", "snr", "j_lower", "j_upper_repetition", "j_upper_spiral", "j_sim_spiral", "j_sim_ci", "diverged",
    "sdr0_spiral_db", "sdr_spiral_mean_db", "lambda", "delta", "beta", "decoder",
    "alpha", "w", "v", "p0", "q", "r", "f", "horizon", "trials", "seed",
]


def preset_fig5(
    snrs_db: Sequence[float],
    decoder: Decoder,
    beta: float,
    horizon: int,
    trials: int,
    n: int,
    seed: int,
    workers: int = 1,
    delta_grid: Sequence[float] = DEFAULT_DELTA_GRID,
) -> Rows:
    """Bounds and simulated steady cost of the best spiral per SNR.

    ``j_sim_spiral`` is ``diverges`` if any trial diverged; ``diverged``
    counts them and is empty where the loop was not simulated because the
    upper bound is already infinite.
    """
    streams = RandomStreams(seed)
    plant = FIG5_PLANT
    weights = LqgWeights(q=1.0, r=0.0, f=1.0, horizon=horizon)
    rows = []
    for i, snr_db in enumerate(snrs_db):
        ch = ChannelModel.from_db(snr_db)
        points = search_spiral_grid(ch, DEFAULT_LAMBDA_GRID, delta_grid, beta, decoder, n,
                                    streams.stream("fig5-grid", i), workers)
        spec = best_point(points).spec
        sdr0 = spec.loop_sdr
        upper = thm1_upper(plant, weights, sdr0)
        simulated, ci, diverged = math.inf, math.nan, None
        if upper < math.inf:
            schedule = build_schedule(plant, weights, sdr0, steady=True)
            summary = run_trials(plant, weights, spec, ch, schedule, streams.stream("fig5-loop", i),
                                 trials, workers)
            simulated, ci, diverged = summary.ensemble_cost, summary.ci_halfwidth, summary.diverged
        rows.append({
            "snr_db": snr_db, "snr": ch.snr,
            "j_lower": thm2_lower(plant, weights, ch.snr, 2, 1),
            "j_upper_repetition": thm1_upper(plant, weights, linear_sdr(ch.snr)),
            "j_upper_spiral": upper,
            "j_sim_spiral": simulated,
            "j_sim_ci": ci,
            "diverged": diverged,
            "sdr0_spiral_db": to_db(sdr0),
            "sdr_spiral_mean_db": to_db(spec.sdr0),
            **_codec_columns(spec),
            **_plant_columns(plant, weights),
            "trials": trials,
            "seed": seed,
        })
        logger.info("fig5 snr=%g dB: lower=%s repetition=%s spiral=%s sim=%s",
                    snr_db, rows[-1]["j_lower"], rows[-1]["j_upper_repetition"], upper, simulated)
    return rows


def run_preset(cfg: ExperimentConfig, snrs_given: bool) -> tuple[Rows, list[str]]:
    decoder = Decoder(cfg.decoder)
    if cfg.preset == "fig3":
        snrs = cfg.snr_db if snrs_given else FIG3_SNR_DB
        return preset_fig3(snrs, decoder, cfg.samples, cfg.seed, cfg.workers, cfg.all_points), FIG3_COLUMNS
    if cfg.preset == "fig4":
        return preset_fig4(cfg.horizon, cfg.trials, cfg.samples, cfg.seed, cfg.workers), FIG4_COLUMNS
    snrs = cfg.snr_db if snrs_given else FIG5_SNR_DB
    beta = cfg.beta if cfg.beta > 1 else BOUNDED_BETA
    return preset_fig5(snrs, decoder, beta, cfg.horizon, cfg.trials, cfg.samples, cfg.seed,
                       cfg.workers), FIG5_COLUMNS


__all__ = [
    "DEFAULT_DELTA_GRID",
    "DEFAULT_LAMBDA_GRID",
    "preset_fig3",
    "preset_fig4",
    "preset_fig5",
    "run_bounds",
    "run_loop",
    "run_preset",
    "run_sdr",
]
