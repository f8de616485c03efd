from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from jscc_lqg.channel import ChannelModel, transmit
from jscc_lqg.codecs import CodecSpec, cube_correct, encode
from jscc_lqg.decoders import decode
from jscc_lqg.errors import DegenerateWeightsError, ScheduleError
from jscc_lqg.parallel import map_ordered

logger = logging.getLogger(__name__)

BURN_IN = 10**3
OVERFLOW_GUARD = 1e12
SOURCE_POWER_EPS = 1e-12
SCHEDULE_TOLERANCE = 1e-9
COST_BATCHES = 100


@dataclass(frozen=True)
class PlantParams:
    """x_{t+1} = alpha x_t + w_t + u_t observed as y_t = x_t + v_t."""

    alpha: float
    w_var: float = 1.0
    v_var: float = 1.0
    p0: float = 1.0

    def __post_init__(self) -> None:
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1 (open-loop unstable), got {self.alpha}")
        if self.w_var < 0 or self.v_var < 0:
            raise ValueError("noise variances must be non-negative")
        if not self.p0 > 0:
            raise ValueError(f"initial state power must be positive, got {self.p0}")


@dataclass(frozen=True)
class LqgWeights:
    q: float = 1.0
    r: float = 1.0
    f: float = 1.0
    horizon: int = 1000

    def __post_init__(self) -> None:
        if min(self.q, self.r, self.f) < 0:
            raise ValueError("LQG weights must be non-negative")
        if self.q == 0 and self.f == 0:
            raise ValueError("q and f cannot both be zero")
        if self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")


@dataclass(frozen=True)
class ControlGains:
    gains: np.ndarray  # L_1..L_T
    costs: np.ndarray  # S_1..S_{T+1}, S_{T+1} = F
    steady_gain: float
    steady_cost: float


@dataclass(frozen=True)
class ObserverGains:
    gains: np.ndarray  # K_1..K_T
    p_pred: np.ndarray  # P_{t|t-1}, t = 1..T+1
    p_filt: np.ndarray  # P_{t|t}, t = 1..T


@dataclass(frozen=True)
class LoopSchedule:
    """Deterministic sequences both ends of the loop compute offline."""

    control_gains: np.ndarray
    kalman_gains: np.ndarray
    p_enc_pred: np.ndarray
    p_enc_filt: np.ndarray
    p_dec_pred: np.ndarray
    p_dec_filt: np.ndarray
    source_power: np.ndarray
    sdr0: float
    steady: bool = False
    burn_in: int = 0

    @property
    def steps(self) -> int:
        return self.control_gains.size

    @property
    def receiver_gain(self) -> float:
        if self.sdr0 == math.inf:
            return 1.0
        return self.sdr0 / (1.0 + self.sdr0)


def positive_root(b: float, c: float) -> float:
    """Non-negative root of x^2 - b x - c = 0 for c >= 0, without cancellation."""
    disc = math.sqrt(b * b + 4.0 * c)
    if b >= 0:
        return 0.5 * (b + disc)
    return 2.0 * c / (disc - b)


def riccati_control(weights: LqgWeights, alpha: float, horizon: int | None = None) -> ControlGains:
    """Backward recursion S_t = a^2 R S_{t+1} / (S_{t+1} + R) + Q from S_{T+1} = F."""
    q, r = weights.q, weights.r
    horizon = weights.horizon if horizon is None else horizon
    costs = np.empty(horizon + 1)
    gains = np.empty(horizon)
    costs[horizon] = weights.f
    for t in range(horizon - 1, -1, -1):
        nxt = costs[t + 1]
        if nxt + r == 0:
            raise DegenerateWeightsError(f"S_{t + 2} + R = 0 at step {t + 1}")
        gains[t] = alpha * nxt / (nxt + r)
        costs[t] = alpha * alpha * r * nxt / (nxt + r) + q

    steady_cost = positive_root(q + (alpha * alpha - 1.0) * r, q * r)
    if steady_cost + r == 0:
        raise DegenerateWeightsError("steady-state S + R = 0")
    steady_gain = alpha * steady_cost / (steady_cost + r)
    return ControlGains(gains, costs, steady_gain, steady_cost)


def kalman_observer(plant: PlantParams, horizon: int) -> ObserverGains:
    """Transmitter-side Kalman recursion from P_{1|0} = P0."""
    alpha2 = plant.alpha * plant.alpha
    v = plant.v_var
    p_pred = np.empty(horizon + 1)
    p_filt = np.empty(horizon)
    gains = np.empty(horizon)
    p_pred[0] = plant.p0
    for t in range(horizon):
        p = p_pred[t]
        k = 1.0 if v == 0 else p / (p + v)
        gains[t] = k
        p_filt[t] = k * v
        p_pred[t + 1] = alpha2 * p * (1.0 - k) + plant.w_var
    return ObserverGains(gains, p_pred, p_filt)


def receiver_schedule(
    plant: PlantParams,
    sdr0: float,
    p_enc_filt: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Receiver error variances and the power of the transmitted error signal.

    Returns (P^r_{t|t-1} for t = 1..T+1, P^r_{t|t}, source power). The
    recursion runs in Python floats, so an unstabilizable schedule grows to
    inf instead of raising.
    """
    if not sdr0 > 0:
        raise ValueError(f"sdr0 must be positive, got {sdr0}")
    horizon = len(p_enc_filt)
    alpha2 = plant.alpha * plant.alpha
    pred = [plant.p0]
    filt = []
    power = []
    for t in range(horizon):
        p, p_tt = pred[t], float(p_enc_filt[t])
        gap = p - p_tt
        if gap < -SCHEDULE_TOLERANCE * max(1.0, abs(p)):
            raise ScheduleError(f"negative source power {gap} at step {t + 1}")
        power.append(max(gap, 0.0))
        r_tt = p_tt if sdr0 == math.inf else (p + sdr0 * p_tt) / (1.0 + sdr0)
        filt.append(r_tt)
        pred.append(alpha2 * r_tt + plant.w_var)
    return np.array(pred), np.array(filt), np.array(power)


def build_schedule(
    plant: PlantParams,
    weights: LqgWeights,
    sdr0: float,
    steady: bool = False,
) -> LoopSchedule:
    """Finite horizon: time-varying L_t with terminal F. Steady: BURN_IN extra
    steps and the infinite-horizon gain L throughout."""
    burn_in = BURN_IN if steady else 0
    steps = weights.horizon + burn_in
    control = riccati_control(weights, plant.alpha, horizon=weights.horizon)
    gains = np.full(steps, control.steady_gain) if steady else control.gains
    observer = kalman_observer(plant, steps)
    dec_pred, dec_filt, power = receiver_schedule(plant, sdr0, observer.p_filt)
    return LoopSchedule(
        control_gains=gains,
        kalman_gains=observer.gains,
        p_enc_pred=observer.p_pred,
        p_enc_filt=observer.p_filt,
        p_dec_pred=dec_pred,
        p_dec_filt=dec_filt,
        source_power=power,
        sdr0=sdr0,
        steady=steady,
        burn_in=burn_in,
    )


@dataclass(frozen=True)
class EpisodeResult:
    avg_stage_cost: float
    stage_costs: np.ndarray
    running_cost: np.ndarray
    diverged: bool
    steps: int
    cost_ci_halfwidth: float
    state_trace: np.ndarray | None = None
    observation_trace: np.ndarray | None = None
    control_trace: np.ndarray | None = None
    source_trace: np.ndarray | None = None
    source_estimate_trace: np.ndarray | None = None
    encoder_estimate_trace: np.ndarray | None = None
    decoder_estimate_trace: np.ndarray | None = None
    transmitter_copy_trace: np.ndarray | None = None


def _batch_halfwidth(costs: np.ndarray) -> float:
    batches = min(COST_BATCHES, costs.size)
    if batches < 2:
        return math.nan
    means = np.array([part.mean() for part in np.array_split(costs, batches)])
    return float(1.96 * np.std(means, ddof=1) / math.sqrt(batches))


def run_episodes(
    plant: PlantParams,
    weights: LqgWeights,
    spec: CodecSpec,
    ch: ChannelModel,
    schedule: LoopSchedule,
    rng: np.random.Generator,
    trials: int = 1,
    keep_traces: bool = True,
) -> list[EpisodeResult]:
    """Runs ``trials`` independent closed loops side by side.

    Per step: plant observation, transmitter Kalman update, error signal
    against the receiver prediction, normalisation by the scheduled source
    power, encode, channel, decode, CUBE, unnormalise, receiver update and
    control. The transmitter rebuilds the receiver estimate as -u/L from the
    applied control alone; it matches the receiver's own estimate up to the
    rounding of that multiply and divide. A trial whose state leaves
    [-OVERFLOW_GUARD, OVERFLOW_GUARD] is marked diverged and frozen at zero
    while the others keep running.
    """
    if spec.sdr0 is not None and not math.isclose(schedule.sdr0, spec.loop_sdr, rel_tol=0.05):
        logger.warning("schedule built for sdr0=%g but codec reports %g", schedule.sdr0, spec.loop_sdr)
    steps = schedule.steps
    state_rng, plant_rng, obs_rng, channel_rng = rng.spawn(4)
    alpha = plant.alpha
    gain = schedule.receiver_gain

    x = math.sqrt(plant.p0) * state_rng.standard_normal(trials)
    w = math.sqrt(plant.w_var) * plant_rng.standard_normal((steps, trials))
    v = math.sqrt(plant.v_var) * obs_rng.standard_normal((steps, trials))

    x_enc = np.zeros(trials)
    x_dec = np.zeros(trials)
    x_dec_tx = np.zeros(trials)
    u_prev = np.zeros(trials)
    alive = np.ones(trials, dtype=bool)
    diverged_at = np.full(trials, -1)

    stage = np.zeros((steps, trials))
    traces = {
        name: np.zeros((steps, trials))
        for name in ("x", "y", "u", "s", "s_hat", "x_enc", "x_dec", "x_dec_tx")
    } if keep_traces else None

    executed = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(steps):
            y = x + v[t]
            enc_pred = alpha * x_enc + u_prev
            x_enc = np.where(alive, enc_pred + schedule.kalman_gains[t] * (y - enc_pred), 0.0)

            source = np.where(alive, x_enc - (alpha * x_dec_tx + u_prev), 0.0)
            dec_pred = alpha * x_dec + u_prev
            power = schedule.source_power[t]
            if power < SOURCE_POWER_EPS:
                transmit(np.zeros((trials, spec.kc)), ch, channel_rng)
                s_hat = np.zeros(trials)
                x_dec = dec_pred
            else:
                scale = math.sqrt(power)
                received = transmit(encode(spec, source / scale), ch, channel_rng)
                s_hat = np.where(alive, scale * cube_correct(spec, decode(spec, received)).value, 0.0)
                x_dec = dec_pred + gain * s_hat
            x_dec = np.where(alive, x_dec, 0.0)

            lqr = schedule.control_gains[t]
            u = np.where(alive, -lqr * x_dec, 0.0)
            # The transmitter only sees u; with L = 0 it has nothing to invert.
            x_dec_tx = -u / lqr if lqr != 0 else np.zeros(trials)

            stage[t] = np.where(alive, weights.q * x * x + weights.r * u * u, 0.0)
            if traces is not None:
                for name, value in (("x", x), ("y", y), ("u", u), ("s", source), ("s_hat", s_hat),
                                    ("x_enc", x_enc), ("x_dec", x_dec), ("x_dec_tx", x_dec_tx)):
                    traces[name][t] = value

            # Diverged lanes stay frozen at zero.
            x = np.where(alive, alpha * x + w[t] + u, 0.0)
            u_prev = u
            executed = t + 1

            blown = alive & ~(np.abs(x) <= OVERFLOW_GUARD)
            if np.any(blown):
                diverged_at[blown] = t + 1
                alive &= ~blown
                x[blown] = 0.0
                logger.info("%d of %d episodes diverged at step %d", int(np.sum(blown)), trials, t + 1)
                if not np.any(alive):
                    break

    stage = stage[:executed]
    burn_in = min(schedule.burn_in, executed)
    results = []
    for i in range(trials):
        costs = stage[:, i]
        diverged = diverged_at[i] >= 0
        running = np.cumsum(costs) / np.arange(1, executed + 1)
        if diverged:
            avg, halfwidth = math.inf, math.nan
        elif schedule.steady:
            avg = float(costs[burn_in:].mean())
            halfwidth = _batch_halfwidth(costs[burn_in:])
        else:
            avg = float((weights.f * x[i] * x[i] + costs.sum()) / executed)
            halfwidth = _batch_halfwidth(costs)
        trace = {name: arr[:executed, i].copy() for name, arr in traces.items()} if traces is not None else {}
        results.append(
            EpisodeResult(
                avg_stage_cost=avg,
                stage_costs=costs.copy(),
                running_cost=running,
                diverged=bool(diverged),
                steps=int(diverged_at[i]) if diverged else executed,
                cost_ci_halfwidth=halfwidth,
                state_trace=trace.get("x"),
                observation_trace=trace.get("y"),
                control_trace=trace.get("u"),
                source_trace=trace.get("s"),
                source_estimate_trace=trace.get("s_hat"),
                encoder_estimate_trace=trace.get("x_enc"),
                decoder_estimate_trace=trace.get("x_dec"),
                transmitter_copy_trace=trace.get("x_dec_tx"),
            )
        )
    return results


def run_episode(
    plant: PlantParams,
    weights: LqgWeights,
    spec: CodecSpec,
    ch: ChannelModel,
    schedule: LoopSchedule,
    rng: np.random.Generator,
) -> EpisodeResult:
    return run_episodes(plant, weights, spec, ch, schedule, rng, trials=1)[0]


@dataclass(frozen=True)
class TrialSummary:
    """``mean_cost`` averages the trials that stayed finite; ``ensemble_cost``
    is inf as soon as any trial diverged."""

    results: list[EpisodeResult]
    mean_cost: float
    ci_halfwidth: float
    diverged: int

    @property
    def ensemble_cost(self) -> float:
        return math.inf if self.diverged else self.mean_cost


def _trial_block(task: tuple) -> list[EpisodeResult]:
    plant, weights, spec, ch, schedule, rng, trials, keep_traces = task
    return run_episodes(plant, weights, spec, ch, schedule, rng, trials, keep_traces)


def run_trials(
    plant: PlantParams,
    weights: LqgWeights,
    spec: CodecSpec,
    ch: ChannelModel,
    schedule: LoopSchedule,
    rng: np.random.Generator,
    trials: int,
    workers: int = 1,
    keep_traces: bool = False,
) -> TrialSummary:
    """Independent episodes in ``workers`` blocks, each with its own spawned stream."""
    blocks = min(workers, trials)
    sizes = [len(part) for part in np.array_split(np.arange(trials), blocks)]
    tasks = [
        (plant, weights, spec, ch, schedule, stream, size, keep_traces)
        for stream, size in zip(rng.spawn(blocks), sizes)
    ]
    results = [res for block in map_ordered(_trial_block, tasks, workers) for res in block]
    finite = np.array([r.avg_stage_cost for r in results if not r.diverged])
    diverged = len(results) - finite.size
    if finite.size == 0:
        return TrialSummary(results, math.inf, math.nan, diverged)
    if finite.size > 1:
        halfwidth = float(1.96 * np.std(finite, ddof=1) / math.sqrt(finite.size))
    else:
        halfwidth = next(r.cost_ci_halfwidth for r in results if not r.diverged)
    return TrialSummary(results, float(finite.mean()), halfwidth, diverged)
