from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

from jscc_lqg.control_loop import LqgWeights, PlantParams, positive_root
from jscc_lqg.sdr_lab import linear_sdr, opta_sdr


@dataclass(frozen=True)
class SteadyStateQuantities:
    s_inf: float
    p_enc: float
    p_enc_tt: float
    j_enc: float


def filtered_variance(p_pred: float, v: float) -> float:
    """P V / (P + V): error left after one observation with noise power V (0 when V = 0)."""
    if v == math.inf:
        return p_pred
    return p_pred * v / (p_pred + v) if p_pred + v > 0 else 0.0


def steady_state(plant: PlantParams, weights: LqgWeights) -> SteadyStateQuantities:
    """Fixed points of the control Riccati and transmitter Kalman recursions.

    S solves S^2 - [Q + (a^2 - 1) R] S - Q R = 0 and P solves
    P^2 - [(a^2 - 1) V + W] P - V W = 0; J_enc is the cost with the
    observer's own estimate.
    """
    alpha2 = plant.alpha * plant.alpha
    q, r = weights.q, weights.r
    v, w = plant.v_var, plant.w_var
    s_inf = positive_root(q + (alpha2 - 1.0) * r, q * r)
    p_enc = positive_root((alpha2 - 1.0) * v + w, v * w)
    p_enc_tt = filtered_variance(p_enc, v)
    j_enc = q * p_enc_tt + s_inf * (p_enc - p_enc_tt)
    return SteadyStateQuantities(s_inf, p_enc, p_enc_tt, j_enc)


def _cost_with_sdr(plant: PlantParams, weights: LqgWeights, sdr: float) -> float:
    alpha2 = plant.alpha * plant.alpha
    if alpha2 >= 1.0 + sdr:
        return math.inf
    ss = steady_state(plant, weights)
    if sdr == math.inf:
        return ss.j_enc
    penalty = (weights.q + (alpha2 - 1.0) * ss.s_inf) / (1.0 + sdr - alpha2)
    return ss.j_enc + penalty * (ss.p_enc - ss.p_enc_tt)


def thm1_upper(plant: PlantParams, weights: LqgWeights, sdr0: float) -> float:
    """Achievable infinite-horizon cost with a codec of unbiased SDR sdr0; inf if unstabilizable."""
    if not sdr0 > 0:
        raise ValueError(f"sdr0 must be positive, got {sdr0}")
    return _cost_with_sdr(plant, weights, sdr0)


def thm2_lower(plant: PlantParams, weights: LqgWeights, snr: float, kc: int = 2, ks: int = 1) -> float:
    """No scheme does better: the same expression at the OPTA SDR."""
    return _cost_with_sdr(plant, weights, opta_sdr(snr, kc, ks))


SdrProvider = Union[str, Callable[[float], float]]


def resolve_provider(provider: SdrProvider, kc: int = 2, ks: int = 1) -> Callable[[float], float]:
    if callable(provider):
        return provider
    if provider == "opta":
        return lambda snr: opta_sdr(snr, kc, ks)
    if provider == "linear":
        return linear_sdr
    raise ValueError(f"unknown SDR provider {provider!r}; use 'opta', 'linear' or a callable")


@dataclass(frozen=True)
class FrontierSample:
    snr: float
    sdr: float
    alpha_max: float


def max_stable_alpha(sdr: float) -> float:
    return math.sqrt(1.0 + sdr)


def stabilizability_frontier(
    snrs: Sequence[float],
    provider: SdrProvider,
    kc: int = 2,
    ks: int = 1,
) -> list[FrontierSample]:
    """Largest open-loop pole sqrt(1 + SDR(snr)) the scheme can stabilise, per SNR."""
    sdr_of = resolve_provider(provider, kc, ks)
    samples = []
    for snr in snrs:
        sdr = sdr_of(snr)
        samples.append(FrontierSample(snr, sdr, max_stable_alpha(sdr)))
    return samples
