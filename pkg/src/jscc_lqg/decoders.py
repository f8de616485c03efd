from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np
from scipy.spatial import cKDTree

from jscc_lqg.channel import SymbolBlock
from jscc_lqg.codecs import CodecSpec, Decoder, Estimate
from jscc_lqg.errors import UncalibratedCodecError
from jscc_lqg.maps import CodecFamily, SpiralMap

SEARCH_LIMIT = 8.0
ML_GRID_POINTS = 2**14 + 1
ML_NEIGHBOURS = 8
ML_TOLERANCE = 1e-6
MMSE_NODES = 4097

_ML_CHUNK = 1 << 15
_MMSE_CHUNK = 512
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
# Below this log-weight both posterior integrals underflow to zero.
_UNDERFLOW_LOG = math.log(np.finfo(float).tiny)


def _chunks(n: int, size: int) -> Iterator[slice]:
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def golden_section_min(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    tol: float,
) -> np.ndarray:
    """Elementwise golden-section minimisation of f on [lo, hi] down to width tol."""
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    width = float(np.max(b - a)) if a.size else 0.0
    if width <= tol:
        return 0.5 * (a + b)
    steps = math.ceil(math.log(tol / width) / math.log(_INV_PHI))

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(steps):
        left = fc < fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        x = np.where(left, b - _INV_PHI * (b - a), a + _INV_PHI * (b - a))
        fx = f(x)
        c, d = np.where(left, x, d), np.where(left, c, x)
        fc, fd = np.where(left, fx, fd), np.where(left, fc, fx)
    return 0.5 * (a + b)


@lru_cache(maxsize=64)
def _search_grid(scale: float, lam: float, delta: float, beta: float) -> tuple[np.ndarray, cKDTree]:
    grid = np.linspace(-SEARCH_LIMIT, SEARCH_LIMIT, ML_GRID_POINTS)
    points = SpiralMap(scale, lam, delta, beta).points(grid)
    return grid, cKDTree(points)


def _nearest_on_spiral(spec: CodecSpec, b: np.ndarray) -> np.ndarray:
    curve = spec.curve()
    grid, tree = _search_grid(spec.power_scale, spec.lam, spec.delta, spec.beta)
    out = np.empty(b.shape[0])
    last = grid.size - 1

    for rows in _chunks(b.shape[0], _ML_CHUNK):
        target = b[rows][:, np.newaxis, :]
        _, idx = tree.query(b[rows], k=ML_NEIGHBOURS)

        def distance(s: np.ndarray) -> np.ndarray:
            diff = curve.points(s) - target
            return np.sum(diff * diff, axis=-1)

        lo = grid[np.maximum(idx - 1, 0)]
        hi = grid[np.minimum(idx + 1, last)]
        refined = golden_section_min(distance, lo, hi, ML_TOLERANCE)
        candidates = np.concatenate([refined, grid[idx]], axis=1)
        best = np.argmin(distance(candidates), axis=1)
        out[rows] = candidates[np.arange(candidates.shape[0]), best]
    return out


def _as_rows(spec: CodecSpec, b: SymbolBlock) -> tuple[np.ndarray, bool]:
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    rows = np.atleast_2d(b)
    if rows.shape[-1] != spec.kc:
        raise ValueError(f"expected blocks of {spec.kc} channel uses, got {rows.shape[-1]}")
    return rows, single


def decode_ml(spec: CodecSpec, b: SymbolBlock) -> Estimate:
    """Source value whose curve point is nearest to b.

    Linear and repetition maps have an unrestricted closed-form nearest
    point (b / c, or the mean of the two uses over c). Spirals are searched
    over s in [-8, 8]: a KD-tree over a dense grid finds the global minimum,
    then golden-section refinement runs around the best grid nodes.
    """
    rows, single = _as_rows(spec, b)
    if spec.power_scale is None:
        raise UncalibratedCodecError("codec has no power scale; calibrate it first")
    if spec.family is CodecFamily.SPIRAL:
        value = _nearest_on_spiral(spec, rows)
    else:
        value = rows.mean(axis=1) / spec.power_scale
    return Estimate(value[0] if single else value, biased=True)


@lru_cache(maxsize=64)
def _quadrature(spec_key: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    family, scale, lam, delta, beta = spec_key
    nodes = np.linspace(-SEARCH_LIMIT, SEARCH_LIMIT, MMSE_NODES)
    trapezoid = np.ones(MMSE_NODES)
    trapezoid[[0, -1]] = 0.5
    log_prior = -0.5 * nodes**2 + np.log(trapezoid)
    spec = CodecSpec(family, lam=lam, delta=delta, beta=beta, power_scale=scale)
    points = spec.curve().points(nodes)
    return nodes, log_prior, points, np.sum(points * points, axis=1)


def decode_mmse(spec: CodecSpec, b: SymbolBlock) -> Estimate:
    """Posterior mean E[s | b] under a standard normal prior.

    Trapezoid quadrature on a fixed grid over [-8, 8] with the noise variance
    1/design_snr. Rows where both integrals underflow fall back to ML and are
    flagged in ``Estimate.fallback``.
    """
    rows, single = _as_rows(spec, b)
    if spec.power_scale is None or spec.design_snr is None:
        raise UncalibratedCodecError("MMSE decoding needs a power scale and a design SNR")
    if math.isinf(spec.design_snr):
        # Noiseless: the posterior collapses onto the nearest curve point.
        raw = decode_ml(spec, rows).value
        fallback = np.ones(raw.size, dtype=bool)
        return Estimate(raw[0] if single else raw, biased=True, fallback=fallback[:1] if single else fallback)
    nodes, log_prior, points, energy = _quadrature(
        (spec.family, spec.power_scale, spec.lam, spec.delta, spec.beta)
    )
    precision = 0.5 * spec.design_snr

    value = np.empty(rows.shape[0])
    fallback = np.zeros(rows.shape[0], dtype=bool)
    for part in _chunks(rows.shape[0], _MMSE_CHUNK):
        chunk = rows[part]
        distance = np.sum(chunk * chunk, axis=1)[:, np.newaxis] - 2.0 * chunk @ points.T + energy
        log_weight = log_prior - precision * np.maximum(distance, 0.0)
        peak = np.max(log_weight, axis=1)
        weight = np.exp(log_weight - peak[:, np.newaxis])
        value[part] = (weight @ nodes) / np.sum(weight, axis=1)
        fallback[part] = peak < _UNDERFLOW_LOG

    if np.any(fallback):
        value[fallback] = decode_ml(spec, rows[fallback]).value
    if single:
        return Estimate(value[0], biased=True, fallback=fallback[:1])
    return Estimate(value, biased=True, fallback=fallback)


DECODERS: dict[Decoder, Callable[[CodecSpec, SymbolBlock], Estimate]] = {
    Decoder.ML: decode_ml,
    Decoder.MMSE: decode_mmse,
}


def decode(spec: CodecSpec, b: SymbolBlock) -> Estimate:
    return DECODERS[spec.decoder](spec, b)
