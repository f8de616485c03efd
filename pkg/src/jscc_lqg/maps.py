from __future__ import annotations

import math
from enum import Enum
from typing import Protocol

import numpy as np
from scipy.special import gamma


class CodecFamily(Enum):
    LINEAR = "linear"
    REPETITION = "repetition"
    SPIRAL = "spiral"


CHANNEL_USES = {
    CodecFamily.LINEAR: 1,
    CodecFamily.REPETITION: 2,
    CodecFamily.SPIRAL: 2,
}


def gaussian_abs_moment(p: float) -> float:
    """E|s|^p for a unit-variance Gaussian s; finite only for p > -1."""
    if not p > -1:
        raise ValueError(f"E|s|^p diverges for p = {p}")
    return 2.0 ** (p / 2.0) * float(gamma((p + 1.0) / 2.0)) / math.sqrt(math.pi)


def stretch(s: np.ndarray, lam: float) -> np.ndarray:
    """phi_lambda(s) = sign(s) |s|^lambda."""
    return np.sign(s) * np.abs(s) ** lam


class Curve(Protocol):
    kc: int

    def points(self, s: np.ndarray) -> np.ndarray: ...


class LinearMap:
    kc = 1

    def __init__(self, scale: float) -> None:
        self.scale = scale

    def points(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return (self.scale * s)[..., np.newaxis]


class RepetitionMap:
    kc = 2

    def __init__(self, scale: float) -> None:
        self.scale = scale

    def points(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        a = self.scale * s
        return np.stack([a, a], axis=-1)


class SpiralMap:
    """Archimedean bi-spiral with stretch and amplitude growth.

    a1 = c |s|^(lam*beta) cos(delta |s|^lam) sign(s)
    a2 = c |s|^(lam*beta) sin(delta |s|^lam) sign(s)

    lam = beta = 1 is the regular spiral, lam < 1 the stretched one and
    beta > 1 the distortion-bounded one. Negative sources lie on the
    point reflection of the positive arm; the two arms meet at the origin.
    """

    kc = 2

    def __init__(self, scale: float, lam: float, delta: float, beta: float = 1.0) -> None:
        self.scale = scale
        self.lam = lam
        self.delta = delta
        self.beta = beta

    def points(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        m = np.abs(s)
        radius = self.scale * m ** (self.lam * self.beta) * np.sign(s)
        phase = self.delta * m**self.lam
        return np.stack([radius * np.cos(phase), radius * np.sin(phase)], axis=-1)

    @property
    def arm_spacing(self) -> float:
        """Stretched-source distance between neighbouring arms (half a turn)."""
        return math.pi / self.delta


# ||points(s)||^2 / (scale^2 |s|^(2 lam beta)) for each family.
ENERGY_FACTOR = {
    CodecFamily.LINEAR: 1.0,
    CodecFamily.REPETITION: 2.0,
    CodecFamily.SPIRAL: 1.0,
}
