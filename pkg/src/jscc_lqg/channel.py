from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from jscc_lqg.errors import EmptyStreamError

# A symbol block is a float array whose last axis holds the Kc channel uses of
# one source sample; a leading axis batches independent blocks.
SymbolBlock = np.ndarray


def db_to_snr(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def snr_to_db(snr: float) -> float:
    if snr == math.inf:
        return math.inf
    return 10.0 * math.log10(snr)


@dataclass(frozen=True)
class ChannelModel:
    """AWGN channel b_i = a_i + n_i under a unit per-use input power.

    ``snr`` is linear; ``math.inf`` gives the noiseless channel.
    """

    snr: float
    noise_variance: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        object.__setattr__(self, "noise_variance", 1.0 / self.snr)

    @classmethod
    def from_db(cls, snr_db: float) -> ChannelModel:
        return cls(db_to_snr(snr_db))

    @property
    def snr_db(self) -> float:
        return snr_to_db(self.snr)

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.noise_variance)


def transmit(block: SymbolBlock, ch: ChannelModel, rng: np.random.Generator) -> SymbolBlock:
    """Adds independent N(0, 1/snr) noise to every channel use.

    Draws exactly ``block.size`` normals from ``rng``, also when the channel
    is noiseless, so stream positions do not depend on the SNR.
    """
    block = np.asarray(block, dtype=float)
    noise = rng.standard_normal(block.shape)
    return block + ch.noise_std * noise


class PowerAudit:
    """Running average of the squared channel-input amplitude per channel use."""

    def __init__(self) -> None:
        self.energy = 0.0
        self.uses = 0

    def update(self, block: SymbolBlock) -> PowerAudit:
        block = np.asarray(block, dtype=float)
        self.energy += float(np.sum(block * block))
        self.uses += block.size
        return self

    @property
    def power(self) -> float:
        if self.uses == 0:
            raise EmptyStreamError("power audit needs at least one channel use")
        return self.energy / self.uses


def audit_power(blocks: Iterable[SymbolBlock]) -> float:
    audit = PowerAudit()
    for block in blocks:
        audit.update(block)
    return audit.power
