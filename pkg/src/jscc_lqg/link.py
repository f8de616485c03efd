from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from jscc_lqg.channel import ChannelModel, SymbolBlock, transmit
from jscc_lqg.codecs import CodecSpec, Estimate, cube_correct, encode
from jscc_lqg.decoders import decode


@dataclass(frozen=True)
class LinkOutcome:
    source: np.ndarray
    sent: SymbolBlock
    received: SymbolBlock
    raw: Estimate
    estimate: Estimate | None


def run_link(spec: CodecSpec, ch: ChannelModel, s: np.ndarray, rng: np.random.Generator) -> LinkOutcome:
    """encode -> transmit -> decode, then CUBE correction when the spec has a cube factor."""
    s = np.asarray(s, dtype=float)
    sent = encode(spec, s)
    received = transmit(sent, ch, rng)
    raw = decode(spec, received)
    estimate = cube_correct(spec, raw) if spec.cube_factor is not None else None
    return LinkOutcome(s, sent, received, raw, estimate)
