from __future__ import annotations

from dataclasses import replace

import numpy as np

from jscc_lqg.channel import ChannelModel
from jscc_lqg.codecs import CodecSpec, Decoder, calibrate
from jscc_lqg.maps import CodecFamily


class CodecBuilder:
    """Immutable, chainable codec description.

    ``codec.spiral.stretch(0.5).rotation(2.0).bounded(1.2).mmse`` reads
    left to right; every step returns a new builder.
    """

    def __init__(self, spec: CodecSpec | None = None) -> None:
        self._spec = spec

    def _with(self, **changes: object) -> CodecBuilder:
        if self._spec is None:
            raise ValueError("Pick a codec family first (linear, repetition or spiral)")
        return CodecBuilder(replace(self._spec, **changes))

    def _spiral_only(self, what: str) -> None:
        if self._spec is None or self._spec.family is not CodecFamily.SPIRAL:
            raise ValueError(f"{what}() only applies to spiral codecs")

    # ── Families ────────────────────────────────────────────────────

    @property
    def linear(self) -> CodecBuilder:
        return CodecBuilder(CodecSpec(CodecFamily.LINEAR))

    @property
    def repetition(self) -> CodecBuilder:
        return CodecBuilder(CodecSpec(CodecFamily.REPETITION))

    @property
    def spiral(self) -> CodecBuilder:
        return CodecBuilder(CodecSpec(CodecFamily.SPIRAL))

    # ── Spiral shape ────────────────────────────────────────────────

    def stretch(self, lam: float) -> CodecBuilder:
        self._spiral_only("stretch")
        return self._with(lam=lam)

    def rotation(self, delta: float) -> CodecBuilder:
        self._spiral_only("rotation")
        return self._with(delta=delta)

    def bounded(self, beta: float = 1.2) -> CodecBuilder:
        self._spiral_only("bounded")
        return self._with(beta=beta)

    # ── Decoders ────────────────────────────────────────────────────

    @property
    def ml(self) -> CodecBuilder:
        return self._with(decoder=Decoder.ML)

    @property
    def mmse(self) -> CodecBuilder:
        return self._with(decoder=Decoder.MMSE)

    # ── Terminal ────────────────────────────────────────────────────

    def build(self) -> CodecSpec:
        if self._spec is None:
            raise ValueError("Pick a codec family first (linear, repetition or spiral)")
        return self._spec

    def calibrate(self, ch: ChannelModel, n: int, rng: np.random.Generator) -> CodecSpec:
        return calibrate(self.build(), ch, n, rng)

    def __repr__(self) -> str:
        return f"CodecBuilder({self._spec!r})"
