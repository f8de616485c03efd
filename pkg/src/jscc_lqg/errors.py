from __future__ import annotations


class JsccError(ValueError):
    """Base class for misuse of the codecs, the loop or the CLI config."""


class UncalibratedCodecError(JsccError):
    pass


class EmptyStreamError(JsccError):
    pass


class DegenerateWeightsError(JsccError):
    pass


class ScheduleError(JsccError):
    pass


class SampleSizeError(JsccError):
    pass


class ConfigError(JsccError):
    pass
