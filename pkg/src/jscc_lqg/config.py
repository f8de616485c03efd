from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Mapping

from jscc_lqg.errors import ConfigError
from jscc_lqg.streams import SEED_LIMIT

COMMANDS = ("sdr", "loop", "bounds", "preset")
PRESETS = ("fig3", "fig4", "fig5")
CODECS = ("linear", "repetition", "spiral")
DECODERS = ("ml", "mmse")

_SECTION = "experiment"


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(item) for item in text.replace(",", " ").split())


def _flag(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    command: str = "sdr"
    preset: str | None = None
    snr_db: tuple[float, ...] = (10.0,)
    alpha: float = 2.0
    q: float = 1.0
    r: float = 1.0
    f: float = 1.0
    w: float = 1.0
    v: float = 1.0
    p0: float = 1.0
    codec: str = "spiral"
    lam: float = 1.0
    delta: float = 2.0
    beta: float = 1.0
    decoder: str = "ml"
    horizon: int = 1000
    trials: int = 1
    samples: int = 10**6
    seed: int = 0
    workers: int = 1
    steady: bool = False
    all_points: bool = False
    out: str | None = None

    def validate(self) -> ExperimentConfig:
        checks = [
            (self.command in COMMANDS, f"unknown command {self.command!r}"),
            (self.command != "preset" or self.preset in PRESETS, f"unknown preset {self.preset!r}"),
            (len(self.snr_db) > 0, "at least one snr_db value is needed"),
            (all(-100.0 < s < 100.0 for s in self.snr_db), "snr_db values must lie in (-100, 100)"),
            (self.alpha > 1, "alpha must exceed 1"),
            (min(self.q, self.r, self.f) >= 0, "q, r and f must be non-negative"),
            (self.q > 0 or self.f > 0, "q and f cannot both be zero"),
            (min(self.w, self.v) >= 0, "w and v must be non-negative"),
            (self.p0 > 0, "p0 must be positive"),
            (self.codec in CODECS, f"unknown codec {self.codec!r}"),
            (self.decoder in DECODERS, f"unknown decoder {self.decoder!r}"),
            (self.lam > 0, "lambda must be positive"),
            (self.delta > 0, "delta must be positive"),
            (self.beta >= 1, "beta must be >= 1"),
            (self.codec == "spiral" or (self.lam == 1 and self.beta == 1),
             "lambda and beta only apply to the spiral codec"),
            (self.horizon >= 1, "horizon must be positive"),
            (self.trials >= 1, "trials must be positive"),
            (self.samples >= 10**4, "samples must be at least 10000"),
            (0 <= self.seed < SEED_LIMIT, "seed must be a 64-bit unsigned integer"),
            (self.workers >= 1, "workers must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self


# Config-file keys; "lambda" is a Python keyword, hence the lam field.
_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "command": ("command", str.strip),
    "preset": ("preset", str.strip),
    "snr_db": ("snr_db", _float_list),
    "alpha": ("alpha", float),
    "q": ("q", float),
    "r": ("r", float),
    "f": ("f", float),
    "w": ("w", float),
    "v": ("v", float),
    "p0": ("p0", float),
    "codec": ("codec", str.strip),
    "lambda": ("lam", float),
    "delta": ("delta", float),
    "beta": ("beta", float),
    "decoder": ("decoder", str.strip),
    "horizon": ("horizon", int),
    "trials": ("trials", int),
    "samples": ("samples", int),
    "seed": ("seed", int),
    "workers": ("workers", int),
    "steady": ("steady", _flag),
    "all_points": ("all_points", _flag),
    "out": ("out", str.strip),
}


def parse_config_text(text: str) -> dict[str, Any]:
    """Parses flat ``key = value`` lines into ExperimentConfig field values."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        parser.read_string(f"[{_SECTION}]\n{text}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values: dict[str, Any] = {}
    for key, raw in parser.items(_SECTION):
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        field_name, convert = _KEYS[key]
        try:
            values[field_name] = convert(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return values


def load_config(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def build_config(file_values: Mapping[str, Any], overrides: Mapping[str, Any]) -> ExperimentConfig:
    """Defaults, then the config file, then explicit command-line flags."""
    known = {f.name for f in fields(ExperimentConfig)}
    merged = {**file_values, **overrides}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown settings: {', '.join(sorted(unknown))}")
    if "snr_db" in merged:
        merged["snr_db"] = tuple(merged["snr_db"])
    return replace(ExperimentConfig(), **merged).validate()
