"""Session configuration and the key=value file format shared with
simulator spec files."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["SessionConfig", "parse_keyvalues", "format_keyvalues"]


@dataclass(frozen=True)
class SessionConfig:
    batch_size: int = 10
    claims_pos_quota: int = 5
    claims_neg_quota: int = 5
    threshold: float = 0.75
    alpha: float = 0.05
    kappa_threshold: float = 0.8
    training_batch: int = 30
    window_days: int = 60
    seed: int = 0
    count_negated_mentions: bool = False
    continue_after_stop: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.claims_pos_quota + self.claims_neg_quota != self.batch_size:
            raise ValueError("stratum quotas must sum to batch_size")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.training_batch < 0:
            raise ValueError("training_batch must be >= 0")

    @classmethod
    def from_file(cls, path: str | Path) -> "SessionConfig":
        return cls.from_mapping(parse_keyvalues(path))

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "SessionConfig":
        kwargs = {}
        valid = {f.name: f.type for f in fields(cls)}
        for key, value in raw.items():
            if key not in valid:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, value)
        return cls(**kwargs)

    def to_mapping(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                out[f.name] = "true" if value else "false"
            else:
                out[f.name] = str(value)
        return out


_BOOL_KEYS = {"count_negated_mentions", "continue_after_stop"}
_FLOAT_KEYS = {"threshold", "alpha", "kappa_threshold"}


def _coerce(key: str, value: str):
    value = value.strip()
    if key in _BOOL_KEYS:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {value!r}")
    if key in _FLOAT_KEYS:
        return float(value)
    return int(value)


def parse_keyvalues(path: str | Path) -> dict[str, str]:
    """Parse a key=value file; blank lines and # comments are ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def format_keyvalues(mapping: dict[str, str]) -> str:
    return "".join(f"{k}={v}\n" for k, v in mapping.items())
