"""Flat model/training configuration with a ``key = value`` text format."""

import dataclasses
from dataclasses import dataclass, fields

from .errors import ValidationError


@dataclass
class RedConfig:
    dim: int = 128
    enc_layers: int = 6
    dec_layers: int = 6
    heads: int = 8
    gat_heads: tuple = (8, 16, 1)
    ffn_mult: int = 4
    dropout: float = 0.1
    lambda1: float = 0.1
    lambda2: float = 0.5
    lr: float = 1e-4
    weight_decay: float = 0.01
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    mask_strategy: str = "road-aware"
    mask_ratio: float = 0.5
    tie_heads: bool = True
    time_distance_bias: bool = True
    mask_time_encoding: bool = True
    split: tuple = (0.6, 0.2, 0.2)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 <= self.lambda1 <= 1.0:
            raise ValidationError(f"lambda1 must lie in [0, 1], got {self.lambda1}")
        if not 0.0 <= self.lambda2 <= 1.0:
            raise ValidationError(f"lambda2 must lie in [0, 1], got {self.lambda2}")
        if self.dim <= 0 or self.dim % 4:
            raise ValidationError(f"dim must be a positive multiple of 4, got {self.dim}")
        if self.dim % self.heads:
            raise ValidationError(f"dim {self.dim} not divisible by {self.heads} heads")
        for h in self.gat_heads[:-1]:
            if self.dim % h:
                raise ValidationError(f"dim {self.dim} not divisible by {h} GAT heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must lie in [0, 1)")
        if self.mask_strategy not in ("road-aware", "random"):
            raise ValidationError(f"unknown mask strategy {self.mask_strategy!r}")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValidationError("mask_ratio must lie in [0, 1]")
        if self.lr <= 0:
            raise ValidationError("lr must be positive")
        if self.batch_size <= 0 or self.epochs < 0:
            raise ValidationError("batch_size must be positive and epochs non-negative")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("gat_heads", "split"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _coerce(field, text):
    default = field.default
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "on", "yes"):
                return True
            if low in ("0", "false", "off", "no"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            cast = int if field.name == "gat_heads" else float
            return tuple(cast(x) for x in text.replace("[", "").replace("]", "").split(",") if x.strip())
        return text
    except ValueError:
        raise ValidationError(f"bad value for {field.name}: {text!r}") from None


def parse_overrides(pairs):
    """Turn ``{"dim": "32", ...}`` strings into typed values."""
    by_name = {f.name: f for f in fields(RedConfig)}
    out = {}
    for k, v in pairs.items():
        k = k.replace("-", "_")
        if k not in by_name:
            raise ValidationError(f"unknown config key {k!r}")
        out[k] = _coerce(by_name[k], v)
    return out


def parse_config_text(text):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v
    return RedConfig(**parse_overrides(pairs))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def format_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "on" if v else "off"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
