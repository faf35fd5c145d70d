"""JSON run configuration for the command line.

A config names an operator, a domain, the data ``f`` and ``phi`` and the
continuity settings.  Everything is validated on load; unknown keys are
errors.  ``dumps(loads(text))`` is a fixed point, so configs round-trip
bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .algebra import PRESETS, OperatorSpec
from .expr import Expression, ExpressionError, parse
from .grid import ConvexDomain

KEYS = {"operator", "domain", "f", "phi", "h", "continuity_steps",
        "allow_below_threshold", "seed"}
REQUIRED = {"operator", "domain", "f", "phi"}


class ConfigError(ValueError):
    pass


def _scalar_or_expr(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f"{key} must be a number or an expression string")
    try:
        return parse(value)
    except ExpressionError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _operator(doc, base: Path | None):
    if not isinstance(doc, dict) or len(doc) == 0:
        raise ConfigError("operator must be an object")
    if "preset" in doc:
        if set(doc) - {"preset", "n"}:
            raise ConfigError(f"unknown operator keys: {sorted(set(doc) - {'preset', 'n'})}")
        name = doc["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        n = doc.get("n", 2)
        if isinstance(n, bool) or not isinstance(n, int):
            raise ConfigError("operator n must be an integer")
        return PRESETS[name](n)
    if "file" in doc:
        if set(doc) != {"file"}:
            raise ConfigError("operator file block takes only key 'file'")
        path = Path(doc["file"])
        if not path.is_absolute() and base is not None:
            path = base / path
        try:
            return OperatorSpec.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read operator file {path}: {exc.strerror}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"operator file {path}: {exc}") from None
    if "inline" in doc:
        if set(doc) != {"inline"}:
            raise ConfigError("operator inline block takes only key 'inline'")
        try:
            return OperatorSpec.from_dict(doc["inline"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"inline operator: {exc}") from None
    raise ConfigError("operator needs one of 'preset', 'file', 'inline'")


@dataclass
class RunConfig:
    raw: dict
    operator: OperatorSpec
    domain: ConvexDomain
    f: Expression | float
    phi: Expression | float
    h: float | None = None
    continuity_steps: int = 10
    allow_below_threshold: bool = False
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = REQUIRED - set(doc)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        op = _operator(doc["operator"], base)
        try:
            domain = ConvexDomain.from_dict(doc["domain"])
        except (ValueError, TypeError, AttributeError) as exc:
            raise ConfigError(f"domain: {exc}") from None
        h = doc.get("h")
        if h is not None and (isinstance(h, bool) or not isinstance(h, (int, float)) or h <= 0):
            raise ConfigError("h must be a positive number")
        steps = doc.get("continuity_steps", 10)
        if isinstance(steps, bool) or not isinstance(steps, int) or steps < 1:
            raise ConfigError("continuity_steps must be a positive integer")
        allow = doc.get("allow_below_threshold", False)
        if not isinstance(allow, bool):
            raise ConfigError("allow_below_threshold must be true or false")
        seed = doc.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        return cls(doc, op, domain, _scalar_or_expr(doc["f"], "f"),
                   _scalar_or_expr(doc["phi"], "phi"),
                   None if h is None else float(h), steps, allow, seed)

    @classmethod
    def loads(cls, text: str, base: Path | None = None) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} at line {exc.lineno}") from None
        return cls.from_dict(doc, base)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.loads(text, path.parent)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw))

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"
