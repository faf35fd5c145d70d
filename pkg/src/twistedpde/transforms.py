"""Increasing concave scalar transforms ``G`` and their compositions.

Every transform exposes ``value``, ``d1`` and ``d2`` (vectorised over numpy
arrays) plus the interval on which the derivatives are meaningful.  Power
roots are continuous at 0 (``value(0) == 0``) but their derivatives are only
evaluated on ``[domain_lo, domain_hi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_POWER_LO = 1e-10
DEFAULT_POWER_HI = 1e6
CHECK_POINTS = 10_000


class TransformError(ValueError):
    """Raised when a transform violates ``G' > 0, G'' <= 0`` or its domain."""


class ScalarTransform:
    kind = "abstract"
    domain_lo = -math.inf
    domain_hi = math.inf

    def value(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError

    def value_domain_lo(self) -> float:
        """Smallest argument at which ``value`` is defined."""
        return self.domain_lo

    def in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.domain_lo) & (x <= self.domain_hi)

    def check_grid(self) -> np.ndarray:
        lo = max(self.domain_lo, -1e6)
        hi = min(self.domain_hi, 1e6)
        if lo > 0 and hi / lo > 1e3:
            return np.geomspace(lo, hi, CHECK_POINTS)
        return np.linspace(lo, hi, CHECK_POINTS)

    def verify(self) -> None:
        """Sample ``G' > 0`` and ``G'' <= 0`` on the check grid."""
        x = self.check_grid()
        g1 = self.d1(x)
        g2 = self.d2(x)
        bad = np.flatnonzero(~(g1 > 0))
        if bad.size:
            raise TransformError(f"{self.kind}: G' <= 0 at x={x[bad[0]]!r}")
        bad = np.flatnonzero(g2 > 0)
        if bad.size:
            raise TransformError(f"{self.kind}: G'' > 0 at x={x[bad[0]]!r}")

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerRoot(ScalarTransform):
    """``G(x) = x**(1/p)`` for ``p >= 1``."""

    p: float
    domain_lo: float = DEFAULT_POWER_LO
    domain_hi: float = DEFAULT_POWER_HI
    kind = "power_root"

    def __post_init__(self):
        for name in ("p", "domain_lo", "domain_hi"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.p >= 1:
            raise TransformError(f"power_root needs p >= 1, got {self.p!r}")
        if not 0 < self.domain_lo < self.domain_hi:
            raise TransformError("power_root needs 0 < domain_lo < domain_hi")
        self.verify()

    def value_domain_lo(self) -> float:
        return 0.0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise TransformError("power_root evaluated at a negative argument")
        return x ** (1.0 / self.p)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        q = 1.0 / self.p
        return q * x ** (q - 1.0)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        q = 1.0 / self.p
        return q * (q - 1.0) * x ** (q - 2.0)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {"p": self.p, "domain_lo": self.domain_lo, "domain_hi": self.domain_hi},
        }


@dataclass(frozen=True)
class Affine(ScalarTransform):
    """``G(x) = slope * x + intercept`` with ``slope > 0``."""

    slope: float = 1.0
    intercept: float = 0.0
    domain_lo: float = -math.inf
    domain_hi: float = math.inf
    kind = "affine"

    def __post_init__(self):
        for name in ("slope", "intercept", "domain_lo", "domain_hi"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.slope > 0:
            raise TransformError(f"affine transform needs slope > 0, got {self.slope!r}")
        self.verify()

    def value(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def d1(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.slope)

    def d2(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {
                "slope": self.slope,
                "intercept": self.intercept,
                "domain_lo": _finite_or_none(self.domain_lo),
                "domain_hi": _finite_or_none(self.domain_hi),
            },
        }


@dataclass(frozen=True)
class Composite(ScalarTransform):
    """``H = G_m o ... o G_1``; derivatives by the chain rule."""

    links: tuple = field(default_factory=tuple)
    domain_lo: float = -math.inf
    domain_hi: float = math.inf
    kind = "chain"

    def __post_init__(self):
        if not self.links:
            raise TransformError("chain needs at least one link")
        object.__setattr__(self, "links", tuple(self.links))
        if self.domain_lo == -math.inf:
            object.__setattr__(self, "domain_lo", self.links[0].domain_lo)
        if self.domain_hi == math.inf:
            object.__setattr__(self, "domain_hi", self.links[0].domain_hi)
        self.verify()

    def value_domain_lo(self) -> float:
        return self.links[0].value_domain_lo()

    def _walk(self, x):
        h = np.asarray(x, dtype=float)
        h1 = np.ones_like(h)
        h2 = np.zeros_like(h)
        for g in self.links:
            g1 = g.d1(h)
            # H_k'' = G_k''(H_{k-1}) (H_{k-1}')^2 + G_k'(H_{k-1}) H_{k-1}''
            h2 = g.d2(h) * h1**2 + g1 * h2
            h1 = g1 * h1
            h = g.value(h)
        return h, h1, h2

    def value(self, x):
        h = np.asarray(x, dtype=float)
        for g in self.links:
            h = g.value(h)
        return h

    def d1(self, x):
        return self._walk(x)[1]

    def d2(self, x):
        return self._walk(x)[2]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {
                "links": [g.to_dict() for g in self.links],
                "domain_lo": _finite_or_none(self.domain_lo),
                "domain_hi": _finite_or_none(self.domain_hi),
            },
        }


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def _bound(value, default: float) -> float:
    return default if value is None else float(value)


def transform_from_dict(doc: dict) -> ScalarTransform:
    kind = doc["kind"]
    params = dict(doc.get("params", {}))
    if kind == "power_root":
        return PowerRoot(
            float(params["p"]),
            _bound(params.get("domain_lo"), DEFAULT_POWER_LO),
            _bound(params.get("domain_hi"), DEFAULT_POWER_HI),
        )
    if kind == "affine":
        return Affine(
            float(params.get("slope", 1.0)),
            float(params.get("intercept", 0.0)),
            _bound(params.get("domain_lo"), -math.inf),
            _bound(params.get("domain_hi"), math.inf),
        )
    if kind == "chain":
        links = tuple(transform_from_dict(d) for d in params["links"])
        return Composite(
            links,
            _bound(params.get("domain_lo"), -math.inf),
            _bound(params.get("domain_hi"), math.inf),
        )
    raise TransformError(f"unknown transform kind {kind!r}")
