"""Exponential-type marginals ``E(lam, p) = p delta_0 + (1 - p) Exp(lam)``.

The continuous analogue of the geometric model: one generation maps
``(lam, p)`` to::

    lam' = e^-alpha lam / (1 - (1 - e^-alpha) p)
    p'   = 1 - e^-lam' (1 - lam' p / lam)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .exceptions import DomainError, ResourceLimitError
from .glaw import DEFAULT_MAX_STEPS


@dataclass(frozen=True)
class ExponentialTypeLaw:
    """``E(lam, p)``; ``one_minus_p`` is carried separately so p near 1 keeps its accuracy.

    Build user-facing laws as ``ExponentialTypeLaw(lam, p)`` with ``p`` strictly
    inside (0, 1). Laws from :func:`exp_step` may have ``p`` rounded to 1.
    """

    lam: float
    p: float
    one_minus_p: Optional[float] = None

    def __post_init__(self):
        if not self.lam > 0 or not math.isfinite(self.lam):
            raise DomainError(f"lam must be a positive finite rate, got {self.lam}")
        if self.one_minus_p is None:
            if not 0 < self.p < 1:
                raise DomainError(f"p must lie in (0, 1), got {self.p}")
            object.__setattr__(self, "one_minus_p", 1 - self.p)
        elif not (0 < self.one_minus_p <= 1 and 0 <= self.p <= 1):
            raise DomainError("derived law must have 0 <= p <= 1 and 1 - p > 0")

    @property
    def mean(self) -> float:
        return self.one_minus_p / self.lam

    def survival(self) -> float:
        return self.one_minus_p

    def cdf(self, x: float) -> float:
        if x < 0:
            return 0.0
        return self.p + self.one_minus_p * -math.expm1(-self.lam * x)


@dataclass(frozen=True)
class ExpVariantConfig:
    m: float
    alpha: Optional[float] = None  # None means log m
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if not self.m > 1:
            raise DomainError(f"m must exceed 1, got {self.m}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", math.log(self.m))
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")


def exp_step(law: ExponentialTypeLaw, cfg: ExpVariantConfig) -> ExponentialTypeLaw:
    c = math.exp(-cfg.alpha)
    # 1 - (1 - c) p written as c + (1 - c)(1 - p) to avoid cancellation near p = 1
    denom = c + (1 - c) * law.one_minus_p
    lam1 = c * law.lam / denom
    ratio = lam1 * law.p / law.lam
    # 1 - ratio = (1 - p)/denom exactly
    w1 = math.exp(-lam1) * law.one_minus_p / denom
    p1 = -math.expm1(-lam1) + math.exp(-lam1) * ratio
    return ExponentialTypeLaw(lam1, p1, w1)


def exp_iterate(law0: ExponentialTypeLaw, cfg: ExpVariantConfig, steps: int) -> list[ExponentialTypeLaw]:
    """``[law_0, ..., law_steps]``."""
    if steps < 0:
        raise DomainError(f"steps must be non-negative, got {steps}")
    if steps > cfg.max_steps:
        raise ResourceLimitError(f"{steps} steps exceeds the configured maximum of {cfg.max_steps}")
    out = [law0]
    for _ in range(steps):
        out.append(exp_step(out[-1], cfg))
    return out
