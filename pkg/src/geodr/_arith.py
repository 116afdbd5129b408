"""Arithmetic backends: native floats or MPFR numbers at a configurable digit count.

Every numerical routine in the package pulls its elementary functions from an
``Arithmetic`` instance so the same code runs in either precision.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from enum import Enum

import gmpy2


class PrecisionMode(str, Enum):
    STANDARD = "standard"
    EXTENDED = "extended"


STANDARD_DIGITS = 15
DEFAULT_EXTENDED_DIGITS = 50
MIN_EXTENDED_DIGITS = 30

# smallest float where log/exp round-trip without subnormal loss
_FLOAT_TINY = 1e-300


def _bits_for(digits: int) -> int:
    # 8 guard bits on top of the decimal requirement
    return int(math.ceil(digits * math.log2(10))) + 8


@dataclass(frozen=True)
class Arithmetic:
    """Elementary operations for one precision setting."""

    mode: PrecisionMode = PrecisionMode.STANDARD
    digits: int = STANDARD_DIGITS

    @property
    def extended(self) -> bool:
        return self.mode is PrecisionMode.EXTENDED

    @property
    def bits(self) -> int:
        return _bits_for(self.digits) if self.extended else 53

    @property
    def eps(self) -> float:
        """Unit roundoff of the active arithmetic."""
        return 2.0 ** (1 - self.bits)

    @property
    def tiny(self):
        """Magnitude below which a value is treated as underflowed."""
        return 0.0 if self.extended else _FLOAT_TINY

    @property
    def print_digits(self) -> int:
        return self.digits if self.extended else 17

    def context(self):
        if not self.extended:
            return contextlib.nullcontext()
        return gmpy2.context(gmpy2.get_context(), precision=self.bits)

    def num(self, x):
        """Convert ``x`` to the backend number type.

        Floats are read through their shortest repr so that ``0.8`` means the
        decimal 0.8 in extended mode rather than its binary approximation.
        """
        if not self.extended:
            return float(x)
        with self.context():
            if isinstance(x, float):
                return gmpy2.mpfr(repr(x))
            if isinstance(x, (int, str)):
                return gmpy2.mpfr(x)
            return gmpy2.mpfr(x)

    def log(self, x):
        if self.extended:
            return gmpy2.log(x)
        return math.log(x)

    def log1p(self, x):
        if self.extended:
            return gmpy2.log1p(x)
        return math.log1p(x)

    def exp(self, x):
        if self.extended:
            return gmpy2.exp(x)
        try:
            return math.exp(x)
        except OverflowError:
            return math.inf

    def expm1(self, x):
        if self.extended:
            return gmpy2.expm1(x)
        return math.expm1(x)

    def fmt(self, x) -> str:
        """Decimal string with the full digit count of this arithmetic."""
        if x is None:
            return ""
        if isinstance(x, int) and not isinstance(x, bool):
            return str(x)
        if self.extended:
            with self.context():
                return format(x if isinstance(x, _MPFR) else self.num(x), f".{self.digits}g")
        return format(float(x), ".17g")


STANDARD = Arithmetic()
_MPFR = type(gmpy2.mpfr(0))


def extended(digits: int = DEFAULT_EXTENDED_DIGITS) -> Arithmetic:
    if digits < MIN_EXTENDED_DIGITS:
        raise ValueError(f"extended precision needs at least {MIN_EXTENDED_DIGITS} digits, got {digits}")
    return Arithmetic(PrecisionMode.EXTENDED, int(digits))


def arithmetic_for(value) -> Arithmetic:
    """Guess a backend from the number type of ``value``."""
    if isinstance(value, _MPFR):
        digits = max(MIN_EXTENDED_DIGITS, int((value.precision - 8) * math.log10(2)))
        return Arithmetic(PrecisionMode.EXTENDED, digits)
    return STANDARD
