"""Enumeration guards shared by every module that walks Λ^J exhaustively."""

import os

DEFAULT_GUARD_BITS = 20
GUARD_ENV = "LIFTLAB_GUARD_BITS"


class GuardError(ValueError):
    """An enumeration would exceed the configured resource guard."""


class VerificationError(AssertionError):
    """A checked identity or inequality failed on concrete data."""


def guard_bits() -> int:
    raw = os.environ.get(GUARD_ENV)
    if raw is None:
        return DEFAULT_GUARD_BITS
    try:
        return int(raw)
    except ValueError:
        raise GuardError(f"{GUARD_ENV} must be an integer, got {raw!r}") from None


def check_guard(bits: int, what: str = "domain") -> None:
    limit = guard_bits()
    if bits > limit:
        raise GuardError(f"{what} needs 2^{bits} points, guard is 2^{limit} ({GUARD_ENV})")
