"""Exact arithmetic on the eight angles {0, pi/4, ..., 7pi/4}.

Angles are stored as integer counts of pi/4 (``eighths``) modulo 8.  Floats
only appear in :attr:`Angle.radians`, which the statevector engine uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["Angle", "PI", "ZERO", "ALL", "add", "negate", "mf_encode", "delta", "sample_uniform"]


@dataclass(frozen=True, order=True)
class Angle:
    eighths: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "eighths", int(self.eighths) % 8)

    @property
    def radians(self) -> float:
        return self.eighths * math.pi / 4

    def __add__(self, other: Angle) -> Angle:
        return Angle(self.eighths + other.eighths)

    def __sub__(self, other: Angle) -> Angle:
        return Angle(self.eighths - other.eighths)

    def __neg__(self) -> Angle:
        return Angle(-self.eighths)

    def times(self, k: int) -> Angle:
        return Angle(self.eighths * k)

    def __repr__(self) -> str:
        return f"Angle({self.eighths}pi/4)"


ZERO = Angle(0)
PI = Angle(4)
ALL = tuple(Angle(k) for k in range(8))
_UNIFORM8 = (0.125,) * 8


def add(a: Angle, b: Angle) -> Angle:
    return Angle(a.eighths + b.eighths)


def negate(a: Angle) -> Angle:
    return Angle(-a.eighths)


def mf_encode(t: Angle, x: int, z: int) -> Angle:
    """Return ``(-1)**x * t + z*pi``, the angle sent to the measuring server
    when the shared pair carries the Pauli label ``(x, z)``."""
    return Angle((-t.eighths if x else t.eighths) + 4 * z)


def delta(theta: Angle, phi_prime: Angle, r: int) -> Angle:
    """Blinded measurement angle ``theta + phi_prime + r*pi``."""
    return Angle(theta.eighths + phi_prime.eighths + 4 * r)


def sample_uniform(rng, tag: str = "client") -> Angle:
    """Draw one angle uniformly.

    ``rng`` is a :class:`numpy.random.Generator` or any object with a
    ``pick(probs, tag)`` method (see :mod:`bqcsim.wire`).
    """
    if hasattr(rng, "pick"):
        return Angle(rng.pick(_UNIFORM8, tag))
    return Angle(int(rng.integers(8)))
