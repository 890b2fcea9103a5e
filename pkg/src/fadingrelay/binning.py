"""Frequency binning: message index <-> (bin index, within-bin index).

Bins are contiguous index ranges, ``bin_k = {k*M_D, ..., k*M_D + M_D - 1}``.
All indices are zero-based.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CodebookParams:
    """Codebook sizes: ``M_R`` bins of ``M_D`` messages each."""

    M_R: int
    M_D: int

    def __post_init__(self):
        for name in ("M_R", "M_D"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def M_S(self) -> int:
        return self.M_R * self.M_D

    @property
    def direct(self) -> bool:
        """A single bin leaves nothing for the relay to forward."""
        return self.M_R == 1

    @classmethod
    def from_sizes(cls, M_S: int, M_R: int) -> "CodebookParams":
        if M_R < 1 or M_S % M_R:
            raise ValueError(f"M_R={M_R} does not divide M_S={M_S}")
        return cls(M_R=M_R, M_D=M_S // M_R)


def _check_index(name: str, value: int, upper: int) -> None:
    if not 0 <= value < upper:
        raise ValueError(f"{name}={value} outside [0, {upper})")


def split(m: int, cb: CodebookParams) -> tuple[int, int]:
    """Return ``(m1, m2)`` with ``m = m1*M_D + m2``."""
    _check_index("m", m, cb.M_S)
    return divmod(m, cb.M_D)


def join(m1: int, m2: int, cb: CodebookParams) -> int:
    _check_index("m1", m1, cb.M_R)
    _check_index("m2", m2, cb.M_D)
    return m1 * cb.M_D + m2


def bin_members(m1: int, cb: CodebookParams) -> range:
    _check_index("m1", m1, cb.M_R)
    return range(m1 * cb.M_D, (m1 + 1) * cb.M_D)
