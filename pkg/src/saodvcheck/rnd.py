"""Ranked neighbor discovery: timing acceptance, distance estimate, rank table.

All functions are unit-agnostic as long as the inputs are consistent (for
example seconds with meters/second, or picoseconds with millimeters/picosecond).
The network model feeds exact integers and ``Fraction`` values so that no
floating point ever reaches a state fingerprint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from numbers import Real
from typing import Hashable, Literal, Optional

SkewSign = Literal["lower", "upper"]


class DomainError(ValueError):
    """An input lies outside the domain of a discovery operation."""


class Rank(IntEnum):
    UNTRUSTED = 0
    FAR = 1
    MID = 2
    NEAR = 3
    CLOSE = 4


def _finite(name: str, value: Real) -> None:
    try:
        ok = math.isfinite(value)
    except (TypeError, OverflowError):
        ok = False
    if not ok:
        raise DomainError(f"{name} must be a finite number, got {value!r}")


@dataclass(frozen=True)
class TimingParams:
    """Clock skew allowance, MAC and packet airtime, propagation speed, range."""

    delta_t: Real
    t_mac: Real
    t_pkt: Real
    v_light: Real
    range: Real

    def __post_init__(self) -> None:
        for name in ("delta_t", "t_mac", "t_pkt", "v_light", "range"):
            _finite(name, getattr(self, name))
        if self.delta_t < 0:
            raise DomainError("delta_t must be >= 0")
        if self.t_mac < 0:
            raise DomainError("t_mac must be >= 0")
        if self.t_pkt <= 0:
            raise DomainError("t_pkt must be > 0")
        if self.v_light <= 0:
            raise DomainError("v_light must be > 0")
        if self.range <= 0:
            raise DomainError("range must be > 0")


@dataclass(frozen=True)
class ProbeTiming:
    t_s: Real
    t_r: Real

    def __post_init__(self) -> None:
        _finite("t_s", self.t_s)
        _finite("t_r", self.t_r)


@dataclass(frozen=True, order=True)
class NeighborRecord:
    neighbor: Hashable
    d_prime: Real
    rank: Rank


def tesla_condition(timing: ProbeTiming, params: TimingParams) -> bool:
    """True iff the MAC arrives before the sender discloses the key.

    Evaluated in the printed form ``t_r + T_mac < t_s - dt + T_mac + T_pkt``
    with strict inequality; T_mac cancels but is kept on both sides.
    """
    lhs = timing.t_r + params.t_mac
    rhs = timing.t_s - params.delta_t + params.t_mac + params.t_pkt
    return lhs < rhs


def estimate_distance(
    timing: ProbeTiming, params: TimingParams, skew_sign: SkewSign = "lower"
) -> Real:
    """Distance estimate ``v * (t_r - t_s - dt)``, clamped below at zero.

    ``skew_sign="upper"`` adds the skew allowance instead, which gives a true
    upper bound on the sender distance.
    """
    if skew_sign == "lower":
        elapsed = timing.t_r - timing.t_s - params.delta_t
    elif skew_sign == "upper":
        elapsed = timing.t_r - timing.t_s + params.delta_t
    else:
        raise DomainError(f"unknown skew_sign {skew_sign!r}")
    d = params.v_light * elapsed
    return d if d > 0 else d * 0


def assign_rank(d_prime: Real, range_: Real) -> Rank:
    """Map an estimated distance to a trust rank.

    Each row's upper bound is inclusive, so ties go to the higher rank.
    Anything beyond the transmission range is untrusted.
    """
    _finite("d_prime", d_prime)
    _finite("range", range_)
    if d_prime < 0:
        raise DomainError(f"d_prime must be >= 0, got {d_prime!r}")
    if range_ <= 0:
        raise DomainError(f"range must be > 0, got {range_!r}")
    # compare 4*d against multiples of range to stay exact for integers
    scaled = 4 * d_prime
    if scaled <= range_:
        return Rank.CLOSE
    if scaled <= 2 * range_:
        return Rank.NEAR
    if scaled <= 3 * range_:
        return Rank.MID
    if scaled <= 4 * range_:
        return Rank.FAR
    return Rank.UNTRUSTED


def process_probe(
    timing: ProbeTiming,
    neighbor: Hashable,
    params: TimingParams,
    skew_sign: SkewSign = "lower",
) -> Optional[NeighborRecord]:
    """Accept or reject a probe; ``None`` means the probe was rejected."""
    if not tesla_condition(timing, params):
        return None
    d = estimate_distance(timing, params, skew_sign)
    return NeighborRecord(neighbor, d, assign_rank(d, params.range))
