"""Refinement-trend verdicts for quantities that stay bounded or blow up as h -> 0.

A single grid never witnesses an infimum over an infinite-dimensional class, so
every verdict here looks at a sequence of estimates on successively halved grids.
A sequence is called diverging when either

* every refinement multiplies it by at least ``FAST_FACTOR`` (power-law blow-up), or
* it keeps increasing and its increments never shrink, which is what
  logarithmic blow-up (such as ``log(1/h)**2`` for a puncture at ``p = Q``) looks
  like on a dyadic ladder.

Anything else is bounded at the tested scales: its increments contract, so the
sequence behaves like a convergent one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

__all__ = ["FAST_FACTOR", "TrendVerdict", "growth_verdict", "strictly_decreasing"]

FAST_FACTOR = 2.0


@dataclass(frozen=True)
class TrendVerdict:
    label: str  # "bounded" or "diverging"
    values: tuple[float, ...]
    factors: tuple[float, ...]
    increments: tuple[float, ...]
    rule: str

    @property
    def bounded(self) -> bool:
        return self.label == "bounded"

    def to_dict(self) -> dict:
        return asdict(self)


def growth_verdict(values, rel_tol: float = 1e-9) -> TrendVerdict:
    """Classify estimates ordered from the coarsest to the finest grid (at least three).

    Increments smaller than ``rel_tol`` times the value count as zero, so a sequence
    that has settled is bounded rather than "non-shrinking".
    """
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("a trend needs at least three refinements")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("trend values must be positive and finite")
    factors = v[1:] / v[:-1]
    inc = np.diff(v)
    inc = np.where(np.abs(inc) <= rel_tol * np.abs(v[1:]), 0.0, inc)
    if np.all(factors >= FAST_FACTOR):
        label, rule = "diverging", f"grows at least {FAST_FACTOR:g}x per refinement"
    elif np.all(inc > 0) and np.all(inc[1:] >= inc[:-1]):
        label, rule = "diverging", "increasing with non-shrinking increments"
    else:
        label, rule = "bounded", "increments contract or vanish"
    return TrendVerdict(
        label,
        tuple(float(x) for x in v),
        tuple(float(x) for x in factors),
        tuple(float(x) for x in inc),
        rule,
    )


def strictly_decreasing(values) -> bool:
    v = list(values)
    return all(b < a for a, b in zip(v, v[1:])) and not any(math.isnan(x) for x in v)
