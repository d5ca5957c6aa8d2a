"""Uniform perfectness constants of finite sets and the related threshold formulas.

For a finite set the smallest admissible constant is the largest ratio between
consecutive distinct distances seen from a point of the set.  Radii below a
point's nearest neighbour are ignored (otherwise no finite set qualifies)
unless a resolution floor ``r_min`` is supplied, in which case the gap between
``r_min`` and the nearest neighbour counts as well.  An optional ``r_max`` guard
drops gaps that end beyond it, for fixtures that truncate a larger set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .grid import MetricGrid, SetMask

__all__ = [
    "PerfectnessError",
    "PerfectnessReport",
    "perfectness_constant",
    "satisfies_definition",
    "mask_points",
    "boundary_points",
    "sharp_threshold",
    "hardy_perfectness_constant",
    "log_hardy_perfectness_constant",
]


class PerfectnessError(ValueError):
    pass


@dataclass
class PerfectnessReport:
    c_up: float
    witness_center: np.ndarray
    witness_r: float
    per_center: np.ndarray = field(repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "c_UP": self.c_up,
                "witness_center": [float(v) for v in self.witness_center],
                "witness_r": self.witness_r,
            },
            indent=2,
            sort_keys=True,
        )

    def per_center_csv(self, points: np.ndarray) -> str:
        dim = points.shape[1]
        lines = [",".join(["cx", "cy", "cz"][:dim] + ["max_gap_ratio"])]
        for pt, ratio in zip(points, self.per_center):
            lines.append(",".join(repr(float(v)) for v in pt) + f",{float(ratio)!r}")
        return "\n".join(lines) + "\n"


def _as_points(E) -> np.ndarray:
    pts = np.asarray(E, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def mask_points(grid: MetricGrid, E: SetMask) -> np.ndarray:
    return grid.centers()[E.cells]


def boundary_points(grid: MetricGrid) -> np.ndarray:
    """Centers of complement cells with a face neighbour in the domain (a discrete boundary)."""
    dom = grid.domain_mask
    touch = np.zeros_like(dom)
    for axis in range(dom.ndim):
        for shift in (1, -1):
            rolled = np.roll(dom, shift, axis=axis)
            edge = [slice(None)] * dom.ndim
            edge[axis] = 0 if shift == 1 else -1
            rolled[tuple(edge)] = False
            touch |= rolled
    return grid.centers()[touch & ~dom]


def _distinct(d: np.ndarray, tol: float) -> np.ndarray:
    d = np.sort(d[d > tol])
    if d.size == 0:
        return d
    keep = np.concatenate([[True], np.diff(d) > tol])
    return d[keep]


def perfectness_constant(
    E,
    r_min: float | None = None,
    r_max: float | None = None,
    tol: float | None = None,
    chunk: int = 512,
) -> PerfectnessReport:
    """Smallest constant ``c`` for which every annulus ``B(x, c r) \\ B(x, r)`` around a point
    of ``E`` meets ``E`` whenever ``E`` continues beyond it.

    ``E`` is an ``(n, Q)`` array of points (or ``(n,)`` on a line).  Distances closer
    than ``tol`` (default ``1e-9`` times the diameter) are identified.
    """
    pts = _as_points(E)
    if len(pts) < 2:
        raise PerfectnessError("uniform perfectness undefined for singletons")
    span = float(np.max(np.ptp(pts, axis=0))) * math.sqrt(pts.shape[1])
    if tol is None:
        tol = 1e-9 * span
    per_center = np.ones(len(pts))
    best, w_center, w_r = 1.0, pts[0], 0.0
    for start in range(0, len(pts), chunk):
        block = cdist(pts[start : start + chunk], pts)
        for row, d in enumerate(block):
            d = _distinct(d, tol)
            if d.size == 0:
                continue
            if r_min is not None:
                d = np.concatenate([[r_min], d[d > r_min + tol]])
            if r_max is not None:
                d = d[d <= r_max + tol]
            if d.size < 2:
                continue
            ratios = d[1:] / d[:-1]
            k = int(np.argmax(ratios))
            per_center[start + row] = max(1.0, ratios[k])
            if ratios[k] > best:
                best, w_center, w_r = float(ratios[k]), pts[start + row], float(d[k])
    return PerfectnessReport(best, np.array(w_center), w_r, per_center)


def satisfies_definition(
    E, c: float, r_min: float | None = None, r_max: float | None = None, rel: float = 1e-12
) -> bool:
    """Direct check of the annulus condition at the critical radii of every point.

    The condition can only first fail for ``r`` just above a distance realised in
    ``E`` (or at ``r_min``), so those radii are tested; radii below each point's
    nearest neighbour are skipped unless ``r_min`` is set.
    """
    pts = _as_points(E)
    for x in pts:
        d = np.linalg.norm(pts - x, axis=1)
        d = d[d > 0]
        if r_max is not None:
            d = d[d <= r_max * (1 + rel)]
        if d.size == 0:
            continue
        floor = r_min if r_min is not None else d.min()
        radii = np.concatenate([d, d * (1 + rel), [floor]])
        radii = radii[radii >= floor]
        d = np.sort(d)
        # counts of distances in [r, c r) and in [c r, inf)
        start = np.searchsorted(d, radii, side="left")
        stop = np.searchsorted(d, c * radii, side="left")
        if np.any((stop < d.size) & (stop == start)):
            return False
    return True


def sharp_threshold(p: float, Q: float) -> float:
    """``2**(1/(Q-p)) - 2``: perfectness constants below it force uniform p-fatness.

    Only meaningful for ``max(Q - log 2/log 3, 1) < p < Q``, where it exceeds 1.
    """
    lower = max(Q - math.log(2) / math.log(3), 1.0)
    if not lower < p < Q:
        raise PerfectnessError(f"outside remark's range: need {lower} < p < {Q}")
    return 2.0 ** (1.0 / (Q - p)) - 2.0


def _hardy_c(c_A: float, Q: int) -> float:
    return 1.0 / (4**Q * c_A * math.log(2))


def log_hardy_perfectness_constant(c_H: float, c_A: float, Q: int) -> float:
    """Natural log of :func:`hardy_perfectness_constant` (finite even when the constant overflows)."""
    if not (c_H > 0 and c_A > 0):
        raise PerfectnessError("c_H and c_A must be positive")
    return math.log(4) + 2 ** (Q + 1) * c_H * c_A / _hardy_c(c_A, Q)


def hardy_perfectness_constant(c_H: float, c_A: float, Q: int) -> float:
    """Perfectness constant ``4 exp(2**(Q+1) c_H c_A / c)``, ``c = 1/(4**Q c_A log 2)``, implied by a
    Q-Hardy constant ``c_H``.  Returns ``inf`` when the value exceeds the float range."""
    log_value = log_hardy_perfectness_constant(c_H, c_A, Q)
    try:
        return math.exp(log_value)
    except OverflowError:
        return math.inf
