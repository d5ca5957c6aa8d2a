"""Uniform p-fatness scans: capacity ratios of ``B(x, r) & E`` against full balls.

Each row of a scan is ``cap_p(B(x,r) & E, B(x,2r)) / cap_p(B(x,r), B(x,2r))`` for a
center ``x`` in ``E`` and a dyadic radius ``r``.  Alongside every row the ratio of
a single grid cell at the same center and radius is reported: it is what a set
of zero capacity looks like at this resolution, and the scan verdict asks for
the worst row to beat it by the threshold factor.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .capacity import radial_condenser_oracle, solve_capacity
from .grid import MetricGrid, SetMask, sphere_area

__all__ = [
    "FatnessError",
    "FatnessRow",
    "FatnessScan",
    "fatness_ratio",
    "fatness_scan",
    "point_ratio",
    "farthest_point_centers",
    "fatness_to_perfectness_bound",
    "THIN_FACTOR",
]

# A fat set must beat a single cell by this factor at its worst row.
THIN_FACTOR = 2.0


class FatnessError(ValueError):
    pass


@dataclass(frozen=True)
class FatnessRow:
    center: tuple[float, ...]
    r: float
    ratio: float
    point_ratio: float
    thin: bool = False
    converged: bool = True

    @property
    def excess(self) -> float:
        return self.ratio / self.point_ratio if self.point_ratio > 0 else math.inf


def _ball_cells(grid: MetricGrid, center, r: float) -> np.ndarray:
    # Only the bounding box of the ball is examined.
    c = np.asarray(center, dtype=float)
    lo = np.maximum(np.floor((c - r - grid.lo) / grid.h).astype(int) - 1, 0)
    hi = np.minimum(np.ceil((c + r - grid.lo) / grid.h).astype(int) + 2, grid.shape)
    win = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
    axes = [grid.lo[k] + (np.arange(win[k].start, win[k].stop) + 0.5) * grid.h for k in range(grid.Q)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    cells = np.zeros(grid.shape, dtype=bool)
    cells[win] = np.linalg.norm(pts - c, axis=-1) < r
    return cells


def _check_window(grid: MetricGrid, x, r: float):
    lo, hi = (np.asarray(b) for b in grid.params.bbox)
    x = np.asarray(x, dtype=float)
    if np.any(x - 2 * r < lo) or np.any(x + 2 * r > hi):
        raise FatnessError("B(x, 2r) leaves the grid")


def _ratio_parts(grid: MetricGrid, plate_cells: np.ndarray, x, r: float, p: float):
    ball = grid.mask(_ball_cells(grid, x, r))
    big = grid.mask(_ball_cells(grid, x, 2 * r))
    plate = grid.mask(plate_cells & ball.cells)
    den = solve_capacity(grid, ball, big, p)
    if not plate:
        return 0.0, den.converged
    num = solve_capacity(grid, plate, big, p)
    return num.value / den.value, num.converged and den.converged


def fatness_ratio(grid: MetricGrid, E: SetMask, x, r: float, p: float) -> tuple[float, bool]:
    """Capacity ratio at ``(x, r)`` and a flag set when ``B(x,r) & E`` has no cells."""
    _check_window(grid, x, r)
    ball = _ball_cells(grid, x, r)
    if not np.any(ball & E.cells):
        return 0.0, True
    ratio, _ = _ratio_parts(grid, E.cells, x, r, p)
    return ratio, False


def point_ratio(grid: MetricGrid, x, r: float, p: float) -> float:
    """Fatness ratio of the single cell containing ``x``."""
    cell = np.zeros(grid.shape, dtype=bool)
    cell[grid.cell_of(x)] = True
    ratio, _ = _ratio_parts(grid, cell, x, r, p)
    return ratio


def farthest_point_centers(grid: MetricGrid, E: SetMask, count: int, margin: float) -> np.ndarray:
    """Up to ``count`` centers of ``E`` cells whose ``margin``-ball stays in the grid.

    Starts at the admissible cell nearest the bbox center, then repeatedly adds
    the admissible cell farthest from those already chosen.
    """
    if count < 1:
        raise FatnessError("center_count must be >= 1")
    lo, hi = (np.asarray(b) for b in grid.params.bbox)
    pts = grid.centers()[E.cells]
    ok = np.all((pts - margin >= lo) & (pts + margin <= hi), axis=1)
    pts = pts[ok]
    if len(pts) == 0:
        raise FatnessError("no admissible centers in E")
    mid = (lo + hi) / 2
    chosen = [int(np.argmin(np.linalg.norm(pts - mid, axis=1)))]
    dmin = np.linalg.norm(pts - pts[chosen[0]], axis=1)
    while len(chosen) < min(count, len(pts)):
        k = int(np.argmax(dmin))
        if dmin[k] == 0:
            break
        chosen.append(k)
        dmin = np.minimum(dmin, np.linalg.norm(pts - pts[k], axis=1))
    return pts[chosen]


@dataclass
class FatnessScan:
    p: float
    h: float
    rows: list[FatnessRow]
    skipped_radii: list[float] = field(default_factory=list)

    @property
    def c0_est(self) -> float:
        return min(row.ratio for row in self.rows) if self.rows else math.nan

    @property
    def converged(self) -> bool:
        return all(row.converged for row in self.rows)

    @property
    def min_excess(self) -> float:
        return min(row.excess for row in self.rows) if self.rows else math.nan

    @property
    def fat_at_tested_scales(self) -> bool:
        return bool(self.rows) and self.min_excess >= THIN_FACTOR

    def radii(self) -> list[float]:
        return sorted({row.r for row in self.rows}, reverse=True)

    def min_ratio_by_radius(self) -> list[tuple[float, float]]:
        return [(r, min(row.ratio for row in self.rows if row.r == r)) for r in sorted(self.radii())]

    def to_csv(self) -> str:
        dim = len(self.rows[0].center) if self.rows else 2
        lines = [",".join(["cx", "cy", "cz"][:dim] + ["r", "ratio", "point_ratio"])]
        for row in self.rows:
            lines.append(",".join([*(repr(float(v)) for v in row.center), repr(row.r), repr(row.ratio), repr(row.point_ratio)]))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "p": self.p,
            "h": self.h,
            "c0_est": self.c0_est,
            "min_excess_over_point": self.min_excess,
            "fat_at_tested_scales": self.fat_at_tested_scales,
            "converged": self.converged,
            "radii": self.radii(),
            "skipped_radii": self.skipped_radii,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _row_job(args):
    grid, cells, x, r, p = args
    ball = _ball_cells(grid, x, r)
    if not np.any(ball & cells):
        return 0.0, True, True
    ratio, ok = _ratio_parts(grid, cells, x, r, p)
    return ratio, False, ok


def _point_job(args):
    grid, x, r, p = args
    cell = np.zeros(grid.shape, dtype=bool)
    cell[grid.cell_of(x)] = True
    return _ratio_parts(grid, cell, x, r, p)[0]


def fatness_scan(
    grid: MetricGrid,
    E: SetMask,
    p: float,
    center_count: int = 6,
    radius_levels: int = 5,
    r_max: float | None = None,
    min_cells: float = 4.0,
    workers: int = 1,
    centers=None,
) -> FatnessScan:
    """Ratios over farthest-point centers of ``E`` and radii ``r_max / 2**k``.

    Radii below ``min_cells * h`` are under-resolved and skipped (and listed).
    ``r_max`` defaults to a quarter of the shortest bbox side.
    """
    if not E:
        raise FatnessError("E is empty")
    if r_max is None:
        r_max = grid.side() / 4
    radii = [r_max / 2**k for k in range(radius_levels)]
    used = [r for r in radii if r >= min_cells * grid.h]
    skipped = [r for r in radii if r < min_cells * grid.h]
    if not used:
        raise FatnessError("no radius is resolved by the grid")
    if centers is None:
        centers = farthest_point_centers(grid, E, center_count, 2 * max(used))
    centers = [tuple(float(v) for v in c) for c in np.atleast_2d(centers)]
    for c in centers:
        _check_window(grid, c, max(used))
    jobs = [(grid, E.cells, c, r, p) for c in centers for r in used]
    # A single cell's ratio only depends on the radius once centers are cell centers.
    point_jobs = [(grid, centers[0], r, p) for r in used]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_row_job, jobs))
            point_values = list(pool.map(_point_job, point_jobs))
    else:
        results = [_row_job(j) for j in jobs]
        point_values = [_point_job(j) for j in point_jobs]
    point_of = dict(zip(used, point_values))
    rows = []
    for (_, _, c, r, _), (ratio, thin, ok) in zip(jobs, results):
        rows.append(FatnessRow(c, r, ratio, point_of[r], thin, ok))
    return FatnessScan(p, grid.h, rows, skipped)


def fatness_to_perfectness_bound(c0: float, p: float, Q: int) -> dict:
    """Largest annulus ratio ``m`` a uniformly p-fat complement (constant ``c0``) can leave empty, p < Q.

    An empty annulus ``B(x0,r) \\ B(x0,r/m)`` forces
    ``c0 * cap_p(B_r, B_2r) <= cap_p(B_(r/m), B_2r) <= omega r**(Q-p) / ((Q-p) log(m)**p)``, so
    ``log m <= (omega / ((Q-p) c0 K))**(1/p)`` with ``K = cap_p(B_1, B_2)`` from the radial oracle.
    """
    if not p < Q:
        raise FatnessError("bound requires p < Q")
    if not 0 < c0 <= 1:
        raise FatnessError("c0 must lie in (0, 1]")
    upper_const = sphere_area(Q) / (Q - p)
    lower_const = radial_condenser_oracle(1.0, 2.0, p, Q)
    log_m = (upper_const / (c0 * lower_const)) ** (1 / p)
    return {
        "c0": c0,
        "p": p,
        "Q": Q,
        "log_cutoff_constant": upper_const,
        "ball_capacity_constant": lower_const,
        "log_m_max": log_m,
        "m_max": math.exp(log_m),
    }
