"""Hausdorff content bounds and the ball-merging procedure for uniformly perfect sets.

A cover is a finite list of open balls ``B(x_i, r_i)`` with centers in the
covered set.  :func:`merge_cover` repeatedly fuses a pair of balls that are
comparable in size (``r_i <= alpha r_j``) and close (``B(x_i, c r_i)`` meets
``B(x_j, r_j)``) into one ball of radius ``r_i + r_j + alpha c min(r_i, r_j)``.
Below the exponent threshold ``log 2 / log(alpha c + 2)`` no fusion increases
``sum r**eps``, and on a uniformly perfect set the ball containing a fixed
point ends up comparable to the scale of the set around it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .grid import MetricGrid, SetMask

__all__ = [
    "CoverError",
    "BallCover",
    "MergeParams",
    "MergeStep",
    "epsilon_threshold",
    "merge_inequality_holds",
    "merge_cover",
    "covers",
    "surviving_radius_bound",
    "SurvivingRadius",
    "content_upper",
    "content_lower_via_perfectness",
    "random_cover",
]


class CoverError(ValueError):
    pass


def epsilon_threshold(C: float) -> float:
    """Largest exponent for which fusing two balls never increases ``sum r**eps``."""
    if not C > 0:
        raise CoverError("C must be positive")
    return math.log(2) / math.log(C + 2)


def merge_inequality_holds(a: float, b: float, C: float, eps: float) -> bool:
    """Whether ``a**eps + b**eps >= (a + b + C min(a, b))**eps``."""
    if not (a > 0 and b > 0):
        raise CoverError("a and b must be positive")
    return a**eps + b**eps >= (a + b + C * min(a, b)) ** eps


@dataclass
class BallCover:
    centers: np.ndarray
    radii: np.ndarray
    eps: float = 1.0

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.radii = np.asarray(self.radii, dtype=float).ravel()
        if self.centers.shape[0] != self.radii.size:
            raise CoverError("one radius per center required")
        if np.any(self.radii <= 0):
            raise CoverError("radii must be positive")

    def __len__(self) -> int:
        return self.radii.size

    def weight(self, eps: float | None = None) -> float:
        e = self.eps if eps is None else eps
        return float(np.sum(self.radii**e))

    def to_csv(self, path: str | Path) -> None:
        dim = self.centers.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cx", "cy", "cz"][:dim] + ["r"])
            for c, r in zip(self.centers, self.radii):
                w.writerow([repr(float(v)) for v in c] + [repr(float(r))])

    @classmethod
    def from_csv(cls, path: str | Path, eps: float = 1.0) -> BallCover:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1], eps)


def covers(cover: BallCover, points: np.ndarray) -> bool:
    """Every point lies in some open ball of the cover."""
    points = np.atleast_2d(points)
    tree = cKDTree(points)
    hit = np.zeros(len(points), dtype=bool)
    for c, r in zip(cover.centers, cover.radii):
        idx = tree.query_ball_point(c, np.nextafter(r, 0.0))
        hit[idx] = True
    return bool(hit.all())


@dataclass(frozen=True)
class MergeParams:
    alpha: float
    c_up: float
    eps: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise CoverError("alpha must exceed 1")
        if not self.c_up >= 1:
            raise CoverError("c_UP must be >= 1")
        if not 0 < self.eps < epsilon_threshold(self.alpha * self.c_up):
            raise CoverError("exponent above merge threshold")

    @property
    def C(self) -> float:
        return self.alpha * self.c_up


@dataclass(frozen=True)
class MergeStep:
    step: int
    i: int
    j: int
    new_r: float
    sum_eps: float


def _find_pair(centers, radii, alpha, c_up):
    n = radii.size
    if n < 2:
        return None
    dist = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    ri, rj = radii[:, None], radii[None, :]
    # r_i <= alpha r_j  and  B(x_i, c r_i) meets B(x_j, r_j)
    ok = (ri <= alpha * rj) & (dist < c_up * ri + rj)
    ok = np.triu(ok | ok.T, k=1)
    ii, jj = np.nonzero(ok)
    if ii.size == 0:
        return None
    k = np.lexsort((ii, ii + jj))[0]
    return int(ii[k]), int(jj[k])


def merge_cover(
    cover: BallCover, params: MergeParams, target: np.ndarray | None = None
) -> tuple[BallCover, list[MergeStep]]:
    """Fuse balls until no admissible pair is left.

    Pairs are scanned by increasing ``i + j`` (then ``i``).  The fused ball sits at
    the center of the larger ball (the lower index on ties) and takes the lower
    index's slot.  When ``target`` points are given, coverage is re-checked after
    every fusion.
    """
    centers = cover.centers.copy()
    radii = cover.radii.copy()
    eps = params.eps
    steps: list[MergeStep] = []
    last = float(np.sum(radii**eps))
    while True:
        pair = _find_pair(centers, radii, params.alpha, params.c_up)
        if pair is None:
            break
        i, j = pair
        new_r = radii[i] + radii[j] + params.C * min(radii[i], radii[j])
        keep = i if radii[i] >= radii[j] else j
        new_c = centers[keep].copy()
        centers = np.delete(centers, j, axis=0)
        radii = np.delete(radii, j)
        centers[i] = new_c
        radii[i] = new_r
        total = float(np.sum(radii**eps))
        if total > last * (1 + 1e-12):
            raise AssertionError(f"sum r^eps increased at step {len(steps) + 1}: {last} -> {total}")
        last = total
        steps.append(MergeStep(len(steps) + 1, i, j, float(new_r), total))
        if target is not None and not covers(BallCover(centers, radii, eps), target):
            raise AssertionError(f"coverage lost at step {len(steps)}")
    return BallCover(centers, radii, eps), steps


def write_merge_trace(steps: list[MergeStep], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "i", "j", "new_r", "sum_eps"])
        for s in steps:
            w.writerow([s.step, s.i, s.j, repr(s.new_r), repr(s.sum_eps)])


@dataclass
class SurvivingRadius:
    radius: float
    bound: float
    passed: bool
    chain: list[int] = field(default_factory=list)


def surviving_radius_bound(
    cover: BallCover, x0, r0: float, params: MergeParams, target: np.ndarray | None = None
) -> SurvivingRadius:
    """Radius of the (largest) ball containing ``x0`` against ``(alpha-1) r0 / (alpha (c+1))``.

    With ``target`` points, the chain of ever smaller balls leading out of
    ``closure(B(x0, r0))`` is also extracted.
    """
    x0 = np.asarray(x0, dtype=float)
    d = np.linalg.norm(cover.centers - x0, axis=1)
    inside = np.flatnonzero(d < cover.radii)
    if inside.size == 0:
        raise CoverError("cover does not cover x0")
    first = int(inside[np.argmax(cover.radii[inside])])
    r1 = float(cover.radii[first])
    bound = (params.alpha - 1) * r0 / (params.alpha * (params.c_up + 1))
    chain = [first]
    if target is not None:
        pts = np.atleast_2d(np.asarray(target, dtype=float))
        near = pts[np.linalg.norm(pts - x0, axis=1) <= r0]
        cur = first
        while True:
            c, r = cover.centers[cur], cover.radii[cur]
            dist = np.linalg.norm(near - c, axis=1)
            ring = near[(dist >= r) & (dist < params.c_up * r)]
            if ring.size == 0:
                break
            y = ring[0]
            owners = np.flatnonzero(np.linalg.norm(cover.centers - y, axis=1) < cover.radii)
            owners = [k for k in owners if k not in chain]
            if not owners:
                break
            cur = int(owners[0])
            chain.append(cur)
    return SurvivingRadius(r1, bound, r1 >= bound, chain)


def random_cover(
    points: np.ndarray, rng: np.random.Generator, r_min: float, r_max: float, eps: float = 1.0
) -> BallCover:
    """Cover ``points`` by balls centered at randomly chosen uncovered points with log-uniform radii."""
    points = np.atleast_2d(points)
    tree = cKDTree(points)
    uncovered = np.ones(len(points), dtype=bool)
    centers, radii = [], []
    while uncovered.any():
        k = rng.choice(np.flatnonzero(uncovered))
        r = float(np.exp(rng.uniform(math.log(r_min), math.log(r_max))))
        centers.append(points[k])
        radii.append(r)
        uncovered[tree.query_ball_point(points[k], np.nextafter(r, 0.0))] = False
        uncovered[k] = False
    return BallCover(np.array(centers), np.array(radii), eps)


def content_upper(grid: MetricGrid, E: SetMask, s: float) -> float:
    """Upper bound for the Hausdorff ``s``-content of the union of the cells of ``E``.

    For each dyadic radius a greedy cover by balls centered at cells of ``E`` is
    built; a ball of radius ``rho`` is credited only with the cells it contains
    entirely (center distance ``<= rho - h sqrt(Q)/2``), so the result bounds the
    content of the cell union itself.  The best generation wins.
    """
    if not s > 0:
        raise CoverError("s must be positive")
    pts = grid.centers()[E.cells]
    if len(pts) == 0:
        return 0.0
    half_diag = grid.h * math.sqrt(grid.Q) / 2
    tree = cKDTree(pts)
    diam = float(np.max(np.ptp(pts, axis=0))) * math.sqrt(grid.Q) + 2 * half_diag
    best = math.inf
    rho = half_diag
    while True:
        uncovered = np.ones(len(pts), dtype=bool)
        n = 0
        for k in range(len(pts)):
            if uncovered[k]:
                n += 1
                uncovered[tree.query_ball_point(pts[k], rho - half_diag + 1e-12 * grid.h)] = False
                uncovered[k] = False
        best = min(best, n * rho**s)
        if n == 1 or rho > 2 * diam:
            break
        rho *= 2
    return best


def content_lower_via_perfectness(x0, r0: float, c_up: float, eps: float) -> float:
    """Certified lower bound ``(r0 / (2 c + 2))**eps`` for the ``eps``-content of a
    ``c``-uniformly perfect set near ``x0`` at scale ``r0`` (``alpha = 2``)."""
    if not 0 < eps < epsilon_threshold(2 * c_up):
        raise CoverError("exponent above merge threshold")
    return r0**eps / (2 * c_up + 2) ** eps
