"""Uniform Euclidean grids used as discrete Ahlfors-regular spaces.

A grid is an axis-aligned box cut into cubes of side ``h``; every cell carries
the Lebesgue measure ``h**Q`` and is identified with its center point.  Domains
are described by a :class:`DomainSpec`, a sequence of shape primitives combined
with union/difference, and rasterized by testing cell centers.  Shapes of zero
volume (points, segments, Cantor sets) are rasterized as the cells that contain
them, so a puncture occupies exactly one cell.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

__all__ = [
    "GridError",
    "SpaceParams",
    "Disk",
    "Box",
    "HalfSpace",
    "PuncturedDisk",
    "Annulus",
    "Point",
    "Segment",
    "Cantor",
    "DomainSpec",
    "MetricGrid",
    "SetMask",
    "build_grid",
    "cantor_intervals",
    "cantor_points",
    "cantor_mask",
    "ball_mask",
    "annulus_mask",
    "unit_ball_volume",
    "sphere_area",
]


class GridError(ValueError):
    """Raised for degenerate domains, empty masks and bad resolutions."""


def unit_ball_volume(Q: int) -> float:
    return math.pi ** (Q / 2) / math.gamma(Q / 2 + 1)


def sphere_area(Q: int) -> float:
    """Surface measure of the unit sphere in R^Q (2*pi for Q=2, 4*pi for Q=3)."""
    return Q * unit_ball_volume(Q)


@dataclass(frozen=True)
class SpaceParams:
    Q: int
    h: float
    bbox: tuple[tuple[float, ...], tuple[float, ...]]
    c_A: float | None = None

    def __post_init__(self):
        if self.Q not in (2, 3):
            raise GridError(f"Q must be 2 or 3, got {self.Q}")
        if not self.h > 0:
            raise GridError("grid spacing must be positive")
        lo, hi = (tuple(float(v) for v in b) for b in self.bbox)
        if len(lo) != self.Q or len(hi) != self.Q:
            raise GridError("bbox dimension does not match Q")
        if any(b <= a for a, b in zip(lo, hi)):
            raise GridError("degenerate bbox")
        for a, b in zip(lo, hi):
            n = (b - a) / self.h
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise GridError(f"bbox side {b - a} is not a multiple of h={self.h}")
        object.__setattr__(self, "bbox", (lo, hi))
        if self.c_A is None:
            # Lebesgue balls satisfy r^Q/c <= |B(x,r)| <= c r^Q with c = |B(0,1)| >= 1.
            object.__setattr__(self, "c_A", max(1.0, unit_ball_volume(self.Q)))
        if self.c_A < 1:
            raise GridError("c_A must be >= 1")

    @property
    def shape(self) -> tuple[int, ...]:
        lo, hi = self.bbox
        return tuple(int(round((b - a) / self.h)) for a, b in zip(lo, hi))

    def with_h(self, h: float) -> SpaceParams:
        return SpaceParams(self.Q, h, self.bbox, self.c_A)


# ---------------------------------------------------------------------------
# shape primitives
# ---------------------------------------------------------------------------


def _vec(v) -> np.ndarray:
    return np.asarray(v, dtype=float)


@dataclass(frozen=True)
class Disk:
    """Open ball ``|x - center| < radius``."""

    center: tuple[float, ...]
    radius: float
    thin = False

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - _vec(self.center), axis=-1) < self.radius


@dataclass(frozen=True)
class Box:
    """Open box ``lo < x < hi`` (componentwise)."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    thin = False

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.all((pts > _vec(self.lo)) & (pts < _vec(self.hi)), axis=-1)


@dataclass(frozen=True)
class HalfSpace:
    """Open half-space ``normal . x < offset``."""

    normal: tuple[float, ...]
    offset: float
    thin = False

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return pts @ _vec(self.normal) < self.offset


@dataclass(frozen=True)
class Annulus:
    """``r_inner <= |x - center| < r_outer``."""

    center: tuple[float, ...]
    r_inner: float
    r_outer: float
    thin = False

    def __post_init__(self):
        if not 0 <= self.r_inner < self.r_outer:
            raise GridError("annulus needs 0 <= r_inner < r_outer")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(pts - _vec(self.center), axis=-1)
        return (d >= self.r_inner) & (d < self.r_outer)


@dataclass(frozen=True)
class Point:
    at: tuple[float, ...]
    thin = True

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.all(pts == _vec(self.at), axis=-1)

    def sample(self, h: float) -> np.ndarray:
        return _vec(self.at)[None, :]


@dataclass(frozen=True)
class Segment:
    a: tuple[float, ...]
    b: tuple[float, ...]
    thin = True

    def contains(self, pts: np.ndarray, atol: float = 1e-12) -> np.ndarray:
        a, b = _vec(self.a), _vec(self.b)
        ab = b - a
        t = np.clip((pts - a) @ ab / (ab @ ab), 0.0, 1.0)
        return np.linalg.norm(pts - (a + t[..., None] * ab), axis=-1) <= atol

    def sample(self, h: float) -> np.ndarray:
        a, b = _vec(self.a), _vec(self.b)
        n = max(2, int(math.ceil(np.linalg.norm(b - a) / (h / 4))) + 1)
        t = np.linspace(0.0, 1.0, n)[:, None]
        return a + t * (b - a)


@dataclass(frozen=True)
class PuncturedDisk:
    center: tuple[float, ...]
    radius: float
    puncture: tuple[float, ...]
    thin = False

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return Disk(self.center, self.radius).contains(pts) & ~Point(self.puncture).contains(pts)

    def rasterize(self, centers: np.ndarray, lo: np.ndarray, h: float) -> np.ndarray:
        mask = Disk(self.center, self.radius).contains(centers)
        mask[_cells_of(Point(self.puncture).sample(h), lo, h, mask.shape)] = False
        return mask


def cantor_intervals(theta: float, depth: int, length: float = 1.0) -> list[tuple[float, float]]:
    """Intervals of the depth-``depth`` stage of the middle-gap Cantor construction on [0, length]."""
    if not 0 < theta < 0.5:
        raise GridError("Cantor ratio must lie in (0, 1/2)")
    if depth < 0:
        raise GridError("depth must be >= 0")
    ivs = [(0.0, float(length))]
    for _ in range(depth):
        nxt = []
        for a, b in ivs:
            w = theta * (b - a)
            nxt.append((a, a + w))
            nxt.append((b - w, b))
        ivs = nxt
    return ivs


def cantor_points(theta: float, depth: int, length: float = 1.0, which: str = "endpoints") -> np.ndarray:
    """Finite point approximations of the Cantor set: interval ``endpoints``, ``left`` ends or ``mid``points."""
    ivs = cantor_intervals(theta, depth, length)
    if which == "endpoints":
        pts = sorted({v for iv in ivs for v in iv})
    elif which == "left":
        pts = [a for a, _ in ivs]
    elif which == "mid":
        pts = [(a + b) / 2 for a, b in ivs]
    else:
        raise ValueError(f"unknown point family {which!r}")
    return np.asarray(pts, dtype=float)


@dataclass(frozen=True)
class Cantor:
    """Cantor set of ratio ``theta`` and finite ``depth`` laid on the segment ``a -> b``."""

    theta: float
    depth: int
    a: tuple[float, ...]
    b: tuple[float, ...]
    thin = True

    def __post_init__(self):
        cantor_intervals(self.theta, 0)  # validates theta
        if self.depth < 0:
            raise GridError("depth must be >= 0")

    def contains(self, pts: np.ndarray, atol: float = 1e-12) -> np.ndarray:
        a, b = _vec(self.a), _vec(self.b)
        ab = b - a
        t = (pts - a) @ ab / (ab @ ab)
        on_line = np.linalg.norm(pts - (a + t[..., None] * ab), axis=-1) <= atol
        inside = np.zeros(t.shape, dtype=bool)
        for lo, hi in cantor_intervals(self.theta, self.depth):
            inside |= (t >= lo - atol) & (t <= hi + atol)
        return on_line & inside

    def sample(self, h: float) -> np.ndarray:
        a, b = _vec(self.a), _vec(self.b)
        L = float(np.linalg.norm(b - a))
        chunks = []
        for lo, hi in cantor_intervals(self.theta, self.depth):
            n = max(2, int(math.ceil((hi - lo) * L / (h / 4))) + 1)
            t = np.linspace(lo, hi, n)[:, None]
            chunks.append(a + t * (b - a))
        return np.concatenate(chunks)


_SHAPES = {
    "disk": Disk,
    "ball": Disk,
    "box": Box,
    "half-space": HalfSpace,
    "punctured-disk": PuncturedDisk,
    "annulus": Annulus,
    "point": Point,
    "segment": Segment,
    "cantor": Cantor,
}


def _cells_of(pts: np.ndarray, lo: np.ndarray, h: float, shape: tuple[int, ...]):
    """Index tuple of the half-open cells ``[lo + i h, lo + (i+1) h)`` holding ``pts``."""
    idx = np.floor((pts - lo) / h).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < np.asarray(shape)), axis=1)
    idx = idx[ok]
    return tuple(idx[:, k] for k in range(idx.shape[1]))


def _rasterize_shape(shape, centers: np.ndarray, lo: np.ndarray, h: float) -> np.ndarray:
    if hasattr(shape, "rasterize"):
        return shape.rasterize(centers, lo, h)
    if shape.thin:
        mask = np.zeros(centers.shape[:-1], dtype=bool)
        mask[_cells_of(shape.sample(h), lo, h, mask.shape)] = True
        return mask
    return shape.contains(centers)


@dataclass(frozen=True)
class DomainSpec:
    """Ordered boolean combination of shapes; ``ops[i]`` is ``"union"`` or ``"difference"``."""

    shapes: tuple = ()
    ops: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.shapes) != len(self.ops):
            raise GridError("every shape needs an op")
        for op in self.ops:
            if op not in ("union", "difference"):
                raise GridError(f"unknown op {op!r}")

    @classmethod
    def of(cls, *shapes) -> DomainSpec:
        return cls(tuple(shapes), ("union",) * len(shapes))

    def union(self, shape) -> DomainSpec:
        return DomainSpec(self.shapes + (shape,), self.ops + ("union",))

    def minus(self, shape) -> DomainSpec:
        return DomainSpec(self.shapes + (shape,), self.ops + ("difference",))

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0], dtype=bool)
        for shape, op in zip(self.shapes, self.ops):
            m = shape.contains(pts)
            out = out | m if op == "union" else out & ~m
        return out

    def rasterize(self, centers: np.ndarray, lo: np.ndarray, h: float) -> np.ndarray:
        mask = np.zeros(centers.shape[:-1], dtype=bool)
        for shape, op in zip(self.shapes, self.ops):
            m = _rasterize_shape(shape, centers, lo, h)
            if op == "union":
                mask |= m
            else:
                mask &= ~m
        return mask

    def to_config(self) -> list[dict]:
        names = {v: k for k, v in reversed(list(_SHAPES.items()))}
        out = []
        for shape, op in zip(self.shapes, self.ops):
            entry = {"shape": names[type(shape)], "op": op}
            for k, v in shape.__dict__.items():
                entry[k] = list(v) if isinstance(v, tuple) else v
            out.append(entry)
        return out

    @classmethod
    def from_config(cls, entries: Sequence[dict]) -> DomainSpec:
        """Parse ``[{"shape": "box", "lo": [...], "hi": [...], "op": "union"}, ...]``."""
        shapes, ops = [], []
        for entry in entries:
            entry = dict(entry)
            try:
                kind = entry.pop("shape")
            except KeyError:
                raise GridError(f"shape entry without 'shape' key: {entry}") from None
            op = entry.pop("op", "union")
            if kind not in _SHAPES:
                raise GridError(f"unknown shape {kind!r}")
            kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in entry.items()}
            try:
                shapes.append(_SHAPES[kind](**kwargs))
            except TypeError as exc:
                raise GridError(f"bad parameters for {kind}: {exc}") from None
            ops.append(op)
        return cls(tuple(shapes), tuple(ops))


# ---------------------------------------------------------------------------
# grids and masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SetMask:
    """A finite union of grid cells, stored as a boolean array bound to one grid."""

    cells: np.ndarray
    grid_id: str

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __len__(self) -> int:
        return int(self.cells.sum())

    def __bool__(self) -> bool:
        return bool(self.cells.any())

    def _check(self, other: SetMask):
        if other.grid_id != self.grid_id:
            raise GridError("masks belong to different grids")

    def __or__(self, other: SetMask) -> SetMask:
        self._check(other)
        return SetMask(self.cells | other.cells, self.grid_id)

    def __and__(self, other: SetMask) -> SetMask:
        self._check(other)
        return SetMask(self.cells & other.cells, self.grid_id)

    def __sub__(self, other: SetMask) -> SetMask:
        self._check(other)
        return SetMask(self.cells & ~other.cells, self.grid_id)

    def issubset(self, other: SetMask) -> bool:
        self._check(other)
        return not np.any(self.cells & ~other.cells)

    def indices(self) -> np.ndarray:
        return np.argwhere(self.cells)


@dataclass(frozen=True, eq=False)
class MetricGrid:
    params: SpaceParams
    spec: DomainSpec | None
    domain_mask: np.ndarray
    dist_field: np.ndarray
    grid_id: str = field(default="")

    @property
    def h(self) -> float:
        return self.params.h

    @property
    def Q(self) -> int:
        return self.params.Q

    @property
    def shape(self) -> tuple[int, ...]:
        return self.domain_mask.shape

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.params.bbox[0])

    @property
    def cell_measure(self) -> float:
        return self.h**self.Q

    def centers(self) -> np.ndarray:
        """Array of shape ``self.shape + (Q,)`` with every cell center."""
        axes = [self.lo[k] + (np.arange(n) + 0.5) * self.h for k, n in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def center_of(self, index) -> np.ndarray:
        return self.lo + (np.asarray(index, dtype=float) + 0.5) * self.h

    def cell_of(self, point) -> tuple[int, ...]:
        """Index of the half-open cell containing ``point``."""
        idx = np.floor((np.asarray(point, dtype=float) - self.lo) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise GridError(f"point {point} outside the grid")
        return tuple(int(i) for i in idx)

    def mask(self, cells: np.ndarray) -> SetMask:
        return SetMask(cells, self.grid_id)

    def domain(self) -> SetMask:
        return self.mask(self.domain_mask)

    def complement(self) -> SetMask:
        return self.mask(~self.domain_mask)

    def refined(self, factor: int = 2) -> MetricGrid:
        if self.spec is None:
            raise GridError("grid has no domain spec to re-rasterize")
        return build_grid(self.spec, self.params.with_h(self.h / factor))

    def side(self) -> float:
        lo, hi = self.params.bbox
        return min(b - a for a, b in zip(lo, hi))

    def save(self, prefix: str | Path) -> None:
        """Write ``prefix.domain.bin`` (uint8), ``prefix.dist.bin`` (float64, C order) and a text header."""
        prefix = Path(prefix)
        self.domain_mask.astype(np.uint8).tofile(f"{prefix}.domain.bin")
        self.dist_field.astype("<f8").tofile(f"{prefix}.dist.bin")
        header = {
            "Q": self.Q,
            "h": self.h,
            "c_A": self.params.c_A,
            "bbox": [list(b) for b in self.params.bbox],
            "shape": list(self.shape),
            "order": "C",
            "domain": self.spec.to_config() if self.spec is not None else None,
        }
        Path(f"{prefix}.header.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, prefix: str | Path) -> MetricGrid:
        prefix = Path(prefix)
        header = json.loads(Path(f"{prefix}.header.json").read_text())
        shape = tuple(header["shape"])
        params = SpaceParams(header["Q"], header["h"], tuple(tuple(b) for b in header["bbox"]), header["c_A"])
        dom = np.fromfile(f"{prefix}.domain.bin", dtype=np.uint8).reshape(shape).astype(bool)
        dist = np.fromfile(f"{prefix}.dist.bin", dtype="<f8").reshape(shape)
        spec = DomainSpec.from_config(header["domain"]) if header.get("domain") else None
        return cls._make(params, spec, dom, dist)

    @classmethod
    def _make(cls, params, spec, dom, dist) -> MetricGrid:
        dom.setflags(write=False)
        dist.setflags(write=False)
        key = repr((params, spec)).encode() + dom.tobytes()
        return cls(params, spec, dom, dist, hashlib.sha1(key).hexdigest()[:16])


def build_grid(spec: DomainSpec, params: SpaceParams) -> MetricGrid:
    """Rasterize ``spec`` on the grid of ``params`` and compute the complement distance field."""
    lo = np.asarray(params.bbox[0])
    axes = [lo[k] + (np.arange(n) + 0.5) * params.h for k, n in enumerate(params.shape)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    dom = spec.rasterize(centers, lo, params.h)
    if not dom.any():
        raise GridError("degenerate domain")
    if dom.all():
        raise GridError("complement required")
    # Exact Euclidean distance between cell centers, zero on the complement.
    dist = ndimage.distance_transform_edt(dom, sampling=params.h)
    return MetricGrid._make(params, spec, dom, np.asarray(dist, dtype=float))


def _center_dist(grid: MetricGrid, center) -> np.ndarray:
    return np.linalg.norm(grid.centers() - np.asarray(center, dtype=float), axis=-1)


def ball_mask(center, r: float, grid: MetricGrid) -> SetMask:
    if not r > 0:
        raise GridError("radius must be positive")
    cells = _center_dist(grid, center) < r
    if not cells.any():
        raise GridError("empty mask")
    return grid.mask(cells)


def annulus_mask(center, r: float, R: float, grid: MetricGrid) -> SetMask:
    """Cells with ``r <= |x - center| < R`` (the annulus ``B(x,R) \\ B(x,r)``)."""
    if not (0 < r < R):
        raise GridError("annulus needs 0 < r < R")
    d = _center_dist(grid, center)
    cells = (d >= r) & (d < R)
    if not cells.any():
        raise GridError("empty mask")
    return grid.mask(cells)


def cantor_mask(theta: float, depth: int, grid: MetricGrid, a=None, b=None) -> SetMask:
    """Rasterized Cantor set on the segment ``a -> b`` (default: unit segment centered in the bbox)."""
    if a is None or b is None:
        mid = (np.asarray(grid.params.bbox[0]) + np.asarray(grid.params.bbox[1])) / 2
        e = np.zeros(grid.Q)
        e[0] = 0.5
        a, b = mid - e, mid + e
    a, b = _vec(a), _vec(b)
    L = float(np.linalg.norm(b - a))
    if theta**depth * L < grid.h:
        raise GridError("resolution exhausted")
    shape = Cantor(theta, depth, tuple(a), tuple(b))
    cells = _rasterize_shape(shape, grid.centers(), grid.lo, grid.h)
    return grid.mask(cells)
