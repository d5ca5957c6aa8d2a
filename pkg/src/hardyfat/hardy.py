"""Discrete p-Hardy inequalities on grids.

The Hardy functional of ``u`` (vanishing off the domain) is compared with its
forward-difference p-energy.  The best constant on one grid is the reciprocal
of the smallest energy among functions of unit weighted norm; its behaviour
under refinement is what separates domains that support Hardy's inequality
from those that do not.  Also here: the annular test function that forces a
Hardy domain to have a uniformly perfect complement, and the capacity
criterion over compact subsets with its dyadic level-set proof.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from .capacity import solve_capacity
from .energy import PEnergy, energy_of
from .grid import MetricGrid, SetMask
from .perfectness import log_hardy_perfectness_constant
from .trend import TrendVerdict, growth_verdict

logger = logging.getLogger(__name__)

__all__ = [
    "HardyError",
    "hardy_weight",
    "weighted_norm",
    "hardy_quotient",
    "HardyEstimate",
    "hardy_constant",
    "estimate_hardy_constant",
    "AnnularTestFunction",
    "annular_test_function",
    "Lemma32Report",
    "verify_lemma32_bounds",
    "MazyaResult",
    "mazya_check",
    "LevelsetReport",
    "levelset_decomposition_check",
]


class HardyError(ValueError):
    pass


def hardy_weight(grid: MetricGrid, p: float) -> np.ndarray:
    """``h**Q / dist**p`` on domain cells, zero on the complement."""
    w = np.zeros(grid.shape)
    dom = grid.domain_mask
    w[dom] = grid.cell_measure / grid.dist_field[dom] ** p
    return w


def weighted_norm(grid: MetricGrid, u: np.ndarray, p: float) -> float:
    """``int_Omega (|u| / dist)**p``."""
    return float(np.sum(hardy_weight(grid, p) * np.abs(u) ** p))


def _check_vanishes(grid: MetricGrid, u: np.ndarray):
    u = np.asarray(u, dtype=float)
    if u.shape != grid.shape:
        raise HardyError(f"function shape {u.shape} does not match grid {grid.shape}")
    if np.any(u[~grid.domain_mask] != 0):
        raise HardyError("function must vanish outside the domain")
    return u


def hardy_quotient(grid: MetricGrid, u: np.ndarray, p: float) -> float:
    """``int g_u**p / int (|u|/dist)**p``; its reciprocal is a lower bound for the Hardy constant."""
    u = _check_vanishes(grid, u)
    denom = weighted_norm(grid, u, p)
    if denom == 0:
        raise HardyError("trivial function")
    return energy_of(u, grid.h, grid.Q, p) / denom


@dataclass
class HardyEstimate:
    p: float
    c_H_est: float
    minimizer: np.ndarray = field(repr=False)
    converged: bool = True
    trend: list[tuple[float, float]] = field(default_factory=list)
    verdict: TrendVerdict | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "p": self.p,
                "c_H_est": self.c_H_est,
                "converged": self.converged,
                "refinements": [{"h": h, "c_H_est": c} for h, c in self.trend],
                "verdict": self.verdict.label if self.verdict else None,
                "note": "grid estimates bound the Hardy constant from below; the refinement trend is the signal",
            },
            indent=2,
            sort_keys=True,
        )


def _eigen_p2(energy: PEnergy, weights: np.ndarray):
    A = energy.scale * energy.laplacian()
    W = sp.diags(weights)
    vals, vecs = spla.eigsh(A.tocsc(), k=1, M=W.tocsc(), sigma=0.0, which="LM")
    x = np.abs(vecs[:, 0])
    return float(vals[0]), x


def _minimize_quotient(energy: PEnergy, weights: np.ndarray, x0: np.ndarray, max_iters: int):
    p = energy.p

    def fun(x):
        E = energy.value(x)
        W = float(weights @ x**p)
        gE = energy.gradient(x)
        gW = p * weights * x ** (p - 1)
        R = E / W
        return R, (gE - R * gW) / W

    x0 = x0 / float(weights @ x0**p) ** (1 / p)
    res = optimize.minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, None)] * x0.size,
        options={"maxiter": max_iters, "maxcor": 20, "ftol": 1e-12, "gtol": 1e-10},
    )
    x = res.x / float(weights @ res.x**p) ** (1 / p)
    ok = bool(res.success) or "REL_REDUCTION_OF_F" in str(res.message)
    return float(res.fun), x, ok


def hardy_constant(
    grid: MetricGrid, p: float, restarts: int = 10, seed: int = 0, max_iters: int = 5000
) -> tuple[float, np.ndarray, bool]:
    """Best discrete Hardy constant of ``grid``'s domain: ``1 / min energy(u)`` over ``int (|u|/dist)**p = 1``.

    For p = 2 this is a generalized symmetric eigenproblem solved exactly; for other p
    the quotient is minimized by bounded L-BFGS from the p = 2 eigenfunction and from
    ``restarts`` randomly perturbed starts, keeping the best.
    """
    if not p > 1:
        raise HardyError("p must exceed 1")
    dom = grid.domain_mask
    energy2 = PEnergy(grid.shape, grid.h, grid.Q, 2.0, free=dom)
    lam2, x2 = _eigen_p2(energy2, hardy_weight(grid, 2.0).ravel()[energy2.free])
    if p == 2:
        return 1.0 / lam2, energy2.full(x2), True
    energy = PEnergy(grid.shape, grid.h, grid.Q, p, free=dom)
    weights = hardy_weight(grid, p).ravel()[energy.free]
    rng = np.random.default_rng(seed)
    best = (math.inf, None, False)
    starts = [x2] + [x2 * np.exp(rng.normal(scale=0.5, size=x2.size)) for _ in range(restarts)]
    for x0 in starts:
        val, x, ok = _minimize_quotient(energy, weights, np.maximum(x0, 1e-12), max_iters)
        if val < best[0]:
            best = (val, x, ok)
    val, x, ok = best
    if not ok:
        logger.warning("Hardy quotient minimization did not converge (p=%g, h=%g)", p, grid.h)
    return 1.0 / val, energy.full(x), ok


def estimate_hardy_constant(
    grid: MetricGrid, p: float, refinements: int = 3, restarts: int = 10, seed: int = 0
) -> HardyEstimate:
    """Hardy constant at ``grid`` and ``refinements - 1`` successive halvings of ``h``, with a trend verdict."""
    trend = []
    converged = True
    g = grid
    minimizer = None
    for level in range(refinements):
        if level:
            g = g.refined()
        c, u, ok = hardy_constant(g, p, restarts=restarts, seed=seed)
        trend.append((g.h, c))
        converged &= ok
        minimizer = u
    verdict = growth_verdict([c for _, c in trend]) if len(trend) >= 3 else None
    return HardyEstimate(p, trend[-1][1], minimizer, converged, trend, verdict)


# ---------------------------------------------------------------------------
# the annular test function
# ---------------------------------------------------------------------------


@dataclass
class AnnularTestFunction:
    x0: np.ndarray
    r0: float
    m: float
    values: np.ndarray = field(repr=False)

    @staticmethod
    def profile(d, r0: float, m: float):
        """Radial profile: ramp up on ``[r0, 2 r0]``, plateau 1, ramp down on ``[m r0/2, m r0]``."""
        d = np.asarray(d, dtype=float)
        inner = np.maximum(d / r0 - 1.0, 0.0)
        outer = np.maximum(2.0 - 2.0 * d / (m * r0), 0.0)
        return np.where(d <= 2 * r0, inner, np.where(d < m * r0 / 2, 1.0, outer))


def annular_test_function(x0, r0: float, m: float, grid: MetricGrid) -> AnnularTestFunction:
    if not m > 4:
        raise HardyError("m must exceed 4")
    x0 = np.asarray(x0, dtype=float)
    lo, hi = (np.asarray(b) for b in grid.params.bbox)
    if np.any(x0 - m * r0 < lo) or np.any(x0 + m * r0 > hi):
        raise HardyError("B(x0, m r0) leaves the grid")
    d = np.linalg.norm(grid.centers() - x0, axis=-1)
    return AnnularTestFunction(x0, r0, m, AnnularTestFunction.profile(d, r0, m))


@dataclass
class Lemma32Report:
    m: float
    r0: float
    energy: float
    energy_bound: float
    weighted: float
    weighted_bound: float
    energy_ok: bool
    weighted_ok: bool
    log_m_bound: float | None = None

    @property
    def passed(self) -> bool:
        return self.energy_ok and self.weighted_ok


def verify_lemma32_bounds(
    grid: MetricGrid, x0, r0: float, m: float, c_H: float | None = None, slack: float = 0.1
) -> Lemma32Report:
    """Evaluate both integrals of the annular test function with p = Q against their bounds.

    Energy must stay below ``c_A 2**(Q+1)`` and the Hardy functional above
    ``log(m/4) / (4**Q c_A log 2)`` (each with ``slack``).  Given a Hardy constant,
    the implied bound ``log m < log 4 + 2**(Q+1) c_H c_A / c`` is reported too.
    """
    if not m > 4:
        raise HardyError("m must exceed 4")
    Q, c_A = grid.Q, grid.params.c_A
    d = np.linalg.norm(grid.centers() - np.asarray(x0, dtype=float), axis=-1)
    ring = (d >= r0) & (d < m * r0)
    if np.any(ring & ~grid.domain_mask):
        raise HardyError("fixture violates lemma hypothesis")
    fn = annular_test_function(x0, r0, m, grid)
    u = np.where(grid.domain_mask, fn.values, 0.0)
    energy = energy_of(u, grid.h, Q, Q)
    weighted = weighted_norm(grid, u, Q)
    e_bound = c_A * 2 ** (Q + 1)
    w_bound = math.log(m / 4) / (4**Q * c_A * math.log(2))
    log_m = log_hardy_perfectness_constant(c_H, c_A, Q) if c_H is not None else None
    return Lemma32Report(
        m, r0, energy, e_bound, weighted, w_bound,
        energy <= e_bound * (1 + slack), weighted >= w_bound * (1 - slack), log_m,
    )


# ---------------------------------------------------------------------------
# capacity criterion over compact subsets
# ---------------------------------------------------------------------------


@dataclass
class MazyaResult:
    numerator: float
    capacity: float
    quotient: float


def mazya_check(grid: MetricGrid, K: SetMask, p: float) -> MazyaResult:
    """``int_K dist**-p / cap_p(K, Omega)``; bounded over all K iff Hardy's inequality holds."""
    if not K:
        raise HardyError("empty compact set")
    dist = grid.dist_field[K.cells]
    if np.any(dist < 2 * grid.h):
        raise HardyError("K not compactly contained")
    numerator = float(np.sum(grid.cell_measure / dist**p))
    cap = solve_capacity(grid, K, grid.domain(), p).value
    return MazyaResult(numerator, cap, numerator / cap)


@dataclass
class LevelsetReport:
    levels: list[int]
    capacities: list[float]
    cap_sum: float
    energy_bound: float
    hardy_lhs: float
    band_sum: float
    slack: float

    @property
    def capacity_ok(self) -> bool:
        return self.cap_sum <= self.energy_bound * (1 + self.slack)

    @property
    def band_ok(self) -> bool:
        return self.hardy_lhs <= self.band_sum * (1 + self.slack)

    @property
    def passed(self) -> bool:
        return self.capacity_ok and self.band_ok


def levelset_decomposition_check(grid: MetricGrid, u: np.ndarray, p: float, slack: float = 0.15) -> LevelsetReport:
    """Check the two inequalities of the dyadic level-set argument for one function.

    With ``E_k = {|u| > 2**k}`` and the truncations ``u_k = min(1, max(0, |u|/2**k - 1))``:
    (a) ``sum_k 2**((k+1)p) cap_p({|u| >= 2**(k+1)}, E_k) <= 2**p int g_u**p`` and
    (b) ``int (|u|/dist)**p <= sum_k 2**((k+1)p) int_{E_k \\ E_(k+1)} dist**-p``,
    where k runs over the levels spanned by the nonzero values of ``u``.
    """
    u = _check_vanishes(grid, u)
    a = np.abs(u)
    nz = a[a > 0]
    if nz.size == 0:
        raise HardyError("trivial function")
    k_lo = math.ceil(math.log2(float(nz.min()))) - 1
    k_hi = math.ceil(math.log2(float(nz.max()))) - 1
    if k_lo < -60 or k_hi > 60:
        raise HardyError("dyadic levels outside [-60, 60]")
    levels = list(range(k_lo, k_hi + 1))
    caps = []
    w = hardy_weight(grid, p)
    band_sum = 0.0
    for k in levels:
        env = grid.mask(a > 2.0**k)
        plate = grid.mask(a >= 2.0 ** (k + 1))
        caps.append(solve_capacity(grid, plate, env, p).value if plate else 0.0)
        band = (a > 2.0**k) & (a <= 2.0 ** (k + 1))
        band_sum += 2.0 ** ((k + 1) * p) * float(np.sum(w[band]))
    cap_sum = float(sum(2.0 ** ((k + 1) * p) * c for k, c in zip(levels, caps)))
    energy_bound = 2.0**p * energy_of(u, grid.h, grid.Q, p)
    return LevelsetReport(levels, caps, cap_sum, energy_bound, weighted_norm(grid, u, p), band_sum, slack)
