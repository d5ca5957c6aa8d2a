"""Discrete variational p-capacity of condensers on a metric grid.

``cap_p(E, Omega)`` is approximated by the minimal forward-difference p-energy
over grid functions equal to 1 on the plate ``E`` and 0 outside ``Omega``.
For p = 2 the Euler-Lagrange system is solved by preconditioned conjugate
gradients; otherwise a projected, damped Newton iteration with Armijo
backtracking is started from the p = 2 minimizer.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate

from .energy import PEnergy
from .grid import GridError, MetricGrid, SetMask, ball_mask, sphere_area

logger = logging.getLogger(__name__)

ARMIJO = 1e-4


class CapacityError(ValueError):
    pass


@dataclass
class CapacityProblem:
    grid: MetricGrid
    plate: SetMask
    env: SetMask
    p: float
    tol: float = 1e-8
    max_iters: int | None = None


@dataclass
class CapacityResult:
    value: float
    potential: np.ndarray
    iterations: int
    converged: bool
    trace: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        summary = {
            "value": self.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "shape": list(self.potential.shape),
        }
        return json.dumps(summary, indent=2, sort_keys=True)

    def save(self, prefix: str | Path) -> None:
        prefix = Path(prefix)
        Path(f"{prefix}.json").write_text(self.to_json() + "\n")
        self.potential.astype("<f8").tofile(f"{prefix}.potential.bin")
        with open(f"{prefix}.trace.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("iter,energy,step\n")
            for it, e, step in self.trace:
                fh.write(f"{it},{e!r},{step!r}\n")


def _window(env: np.ndarray, pad: int = 2) -> tuple[slice, ...]:
    idx = np.argwhere(env)
    lo = np.maximum(idx.min(axis=0) - pad, 0)
    hi = np.minimum(idx.max(axis=0) + pad + 1, env.shape)
    return tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))


def default_max_iters(n_free: int) -> int:
    return int(min(100_000, 50 * math.sqrt(max(n_free, 1))))


def _diffusion_start(L: sp.csr_matrix, b: np.ndarray, sweeps: int = 10) -> np.ndarray:
    """A few damped Jacobi sweeps from zero: a cheap smoothing of the boundary data."""
    diag = L.diagonal()
    x = np.zeros_like(b)
    for _ in range(sweeps):
        x = x + 0.8 * (b - L @ x) / diag
    return np.clip(x, 0.0, 1.0)


def _solve_linear(energy: PEnergy, tol: float, max_iters: int, trace: list | None):
    L = energy.laplacian()
    b = -sum(D.T @ o for D, o in zip(energy.D, energy.offset))
    x0 = _diffusion_start(L, b)
    M = sp.diags(1.0 / L.diagonal())
    count = [0]

    def callback(xk):
        count[0] += 1
        if trace is not None:
            trace.append((count[0], energy.value(xk), 1.0))

    if trace is not None:
        trace.append((0, energy.value(x0), 0.0))
    x, info = spla.cg(L, b, x0=x0, rtol=tol, atol=0.0, maxiter=max_iters, M=M, callback=callback)
    return x, count[0], info == 0


def _solve_newton(energy: PEnergy, x: np.ndarray, tol: float, max_iters: int, trace: list | None):
    E = energy.value(x)
    if trace is not None:
        trace.append((0, E, 0.0))
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        g = energy.gradient(x)
        ds = energy.diffs(x)
        dmax = max(float(np.abs(d).max()) for d in ds)
        eta = 1e-6 * dmax if dmax > 0 else 1e-12
        H = energy.hessian(x, eta)
        direction = -spla.spsolve(H.tocsc(), g)
        slope = float(g @ direction)
        if not np.all(np.isfinite(direction)) or slope >= 0:
            direction, slope = -g, -float(g @ g)
        step = 1.0
        while True:
            cand = np.clip(x + step * direction, 0.0, 1.0)
            Ec = energy.value(cand)
            if Ec <= E + ARMIJO * step * slope:
                break
            step *= 0.5
            if step < 1e-14:
                cand, Ec = x, E
                break
        decrement = (E - Ec) / max(abs(Ec), np.finfo(float).tiny)
        x, E = cand, Ec
        if trace is not None:
            trace.append((it, E, step))
        if decrement <= tol:
            converged = True
            break
    return x, it, converged


def solve_capacity(
    grid: MetricGrid,
    plate: SetMask,
    env: SetMask,
    p: float,
    tol: float = 1e-8,
    max_iters: int | None = None,
    trace: bool = False,
) -> CapacityResult:
    """Minimal discrete p-energy of functions that are 1 on ``plate`` and 0 off ``env``."""
    if not p > 1:
        raise CapacityError("p must exceed 1")
    if not plate.issubset(env):
        raise CapacityError("plate escapes environment")
    if not plate:
        return CapacityResult(0.0, np.zeros(grid.shape), 0, True)

    win = _window(env.cells)
    plate_w = plate.cells[win]
    free_w = env.cells[win] & ~plate_w
    energy = PEnergy(plate_w.shape, grid.h, grid.Q, p, free=free_w, base=plate_w.astype(float))
    n_free = energy.free.size
    iters = max_iters if max_iters is not None else default_max_iters(n_free)
    log: list | None = [] if trace else None

    if n_free == 0:
        x = np.zeros(0)
        n_it, converged = 0, True
    elif p == 2:
        x, n_it, converged = _solve_linear(energy, tol, iters, log)
    else:
        x0, _, _ = _solve_linear(energy, max(tol, 1e-6), default_max_iters(n_free) * 4, None)
        x, n_it, converged = _solve_newton(energy, np.clip(x0, 0.0, 1.0), tol, iters, log)

    x = np.clip(x, 0.0, 1.0)
    potential = np.zeros(grid.shape)
    potential[win] = energy.full(x)
    value = energy.value(x)
    if not converged:
        logger.warning("capacity solve stopped after %d iterations without converging", n_it)
    return CapacityResult(value, potential, n_it, converged, log or [])


def solve_problem(prob: CapacityProblem, trace: bool = False) -> CapacityResult:
    return solve_capacity(prob.grid, prob.plate, prob.env, prob.p, prob.tol, prob.max_iters, trace)


def discrete_energy(grid: MetricGrid, u: np.ndarray, p: float) -> float:
    """Forward-difference p-energy of an arbitrary grid function."""
    energy = PEnergy(grid.shape, grid.h, grid.Q, p)
    return energy.value(np.asarray(u, dtype=float).ravel())


# ---------------------------------------------------------------------------
# closed-form radial references
# ---------------------------------------------------------------------------


def radial_condenser_oracle(r: float, R: float, p: float, Q: int) -> float:
    """``cap_p(B(0,r), B(0,R))`` in R^Q from the 1-D radial minimizer.

    The radial Euler-Lagrange equation gives ``|u'| = c t**(-(Q-1)/(p-1))``, hence the
    capacity ``omega * I**(1-p)`` with ``I = int_r^R t**(-(Q-1)/(p-1)) dt``.
    """
    if not 0 < r < R:
        raise CapacityError("radial condenser needs 0 < r < R")
    if not p > 1:
        raise CapacityError("p must exceed 1")
    omega = sphere_area(Q)
    if p == Q:
        return omega * math.log(R / r) ** (1 - Q)
    a = (Q - 1) / (p - 1)
    # Substitute t = r*s so that dilating (r, R) only rescales the prefactor.
    integral, _ = integrate.quad(lambda s: s ** (-a), 1.0, R / r, epsabs=0.0, epsrel=1e-13, limit=200)
    return omega * (r ** (1 - a) * integral) ** (1 - p)


def radial_condenser_closed_form(r: float, R: float, p: float, Q: int) -> float:
    omega = sphere_area(Q)
    if p == Q:
        return omega * math.log(R / r) ** (1 - Q)
    a = (Q - 1) / (p - 1)
    integral = (R ** (1 - a) - r ** (1 - a)) / (1 - a)
    return omega * integral ** (1 - p)


def log_cutoff_upper_bound(r: float, rho: float, p: float, Q: int) -> float:
    """Energy of the logarithmic cutoff ``g = 1/(log(r/rho) |x|)`` on the annulus ``rho < |x| < r``.

    Bounds ``cap_p(B(x0, rho), B(x0, 2r))`` from above.
    """
    if not 0 < rho < r:
        raise CapacityError("log cutoff needs 0 < rho < r")
    omega = sphere_area(Q)
    logm = math.log(r / rho)
    if p == Q:
        radial = logm
    else:
        radial = (r ** (Q - p) - rho ** (Q - p)) / (Q - p)
    return omega * radial / logm**p


# ---------------------------------------------------------------------------
# content vs capacity
# ---------------------------------------------------------------------------


@dataclass
class ContentCapacityReport:
    s: float
    p: float
    r: float
    content: float
    lam: float
    cap_set: float
    cap_ball: float
    ratio: float


def content_capacity_check(grid: MetricGrid, E: SetMask, center, r: float, s: float, p: float) -> ContentCapacityReport:
    """Empirical constant ``cap_p(E, 2B) / (lambda cap_p(B, 2B))`` with ``lambda = H^s(E) / r^s`` from above."""
    from .cover import content_upper

    if not s > grid.Q - p:
        raise CapacityError("exponent below codimension threshold")
    ball = ball_mask(center, r, grid)
    big = ball_mask(center, 2 * r, grid)
    plate = E & ball
    if not plate:
        raise GridError("empty mask")
    content = content_upper(grid, plate, s)
    lam = content / r**s
    cap_set = solve_capacity(grid, plate, big, p).value
    cap_ball = solve_capacity(grid, ball, big, p).value
    return ContentCapacityReport(s, p, r, content, lam, cap_set, cap_ball, cap_set / (lam * cap_ball))
