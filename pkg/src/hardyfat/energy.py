"""Forward-difference p-Dirichlet energy on a box of cells.

The per-cell gradient magnitude is ``|d|/h`` where ``d_a = u[i+e_a] - u[i]`` is the
one-sided difference along axis ``a`` (zero on the last layer of the box), and
the energy is ``sum_i |g_i|**p * h**Q = h**(Q-p) * sum_i |d_i|**p``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def forward_diff_ops(shape: tuple[int, ...]) -> list[sp.csr_matrix]:
    """One sparse operator per axis acting on C-ordered flattened arrays."""
    ops = []
    eyes = [sp.identity(n, format="csr") for n in shape]
    for axis, n in enumerate(shape):
        d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
        d[n - 1, n - 1] = 0.0  # no neighbour beyond the box
        factors = list(eyes)
        factors[axis] = d.tocsr()
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        ops.append(op.tocsr())
    return ops


class PEnergy:
    """p-energy of functions on a box, optionally restricted to a subset of free cells.

    With ``free`` given, functions are parametrized as ``u = base + P @ x`` where ``P``
    injects the free unknowns; all methods then take and return free vectors.
    """

    def __init__(self, shape, h: float, Q: int, p: float, free: np.ndarray | None = None, base=None):
        self.shape = tuple(shape)
        self.h, self.Q, self.p = float(h), int(Q), float(p)
        self.scale = self.h ** (self.Q - self.p)
        D = forward_diff_ops(self.shape)
        n = int(np.prod(self.shape))
        self.base = np.zeros(n) if base is None else np.asarray(base, dtype=float).ravel()
        if free is None:
            self.free = np.arange(n)
        else:
            self.free = np.flatnonzero(np.asarray(free).ravel())
        self.D = [d[:, self.free].tocsr() for d in D]
        self.offset = [d @ self.base for d in D]

    def diffs(self, x: np.ndarray) -> list[np.ndarray]:
        return [d @ x + o for d, o in zip(self.D, self.offset)]

    def full(self, x: np.ndarray) -> np.ndarray:
        u = self.base.copy()
        u[self.free] = x
        return u.reshape(self.shape)

    def grad_magnitude(self, x: np.ndarray) -> np.ndarray:
        s = sum(d * d for d in self.diffs(x))
        return (np.sqrt(s) / self.h).reshape(self.shape)

    def cell_energy(self, x: np.ndarray) -> np.ndarray:
        s = sum(d * d for d in self.diffs(x))
        return self.scale * s ** (self.p / 2)

    def value(self, x: np.ndarray) -> float:
        return float(self.cell_energy(x).sum())

    def gradient(self, x: np.ndarray) -> np.ndarray:
        ds = self.diffs(x)
        s = sum(d * d for d in ds)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(s > 0, self.p * s ** ((self.p - 2) / 2), 0.0)
        return self.scale * sum(D.T @ (w * d) for D, d in zip(self.D, ds))

    def hessian(self, x: np.ndarray, eta: float) -> sp.csr_matrix:
        """Hessian with ``|d|**2`` regularized to ``|d|**2 + eta**2``; always symmetric positive definite
        on the free cells when every free cell is coupled to a fixed one."""
        p = self.p
        ds = self.diffs(x)
        s = sum(d * d for d in ds) + eta * eta
        w1 = p * s ** ((p - 2) / 2)
        w2 = p * (p - 2) * s ** ((p - 4) / 2)
        H = None
        for a, (Da, da) in enumerate(zip(self.D, ds)):
            for b, (Db, db) in enumerate(zip(self.D, ds)):
                w = w2 * da * db + (w1 if a == b else 0.0)
                term = Da.T @ sp.diags(w) @ Db
                H = term if H is None else H + term
        return (self.scale * H).tocsr()

    def laplacian(self) -> sp.csr_matrix:
        """``sum_a D_a^T D_a`` on the free cells (the p = 2 Hessian up to the factor ``2 h**(Q-2)``)."""
        return sum(D.T @ D for D in self.D).tocsr()


def grad_sq(u: np.ndarray) -> np.ndarray:
    """Per-cell ``|d|**2`` of the forward differences of an explicit array (no sparse operators)."""
    s = np.zeros(u.shape)
    for axis in range(u.ndim):
        d = np.diff(u, axis=axis)
        pad = [(0, 0)] * u.ndim
        pad[axis] = (0, 1)
        s += np.pad(d, pad) ** 2
    return s


def energy_of(u: np.ndarray, h: float, Q: int, p: float) -> float:
    """Forward-difference p-energy ``sum |g|**p h**Q`` of an explicit grid function."""
    return float(h ** (Q - p) * np.sum(grad_sq(np.asarray(u, dtype=float)) ** (p / 2)))
