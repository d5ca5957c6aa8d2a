"""Independent reference values used by the tests.

Nothing here imports the package: each oracle is a closed form, a direct
construction, or a deliberately naive brute force.
"""

import math

import numpy as np


def radial_capacity_closed_form(r, R, p, Q):
    """cap_p(B_r, B_R) in R^Q from the explicit radial minimizer (antiderivative, no quadrature)."""
    omega = 2 * math.pi if Q == 2 else 4 * math.pi
    if p == Q:
        return omega * math.log(R / r) ** (1 - Q)
    a = (Q - 1) / (p - 1)
    integral = (R ** (1 - a) - r ** (1 - a)) / (1 - a)
    return omega * integral ** (1 - p)


def mazya_disk_pair():
    """int_{B(0,1/2)} (1-|x|)^-2 dx and cap_2(B_{1/2}, B_1) in the plane."""
    numerator = 2 * math.pi * (1 - math.log(2))
    capacity = 2 * math.pi / math.log(2)
    return numerator, capacity


def cantor_intervals_naive(theta, depth, length=1.0):
    intervals = [(0.0, length)]
    for _ in range(depth):
        nxt = []
        for a, b in intervals:
            w = (b - a) * theta
            nxt += [(a, a + w), (b - w, b)]
        intervals = nxt
    return intervals


def perfectness_brute(points, c):
    """Definition check at every point and every radius at or just above a realised distance.

    Each (radius, distance) pair is compared explicitly, with no sorting or search.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 1:
        pts = pts.T
    for x in pts:
        d = np.linalg.norm(pts - x, axis=1)
        d = d[d > 0]
        radii = np.concatenate([d, d * (1 + 1e-12)])
        radii = radii[radii >= d.min()][:, None]
        beyond = np.any(d[None, :] >= c * radii, axis=1)
        ring = np.any((d[None, :] >= radii) & (d[None, :] < c * radii), axis=1)
        if np.any(beyond & ~ring):
            return False
    return True


def max_gap_ratio(points):
    """Largest ratio of consecutive distinct distances, by sorting every row (1-D or n-D)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    best = 1.0
    for x in pts:
        d = np.unique(np.round(np.linalg.norm(pts - x, axis=1), 12))
        d = d[d > 0]
        if d.size > 1:
            best = max(best, float(np.max(d[1:] / d[:-1])))
    return best


def merge_lhs_rhs(a, b, C, eps):
    return a**eps + b**eps, (a + b + C * min(a, b)) ** eps


def disk_cell_count(r, h):
    return math.pi * r * r / (h * h)


def dense_hardy_p2(domain_mask, dist, h):
    """Discrete p = 2 Hardy constant by dense generalized eigendecomposition.

    Assembles ``sum over neighbour pairs (u_i - u_j)**2`` cell by cell (functions vanish
    off the domain, and there is no neighbour past the last layer of the box), then
    returns ``1 / lambda_min`` of ``L v = lambda W v`` with ``W = diag(h**2 / dist**2)``.
    """
    import scipy.linalg

    shape = domain_mask.shape
    index = -np.ones(shape, dtype=int)
    cells = list(zip(*np.nonzero(domain_mask)))
    for k, c in enumerate(cells):
        index[c] = k
    n = len(cells)
    L = np.zeros((n, n))
    for c in np.ndindex(*shape):
        for axis in range(len(shape)):
            nb = list(c)
            nb[axis] += 1
            if nb[axis] >= shape[axis]:
                continue
            i, j = index[c], index[tuple(nb)]
            if i >= 0:
                L[i, i] += 1
            if j >= 0:
                L[j, j] += 1
            if i >= 0 and j >= 0:
                L[i, j] -= 1
                L[j, i] -= 1
    W = np.diag([h**2 / dist[c] ** 2 for c in cells])
    lam = scipy.linalg.eigh(L, W, eigvals_only=True)[0]
    return 1.0 / lam
