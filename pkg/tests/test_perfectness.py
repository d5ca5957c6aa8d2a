import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from hardyfat.grid import Box, DomainSpec, Point, Segment, SpaceParams, build_grid, cantor_points
from hardyfat.perfectness import (
    PerfectnessError,
    boundary_points,
    hardy_perfectness_constant,
    log_hardy_perfectness_constant,
    perfectness_constant,
    satisfies_definition,
    sharp_threshold,
)

from oracles import max_gap_ratio, perfectness_brute


def test_singleton_rejected():
    with pytest.raises(PerfectnessError, match="singletons"):
        perfectness_constant(np.array([[0.0, 0.0]]))


def test_two_points():
    assert perfectness_constant(np.array([0.0, 1.0])).c_up == 1.0


def test_cantor_endpoints_depth4():
    # [DERIVED] brute force over all pairs: the worst gap sits at an endpoint whose
    # consecutive distances jump from 2/81 to 5/81 (= 2 * 2/81 + 1/81).
    pts = cantor_points(1 / 3, 4)
    rep = perfectness_constant(pts)
    assert rep.c_up == pytest.approx(2.5, rel=1e-12)
    assert rep.c_up == pytest.approx(max_gap_ratio(pts), rel=1e-9)
    assert rep.witness_r == pytest.approx(2 / 81)
    assert perfectness_constant(cantor_points(1 / 3, 4, which="left")).c_up == pytest.approx(3.0)


def test_lattice_on_segment():
    # Consecutive distances k s from an endpoint: worst ratio 2/1, whatever the count.
    for n in [5, 50, 400]:
        assert perfectness_constant(np.linspace(0, 1, n)).c_up == pytest.approx(2.0)


def test_lattice_with_floor_tends_to_one_from_interior_view():
    # With the floor set to the spacing, the first gap is k=1 -> 2 at every point, so
    # the lattice constant is 2 at every resolution; it never degenerates.
    for n in [11, 101]:
        pts = np.linspace(0, 1, n)
        assert perfectness_constant(pts, r_min=1 / (n - 1)).c_up == pytest.approx(2.0)


def test_geometric_in_exponent_set_unbounded():
    values = []
    for depth in range(1, 5):
        pts = np.array([0.0] + [2.0 ** -(2**k) for k in range(depth + 1)])
        values.append(perfectness_constant(pts).c_up)
    assert all(b > a for a, b in zip(values, values[1:]))


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 40),
    dim=st.sampled_from([1, 2]),
    seed=st.integers(0, 10_000),
)
def test_exact_against_definition(n, dim, seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, dim)) ** 3  # clustered sets have large gaps
    # Distances below the deduplication tolerance are identified by design.
    gaps = np.linalg.norm(pts[:, None] - pts[None], axis=-1)[np.triu_indices(n, 1)]
    assume(gaps.min() > 1e-6)
    c = perfectness_constant(pts).c_up
    assert satisfies_definition(pts, c * (1 + 1e-9))
    assert perfectness_brute(pts, c * (1 + 1e-9))
    if c > 1 + 1e-6:
        assert not satisfies_definition(pts, c * (1 - 1e-6))
        assert not perfectness_brute(pts, c * (1 - 1e-6))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(1e-3, 1e3), angle=st.floats(0, 2 * math.pi))
def test_similarity_invariance(seed, scale, angle):
    rng = np.random.default_rng(seed)
    pts = rng.random((30, 2)) ** 2
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    moved = scale * pts @ rot.T + rng.normal(size=2)
    assert perfectness_constant(moved).c_up == pytest.approx(perfectness_constant(pts).c_up, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_existing_centers_do_not_worsen_when_points_are_added(seed):
    # Adding points can create new badly placed centers (see the decisions notes), but
    # seen from the original points, with a common floor, gaps only get subdivided.
    rng = np.random.default_rng(seed)
    pts = rng.random((20, 2))
    extra = rng.random((20, 2))
    both = np.vstack([pts, extra])
    floor = 1e-3
    before = perfectness_constant(pts, r_min=floor).per_center
    after = perfectness_constant(both, r_min=floor).per_center[: len(pts)]
    assert np.all(after <= before * (1 + 1e-12))


def test_densification_can_raise_the_constant():
    # A counterexample to unconditional monotonicity under supersets.
    assert perfectness_constant(np.array([0.0, 10.0])).c_up == 1.0
    assert perfectness_constant(np.array([0.0, 1.0, 10.0])).c_up > 1.0


def test_r_max_guard_drops_far_gaps():
    pts = np.array([0.0, 0.1, 0.2, 5.0])
    assert perfectness_constant(pts).c_up > 10
    assert perfectness_constant(pts, r_max=1.0).c_up == pytest.approx(2.0)


def test_witness_annulus_is_empty():
    pts = cantor_points(1 / 3, 3)
    rep = perfectness_constant(pts)
    d = np.abs(pts - rep.witness_center[0])
    r = rep.witness_r
    slack = 1e-12
    assert not np.any((d > r * (1 + slack)) & (d < rep.c_up * r * (1 - slack)))
    assert np.any(d >= rep.c_up * r * (1 - slack))


def test_boundary_points_of_punctured_square():
    spec = DomainSpec.of(Box((-1, -1), (1, 1))).minus(Point((0.0, 0.0)))
    for h in [1 / 16, 1 / 32]:
        g = build_grid(spec, SpaceParams(2, h, ((-1.5, -1.5), (1.5, 1.5))))
        pts = boundary_points(g)
        # the puncture plus a ring of frame cells
        assert np.sum(np.abs(pts).max(axis=1) < 0.5) == 1
        rep = perfectness_constant(pts, r_min=h)
        assert rep.c_up > 0.9 / h


def test_boundary_points_of_slit_square_stable():
    spec = DomainSpec.of(Box((-1, -1), (1, 1))).minus(Segment((-0.5, 0.0), (0.5, 0.0)))
    values = []
    for h in [1 / 16, 1 / 32, 1 / 64]:
        g = build_grid(spec, SpaceParams(2, h, ((-1.5, -1.5), (1.5, 1.5))))
        values.append(perfectness_constant(boundary_points(g), r_min=h).c_up)
    assert max(values) <= 3


def test_sharp_threshold_values():
    assert sharp_threshold(1.5, 2) == 2.0
    assert sharp_threshold(1.999, 2) > 1e100
    assert sharp_threshold(1.9, 2) < sharp_threshold(1.95, 2)
    lower = 2 - math.log(2) / math.log(3)
    assert sharp_threshold(lower + 1e-9, 2) == pytest.approx(1.0, abs=1e-7)
    for bad in [lower, 1.2, 2.0, 2.5]:
        with pytest.raises(PerfectnessError, match="outside remark's range"):
            sharp_threshold(bad, 2)
    # Q = 3: the window is (3 - log2/log3, 3)
    assert sharp_threshold(2.5, 3) == pytest.approx(2.0)
    with pytest.raises(PerfectnessError):
        sharp_threshold(1.5, 3)


def test_hardy_perfectness_constant_formula():
    c_A, Q, c_H = math.pi, 2, 1.0
    # symbolic recomputation: 2^{Q+1} c_H c_A / c with c = 1/(4^Q c_A log 2)
    exponent = 2 ** (Q + 1) * c_H * c_A * (4**Q * c_A * math.log(2))
    assert exponent == pytest.approx(128 * math.pi**2 * math.log(2))
    assert log_hardy_perfectness_constant(c_H, c_A, Q) == pytest.approx(math.log(4) + exponent)
    assert hardy_perfectness_constant(c_H, c_A, Q) == math.inf  # exp(875.6) overflows a double
    small = 1e-3
    assert hardy_perfectness_constant(small, 1.0, 2) == pytest.approx(4 * math.exp(2**3 * small * 16 * math.log(2)))
    assert log_hardy_perfectness_constant(2.0, c_A, Q) > log_hardy_perfectness_constant(1.0, c_A, Q)
    with pytest.raises(PerfectnessError):
        log_hardy_perfectness_constant(0.0, c_A, Q)


def test_report_serialization():
    pts = cantor_points(1 / 3, 2)
    rep = perfectness_constant(pts)
    assert '"c_UP"' in rep.to_json()
    csv = rep.per_center_csv(pts[:, None])
    assert csv.splitlines()[0] == "cx,max_gap_ratio" and len(csv.splitlines()) == len(pts) + 1
