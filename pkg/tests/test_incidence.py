import itertools
import math

import numpy as np
import pytest

from quadenergy.errors import AllZeroAxis, BudgetExceeded, FiberTooClose
from quadenergy.incidence import (
    LineFamily,
    PlanarLine,
    PointSet2D,
    bilipschitz_distortion,
    collinearity_witness,
    count_incidences,
    line_family_from_pairs,
    line_from_pair,
    line_metric,
    phi_point_set,
    separate_lines,
    separation_constant,
    sum_energy_count,
    tube_split_omega,
)
from quadenergy.measure import build_cantor, nonconcentration_check
from quadenergy.quadpoly import PRESETS, QuadPoly, linear_form_J


def random_lines(rng, n):
    return LineFamily(rng.uniform(0, 2 * np.pi, n), rng.uniform(-1.5, 1.5, n), np.ones(n, dtype=int))


# -- lines and their metric ---------------------------------------------------------------


def test_line_metric_examples():
    l = PlanarLine(0.7, 0.3)
    assert line_metric(l, l) == 0
    assert line_metric(PlanarLine(0, 0), PlanarLine(0, 1)) == 1
    # opposite orientations with a = 0 canonicalize to the same line
    assert line_metric(PlanarLine(0, 0), PlanarLine(math.pi, 0)) == 0


def test_line_metric_symmetric(rng):
    for _ in range(200):
        l1 = PlanarLine(*rng.uniform(-4, 4, 2))
        l2 = PlanarLine(*rng.uniform(-4, 4, 2))
        assert line_metric(l1, l2) == line_metric(l2, l1)


def test_slope_form_round_trip(rng):
    for _ in range(100):
        m, k = rng.uniform(-3, 3, 2)
        line = PlanarLine.from_slope_intercept(m, k)
        for Y in (-1.0, 0.3, 2.0):
            X = m * Y + k
            assert line.distance(X, Y) == pytest.approx(0, abs=1e-12)
        m2, k2 = line.slope_intercept()
        assert (m2, k2) == pytest.approx((m, k), abs=1e-12)


def test_line_from_pair_examples():
    f = PRESETS["x+yz"]
    line, (m, k) = line_from_pair(f, 0.0, 1.0)
    assert (m, k) == (1, 0)
    line, (m, k) = line_from_pair(f, 0.0, 0.0)
    assert (m, k) == (0, 0)


def test_line_from_pair_carries_f_level_set(rng):
    # X = m Y + k with X = f - e y^2 - i y: the y-fiber of the quadratic
    for _ in range(50):
        f = QuadPoly(*rng.integers(-3, 4, 9).astype(float))
        if f.a == 0 and f.c == 0:
            continue
        x, z = rng.uniform(0, 1, 2)
        line, (m, k) = line_from_pair(f, x, z)
        for y in rng.uniform(-1, 1, 3):
            X = f(x, y, z) - f.e * y * y - f.i * y
            assert line.distance(X, y) == pytest.approx(0, abs=1e-9)


def test_line_from_pair_all_zero_axis():
    f = QuadPoly(b=1, d=1, e=1, h=1, i=1)  # a = c = 0
    with pytest.raises(AllZeroAxis):
        line_from_pair(f, 0.1, 0.2)
    line, (m, k) = line_from_pair(f, 0.5, 0.0, distinguished="z")
    assert m == pytest.approx(0.5)


def test_family_from_pairs_matches_single(rng):
    f = PRESETS["x+(y-z)^2"]
    pairs = rng.uniform(0, 1, (20, 2))
    fam = line_family_from_pairs(f, pairs)
    for i, (x, z) in enumerate(pairs):
        line, _ = line_from_pair(f, x, z)
        assert fam[i].theta == pytest.approx(line.theta, abs=1e-14)
        assert fam[i].a == pytest.approx(line.a, abs=1e-14)


# -- point sets and distortion --------------------------------------------------------------------


def test_phi_point_set_examples():
    M = np.array([0.0, 0.5, 1.0])
    P = phi_point_set(lambda x, y: x, M)
    assert len(P) == 9 and np.all(P.multiplicity == 1)
    grid = {(float(x), float(y)) for x in M for y in M}
    assert {tuple(p) for p in P.points.tolist()} == grid
    P = phi_point_set(lambda x, y: 0.25, M)
    assert len(P) == 3 and P.multiplicity.tolist() == [3, 3, 3]
    with pytest.raises(ValueError):
        phi_point_set(lambda x, y: 0.25, M, max_multiplicity=2)


def test_phi_point_set_fibers_are_translates():
    M = np.linspace(0, 1, 7)
    e, i, const = 1.5, -0.5, 0.2
    P = phi_point_set(lambda x, y: x - e * y * y - i * y + const, M)
    fibers = [P.points[P.points[:, 1] == y, 0] for y in M]
    base = np.sort(fibers[0])
    for fib in fibers[1:]:
        shift = np.sort(fib) - base
        assert np.allclose(shift, shift[0], atol=1e-12)


def test_phi_injective_gives_unit_multiplicity(rng):
    M = np.sort(rng.uniform(0, 1, 30))
    P = phi_point_set(lambda x, y: x**3 + y, M)
    assert P.total == 900 and np.all(P.multiplicity == 1)


def test_bilipschitz_examples(rng):
    M = np.sort(rng.uniform(0, 1, 12))
    d = bilipschitz_distortion(lambda x, y: x, M)
    assert d.lower == pytest.approx(1) and d.upper == pytest.approx(1) and not d.sampled
    d = bilipschitz_distortion(lambda x, y: 2 * x, M)
    assert d.lower == pytest.approx(1) and d.upper == pytest.approx(2)
    d = bilipschitz_distortion(lambda x, y: 0.0 * x, M)
    assert d.lower == 0
    d = bilipschitz_distortion(lambda x, y: 2 * x, M, exact_limit=10, samples=5000)
    assert d.sampled and 1 - 1e-12 <= d.lower and d.upper <= 2 + 1e-12


# -- incidence counting ---------------------------------------------------------------------


def test_count_examples():
    P = PointSet2D.simple([(0, 0)])
    L = LineFamily.from_lines([PlanarLine(0, 0)])
    assert count_incidences(P, L, 1e-3) == 1
    g = np.arange(3) / 4
    P = PointSet2D.simple([(x, y) for x in g for y in g])
    L = LineFamily.from_lines([PlanarLine(0, y) for y in g])
    assert count_incidences(P, L, 1e-3) == 9
    assert count_incidences(P, L, 1e-3, method="brute") == 9


def test_count_weights_by_multiplicity():
    P = PointSet2D(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([2, 3]))
    L = LineFamily(np.array([0.0]), np.array([0.0]), np.array([4]))
    assert count_incidences(P, L, 0.1) == 20


def test_vertical_lines_need_no_special_case():
    P = PointSet2D.simple([(0.5, y) for y in np.linspace(0, 1, 11)])
    L = LineFamily.from_lines([PlanarLine.from_slope_intercept(0.0, 0.5)])  # X = 0.5
    assert L.sin[0] ** 2 == pytest.approx(1)
    assert count_incidences(P, L, 1e-6) == count_incidences(P, L, 1e-6, method="brute") == 11


@pytest.mark.parametrize("seed", range(100))
def test_grid_equals_brute(seed):
    rng = np.random.default_rng(seed)
    n_pts, n_lines = (int(v) for v in rng.integers(1, 300, 2))
    P = PointSet2D(rng.uniform(-1, 1, (n_pts, 2)), rng.integers(1, 3, n_pts))
    L = random_lines(rng, n_lines)
    delta = float(rng.choice([0.003, 0.01, 0.05]))
    assert count_incidences(P, L, delta) == count_incidences(P, L, delta, method="brute")


def test_grid_equals_brute_on_boundary_points(rng):
    # points placed at distance exactly delta from lines stress the predicate at the tube edge
    L = LineFamily.from_slopes(np.array([0.0, 1.0, -2.0]), np.array([0.0, 0.25, 0.5]))
    delta = 2.0**-6
    pts = []
    for i in range(len(L)):
        line = L[i]
        t = rng.uniform(-1, 1, 30)
        base = t[:, None] * line.direction + line.a * line.normal
        pts.append(base + delta * line.normal)
        pts.append(base - delta * line.normal)
    P = PointSet2D.simple(np.vstack(pts))
    assert count_incidences(P, L, delta) == count_incidences(P, L, delta, method="brute")


def test_unknown_method():
    with pytest.raises(ValueError):
        count_incidences(PointSet2D.simple([(0, 0)]), LineFamily.from_lines([PlanarLine(0, 0)]), 0.1, "kd")


# -- greedy separation -------------------------------------------------------------------------


def test_separate_lines_examples():
    L = LineFamily.from_lines([PlanarLine(0, 0), PlanarLine(0, 1), PlanarLine(1, 3)])
    assert len(separate_lines(L, 0.5)) == 1
    L = LineFamily(np.array([0.3]), np.array([0.2]), np.array([4]))
    classes = separate_lines(L, 0.01)
    assert len(classes) == 4 and all(len(c) == 1 for c in classes)


def test_separate_lines_classes_are_separated(rng):
    L = random_lines(rng, 300)
    rho = 0.2
    classes = separate_lines(L, rho)
    assert len(classes) <= len(L)
    assert sum(len(c) for c in classes) == len(L)
    for cls in classes:
        for i, j in itertools.combinations(range(len(cls)), 2):
            assert line_metric(cls[i], cls[j]) >= rho


# -- the separation form ----------------------------------------------------------------------------


def test_tube_split_examples():
    M = np.linspace(0, 1, 9)
    split = tube_split_omega(PRESETS["x+yz"], M, 0.5, 2.0**-6)
    assert len(split.omega_prime) == 0 and len(split.omega_doubleprime) == 81
    assert linear_form_J(PRESETS["x+(y+z)^2"]).A == 0
    # a = 1, c = 0 and everything else in J vanishes: J = 0
    split = tube_split_omega(QuadPoly(a=1, e=1, i=1), M, 0.5, 2.0**-6)
    assert len(split.omega_prime) == 81 and split.slab_count == 0
    with pytest.raises(AllZeroAxis):
        tube_split_omega(QuadPoly(b=1, h=1, i=1), M, 0.5, 0.1)


def test_tube_split_on_cantor_within_budget():
    alpha, gamma = 0.5, 0.5
    mu = build_cantor(alpha, 6)
    delta = mu.delta
    M = mu.positions
    f = QuadPoly(a=1, b=1, c=1, d=1, h=1)
    split = tube_split_omega(f, M, gamma, delta, alpha)
    # the small part sits in a strip of width ~ delta^gamma; the scan constant controls it
    K = nonconcentration_check(M, delta, alpha, np.inf).worst_ratio
    J = linear_form_J(f)
    width = 2 * split.threshold / math.hypot(J.A, J.B)
    strip = 2 * K * (width / delta) ** alpha * len(M)
    assert len(split.omega_prime) <= strip
    assert len(split.omega_prime) + len(split.omega_doubleprime) == len(M) ** 2
    assert np.all(np.abs(J(*split.omega_prime.T)) <= split.threshold)
    assert split.budget == pytest.approx(delta ** (gamma * alpha) * len(M) ** 2)


def test_separation_constant_pieces():
    sc = separation_constant(PRESETS["x+yz"])
    # a = 0, c = 1: M = 1, intercept k = x has no e1-derivative
    assert sc.slope_bound == 1 and sc.C_f == 0 and sc.c0 == 0.5
    assert sc.c_f == pytest.approx(min(0.5 / (math.pi), 1 / (4 * max(2, 2 * 1 * math.pi)), math.sqrt(2)))


def test_line_separation_on_sampled_pairs(rng):
    f = QuadPoly(a=1, c=2, d=1, g=-1, h=1)
    sc = separation_constant(f)
    J = linear_form_J(f)
    gamma, delta = 0.5, 2.0**-8
    thr = delta**gamma
    checked = 0
    while checked < 300:
        p = rng.uniform(0, 1, 2)
        q = p + rng.uniform(1, 3) * delta * np.array([math.cos(t := rng.uniform(0, 2 * math.pi)), math.sin(t)])
        if not np.all((q >= 0) & (q <= 1)):
            continue
        jp, jq = J(*p), J(*q)
        if min(abs(jp), abs(jq)) < thr or jp * jq < 0:
            continue
        l1, _ = line_from_pair(f, *p)
        l2, _ = line_from_pair(f, *q)
        assert line_metric(l1, l2) >= sc.c_f * delta ** (1 + gamma)
        checked += 1


# -- additive energy ------------------------------------------------------------------------------------


def quadruple_count(A, B, C, delta):
    total = 0
    for c in C:
        for a1, a2, b1, b2 in itertools.product(A, A, B, B):
            total += abs((a1 + c * b1) - (a2 + c * b2)) <= delta
    return total


def test_sum_energy_examples():
    d = 0.25
    assert sum_energy_count([0, d], [0, d], [1], d) == 14
    assert sum_energy_count([0.3], [0.7], [1, 2, 3, 5], 0.01) == 4
    with pytest.raises(BudgetExceeded):
        sum_energy_count(np.arange(10), np.arange(10), [1], 0.1, pair_budget=50)


def test_sum_energy_matches_quadruple_loop(rng):
    for _ in range(30):
        A = np.sort(rng.integers(0, 8, rng.integers(1, 6)) / 8)
        B = np.sort(rng.integers(0, 8, rng.integers(1, 6)) / 8)
        C = np.sort(rng.uniform(0, 2, rng.integers(1, 4)))
        delta = float(rng.choice([1 / 16, 1 / 8, 0.3]))
        n = sum_energy_count(A, B, C, delta)
        assert n == quadruple_count(A, B, C, delta)
        assert (n - len(C) * A.size * B.size) % 2 == 0


# -- collinearity ------------------------------------------------------------------------------------


def test_collinearity_examples():
    delta, r = 2.0**-10, 0.05
    m, k = 0.7, 0.1
    res = collinearity_witness(m * 0.5 + k, 0.5, k, 0.0, m + k, 1.0, m, k, delta, r)
    assert res.passed and res.premises and res.error == pytest.approx(0, abs=1e-15)
    h = delta / 2
    res = collinearity_witness(m * 0.5 + k + h, 0.5, k - h, 0.0, m + k + h, 1.0, m, k, delta, r)
    assert res.passed and res.premises and res.error > 0
    with pytest.raises(FiberTooClose):
        collinearity_witness(0, 0.5, 0, 0.0, 0, delta, m, k, delta, r)


def test_collinearity_random_premises(rng):
    delta = 2.0**-12
    for _ in range(500):
        m, k = rng.uniform(-2, 2, 2)
        y0, v, y1 = np.sort(rng.uniform(0, 1, 3))
        if y1 - y0 < delta**0.3:
            continue
        r = rng.uniform(-delta, delta, 3)
        res = collinearity_witness(m * v + k + r[0], v, m * y0 + k + r[1], y0, m * y1 + k + r[2], y1,
                                   m, k, delta, 0.1)
        assert res.premises and res.passed
