import itertools
import math

import numpy as np
import pytest

from quadenergy.energy import (
    BinnedDistribution,
    LineGeometry,
    PointGeometry,
    TRIPLE_BUDGET,
    bump,
    coincidence_integral,
    coincidence_split,
    default_kernel,
    pushforward,
    slice_mass_sup,
    smoothed_energy,
    sublevel_mass,
    sublevel_mass_profile,
)
from quadenergy.errors import DegenerateForm, TripleBudgetExceeded
from quadenergy.measure import DiscreteMeasure, build_cantor, point_mass, uniform_grid
from quadenergy.quadpoly import PRESETS, Quad2, QuadPoly, evaluate, gradient

XYZ = PRESETS["x+yz"]


def two_atoms(delta=1 / 8):
    return DiscreteMeasure(delta, 0.0, np.array([0, int(1 / delta)]), np.array([0.5, 0.5]))


def naive_pushforward(f, mu, width):
    # oracle: three explicit loops over atoms
    out = {}
    for (x, wx), (y, wy), (z, wz) in itertools.product(zip(mu.positions, mu.weights), repeat=3):
        b = math.floor(evaluate(f, (x, y, z)) / width)
        out[b] = out.get(b, 0.0) + wx * wy * wz
    return out


def all_triples(mu):
    pos, w = mu.positions, mu.weights
    X, Y, Z = np.meshgrid(pos, pos, pos, indexing="ij")
    Wt = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    return X.ravel(), Y.ravel(), Z.ravel(), Wt


def naive_coincidence(f, mu, delta, predicate):
    # oracle: every pair of triples, predicate on the two values
    X, Y, Z, W = all_triples(mu)
    v = evaluate(f, (X, Y, Z))
    total = 0.0
    for i in range(v.size):
        total += W[i] * float(np.sum(W[predicate(v[i], v)]))
    return total


# -- pushforward ---------------------------------------------------------------------


def test_pushforward_two_atom_example():
    nu = pushforward(XYZ, two_atoms())
    assert nu.as_dict() == {0: 3 / 8, 8: 1 / 2, 16: 1 / 8}
    nu = pushforward(XYZ, two_atoms(), bin_width=1.0)
    assert nu.as_dict() == {0: 3 / 8, 1: 1 / 2, 2: 1 / 8}


def test_pushforward_single_atom():
    mu = point_mass(0.3, 2.0**-6)
    nu = pushforward(XYZ, mu)
    x = mu.positions[0]
    assert nu.as_dict() == {math.floor((x + x * x) / mu.delta): 1.0}


@pytest.mark.parametrize("depth", [2, 3, 4])
@pytest.mark.parametrize("name", ["x+yz", "x+(y+z)^2", "x+(y-z)^2"])
def test_pushforward_matches_triple_loop(depth, name):
    mu = build_cantor(0.5, depth)
    f = PRESETS[name]
    nu = pushforward(f, mu)
    ref = naive_pushforward(f, mu, mu.delta)
    assert nu.total == pytest.approx(1, abs=1e-9)
    assert set(nu.as_dict()) == set(ref)
    for b, m in nu.as_dict().items():
        assert m == pytest.approx(ref[b], rel=1e-12, abs=1e-15)


def test_triple_budget():
    mu = uniform_grid(2.0**-11)  # 2048**3 > 2**30
    assert mu.size**3 > TRIPLE_BUDGET
    with pytest.raises(TripleBudgetExceeded):
        pushforward(XYZ, mu)


def test_binned_distribution_helpers():
    nu = BinnedDistribution(0.5, np.array([-1, 0, 3]), np.array([0.25, 0.25, 0.5]))
    start, dense = nu.to_dense()
    assert start == -1 and dense.tolist() == [0.25, 0.25, 0, 0, 0.5]
    assert nu.max_window(1) == 0.5
    assert nu.max_window(2) == 1.0
    assert nu.max_window(0) == 0.5
    assert nu.window_join(nu, 0) == pytest.approx(0.25**2 * 2 + 0.25)
    assert nu.to_csv().splitlines()[0] == "bin,left,mass"


# -- kernel and smoothed energy ----------------------------------------------------------


def test_kernel_constants():
    K = default_kernel()
    t = np.linspace(-1, 1, 200001)
    phi = K.profile(t)
    assert np.trapezoid(phi, t) == pytest.approx(1, abs=1e-9)
    assert K.K0 == pytest.approx(np.trapezoid(phi * phi, t), rel=1e-6)
    assert K(2.0) == 0 and K(2.5) == 0
    inside = K.u <= K.eta
    assert np.all(K.K[inside] >= K.c0)
    assert K.c0 == pytest.approx(K.K0 / 2)


def test_kernel_autocorrelation_against_direct_integral():
    K = default_kernel()
    t = np.linspace(-1, 1, 40001)
    for u in (0.1, 0.5, 1.0, 1.7):
        direct = np.trapezoid(K.profile(t) * K.profile(t - u), t)
        assert K(u) == pytest.approx(direct, abs=1e-6 * K.K0)


def quadrature_energy(nu, delta, K):
    # oracle: integrate (phi_delta * nu)^2 on a delta/16 grid
    pos = nu.positions()
    step = delta / 16
    t = np.arange(pos.min() - 1.5 * delta, pos.max() + 1.5 * delta + step, step)
    conv = np.zeros_like(t)
    for x, m in zip(pos, nu.mass):
        conv += m * K.profile((t - x) / delta) / delta
    return np.trapezoid(conv**2, t)


def test_smoothed_energy_point_mass_and_far_pair():
    K = default_kernel()
    delta = 2.0**-6
    nu = BinnedDistribution(delta, np.array([5]), np.array([1.0]))
    assert smoothed_energy(nu, delta, K) == pytest.approx(K.K0 / delta)
    nu = BinnedDistribution(delta, np.array([0, 100]), np.array([0.5, 0.5]))
    assert smoothed_energy(nu, delta, K) == pytest.approx(0.5 * K.K0 / delta)


def test_smoothed_energy_matches_quadrature(rng):
    K = default_kernel()
    for _ in range(50):
        delta = 2.0 ** -int(rng.integers(3, 9))
        n = int(rng.integers(1, 65))
        bins = np.sort(rng.choice(np.arange(-40, 80), size=n, replace=False))
        mass = rng.random(n)
        nu = BinnedDistribution(delta, bins, mass / mass.sum())
        assert smoothed_energy(nu, delta, K) == pytest.approx(quadrature_energy(nu, delta, K), rel=0.01)


def test_energy_bounded_by_coincidence():
    # K_delta vanishes beyond two bins and peaks at K(0)/delta
    K = default_kernel()
    for depth, name in [(3, "x+yz"), (4, "x+(y+z)^2"), (4, "x+(y-z)^2")]:
        mu = build_cantor(0.5, depth)
        f = PRESETS[name]
        e = smoothed_energy(pushforward(f, mu), mu.delta, K)
        assert e <= K.K0 / mu.delta * coincidence_integral(f, mu) * (1 + 1e-12)


# -- coincidence integral and its split ------------------------------------------------------


def test_coincidence_trivial_cases():
    assert coincidence_integral(XYZ, point_mass(0.25, 2.0**-8)) == pytest.approx(1)
    mu = two_atoms(1 / 8)
    f = QuadPoly(h=1)  # f = x
    assert coincidence_integral(f, mu) == pytest.approx(0.5)


@pytest.mark.parametrize("name", ["x+yz", "x+(y-z)^2"])
def test_coincidence_matches_six_loop_oracles(name):
    f = PRESETS[name]
    mu = build_cantor(0.5, 3)
    d = mu.delta
    got = coincidence_integral(f, mu)
    same_bins = naive_coincidence(
        f, mu, d, lambda a, b: np.abs(np.floor(a / d) - np.floor(b / d)) <= 2)
    assert got == pytest.approx(same_bins, rel=1e-12)
    inner = naive_coincidence(f, mu, d, lambda a, b: np.abs(a - b) <= 2 * d)
    outer = naive_coincidence(f, mu, d, lambda a, b: np.abs(a - b) < 3 * d)
    assert inner <= got * (1 + 1e-12) and got <= outer * (1 + 1e-12)


def test_coincidence_monotone_in_delta():
    mu = build_cantor(0.5, 5)
    vals = [coincidence_integral(XYZ, mu, mu.delta * 2**k) for k in range(5)]
    assert all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


def test_split_constant_gradient():
    f = QuadPoly(h=1, i=1, j=1)
    mu = build_cantor(0.5, 3)
    s = coincidence_split(f, mu, mu.delta, 0.1)
    assert s.I0 == 0
    assert s.total <= s.cover_sum * (1 + 1e-12)


def naive_split(f, mu, delta, kappa):
    X, Y, Z, W = all_triples(mu)
    v = np.floor(evaluate(f, (X, Y, Z)) / delta)
    gx, gy, gz = (np.broadcast_to(g, v.shape) for g in gradient(f, (X, Y, Z)))
    r = delta**kappa
    small = np.sqrt(gx**2 + gy**2 + gz**2) <= r
    flags = [np.abs(g) > r / math.sqrt(3) for g in (gx, gy, gz)]
    near = np.abs(v[:, None] - v[None, :]) <= 2
    pair = W[:, None] * W[None, :] * near
    I = [float(np.sum(pair * small[:, None] * small[None, :]))]
    I += [float(np.sum(pair * fl[None, :])) for fl in flags]
    I += [float(np.sum(pair * fl[:, None])) for fl in flags]
    return I, float(np.sum(pair))


def test_split_matches_naive_flags():
    mu = build_cantor(0.5, 3)
    for name, kappa in [("x+yz", 0.1), ("x+(y-z)^2", 0.3)]:
        f = PRESETS[name]
        s = coincidence_split(f, mu, mu.delta, kappa)
        I, total = naive_split(f, mu, mu.delta, kappa)
        assert s.total == pytest.approx(total, rel=1e-12)
        for a, b in zip(s.I, I):
            assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


def test_split_cover_on_cantor():
    mu = build_cantor(0.5, 4)
    s = coincidence_split(XYZ, mu, mu.delta, 0.1)
    assert s.total <= s.cover_sum * (1 + 1e-12)
    assert all(I <= s.total * (1 + 1e-12) for I in s.I)


def test_split_small_gradient_instance():
    # every triple sits within 2**-5 of the critical line x = 0, y = z of x^2 + (y - z)^2
    f = QuadPoly(c=-2, d=1, e=1, g=1)
    delta = 2.0**-10
    mu = DiscreteMeasure(delta, 0.0, np.arange(32), np.full(32, 1 / 32))
    s = coincidence_split(f, mu, delta, 0.05)
    assert s.I0 == pytest.approx(s.total)
    assert s.I1 == s.I2 == s.I3 == 0


# -- slice, tube and sublevel masses -------------------------------------------------------


def test_slice_mass_sup_examples():
    assert slice_mass_sup(XYZ, point_mass(0.5, 2.0**-6)) == 1
    assert slice_mass_sup(XYZ, two_atoms(1 / 8), 1 / 8) == 0.5


def naive_tube_line(mu, p, v, r):
    X, Y, Z, W = all_triples(mu)
    D = np.stack([X - p[0], Y - p[1], Z - p[2]])
    v = np.asarray(v, dtype=float) / np.linalg.norm(v)
    along = np.tensordot(v, D, axes=1)
    d2 = np.sum(D * D, axis=0) - along**2
    return float(np.sum(W[d2 <= r * r]))


def test_tube_mass_matches_triple_loop(rng):
    from quadenergy.energy import tube_mass

    mu = build_cantor(0.5, 4)
    for _ in range(10):
        p = rng.uniform(0, 1, 3)
        v = rng.normal(size=3)
        r = rng.uniform(0.02, 0.3)
        assert tube_mass(mu, LineGeometry(p, v), r) == pytest.approx(naive_tube_line(mu, p, v, r), abs=1e-12)


def test_tube_mass_examples():
    from quadenergy.energy import tube_mass

    w = 0.25
    mu = DiscreteMeasure(1 / 16, 0.0, np.array([0, 5, 9, 15]), np.array([w, 0.25, 0.25, 0.25]))
    assert tube_mass(mu, PointGeometry((0, 0, 0)), 1e-9) >= w**3
    uni = uniform_grid(2.0**-6)
    r = 1 / 8
    # interior axis-parallel line: cross-section is a disc of area pi r^2, about (2r)^2
    interior = tube_mass(uni, LineGeometry((0, 0.5, 0.5), (1, 0, 0)), r)
    assert (2 * r) ** 2 / 4 <= interior <= 4 * (2 * r) ** 2
    # along the x-axis only a quarter of the disc lies in [0, 1]^3
    edge = tube_mass(uni, LineGeometry((0, 0, 0), (1, 0, 0)), r)
    assert edge == pytest.approx(math.pi * r * r / 4, rel=0.25)


def test_sublevel_examples():
    uni = uniform_grid(2.0**-8)
    delta = 2.0**-6
    m = sublevel_mass(Quad2(0, 1, 0), uni, delta, 0.0)
    ref = delta * (1 + math.log(1 / delta))
    assert ref / 4 <= m <= 4 * ref
    assert sublevel_mass(Quad2(1, 0, 1), uni, delta, -2 * delta) == 0
    with pytest.raises(DegenerateForm):
        sublevel_mass_profile(Quad2(1, 2, 1), uni, delta)


def test_sublevel_profile_is_the_supremum(rng):
    mu = build_cantor(0.5, 4)
    Q = Quad2(1, 0, -1)
    delta = 2.0**-5
    sup, t_star = sublevel_mass_profile(Q, mu, delta)
    assert sublevel_mass(Q, mu, delta, t_star) == pytest.approx(sup)
    # oracle: scan t on a fine grid
    pos = mu.positions
    vals = Q(pos[:, None], pos[None, :]).ravel()
    w = np.outer(mu.weights, mu.weights).ravel()
    ts = np.linspace(vals.min() - delta, vals.max() + delta, 4001)
    best = max(float(w[np.abs(vals - t) <= delta].sum()) for t in ts)
    assert best <= sup + 1e-12


def test_bump_support():
    assert bump(np.array([-1.0, 1.0, 2.0])).tolist() == [0, 0, 0]
    assert bump(np.array([0.0]))[0] == pytest.approx(math.exp(-1))
