"""Pushforward of a triple product measure under a quadratic, and its energies.

The pushforward of ``mu x mu x mu`` under f is binned on the lattice
``bin_width * Z``: the value ``t`` lands in bin ``floor(t / bin_width)``. Only
occupied bins are stored, since the range of f can span far more bins than
there are atom triples.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from quadenergy.errors import TripleBudgetExceeded
from quadenergy.measure import DiscreteMeasure
from quadenergy.quadpoly import Quad2, QuadPoly, evaluate, gradient, reduce_rank2

TRIPLE_BUDGET = 2**30
_CHUNK_ELEMENTS = 2**22


def check_triple_budget(mu: DiscreteMeasure) -> None:
    if mu.size**3 > TRIPLE_BUDGET:
        raise TripleBudgetExceeded(f"{mu.size}**3 atom triples exceeds 2**30")


@dataclass(frozen=True)
class BinnedDistribution:
    """Mass per bin ``[offset + m w, offset + (m + 1) w)`` for occupied bins m."""

    bin_width: float
    bins: np.ndarray
    mass: np.ndarray
    offset: float = 0.0

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def positions(self) -> np.ndarray:
        return self.offset + self.bins * self.bin_width

    def to_dense(self) -> tuple[int, np.ndarray]:
        """First bin index and the dense mass array from there to the last occupied bin."""
        start = int(self.bins[0])
        dense = np.zeros(int(self.bins[-1]) - start + 1)
        dense[self.bins - start] = self.mass
        return start, dense

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.bins.tolist(), self.mass.tolist()))

    def shifted_overlap(self, other: "BinnedDistribution", d: int) -> float:
        """``sum_m self[m] * other[m + d]`` over shared bins."""
        if self.bins.size == 0 or other.bins.size == 0:
            return 0.0
        target = self.bins + d
        pos = np.searchsorted(other.bins, target)
        pos = np.minimum(pos, other.bins.size - 1)
        hit = other.bins[pos] == target
        return float(np.dot(self.mass[hit], other.mass[pos[hit]]))

    def window_join(self, other: "BinnedDistribution", radius: int = 2) -> float:
        """``sum_m self[m] * (other[m - radius] + ... + other[m + radius])``."""
        return sum(self.shifted_overlap(other, d) for d in range(-radius, radius + 1))

    def max_window(self, radius: int = 2) -> float:
        """Largest total mass of ``2 * radius + 1`` consecutive bins."""
        if self.bins.size == 0:
            return 0.0
        # an optimal window can always be slid right until its left end hits an atom
        hi = np.searchsorted(self.bins, self.bins + 2 * radius, side="right")
        csum = np.concatenate([[0.0], np.cumsum(self.mass)])
        return float(np.max(csum[hi] - csum[:-1]))

    def to_csv(self) -> str:
        rows = ["bin,left,mass"]
        for m, x, w in zip(self.bins.tolist(), self.positions().tolist(), self.mass.tolist()):
            rows.append(f"{m},{x!r},{w!r}")
        return "\n".join(rows) + "\n"


def _reduce(bins: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inverse = np.unique(bins, return_inverse=True)
    return uniq, np.bincount(inverse, weights=weights, minlength=uniq.size)


class _Accumulator:
    """Sparse histogram built from chunks, compacted as it grows."""

    def __init__(self):
        self.parts: list[tuple[np.ndarray, np.ndarray]] = []
        self.pending = 0

    def add(self, bins, weights):
        if bins.size == 0:
            return
        self.parts.append(_reduce(bins, weights))
        self.pending += self.parts[-1][0].size
        if self.pending > _CHUNK_ELEMENTS:
            self.parts = [self._merged()]
            self.pending = self.parts[0][0].size

    def _merged(self):
        if not self.parts:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return _reduce(np.concatenate([p[0] for p in self.parts]),
                       np.concatenate([p[1] for p in self.parts]))

    def result(self, bin_width: float) -> BinnedDistribution:
        bins, mass = self._merged()
        return BinnedDistribution(bin_width, bins.astype(np.int64), mass)


def _triple_chunks(mu: DiscreteMeasure):
    """Yield (X, Y, Z, W) broadcastable blocks covering all atom triples, outer atom first."""
    check_triple_budget(mu)
    pos, w = mu.positions, mu.weights
    n = mu.size
    Y, Z = pos[None, :, None], pos[None, None, :]
    WYZ = w[None, :, None] * w[None, None, :]
    step = max(1, _CHUNK_ELEMENTS // max(1, n * n))
    for start in range(0, n, step):
        X = pos[start:start + step, None, None]
        yield X, Y, Z, w[start:start + step, None, None] * WYZ


def pushforward(f: QuadPoly, mu: DiscreteMeasure, bin_width: float | None = None) -> BinnedDistribution:
    """Distribution of ``f(x, y, z)`` for independent x, y, z drawn from mu.

    Every atom triple is enumerated; its weight product goes to the bin of
    width ``bin_width`` (default ``mu.delta``) containing the value.
    """
    width = mu.delta if bin_width is None else float(bin_width)
    acc = _Accumulator()
    for X, Y, Z, W in _triple_chunks(mu):
        vals = evaluate(f, (X, Y, Z))
        acc.add(np.floor(vals / width).astype(np.int64).ravel(), W.ravel())
    return acc.result(width)


# -- smoothing kernel ------------------------------------------------------------

LATTICE = 512


def bump(t):
    """``exp(-1 / (1 - t^2))`` on (-1, 1), zero outside; not normalized."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@dataclass(frozen=True)
class SmoothingKernel:
    """Unit-mass bump profile phi and its autocorrelation K sampled on a 1/512 lattice.

    ``K(u) = int phi(t) phi(t - u) dt`` is supported on [-2, 2]. ``c0 = K(0)/2``
    and ``eta`` is the largest lattice point with ``K >= c0`` on ``[-eta, eta]``.
    """

    norm: float
    u: np.ndarray
    K: np.ndarray
    c0: float
    eta: float

    def profile(self, t):
        return bump(t) / self.norm

    def __call__(self, u):
        return np.interp(np.abs(u), self.u, self.K, right=0.0)

    @property
    def K0(self) -> float:
        return float(self.K[0])

    def scaled(self, s, delta: float):
        """``K_delta(s) = K(s / delta) / delta``."""
        return self(np.asarray(s) / delta) / delta


@lru_cache(maxsize=None)
def default_kernel() -> SmoothingKernel:
    norm, _ = integrate.quad(lambda t: float(bump(t)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    t = np.arange(-LATTICE, LATTICE + 1) / LATTICE
    phi = bump(t) / norm
    simpson_w = np.ones(t.size)
    simpson_w[1:-1:2] = 4.0
    simpson_w[2:-1:2] = 2.0
    simpson_w /= 3.0 * LATTICE
    # K at lattice shifts k / 512, k = 0 .. 1024: phi(t - u) is phi shifted by k samples
    shifts = np.arange(2 * LATTICE + 1)
    K = np.empty(shifts.size)
    for k in shifts:
        prod = np.zeros(t.size)
        prod[k:] = phi[k:] * phi[: t.size - k]
        K[k] = float(np.dot(simpson_w, prod))
    u = shifts / LATTICE
    c0 = K[0] / 2
    below = np.flatnonzero(K < c0)
    eta = float(u[below[0] - 1])
    return SmoothingKernel(norm, u, K, float(c0), eta)


def smoothed_energy(nu: BinnedDistribution, delta: float | None = None,
                    kernel: SmoothingKernel | None = None) -> float:
    """``sum_{m, m'} nu_m nu_m' K_delta((m - m') w)`` with w the bin width.

    Equals the squared L^2 norm of ``phi_delta * nu`` when nu is a sum of point
    masses at the bin left edges. Only shifts with ``|m - m'| w < 2 delta``
    contribute.
    """
    kernel = default_kernel() if kernel is None else kernel
    delta = nu.bin_width if delta is None else float(delta)
    reach = int(np.ceil(2 * delta / nu.bin_width))
    total = 0.0
    for d in range(-reach, reach + 1):
        k = float(kernel.scaled(d * nu.bin_width, delta))
        if k > 0:
            total += k * nu.shifted_overlap(nu, d)
    return total


# -- coincidence integral and its split --------------------------------------------


def coincidence_integral(f: QuadPoly, mu: DiscreteMeasure, delta: float | None = None) -> float:
    """Binned estimate of the measure of pairs of triples with ``|f - f'| <= 2 delta``.

    Values are binned at width delta and bins up to two apart are joined. Every
    pair with ``|f - f'| <= 2 delta`` is counted, and every counted pair has
    ``|f - f'| < 3 delta``: the window overshoots by at most one bin.
    """
    nu = pushforward(f, mu, delta)
    return nu.window_join(nu)


@dataclass(frozen=True)
class CoincidenceSplit:
    """Pieces of the coincidence integral.

    I0: both triples have Euclidean gradient norm at most ``delta**kappa``.
    I1-I3: the primed triple has ``|d_x f|``, ``|d_y f|``, ``|d_z f|`` above
    ``delta**kappa / sqrt(3)``. I4-I6: the same for the unprimed triple.
    A gradient longer than ``delta**kappa`` has a component above
    ``delta**kappa / sqrt(3)``, so the seven pieces cover every pair.
    """

    I: tuple[float, ...]
    total: float
    kappa: float

    def __getattr__(self, name):
        if len(name) == 2 and name[0] == "I" and name[1].isdigit():
            return self.I[int(name[1])]
        raise AttributeError(name)

    @property
    def cover_sum(self) -> float:
        return float(sum(self.I))


def coincidence_split(f: QuadPoly, mu: DiscreteMeasure, delta: float | None = None,
                      kappa: float = 0.05) -> CoincidenceSplit:
    delta = mu.delta if delta is None else float(delta)
    r = delta**kappa
    comp = r / np.sqrt(3.0)
    acc = {key: _Accumulator() for key in ("all", "G", "x", "y", "z")}
    for X, Y, Z, W in _triple_chunks(mu):
        shape = np.broadcast_shapes(X.shape, Y.shape, Z.shape)
        bins = np.floor(evaluate(f, (X, Y, Z)) / delta).astype(np.int64).ravel()
        gx, gy, gz = (np.broadcast_to(g, shape).ravel() for g in gradient(f, (X, Y, Z)))
        w = W.ravel()
        acc["all"].add(bins, w)
        small = np.sqrt(gx * gx + gy * gy + gz * gz) <= r
        acc["G"].add(bins[small], w[small])
        for key, g in (("x", gx), ("y", gy), ("z", gz)):
            big = np.abs(g) > comp
            acc[key].add(bins[big], w[big])
    nu = {key: a.result(delta) for key, a in acc.items()}
    total = nu["all"].window_join(nu["all"])
    I0 = nu["G"].window_join(nu["G"])
    primed = [nu["all"].window_join(nu[k]) for k in ("x", "y", "z")]
    unprimed = [nu[k].window_join(nu["all"]) for k in ("x", "y", "z")]
    return CoincidenceSplit((I0, *primed, *unprimed), total, kappa)


def slice_mass_sup(f: QuadPoly, mu: DiscreteMeasure, delta: float | None = None) -> float:
    """Largest pushforward mass in five consecutive bins of width delta."""
    return pushforward(f, mu, delta).max_window(2)


# -- tube and sublevel masses ---------------------------------------------------------


@dataclass(frozen=True)
class PointGeometry:
    p: np.ndarray


@dataclass(frozen=True)
class LineGeometry:
    p: np.ndarray
    direction: np.ndarray


def tube_mass(mu: DiscreteMeasure, geometry, r: float) -> float:
    """Product measure of the closed r-neighbourhood of a point or a line.

    Candidates are narrowed one coordinate at a time: for a line the
    coordinate along its dominant axis fixes an interval of the line parameter,
    which bounds the other two coordinates; points in the product box are then
    tested exactly.
    """
    check_triple_budget(mu)
    pos, w = mu.positions, mu.weights

    def span(lo, hi):
        return np.searchsorted(pos, lo, side="left"), np.searchsorted(pos, hi, side="right")

    if isinstance(geometry, PointGeometry):
        p = np.asarray(geometry.p, dtype=float)
        ranges = [span(p[k] - r, p[k] + r) for k in range(3)]
        (x0, x1), (y0, y1), (z0, z1) = ranges
        X = pos[x0:x1, None, None] - p[0]
        Y = pos[None, y0:y1, None] - p[1]
        Z = pos[None, None, z0:z1] - p[2]
        inside = X * X + Y * Y + Z * Z <= r * r
        W = w[x0:x1, None, None] * w[None, y0:y1, None] * w[None, None, z0:z1]
        return float(np.sum(W * inside))

    p = np.asarray(geometry.p, dtype=float)
    v = np.asarray(geometry.direction, dtype=float)
    v = v / np.linalg.norm(v)
    # the product measure is symmetric, so relabel axes to put the dominant one first
    order = np.argsort(-np.abs(v), kind="stable")
    p, v = p[order], v[order]
    total = 0.0
    for xi in range(pos.size):
        x = pos[xi]
        t_lo, t_hi = sorted(((x - p[0] - r) / v[0], (x - p[0] + r) / v[0]))
        ys = sorted((p[1] + t_lo * v[1], p[1] + t_hi * v[1]))
        zs = sorted((p[2] + t_lo * v[2], p[2] + t_hi * v[2]))
        y0, y1 = span(ys[0] - r, ys[1] + r)
        z0, z1 = span(zs[0] - r, zs[1] + r)
        if y0 == y1 or z0 == z1:
            continue
        D = np.stack(np.broadcast_arrays(
            x - p[0], pos[y0:y1, None] - p[1], pos[None, z0:z1] - p[2]))
        along = v[0] * D[0] + v[1] * D[1] + v[2] * D[2]
        dist2 = np.sum(D * D, axis=0) - along * along
        inside = dist2 <= r * r
        total += w[xi] * float(np.sum(w[y0:y1, None] * w[None, z0:z1] * inside))
    return total


def _pair_values(Q: Quad2, mu: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    pos, w = mu.positions, mu.weights
    vals = Q(pos[:, None], pos[None, :]).ravel()
    weights = (w[:, None] * w[None, :]).ravel()
    order = np.argsort(vals, kind="stable")
    return vals[order], weights[order]


def sublevel_mass(Q: Quad2, mu: DiscreteMeasure, delta: float, t: float) -> float:
    """``(mu x mu){|Q(u, v) - t| <= delta}``."""
    vals, weights = _pair_values(Q, mu)
    lo = np.searchsorted(vals, t - delta, side="left")
    hi = np.searchsorted(vals, t + delta, side="right")
    return float(weights[lo:hi].sum())


def sublevel_mass_profile(Q: Quad2, mu: DiscreteMeasure, delta: float,
                          tol: float = 1e-12) -> tuple[float, float]:
    """Supremum over t of ``(mu x mu){|Q - t| <= delta}`` and a maximizing t.

    The supremum is attained with the window ``[t - delta, t + delta]``
    starting at one of the sorted values, so a sliding window over the sorted
    values gives it exactly.
    """
    reduce_rank2(Q, tol)
    vals, weights = _pair_values(Q, mu)
    cw = np.concatenate([[0.0], np.cumsum(weights)])
    hi = np.searchsorted(vals, vals + 2 * delta, side="right")
    mass = cw[hi] - cw[np.arange(vals.size)]
    k = int(np.argmax(mass))
    return float(mass[k]), float(vals[k] + delta)
