"""Counting delta-incidences between planar points and lines.

Lines are stored as ``(theta, a)``: the set ``t (cos theta, sin theta) +
a (-sin theta, cos theta)`` with ``a >= 0``. A point ``(x, y)`` lies in the
delta-neighbourhood of the line when ``|-sin theta x + cos theta y - a| <= delta``.
Lines of the slope form ``X = m Y + k`` map to this form with theta in (0, pi)
before the sign of a is normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from quadenergy.errors import AllZeroAxis, BudgetExceeded, FiberTooClose
from quadenergy.quadpoly import QuadPoly, line_coefficients, linear_form_J

TWO_PI = 2 * math.pi


def _canonical(theta, a):
    theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    a = np.asarray(a, dtype=float)
    flip = (a < 0) | ((a == 0) & (theta >= math.pi))
    theta = np.where(flip, np.mod(theta + math.pi, TWO_PI), theta)
    return theta, np.abs(a)


@dataclass(frozen=True)
class PlanarLine:
    theta: float
    a: float

    def __post_init__(self):
        theta, a = _canonical(self.theta, self.a)
        object.__setattr__(self, "theta", float(theta))
        object.__setattr__(self, "a", float(a))

    @classmethod
    def from_slope_intercept(cls, m: float, k: float) -> "PlanarLine":
        """The line ``X = m Y + k`` in the (X, Y) plane."""
        s = math.hypot(1.0, m)
        return cls(math.atan2(1.0, m), -k / s)

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @property
    def normal(self) -> np.ndarray:
        return np.array([-math.sin(self.theta), math.cos(self.theta)])

    def slope_intercept(self) -> tuple[float, float]:
        """``(m, k)`` with ``X = m Y + k``; undefined for lines with sin(theta) = 0."""
        s, c = math.sin(self.theta), math.cos(self.theta)
        return c / s, -self.a / s

    def x_at(self, y):
        s, c = math.sin(self.theta), math.cos(self.theta)
        return (c * np.asarray(y) - self.a) / s

    def distance(self, x, y):
        return np.abs(-math.sin(self.theta) * np.asarray(x) + math.cos(self.theta) * np.asarray(y) - self.a)


def line_metric(l1: PlanarLine, l2: PlanarLine) -> float:
    """Chord between unit directions plus distance between the feet ``a n`` and ``a' n'``."""
    c1, s1, c2, s2 = math.cos(l1.theta), math.sin(l1.theta), math.cos(l2.theta), math.sin(l2.theta)
    return math.sqrt((c1 - c2) ** 2 + (s1 - s2) ** 2) + math.sqrt(
        (-l1.a * s1 + l2.a * s2) ** 2 + (l1.a * c1 - l2.a * c2) ** 2
    )


def _metric_to_many(theta, a, thetas, As):
    c1, s1 = math.cos(theta), math.sin(theta)
    c2, s2 = np.cos(thetas), np.sin(thetas)
    return np.sqrt((c1 - c2) ** 2 + (s1 - s2) ** 2) + np.sqrt(
        (-a * s1 + As * s2) ** 2 + (a * c1 - As * c2) ** 2
    )


@dataclass(frozen=True)
class LineFamily:
    theta: np.ndarray
    a: np.ndarray
    multiplicity: np.ndarray
    provenance: np.ndarray | None = None
    sin: np.ndarray = field(init=False, repr=False)
    cos: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        theta, a = _canonical(self.theta, self.a)
        mult = np.asarray(self.multiplicity, dtype=np.int64)
        if np.any(mult < 1):
            raise ValueError("line multiplicities must be >= 1")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "multiplicity", mult)
        # both counting backends read these arrays, so the predicate is bit-identical
        object.__setattr__(self, "sin", np.sin(theta))
        object.__setattr__(self, "cos", np.cos(theta))

    @classmethod
    def from_lines(cls, lines, multiplicity=None, provenance=None) -> "LineFamily":
        theta = np.array([ln.theta for ln in lines], dtype=float)
        a = np.array([ln.a for ln in lines], dtype=float)
        mult = np.ones(theta.size, dtype=np.int64) if multiplicity is None else multiplicity
        return cls(theta, a, mult, provenance)

    @classmethod
    def from_slopes(cls, m, k, provenance=None) -> "LineFamily":
        m = np.asarray(m, dtype=float)
        k = np.asarray(k, dtype=float)
        return cls(np.arctan2(1.0, m), -k / np.hypot(1.0, m), np.ones(m.size, dtype=np.int64),
                   provenance)

    def __len__(self):
        return int(self.theta.size)

    def __getitem__(self, i) -> PlanarLine:
        return PlanarLine(self.theta[i], self.a[i])

    def subset(self, idx) -> "LineFamily":
        idx = np.asarray(idx, dtype=np.int64)
        prov = None if self.provenance is None else self.provenance[idx]
        return LineFamily(self.theta[idx], self.a[idx], self.multiplicity[idx], prov)


@dataclass(frozen=True)
class PointSet2D:
    points: np.ndarray
    multiplicity: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        mult = np.asarray(self.multiplicity, dtype=np.int64)
        if mult.shape != (pts.shape[0],) or np.any(mult < 1):
            raise ValueError("need one multiplicity >= 1 per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "multiplicity", mult)

    @classmethod
    def simple(cls, points) -> "PointSet2D":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(pts, np.ones(pts.shape[0], dtype=np.int64))

    def __len__(self):
        return int(self.points.shape[0])

    @property
    def total(self) -> int:
        return int(self.multiplicity.sum())


def line_from_pair(f: QuadPoly, x: float, z: float, distinguished: str = "y"):
    """Line ``X = m Y + k`` carried by the pair, with its (theta, a) form.

    For the default distinguished variable, ``m = a x + c z`` and
    ``k = b x z + d x^2 + g z^2 + h x + j z``; ``distinguished='z'`` gives the
    family used when a and c both vanish.
    """
    lc = line_coefficients(f, distinguished)
    if lc.slope_p == 0 and lc.slope_q == 0:
        raise AllZeroAxis(f"no line family with distinguished variable {distinguished}")
    m = lc.slope_p * x + lc.slope_q * z
    k = lc.pq * x * z + lc.pp * x * x + lc.qq * z * z + lc.lin_p * x + lc.lin_q * z
    return PlanarLine.from_slope_intercept(m, k), (m, k)


def line_family_from_pairs(f: QuadPoly, pairs, distinguished: str = "y") -> LineFamily:
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    lc = line_coefficients(f, distinguished)
    if lc.slope_p == 0 and lc.slope_q == 0:
        raise AllZeroAxis(f"no line family with distinguished variable {distinguished}")
    x, z = pairs[:, 0], pairs[:, 1]
    m = lc.slope_p * x + lc.slope_q * z
    k = lc.pq * x * z + lc.pp * x * x + lc.qq * z * z + lc.lin_p * x + lc.lin_q * z
    return LineFamily.from_slopes(m, k, provenance=pairs)


# -- point sets -----------------------------------------------------------------


def phi_point_set(F, M, merge_tol: float = 1e-15, max_multiplicity: int | None = None) -> PointSet2D:
    """Points ``(F(x, y), y)`` for x, y in M; coincident points merge into one with a count.

    Two images merge when they share y and their first coordinates differ by
    at most ``merge_tol * max(1, |X|)``. With ``max_multiplicity`` set, a larger
    count raises ValueError.
    """
    M = np.asarray(M, dtype=float)
    Xg, Yg = np.meshgrid(M, M, indexing="ij")
    X = np.asarray(F(Xg, Yg), dtype=float) * np.ones_like(Xg)
    X, Y = X.ravel(), Yg.ravel()
    order = np.lexsort((X, Y))
    X, Y = X[order], Y[order]
    new_group = np.ones(X.size, dtype=bool)
    same_y = Y[1:] == Y[:-1]
    close_x = np.abs(X[1:] - X[:-1]) <= merge_tol * np.maximum(1.0, np.abs(X[1:]))
    new_group[1:] = ~(same_y & close_x)
    starts = np.flatnonzero(new_group)
    counts = np.diff(np.append(starts, X.size))
    if max_multiplicity is not None and counts.max() > max_multiplicity:
        raise ValueError(f"an image point has multiplicity {counts.max()} > {max_multiplicity}")
    return PointSet2D(np.column_stack([X[starts], Y[starts]]), counts)


@dataclass(frozen=True)
class Distortion:
    lower: float
    upper: float
    sampled: bool
    pairs: int


def bilipschitz_distortion(F, M, seed: int = 0, exact_limit: int = 10**8,
                           samples: int = 10**6) -> Distortion:
    """Smallest and largest ``|Phi(p) - Phi(q)| / |p - q|`` over pairs of M x M.

    All pairs are used when there are at most ``exact_limit``; otherwise
    ``samples`` uniformly random pairs are drawn and the result is flagged.
    """
    M = np.asarray(M, dtype=float)
    Xg, Yg = np.meshgrid(M, M, indexing="ij")
    P = np.column_stack([Xg.ravel(), Yg.ravel()])
    img = np.column_stack([np.asarray(F(P[:, 0], P[:, 1]), dtype=float) * np.ones(len(P)), P[:, 1]])
    n = len(P)
    total_pairs = n * (n - 1) // 2
    lo, hi = math.inf, 0.0

    def update(i, j):
        nonlocal lo, hi
        src = np.hypot(*(P[i] - P[j]).T)
        dst = np.hypot(*(img[i] - img[j]).T)
        ratio = dst / src
        lo, hi = min(lo, float(ratio.min())), max(hi, float(ratio.max()))

    if total_pairs <= exact_limit:
        for i in range(n - 1):
            j = np.arange(i + 1, n)
            update(np.full(j.size, i), j)
        return Distortion(lo, hi, False, total_pairs)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, samples)
    j = rng.integers(0, n - 1, samples)
    j = j + (j >= i)
    update(i, j)
    return Distortion(lo, hi, True, samples)


# -- incidence counting ---------------------------------------------------------


def count_incidences_brute(P: PointSet2D, L: LineFamily, delta: float) -> int:
    total = 0
    x, y = P.points[:, 0], P.points[:, 1]
    for start in range(0, len(L), 256):
        s = L.sin[start:start + 256, None]
        c = L.cos[start:start + 256, None]
        a = L.a[start:start + 256, None]
        hit = np.abs(-s * x[None, :] + c * y[None, :] - a) <= delta
        total += int(np.sum(hit * P.multiplicity[None, :] * L.multiplicity[start:start + 256, None]))
    return total


class _CellIndex:
    """Points sorted by cell key ``major * n_minor + minor`` for one axis order."""

    def __init__(self, major, minor, lo_major, lo_minor, n_minor):
        self.lo_major, self.lo_minor, self.n_minor = lo_major, lo_minor, n_minor
        keys = (major - lo_major) * n_minor + (minor - lo_minor)
        self.order = np.argsort(keys, kind="stable")
        self.keys = keys[self.order]

    def candidates(self, majors, minor_lo, minor_hi):
        base = (majors - self.lo_major) * self.n_minor - self.lo_minor
        start = np.searchsorted(self.keys, base + minor_lo, side="left")
        stop = np.searchsorted(self.keys, base + minor_hi, side="right")
        keep = stop > start
        start, stop = start[keep], stop[keep]
        if start.size == 0:
            return np.zeros(0, dtype=np.int64)
        lengths = stop - start
        offsets = np.repeat(start - np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
        return self.order[np.arange(lengths.sum()) + offsets]


def count_incidences(P: PointSet2D, L: LineFamily, delta: float, method: str = "grid") -> int:
    """Multiplicity-weighted number of pairs (p, l) with p within delta of l.

    ``method='grid'`` buckets points into square cells of side delta and, for
    each line, visits only the cells its delta-tube can reach, one column (or
    row, for steep lines) at a time. Candidates are tested with the same
    predicate as ``method='brute'``, so both give identical counts.
    """
    if method == "brute":
        return count_incidences_brute(P, L, delta)
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    if len(P) == 0 or len(L) == 0:
        return 0
    x, y = P.points[:, 0], P.points[:, 1]
    cx = np.floor(x / delta).astype(np.int64)
    cy = np.floor(y / delta).astype(np.int64)
    cx0, cx1, cy0, cy1 = cx.min(), cx.max(), cy.min(), cy.max()
    by_column = _CellIndex(cx, cy, cx0, cy0, cy1 - cy0 + 1)
    by_row = _CellIndex(cy, cx, cy0, cx0, cx1 - cx0 + 1)
    columns = np.arange(cx0, cx1 + 1)
    rows = np.arange(cy0, cy1 + 1)

    total = 0
    for li in range(len(L)):
        s, c, a = L.sin[li], L.cos[li], L.a[li]
        # on the tube: -s x + c y = a + r with |r| <= delta
        if abs(c) >= abs(s):
            index, majors, lo_m, hi_m = by_column, columns, cy0, cy1
            lead, other = c, -s  # c * y = a + s * x + r
        else:
            index, majors, lo_m, hi_m = by_row, rows, cx0, cx1
            lead, other = -s, c  # -s * x = a - c * y + r
        u0 = majors * delta
        u1 = (majors + 1) * delta
        v0 = (a - other * u0) / lead
        v1 = (a - other * u1) / lead
        spread = delta / abs(lead)
        vmin = np.minimum(v0, v1) - spread
        vmax = np.maximum(v0, v1) + spread
        m_lo = np.maximum(np.floor(vmin / delta).astype(np.int64) - 1, lo_m)
        m_hi = np.minimum(np.floor(vmax / delta).astype(np.int64) + 1, hi_m)
        keep = m_lo <= m_hi
        cand = index.candidates(majors[keep], m_lo[keep], m_hi[keep])
        if cand.size == 0:
            continue
        hit = np.abs(-s * x[cand] + c * y[cand] - a) <= delta
        total += int(L.multiplicity[li] * np.sum(P.multiplicity[cand][hit]))
    return total


def separate_lines(L: LineFamily, rho: float) -> list[LineFamily]:
    """Greedy first-fit split into classes whose members are pairwise at least rho apart.

    Lines are taken in input order, each copy of a repeated line separately,
    and go into the first class that accepts them.
    """
    expanded = np.repeat(np.arange(len(L)), L.multiplicity)
    classes: list[list[int]] = []
    for li in expanded:
        for members in classes:
            d = _metric_to_many(L.theta[li], L.a[li], L.theta[members], L.a[members])
            if np.all(d >= rho):
                members.append(li)
                break
        else:
            classes.append([li])
    out = []
    for members in classes:
        sub = L.subset(members)
        out.append(LineFamily(sub.theta, sub.a, np.ones(len(members), dtype=np.int64),
                              sub.provenance))
    return out


# -- the separation form on parameter pairs ----------------------------------------


@dataclass(frozen=True)
class OmegaSplit:
    omega_prime: np.ndarray
    omega_doubleprime: np.ndarray
    threshold: float
    budget: float | None
    slab_labels: np.ndarray
    slab_count: int

    @property
    def within_budget(self) -> bool | None:
        return None if self.budget is None else len(self.omega_prime) <= self.budget


def tube_split_omega(f: QuadPoly, M, gamma: float, delta: float, alpha: float | None = None,
                     distinguished: str = "y") -> OmegaSplit:
    """Split M x M by ``|J(x, z)| <= delta**gamma``.

    The pairs with larger ``|J|`` are labelled by the slab ``floor(J / delta**gamma)``
    they fall in; slabs are orthogonal to the gradient of J. When alpha is
    given, ``delta**(gamma alpha) |M|^2`` is reported as the budget for the
    small part.
    """
    J = linear_form_J(f, distinguished)
    M = np.asarray(M, dtype=float)
    X, Z = np.meshgrid(M, M, indexing="ij")
    pairs = np.column_stack([X.ravel(), Z.ravel()])
    vals = J(pairs[:, 0], pairs[:, 1])
    thr = delta**gamma
    small = np.abs(vals) <= thr
    labels = np.floor(vals[~small] / thr).astype(np.int64)
    budget = None if alpha is None else delta ** (gamma * alpha) * M.size**2
    return OmegaSplit(pairs[small], pairs[~small], thr, budget, labels,
                      int(np.unique(labels).size))


@dataclass(frozen=True)
class SeparationConstant:
    """Pieces of the constant in the line-separation bound for f on [0, 1]^2.

    M bounds the slope, k_max the intercept, C_f the derivative of k along
    ``e1 = (a, c)/|(a, c)|``. ``C_m`` and ``C_k`` convert slope and intercept
    gaps into the line metric.
    """

    u_norm: float
    slope_bound: float
    k_max: float
    C_f: float
    c0: float
    C_m: float
    C_k: float
    c_f: float


def separation_constant(f: QuadPoly) -> SeparationConstant:
    """Constant c_f with ``d(l, l') >= c_f delta**(1 + gamma)`` for delta-apart pairs.

    Where ``|J| >= delta**gamma``, moving a pair by delta either changes the
    slope by ``c0 |u| delta**(1+gamma)`` or the intercept by
    ``delta**(1+gamma) / (4|u|)``. On slopes ``|m| <= M`` the direction chord
    is at least ``|dm| / C_m`` with ``C_m = (pi/2)(1 + M^2)``. The feet
    ``a n`` of the two lines have first coordinate ``k / (1 + m^2)``, giving
    ``|dk| <= (1 + M^2)|d foot| + 2 M k_max |dm|``, hence ``C_k``. Lines whose
    orientation flips by pi are at least ``2 / sqrt(1 + M^2)`` apart.
    """
    lc = line_coefficients(f, "y")
    ua, uc = lc.slope_p, lc.slope_q
    u_norm = math.hypot(ua, uc)
    if u_norm == 0:
        raise AllZeroAxis("slope coefficients vanish")
    M = abs(ua) + abs(uc)
    k_max = abs(lc.pq) + abs(lc.pp) + abs(lc.qq) + abs(lc.lin_p) + abs(lc.lin_q)
    # d_{e1} k is affine in (x, z), so its sup over the unit square sits at a corner
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    kx = lc.pq * corners[:, 1] + 2 * lc.pp * corners[:, 0] + lc.lin_p
    kz = lc.pq * corners[:, 0] + 2 * lc.qq * corners[:, 1] + lc.lin_q
    C_f = float(np.max(np.abs(ua * kx + uc * kz)) / u_norm)
    c0 = 0.5 if C_f == 0 else min(0.5, 1.0 / (4 * C_f * u_norm))
    C_m = (math.pi / 2) * (1 + M * M)
    C_k = max(1 + M * M, 2 * M * k_max * C_m)
    c_f = min(c0 * u_norm / C_m, 1.0 / (4 * u_norm * C_k), 2.0 / math.sqrt(1 + M * M))
    return SeparationConstant(u_norm, M, k_max, C_f, c0, C_m, C_k, c_f)


# -- additive energy counts ------------------------------------------------------------


def sum_energy_count(A, B, C, delta: float, pair_budget: int = 10**7) -> int:
    """Sum over c in C of the ordered pairs of ``a + c b`` values within delta.

    For each c the ``|A||B|`` values are sorted and every value counts the
    later values v' with ``v' - v <= delta``. The count is the diagonal
    ``|A||B|`` plus twice the off-diagonal pairs.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.size * B.size
    if n > pair_budget:
        raise BudgetExceeded(f"|A||B| = {n} exceeds {pair_budget}")
    total = 0
    idx = np.arange(n)
    for c in np.asarray(C, dtype=float):
        v = np.sort((A[:, None] + c * B[None, :]).ravel())
        hi = np.searchsorted(v, v + delta, side="right")
        # settle rounding in v + delta against the predicate v[j] - v[i] <= delta
        while True:
            grow = hi < n
            grow[grow] = v[hi[grow]] - v[grow] <= delta
            if not grow.any():
                break
            hi[grow] += 1
        while True:
            shrink = hi - 1 > idx
            shrink[shrink] = v[hi[shrink] - 1] - v[shrink] > delta
            if not shrink.any():
                break
            hi[shrink] -= 1
        total += n + 2 * int(np.sum(hi - idx - 1))
    return total


# -- collinearity chain ---------------------------------------------------------------------


@dataclass(frozen=True)
class CollinearityResult:
    passed: bool
    premises: bool
    error: float
    bound: float


def collinearity_witness(u, v, z0, y0, z1, y1, m, k, delta, eps_over_alpha) -> CollinearityResult:
    """Check that three delta-incidences with ``X = m Y + k`` force near-collinearity.

    Premises: ``|u - (m v + k)|``, ``|z0 - (m y0 + k)|``, ``|z1 - (m y1 + k)|``
    are all at most delta. With ``lam = (v - y0)/(y1 - y0)`` the combination
    ``(1 - lam) z0 + lam z1 - u`` is a signed sum of the three residuals, so
    its size is at most ``(2 + 2|v - y0|/(y1 - y0)) delta``, which is at most
    ``(2 + 2|v - y0|) delta**(1 - 3 eps/alpha)`` once ``y1 - y0 >= delta**(3 eps/alpha)``.

    Raises:
        FiberTooClose: ``y1 - y0 < delta**(3 eps/alpha)``.
    """
    gap_floor = delta ** (3 * eps_over_alpha)
    if y1 - y0 < gap_floor:
        raise FiberTooClose(f"y1 - y0 = {y1 - y0:.3g} < delta^(3 eps/alpha) = {gap_floor:.3g}")
    premises = max(abs(u - (m * v + k)), abs(z0 - (m * y0 + k)), abs(z1 - (m * y1 + k))) <= delta
    lam = (v - y0) / (y1 - y0)
    error = abs((1 - lam) * z0 + lam * z1 - u)
    bound = (2 + 2 * abs(v - y0)) * delta ** (1 - 3 * eps_over_alpha)
    return CollinearityResult(error <= bound, premises, error, bound)
