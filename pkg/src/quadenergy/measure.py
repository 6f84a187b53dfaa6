"""Discrete probability measures on a dyadic grid and their regularity checks.

Atoms live on the grid ``origin + index * delta`` with ``delta`` a power of
two. An atom stands for the half-open cell ``[x, x + delta)`` starting at its
position, so a weight is the mass of that cell.

Window scans anchor at atoms and use dyadic lengths only. Any interval of
length at least ``delta`` sits inside an anchored dyadic window of less than
twice its length, so each reported constant is within a factor ``2**alpha``
of the supremum over all intervals.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from quadenergy.errors import DepthTooLarge, PreconditionFail, UnassignedAtom

MAX_CANTOR_DEPTH_ATOMS = 2**24
MASS_TOL = 1e-12


def is_power_of_two(x: float) -> bool:
    return x > 0 and math.frexp(x)[0] == 0.5


@dataclass(frozen=True)
class DiscreteMeasure:
    delta: float
    origin: float
    indices: np.ndarray
    weights: np.ndarray
    alpha_hint: float | None = None

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        w = np.ascontiguousarray(self.weights, dtype=float)
        if not is_power_of_two(self.delta):
            raise ValueError(f"delta must be a power of two, got {self.delta!r}")
        if idx.ndim != 1 or idx.shape != w.shape or idx.size == 0:
            raise ValueError("indices and weights must be equal-length nonempty 1-d arrays")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("grid indices must be strictly increasing")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        idx.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "origin", float(self.origin))

    @property
    def size(self) -> int:
        return int(self.indices.size)

    @property
    def positions(self) -> np.ndarray:
        return self.origin + self.indices * self.delta

    @property
    def diameter(self) -> float:
        return float((self.indices[-1] - self.indices[0]) * self.delta)

    @classmethod
    def from_positions(cls, positions, weights, delta, origin=0.0, alpha_hint=None,
                       normalize=False) -> "DiscreteMeasure":
        """Snap each position to the cell containing it and merge shared cells."""
        pos = np.asarray(positions, dtype=float)
        w = np.asarray(weights, dtype=float)
        idx = np.floor((pos - origin) / delta).astype(np.int64)
        return cls.from_indices(idx, w, delta, origin, alpha_hint, normalize)

    @classmethod
    def from_indices(cls, indices, weights, delta, origin=0.0, alpha_hint=None,
                     normalize=False) -> "DiscreteMeasure":
        idx = np.asarray(indices, dtype=np.int64)
        w = np.asarray(weights, dtype=float)
        uniq, inverse = np.unique(idx, return_inverse=True)
        merged = np.zeros(uniq.size)
        np.add.at(merged, inverse, w)
        if normalize:
            merged = merged / merged.sum()
        return cls(delta, origin, uniq, merged, alpha_hint)

    def regrid(self, delta: float) -> "DiscreteMeasure":
        """Coarsen to a larger dyadic pitch, summing the weights of merged cells."""
        ratio = delta / self.delta
        if not is_power_of_two(ratio) or ratio < 1:
            raise ValueError(f"can only coarsen by a power of two, got ratio {ratio}")
        step = int(ratio)
        return DiscreteMeasure.from_indices(
            self.indices // step, self.weights, delta, self.origin, self.alpha_hint
        )

    def header(self) -> dict:
        return {"delta": self.delta, "origin": self.origin, "alpha_hint": self.alpha_hint}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.header()) + "\n")
        buf.write("index,weight\n")
        for k, w in zip(self.indices.tolist(), self.weights.tolist()):
            buf.write(f"{k},{w!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ValueError("measure CSV must start with a '# {json header}' line")
        header = json.loads(lines[0][1:])
        if lines[1].strip() != "index,weight":
            raise ValueError("expected 'index,weight' column header")
        rows = [ln.split(",") for ln in lines[2:] if ln.strip()]
        idx = np.array([int(r[0]) for r in rows], dtype=np.int64)
        w = np.array([float(r[1]) for r in rows])
        return cls(header["delta"], header["origin"], idx, w, header.get("alpha_hint"))


def point_mass(x: float = 0.0, delta: float = 1.0) -> DiscreteMeasure:
    return DiscreteMeasure.from_positions([x], [1.0], delta, origin=0.0)


def uniform_grid(delta: float, length: float = 1.0) -> DiscreteMeasure:
    n = int(round(length / delta))
    return DiscreteMeasure(delta, 0.0, np.arange(n), np.full(n, 1.0 / n), alpha_hint=1.0)


# -- self-similar Cantor measures ---------------------------------------------


def _integer_reciprocal(alpha: float) -> int | None:
    m = 1.0 / alpha
    return int(round(m)) if abs(m - round(m)) < 1e-12 else None


def cantor_pitch(alpha: float, depth: int) -> float:
    """Largest power of two not exceeding ``r**depth`` with ``r = 2**(-1/alpha)``."""
    m = _integer_reciprocal(alpha)
    if m is not None:
        return 2.0 ** (-m * depth)
    exponent = math.ceil(depth / alpha - 1e-12)
    return 2.0 ** (-exponent)


def build_cantor(alpha: float, depth: int) -> DiscreteMeasure:
    """Two-branch self-similar Cantor measure at generation ``depth``.

    Contraction ratio ``r = 2**(-1/alpha)``; each generation keeps the left and
    right subintervals of length ``r`` times the parent. Atoms sit at the left
    endpoints of the ``2**depth`` generation intervals with equal weights.
    When ``1/alpha`` is an integer the grid pitch is exactly ``r**depth``;
    otherwise it is the largest power of two below it and endpoints are floored
    onto that grid.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if 2**depth > MAX_CANTOR_DEPTH_ATOMS:
        raise DepthTooLarge(f"2**{depth} atoms exceeds the 2**24 cap")
    if depth / alpha > 62:
        raise DepthTooLarge(f"grid pitch 2**-{depth / alpha:.1f} overflows int64 indices")

    pitch = cantor_pitch(alpha, depth)
    m = _integer_reciprocal(alpha)
    idx = np.zeros(1, dtype=np.int64)
    if m is not None:
        # integer arithmetic: the offset at generation k is (2**m - 1) * 2**(m*(depth-1-k))
        for k in range(depth - 1, -1, -1):
            idx = np.concatenate([idx, idx + (2**m - 1) * 2 ** (m * (depth - 1 - k))])
        return DiscreteMeasure(pitch, 0.0, idx, np.full(idx.size, 2.0**-depth), alpha)

    r = 2.0 ** (-1.0 / alpha)
    pos = np.zeros(1)
    for k in range(depth - 1, -1, -1):
        pos = np.concatenate([pos, pos + (1 - r) * r**k])
    return DiscreteMeasure.from_positions(pos, np.full(pos.size, 2.0**-depth), pitch,
                                          alpha_hint=alpha)


def cantor_at_scale(alpha: float, delta: float) -> DiscreteMeasure:
    """Cantor measure with weights equal to the limit measure of each delta-cell.

    Builds the first generation whose pitch is at most ``delta`` and sums the
    generation intervals inside each cell. Exact when ``1/alpha`` is an integer.
    """
    if not is_power_of_two(delta) or delta > 1:
        raise ValueError(f"delta must be a power of two at most 1, got {delta}")
    depth = 0
    while cantor_pitch(alpha, depth) > delta:
        depth += 1
    return build_cantor(alpha, depth).regrid(delta)


# -- window scans ----------------------------------------------------------------


def _dyadic_lengths(delta: float, span: float) -> list[int]:
    """Multipliers 2**j with delta*2**j running from delta up to the first value >= span."""
    out = [1]
    while out[-1] * delta < span:
        out.append(out[-1] * 2)
    return out


@dataclass(frozen=True)
class WindowWitness:
    anchor: float
    radius: float
    mass: float
    ratio: float


def frostman_scan(mu: DiscreteMeasure, alpha: float) -> WindowWitness:
    """Worst closed window ``[x - r, x + r]`` for ``mu(window) / (2r)**alpha``."""
    idx = mu.indices
    cw = np.concatenate([[0.0], np.cumsum(mu.weights)])
    best = WindowWitness(float(mu.positions[0]), mu.delta, 0.0, -1.0)
    for R in _dyadic_lengths(mu.delta, max(mu.diameter, mu.delta)):
        lo = np.searchsorted(idx, idx - R, side="left")
        hi = np.searchsorted(idx, idx + R, side="right")
        mass = cw[hi] - cw[lo]
        ratio = mass / (2 * R * mu.delta) ** alpha
        k = int(np.argmax(ratio))
        if ratio[k] > best.ratio:
            best = WindowWitness(float(mu.positions[k]), R * mu.delta, float(mass[k]),
                                 float(ratio[k]))
    return best


def frostman_constant(mu: DiscreteMeasure, alpha: float) -> float:
    """Largest ``mu([x - r, x + r]) / (2r)**alpha`` over atoms x and dyadic r.

    Radii run over ``delta * 2**j`` up to the support diameter. The value
    under-estimates the supremum over all balls by at most a factor two in
    the radius.
    """
    return frostman_scan(mu, alpha).ratio


def ad_regular_check(mu: DiscreteMeasure, alpha: float) -> tuple[float, float]:
    """Worst lower and upper regularity constants on half-open windows.

    For each atom x and dyadic ``delta <= r <= diam`` the window is
    ``[x - r, x + r)``, matching the half-open cell convention, and the
    returned pair is ``(max r**alpha / mu(B), max mu(B) / r**alpha)``.
    """
    idx = mu.indices
    w = mu.weights
    keep = w > 0
    cw = np.concatenate([[0.0], np.cumsum(w)])
    anchors = idx[keep]
    lower = upper = 0.0
    for R in _dyadic_lengths(mu.delta, mu.diameter):
        lo = np.searchsorted(idx, anchors - R, side="left")
        hi = np.searchsorted(idx, anchors + R, side="left")
        mass = cw[hi] - cw[lo]
        scale = (R * mu.delta) ** alpha
        upper = max(upper, float(np.max(mass) / scale))
        lower = max(lower, float(scale / np.min(mass)))
    return lower, upper


@dataclass(frozen=True)
class NonconcentrationResult:
    passed: bool
    worst_ratio: float
    witness: tuple[float, float, int] | None = None  # (start, length, count) of worst window

    def __bool__(self):
        return self.passed


def nonconcentration_check(M, delta: float, alpha: float, K: float) -> NonconcentrationResult:
    """Test ``|M cap J| <= K |J|**alpha delta**(-alpha)`` on anchored dyadic windows.

    Windows are ``[x, x + l)`` for x in M and ``l = delta * 2**j`` up to the
    first length covering M. ``worst_ratio`` is the largest count divided by
    ``|J|**alpha delta**(-alpha)``; the check passes when it is at most K.
    The true supremum over all intervals is at most ``2**alpha`` times larger.
    """
    pts = np.sort(np.asarray(M, dtype=float))
    if pts.size == 0:
        return NonconcentrationResult(True, 0.0)
    span = float(pts[-1] - pts[0]) + delta
    start = np.arange(pts.size)
    worst, witness = -1.0, None
    for mult in _dyadic_lengths(delta, span):
        length = mult * delta
        count = np.searchsorted(pts, pts + length, side="left") - start
        ratio = count / mult**alpha
        k = int(np.argmax(ratio))
        if ratio[k] > worst:
            worst, witness = float(ratio[k]), (float(pts[k]), length, int(count[k]))
    return NonconcentrationResult(worst <= K, worst, witness)


def exhaustive_concentration(M, delta: float, alpha: float) -> float:
    """Exact sup over all intervals J with |J| >= delta of ``|M cap J| / (|J|/delta)**alpha``.

    The extremal intervals have both ends at points of M, so all pairs are
    enumerated; quadratic in |M|.
    """
    pts = np.sort(np.asarray(M, dtype=float))
    if pts.size == 0:
        return 0.0
    worst = 0.0
    for i in range(pts.size):
        span = np.maximum(pts[i:] - pts[i], delta)
        counts = np.arange(1, pts.size - i + 1)
        worst = max(worst, float(np.max(counts / (span / delta) ** alpha)))
    return worst


# -- dyadic levels and separated partitions ----------------------------------------


@dataclass(frozen=True)
class LevelDecomposition:
    levels: dict[int, np.ndarray]
    c_mu: float
    alpha: float
    delta: float

    def level_mass(self, mu: DiscreteMeasure) -> dict[int, float]:
        pos = {int(k): w for k, w in zip(mu.indices, mu.weights)}
        return {k: float(sum(pos[int(i)] for i in v)) for k, v in self.levels.items()}


def dyadic_levels(mu: DiscreteMeasure, alpha: float, c_mu: float) -> LevelDecomposition:
    """Group atoms by weight: level k holds ``2**-(k+1) d**a < w <= c_mu 2**-k d**a``.

    Levels start at k = 0; an atom heavier than ``c_mu * delta**alpha`` has no
    level and raises :class:`UnassignedAtom`.
    """
    scale = mu.delta**alpha
    out: dict[int, list[int]] = {}
    for gi, w in zip(mu.indices.tolist(), mu.weights.tolist()):
        if w <= 0:
            continue
        k = max(0, math.floor(-math.log2(w / scale)))
        # guard against rounding in the logarithm
        while k > 0 and not (w <= c_mu * 2.0**-k * scale):
            k -= 1
        while not (2.0 ** -(k + 1) * scale < w):
            k += 1
        if not (w <= c_mu * 2.0**-k * scale):
            raise UnassignedAtom(
                f"atom {gi} has weight {w:.3g} > c_mu * delta**alpha = {c_mu * scale:.3g}"
            )
        out.setdefault(k, []).append(gi)
    levels = {k: np.array(v, dtype=np.int64) for k, v in sorted(out.items())}
    return LevelDecomposition(levels, c_mu, alpha, mu.delta)


@dataclass(frozen=True)
class SeparatedClassPartition:
    classes: list[np.ndarray]
    L: int
    K: float
    precondition: NonconcentrationResult = field(repr=False, default=None)


def partition_nonconcentrated(M, delta: float, alpha: float, K: float) -> SeparatedClassPartition:
    """Split sorted M into ``L = ceil(2K) + 1`` classes by index residue mod L.

    Every class then meets ``|class cap J| <= 3 |J|**alpha delta**(-alpha)``
    for all intervals J with ``|J| >= delta``.

    Raises:
        PreconditionFail: M violates the K-bound on an anchored window; the
            window is attached as ``.witness``.
    """
    pts = np.sort(np.asarray(M, dtype=float))
    check = nonconcentration_check(pts, delta, alpha, K)
    if not check.passed:
        raise PreconditionFail(
            f"|M cap J| exceeds K |J|^alpha delta^-alpha (ratio {check.worst_ratio:.3g} > {K})",
            witness=check.witness,
        )
    L = math.ceil(2 * K) + 1
    classes = [pts[r::L] for r in range(L)]
    return SeparatedClassPartition(classes, L, K, check)
