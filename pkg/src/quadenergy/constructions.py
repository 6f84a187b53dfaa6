"""Measures whose pushforward energies are provably large, and ladder probes of them.

Three families:

* ``FrostmanNecessity``: a point-heavy mixture ``p_S mu_S + p_A mu_A`` with
  ``mu_S`` uniform on ``[0, c delta]`` and ``mu_A`` uniform on delta-fattened
  points ``n delta^(1/2)``; for ``f = x + (y + z)^2`` its energy grows like
  ``delta^(alpha - 1)``.
* ``UnboundedSupport``: a 1/2-Frostman measure on fattened points in [0, 1]
  and at ``+-1/(n delta)``; for ``f = x + yz`` its energy grows like
  ``delta^(-1/2)``.
* ``DivergentEnergy``: an alpha-regular Cantor measure with ``alpha < 1/2``;
  for ``f = x + (y - z)^2`` its energy grows like ``delta^(2 alpha - 1)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from quadenergy.energy import SmoothingKernel, default_kernel
from quadenergy.errors import DeltaTooLarge
from quadenergy.measure import DiscreteMeasure, cantor_at_scale, is_power_of_two
from quadenergy.quadpoly import PRESETS, QuadPoly


class ConstructionKind(str, enum.Enum):
    FROSTMAN_NECESSITY = "FrostmanNecessity"
    UNBOUNDED_SUPPORT = "UnboundedSupport"
    DIVERGENT_ENERGY = "DivergentEnergy"


DEFAULT_POLY = {
    ConstructionKind.FROSTMAN_NECESSITY: PRESETS["x+(y+z)^2"],
    ConstructionKind.UNBOUNDED_SUPPORT: PRESETS["x+yz"],
    ConstructionKind.DIVERGENT_ENERGY: PRESETS["x+(y-z)^2"],
}

C1 = 1.0 / 32


def claimed_exponent(kind: ConstructionKind, alpha: float) -> float:
    kind = ConstructionKind(kind)
    if kind is ConstructionKind.FROSTMAN_NECESSITY:
        return alpha - 1
    if kind is ConstructionKind.UNBOUNDED_SUPPORT:
        return -0.5
    return 2 * alpha - 1


def default_c(kernel: SmoothingKernel | None = None) -> float:
    """Width factor of the heavy interval: ``min(eta / 16, 1/8)``."""
    kernel = default_kernel() if kernel is None else kernel
    return min(kernel.eta / 16, 1.0 / 8)


@dataclass(frozen=True)
class ConstructionSpec:
    kind: ConstructionKind
    alpha: float
    delta: float
    c: float | None = None
    p_S: float | None = None
    p_A: float | None = None
    c1: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstructionKind(self.kind))
        if self.p_S is not None and self.p_A is not None and abs(self.p_S + self.p_A - 1) > 1e-12:
            raise ValueError("p_S + p_A must equal 1")
        if self.c is not None and not 0 < self.c < 0.25:
            raise ValueError("c must lie in (0, 1/4)")


@dataclass(frozen=True)
class Admissibility:
    lhs: float
    rhs: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs


def small_error_bound(alpha: float, delta: float, eta: float, c1: float = C1) -> Admissibility:
    """``8 c1 delta^(3/2 - alpha) + 4 delta^2 <= (eta/16) delta``, the smallness needed for the mixture."""
    return Admissibility(8 * c1 * delta ** (1.5 - alpha) + 4 * delta**2, eta / 16 * delta)


def _interval_cell_masses(left: np.ndarray, right: np.ndarray, delta: float):
    """Lengths of ``[left_i, right_i]`` falling in each delta-cell, as (cell, length) arrays."""
    cells, lengths = [], []
    for lo, hi in zip(left.tolist(), right.tolist()):
        k0, k1 = math.floor(lo / delta), math.floor(hi / delta)
        for k in range(k0, k1 + 1):
            piece = min(hi, (k + 1) * delta) - max(lo, k * delta)
            if piece > 0:
                cells.append(k)
                lengths.append(piece)
    return np.array(cells, dtype=np.int64), np.array(lengths)


def build_frostman_necessity(alpha: float, delta: float, c: float | None = None,
                             p_S: float = 0.5, p_A: float = 0.5, c1: float = C1,
                             kernel: SmoothingKernel | None = None,
                             strict: bool = True, pitch: float | None = None) -> DiscreteMeasure:
    """Mixture of a heavy interval ``[0, c delta]`` and fattened points ``n delta^(1/2)``.

    The points are ``n delta^(1/2)`` for integers ``0 <= n <= delta^(-alpha)``,
    each fattened to ``[u - delta/2, u + delta/2]`` and clipped to [0, 1]. Each
    cell of side ``pitch`` (default delta) receives its exact mass under the
    mixture.

    Raises:
        DeltaTooLarge: ``strict`` and the smallness inequality fails at delta.
    """
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    kernel = default_kernel() if kernel is None else kernel
    c = default_c(kernel) if c is None else c
    ConstructionSpec(ConstructionKind.FROSTMAN_NECESSITY, alpha, delta, c, p_S, p_A, c1)
    adm = small_error_bound(alpha, delta, kernel.eta, c1)
    if strict and not adm.ok:
        raise DeltaTooLarge(
            f"8 c1 delta^(3/2-alpha) + 4 delta^2 = {adm.lhs:.4g} > (eta/16) delta = {adm.rhs:.4g}"
        )
    pitch = delta if pitch is None else pitch
    n = np.arange(math.floor(delta**-alpha * (1 + 1e-12)) + 1)
    u = n * math.sqrt(delta)
    left = np.clip(u - delta / 2, 0.0, 1.0)
    right = np.clip(u + delta / 2, 0.0, 1.0)
    cells, lengths = _interval_cell_masses(left, right, pitch)
    weights = p_A * lengths / lengths.sum()
    if p_S > 0:
        s_cells, s_lengths = _interval_cell_masses(np.array([0.0]), np.array([c * delta]), pitch)
        cells = np.concatenate([cells, s_cells])
        weights = np.concatenate([weights, p_S * s_lengths / s_lengths.sum()])
    return DiscreteMeasure.from_indices(cells, weights, pitch, 0.0, alpha_hint=alpha,
                                        normalize=True)


def _even_dyadic_exponent(delta: float) -> int:
    if not is_power_of_two(delta) or delta >= 1:
        raise ValueError(f"delta must be 2^(-2k), got {delta}")
    k = -int(round(math.log2(delta)))
    if k % 2:
        raise ValueError(f"delta must be an even power of 1/2, got 2^-{k}")
    return k


def unbounded_support_points(delta: float) -> np.ndarray:
    """Centres ``U = {0, delta^(1/2), ..., 1}`` and ``+-V`` with ``V = {1/(n delta)}``."""
    k = _even_dyadic_exponent(delta)
    root = 2.0 ** (-k // 2)
    steps = 2 ** (k // 2)
    U = np.arange(steps + 1) * root
    V = 1.0 / (np.arange(1, steps + 1) * delta)
    return np.unique(np.concatenate([U, V, -V]))


def build_unbounded_support(delta: float, pitch: float | None = None) -> DiscreteMeasure:
    """Uniform measure on the delta-fattened centres U and +-V.

    The fattened intervals are disjoint and of equal length; each cell of
    side ``pitch`` (default delta) gets its exact share of their union.
    """
    pitch = delta if pitch is None else pitch
    pts = unbounded_support_points(delta)
    cells, lengths = _interval_cell_masses(pts - delta / 2, pts + delta / 2, pitch)
    return DiscreteMeasure.from_indices(cells, lengths, pitch, 0.0, alpha_hint=0.5,
                                        normalize=True)


def build_divergent_energy(alpha: float, delta: float, pitch: float | None = None) -> DiscreteMeasure:
    """Cantor measure of dimension alpha with exact masses on cells of side pitch (default delta)."""
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    return cantor_at_scale(alpha, delta if pitch is None else pitch)


@dataclass(frozen=True)
class IntervalFamily:
    left: np.ndarray
    length: float
    mass: np.ndarray


def divergent_interval_family(alpha: float, delta: float) -> IntervalFamily:
    """One interval of length delta/2 per occupied delta-cell, with its Cantor mass.

    Each cell contributes whichever half carries more mass, so every interval
    holds at least half its cell's mass. Masses are read off the Cantor
    measure at scale ``delta/2``, which is exact for dyadic contraction ratios.
    """
    coarse = cantor_at_scale(alpha, delta)
    fine = cantor_at_scale(alpha, delta / 2)
    fine_mass = dict(zip(fine.indices.tolist(), fine.weights.tolist()))
    left, mass = [], []
    for cell, pos in zip(coarse.indices.tolist(), coarse.positions.tolist()):
        halves = [fine_mass.get(2 * cell, 0.0), fine_mass.get(2 * cell + 1, 0.0)]
        h = int(halves[1] > halves[0])
        left.append(pos + h * delta / 2)
        mass.append(halves[h])
    return IntervalFamily(np.array(left), delta / 2, np.array(mass))


def build(spec: ConstructionSpec, strict: bool = True, pitch: float | None = None) -> DiscreteMeasure:
    kind = spec.kind
    if kind is ConstructionKind.FROSTMAN_NECESSITY:
        return build_frostman_necessity(
            spec.alpha, spec.delta, spec.c,
            0.5 if spec.p_S is None else spec.p_S,
            0.5 if spec.p_A is None else spec.p_A,
            C1 if spec.c1 is None else spec.c1,
            strict=strict, pitch=pitch,
        )
    if kind is ConstructionKind.UNBOUNDED_SUPPORT:
        return build_unbounded_support(spec.delta, pitch)
    return build_divergent_energy(spec.alpha, spec.delta, pitch)


def verify_lower_bound(kind, delta_ladder, f: QuadPoly | None = None,
                       kernel: SmoothingKernel | None = None, alpha: float = 0.25,
                       kappa: float = 0.05, strict: bool = False, workers: int = 1,
                       record_runtime: bool = False, refine: int | None = None):
    """Build the construction along the ladder and fit its energy exponent.

    The report carries per-delta ratios ``energy / delta^claimed``; its verdict
    passes when the fitted slope is at most ``claimed + tol_fit``. With
    ``strict=False`` the mixture is built even where its smallness condition
    fails, and that is recorded per row. ``refine`` sets the measure pitch to
    ``delta / refine``; it defaults to 16, except 1 for the unbounded-support
    measure whose atom count would otherwise exceed the triple budget.
    """
    from quadenergy.harness import ScanConfig, run_scan

    kind = ConstructionKind(kind)
    if kind is ConstructionKind.UNBOUNDED_SUPPORT:
        alpha = 0.5
    if refine is None:
        refine = 1 if kind is ConstructionKind.UNBOUNDED_SUPPORT else 16
    cfg = ScanConfig(
        poly=DEFAULT_POLY[kind] if f is None else f,
        measure={"construction": kind.value, "alpha": alpha, "strict": strict},
        ladder=tuple(float(d) for d in delta_ladder),
        kappa=kappa,
        workers=workers,
        record_runtime=record_runtime,
        refine=refine,
    )
    return run_scan(cfg, kernel=kernel)
