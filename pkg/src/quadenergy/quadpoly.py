"""Quadratic polynomials in three variables.

A polynomial is stored by its nine coefficients in the fixed order

    f(x, y, z) = a*xy + b*xz + c*yz + d*x^2 + e*y^2 + g*z^2 + h*x + i*y + j*z

and carries the derived Hessian ``H`` and linear vector ``(h, i, j)`` so that
``f(u) = u.H.u / 2 + (h, i, j).u``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from quadenergy.errors import AllZeroAxis, DegenerateForm, RankDeficient, StructuralMismatch

COEFFICIENT_NAMES = ("a", "b", "c", "d", "e", "g", "h", "i", "j")
VARIABLES = ("x", "y", "z")


@dataclass(frozen=True)
class QuadPoly:
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    e: float = 0.0
    g: float = 0.0
    h: float = 0.0
    i: float = 0.0
    j: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not math.isfinite(value):
                raise ValueError(f"coefficient {f.name} is not finite: {value}")
            object.__setattr__(self, f.name, value)

    @property
    def coefficients(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in COEFFICIENT_NAMES)

    @property
    def hessian(self) -> np.ndarray:
        return np.array(
            [
                [2 * self.d, self.a, self.b],
                [self.a, 2 * self.e, self.c],
                [self.b, self.c, 2 * self.g],
            ]
        )

    @property
    def linear(self) -> np.ndarray:
        return np.array([self.h, self.i, self.j])

    @classmethod
    def from_hessian(cls, H, linear) -> "QuadPoly":
        H = np.asarray(H, dtype=float)
        h, i, j = (float(v) for v in linear)
        return cls(
            a=H[0, 1], b=H[0, 2], c=H[1, 2],
            d=H[0, 0] / 2, e=H[1, 1] / 2, g=H[2, 2] / 2,
            h=h, i=i, j=j,
        )

    def to_dict(self) -> dict:
        return dict(zip(COEFFICIENT_NAMES, self.coefficients))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "QuadPoly":
        unknown = set(data) - set(COEFFICIENT_NAMES)
        if unknown:
            raise ValueError(f"unknown coefficient names: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def __call__(self, x, y, z):
        return evaluate(self, (x, y, z))

    def __str__(self) -> str:
        monomials = ("xy", "xz", "yz", "x^2", "y^2", "z^2", "x", "y", "z")
        terms = []
        for coef, mono in zip(self.coefficients, monomials):
            if coef == 0:
                continue
            if coef == 1:
                terms.append(mono)
            elif coef == -1:
                terms.append("-" + mono)
            else:
                terms.append(f"{coef:g}*{mono}")
        return " + ".join(terms).replace("+ -", "- ") or "0"


PRESETS = {
    "x+yz": QuadPoly(c=1, h=1),
    "x+(y+z)^2": QuadPoly(c=2, e=1, g=1, h=1),
    "x+(y-z)^2": QuadPoly(c=-2, e=1, g=1, h=1),
    "sum-of-squares": QuadPoly(d=1, e=1, g=1),
}


def parse_poly(text: str) -> QuadPoly:
    """Resolve a preset name or a JSON object with keys a..j."""
    key = text.strip()
    if key in PRESETS:
        return PRESETS[key]
    try:
        data = json.loads(key)
    except json.JSONDecodeError as exc:
        raise ValueError(
            f"--poly must be JSON or one of {sorted(PRESETS)}; got {text!r}"
        ) from exc
    return QuadPoly.from_dict(data)


def evaluate(f: QuadPoly, u):
    """Value of ``f`` at ``u = (x, y, z)``; components may be numpy arrays."""
    x, y, z = u
    return (
        f.a * x * y + f.b * x * z + f.c * y * z
        + f.d * x * x + f.e * y * y + f.g * z * z
        + f.h * x + f.i * y + f.j * z
    )


def gradient(f: QuadPoly, u):
    """Gradient ``H u + (h, i, j)``, written out per component so arrays broadcast."""
    x, y, z = u
    gx = 2 * f.d * x + f.a * y + f.b * z + f.h
    gy = f.a * x + 2 * f.e * y + f.c * z + f.i
    gz = f.b * x + f.c * y + 2 * f.g * z + f.j
    return gx, gy, gz


def permute(f: QuadPoly, perm) -> QuadPoly:
    """Relabel variables: new variable ``k`` is old variable ``perm[k]``."""
    P = np.eye(3)[list(perm)]
    return QuadPoly.from_hessian(P @ f.hessian @ P.T, P @ f.linear)


# -- critical set -------------------------------------------------------------


class CriticalKind(str, enum.Enum):
    EMPTY = "Empty"
    POINT = "Point"
    LINE = "Line"


@dataclass(frozen=True)
class CriticalSet:
    kind: CriticalKind
    point: np.ndarray | None = None
    direction: np.ndarray | None = None
    rank: int = 0


def hessian_rank(f: QuadPoly, rel_tol: float = 1e-9) -> int:
    sigma = np.linalg.svd(f.hessian, compute_uv=False)
    if sigma[0] == 0:
        return 0
    return int(np.sum(sigma > rel_tol * sigma[0]))


def critical_set(f: QuadPoly, tol_lin: float | None = None) -> CriticalSet:
    """Zero set of the gradient: empty, a point (rank 3) or a line (rank 2).

    The system is declared inconsistent when the least-squares residual
    ``|Hp + b|`` exceeds ``tol_lin`` (default ``1e-9 * (1 + |b|)``).

    Raises:
        RankDeficient: rank(H) <= 1 and the gradient does vanish somewhere, so
            the zero set is a plane or all of space.
    """
    H = f.hessian
    b = f.linear
    if tol_lin is None:
        tol_lin = 1e-9 * (1.0 + float(np.linalg.norm(b)))
    rank = hessian_rank(f)
    if rank == 3:
        p = np.linalg.solve(H, -b)
        return CriticalSet(CriticalKind.POINT, point=p, rank=3)

    p, *_ = np.linalg.lstsq(H, -b, rcond=None)
    if np.linalg.norm(H @ p + b) > tol_lin:
        return CriticalSet(CriticalKind.EMPTY, rank=rank)
    if rank <= 1:
        raise RankDeficient(
            f"rank(H) = {rank}: gradient vanishes on a set of dimension {3 - rank} for {f}"
        )
    _, _, vt = np.linalg.svd(H)
    direction = vt[-1]
    pivot = np.flatnonzero(np.abs(direction) > 1e-12)[0]
    if direction[pivot] < 0:
        direction = -direction
    return CriticalSet(CriticalKind.LINE, point=p, direction=direction, rank=2)


# -- Jacobian polynomials and classification -----------------------------------


class AffinePoly(NamedTuple):
    """``const + x*X + y*Y + z*Z``."""

    const: float
    x: float
    y: float
    z: float

    def is_zero(self) -> bool:
        return self.const == 0 and self.x == 0 and self.y == 0 and self.z == 0

    def __call__(self, x, y, z):
        return self.const + self.x * x + self.y * y + self.z * z

    def scaled(self, s: float) -> "AffinePoly":
        return AffinePoly(*(s * v for v in self))

    def __sub__(self, other):
        return AffinePoly(*(p - q for p, q in zip(self, other)))


def partials(f: QuadPoly) -> tuple[AffinePoly, AffinePoly, AffinePoly]:
    return (
        AffinePoly(f.h, 2 * f.d, f.a, f.b),
        AffinePoly(f.i, f.a, 2 * f.e, f.c),
        AffinePoly(f.j, f.b, f.c, 2 * f.g),
    )


class Jacobians(NamedTuple):
    jx: AffinePoly
    jy: AffinePoly
    jz: AffinePoly

    def all_zero(self) -> bool:
        return self.jx.is_zero() and self.jy.is_zero() and self.jz.is_zero()


def jacobian_polynomials(f: QuadPoly) -> Jacobians:
    """Expand the three 2x2 Jacobian determinants exactly.

    ``J_x = det[[f_y, f_z], [f_xy, f_xz]]`` and cyclically. The second row is
    constant, so every determinant is affine; the coefficient of the
    distinguished variable is a commuted product difference and vanishes
    identically in floating point (checked).
    """
    fx, fy, fz = partials(f)
    jx = fy.scaled(f.b) - fz.scaled(f.a)
    jy = fx.scaled(f.c) - fz.scaled(f.a)
    jz = fx.scaled(f.c) - fy.scaled(f.b)
    if jx.x != 0 or jy.y != 0 or jz.z != 0:
        raise AssertionError(f"distinguished-variable term survived: {jx}, {jy}, {jz}")
    return Jacobians(jx, jy, jz)


class Classification(str, enum.Enum):
    DEGENERATE = "Degenerate"
    NON_DEGENERATE = "NonDegenerate"
    MISSING_VARIABLE = "MissingVariable"


def missing_variables(f: QuadPoly) -> list[str]:
    return [v for v, p in zip(VARIABLES, partials(f)) if p.is_zero()]


def structurally_degenerate(f: QuadPoly) -> bool:
    """f = G(I(x) + J(y) + K(z)) tested on coefficients.

    Either the polynomial is additive (no mixed terms), or the Hessian has
    rank one and the linear part lies along its range; both at once amount to
    every 2x2 minor of the stacked 4x3 matrix ``[H; (h, i, j)]`` vanishing.
    """
    if f.a == 0 and f.b == 0 and f.c == 0:
        return True
    M = np.vstack([f.hessian, f.linear]).tolist()
    for r1 in range(4):
        for r2 in range(r1 + 1, 4):
            for c1 in range(3):
                for c2 in range(c1 + 1, 3):
                    if M[r1][c1] * M[r2][c2] != M[r1][c2] * M[r2][c1]:
                        return False
    return True


def classify(f: QuadPoly) -> Classification:
    """Degenerate / NonDegenerate / MissingVariable.

    The Jacobian test is authoritative; the structural test is a cross-check
    and a disagreement raises :class:`StructuralMismatch`.
    """
    if missing_variables(f):
        return Classification.MISSING_VARIABLE
    by_jacobian = jacobian_polynomials(f).all_zero()
    if by_jacobian != structurally_degenerate(f):
        raise StructuralMismatch(
            f"{f}: jacobian test says degenerate={by_jacobian}, structural test disagrees"
        )
    return Classification.DEGENERATE if by_jacobian else Classification.NON_DEGENERATE


# -- line families and the separation form J ----------------------------------

# For a distinguished variable w and the remaining pair (p, q):
#   f = (coef of w^2) w^2 + (lin of w) w + m(p, q) w + k(p, q)
_PAIR = {"x": ("y", "z"), "y": ("x", "z"), "z": ("x", "y")}


class LineCoefficients(NamedTuple):
    slope_p: float
    slope_q: float
    pq: float
    pp: float
    qq: float
    lin_p: float
    lin_q: float


def line_coefficients(f: QuadPoly, distinguished: str = "y") -> LineCoefficients:
    """Coefficients of ``m = slope_p*p + slope_q*q`` and
    ``k = pq*p*q + pp*p^2 + qq*q^2 + lin_p*p + lin_q*q``."""
    if distinguished == "y":
        return LineCoefficients(f.a, f.c, f.b, f.d, f.g, f.h, f.j)
    if distinguished == "z":
        return LineCoefficients(f.b, f.c, f.a, f.d, f.e, f.h, f.i)
    if distinguished == "x":
        return LineCoefficients(f.a, f.b, f.c, f.e, f.g, f.i, f.j)
    raise ValueError(f"distinguished must be one of x, y, z; got {distinguished!r}")


@dataclass(frozen=True)
class LinearFormJ:
    A: float
    B: float
    C: float
    distinguished: str = "y"

    def __call__(self, p, q):
        return self.A * p + self.B * q + self.C


def linear_form_J(f: QuadPoly, distinguished: str = "y") -> LinearFormJ:
    """Separation form J(p, q) = A p + B q + C of the line family.

    With the default distinguished variable y and (p, q) = (x, z) this is
    ``(ab - 2cd) x + (2ag - cb) z + (aj - ch)``.
    """
    lc = line_coefficients(f, distinguished)
    if lc.slope_p == 0 and lc.slope_q == 0:
        raise AllZeroAxis(
            f"slope coefficients vanish for distinguished variable {distinguished}; "
            "switch the distinguished variable"
        )
    A = lc.slope_p * lc.pq - 2 * lc.slope_q * lc.pp
    B = 2 * lc.slope_p * lc.qq - lc.slope_q * lc.pq
    C = lc.slope_p * lc.lin_q - lc.slope_q * lc.lin_p
    return LinearFormJ(A, B, C, distinguished)


def usable_distinguished(f: QuadPoly) -> str:
    """First distinguished variable whose J is not identically zero."""
    for w in ("y", "z", "x"):
        try:
            J = linear_form_J(f, w)
        except AllZeroAxis:
            continue
        if (J.A, J.B, J.C) != (0.0, 0.0, 0.0):
            return w
    raise AllZeroAxis(f"every separation form vanishes for {f}")


# -- two-variable forms ----------------------------------------------------------


class CanonicalKind(str, enum.Enum):
    PRODUCT_UV = "ProductUV"
    SUM_SQUARES = "SumSquares"
    DIFF_SQUARES = "DiffSquares"


@dataclass(frozen=True)
class Quad2:
    """``uu*u^2 + uv*u*v + vv*v^2 + u_*u + v_*v + const``."""

    uu: float
    uv: float
    vv: float
    u_: float = 0.0
    v_: float = 0.0
    const: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.uu, self.uv / 2], [self.uv / 2, self.vv]])

    def __call__(self, u, v):
        return (
            self.uu * u * u + self.uv * u * v + self.vv * v * v
            + self.u_ * u + self.v_ * v + self.const
        )


CANONICAL_FORMS = {
    CanonicalKind.PRODUCT_UV: Quad2(0, 1, 0),
    CanonicalKind.SUM_SQUARES: Quad2(1, 0, 1),
    CanonicalKind.DIFF_SQUARES: Quad2(1, 0, -1),
}


@dataclass(frozen=True)
class CanonicalReduction:
    kind: CanonicalKind
    B: np.ndarray
    x0: np.ndarray
    scale: float
    offset: float

    def __call__(self, u, v):
        du = np.asarray(u) - self.x0[0]
        dv = np.asarray(v) - self.x0[1]
        s = self.B[0, 0] * du + self.B[0, 1] * dv
        t = self.B[1, 0] * du + self.B[1, 1] * dv
        return self.scale * CANONICAL_FORMS[self.kind](s, t) + self.offset


def reduce_rank2(Q: Quad2, tol: float = 1e-12) -> CanonicalReduction:
    """Write ``Q(x) = scale * Q_can(B (x - x0)) + offset``.

    Indefinite forms go to DiffSquares unless ``Q`` has no square terms, in
    which case it is already a multiple of ``uv``. Negative-definite forms are
    SumSquares with a negative scale.
    """
    A = Q.matrix
    det = float(np.linalg.det(A))
    if abs(det) <= tol:
        raise DegenerateForm(f"|det A| = {abs(det):.3g} <= {tol:g}")
    ell = np.array([Q.u_, Q.v_])
    x0 = -0.5 * np.linalg.solve(A, ell)
    offset = float(Q(x0[0], x0[1]))

    if Q.uu == 0 and Q.vv == 0:
        return CanonicalReduction(CanonicalKind.PRODUCT_UV, np.eye(2), x0, Q.uv, offset)

    w, R = np.linalg.eigh(A)
    order = np.argsort(-w)
    w, R = w[order], R[:, order]
    s = math.sqrt(abs(w[0] * w[1]))
    if w[1] > 0:
        kind, scale = CanonicalKind.SUM_SQUARES, s
    elif w[0] < 0:
        kind, scale = CanonicalKind.SUM_SQUARES, -s
    else:
        kind, scale = CanonicalKind.DIFF_SQUARES, s
    B = np.sqrt(np.abs(w) / s)[:, None] * R.T
    return CanonicalReduction(kind, B, x0, scale, offset)
