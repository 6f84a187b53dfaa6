"""Delta-ladder scans, exponent fits and report files."""

from __future__ import annotations

import json
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from quadenergy.energy import SmoothingKernel, coincidence_split, default_kernel, pushforward, smoothed_energy
from quadenergy.errors import DegeneratePolynomial, IoFailure, NonPositiveValue
from quadenergy.measure import DiscreteMeasure, cantor_at_scale, is_power_of_two
from quadenergy.quadpoly import Classification, QuadPoly, classify

TOL_FIT = 0.15
CSV_HEADER = "delta,energy,I0,I1,I2,I3,I4,I5,I6,slice_sup,runtime_ms"
WORKERS_ENV = "QUADENERGY_WORKERS"


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    stderr: float


def fit_exponent(pairs) -> FitResult:
    """Least-squares line through ``(log2 delta, log2 value)``."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 (delta, value) pairs, got {len(pairs)}")
    d = np.array([p[0] for p in pairs], dtype=float)
    v = np.array([p[1] for p in pairs], dtype=float)
    if np.any(v <= 0) or np.any(d <= 0):
        raise NonPositiveValue("fit needs positive deltas and values")
    res = stats.linregress(np.log2(d), np.log2(v))
    r2 = min(1.0, max(0.0, float(res.rvalue) ** 2))
    return FitResult(float(res.slope), float(res.intercept), r2, float(res.stderr))


def parse_ladder(text: str) -> tuple[float, ...]:
    """``"2^-6..2^-12"`` or ``"2^-6..2^-12:2"`` into a strictly decreasing tuple of deltas."""
    m = re.fullmatch(r"\s*2\^(-?\d+)\s*\.\.\s*2\^(-?\d+)\s*(?::\s*(\d+))?\s*", text)
    if not m:
        raise ValueError(f"ladder must look like 2^-6..2^-12[:step], got {text!r}")
    hi, lo = int(m.group(1)), int(m.group(2))
    step = int(m.group(3) or 1)
    if lo >= hi or step < 1:
        raise ValueError("ladder must run from larger to smaller delta")
    return tuple(2.0**e for e in range(hi, lo - 1, -step))


def ladder_from_range(delta_max: float, delta_min: float, step: int = 1) -> tuple[float, ...]:
    hi = round(math.log2(delta_max))
    lo = round(math.log2(delta_min))
    return parse_ladder(f"2^{hi}..2^{lo}:{step}")


@dataclass(frozen=True)
class ScanConfig:
    """One ladder scan.

    ``measure`` selects the measure at each delta:
    ``{"type": "cantor", "alpha": a}``,
    ``{"type": "construction", "kind": k, "alpha": a, "strict": bool}`` or
    ``{"type": "file", "path": p}`` (regridded to each delta).

    Measures are represented on cells of side ``delta / refine`` while the
    pushforward is binned at width delta, so values inside a delta-cell are
    resolved rather than collapsed onto its left endpoint.
    """

    poly: QuadPoly
    measure: dict
    ladder: tuple[float, ...]
    kappa: float = 0.05
    kernel: str = "bump"
    seed: int = 0
    workers: int = 1
    record_runtime: bool = False
    tol_fit: float = TOL_FIT
    refine: int = 16

    def __post_init__(self):
        ladder = tuple(float(d) for d in self.ladder)
        if not all(is_power_of_two(d) for d in ladder):
            raise ValueError("ladder entries must be powers of two")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("ladder must be strictly decreasing")
        if not 0 < self.kappa < 0.5:
            raise ValueError("kappa must lie in (0, 0.5)")
        if not is_power_of_two(self.refine) or self.refine < 1:
            raise ValueError("refine must be a power of two")
        if self.kernel != "bump":
            raise ValueError(f"unknown kernel profile {self.kernel!r}")
        measure = dict(self.measure)
        if "construction" in measure:
            measure = {"type": "construction", "kind": measure.pop("construction"), **measure}
        object.__setattr__(self, "ladder", ladder)
        object.__setattr__(self, "measure", measure)

    @property
    def is_construction(self) -> bool:
        return self.measure.get("type") == "construction"

    @property
    def alpha(self) -> float:
        if "alpha" in self.measure:
            return float(self.measure["alpha"])
        hint = load_measure_file(self.measure["path"]).alpha_hint
        if hint is None:
            raise ValueError("measure file has no alpha_hint; give alpha explicitly")
        return float(hint)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["poly"] = self.poly.to_dict()
        d["ladder"] = list(self.ladder)
        return d


def load_measure_file(path) -> DiscreteMeasure:
    try:
        return DiscreteMeasure.from_csv(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read measure file {path}: {exc}") from exc


def measure_at(cfg: ScanConfig, delta: float) -> tuple[DiscreteMeasure, dict]:
    """The measure for one ladder point plus any per-row notes."""
    spec = cfg.measure
    kind = spec.get("type")
    pitch = delta / cfg.refine
    if kind == "cantor":
        return cantor_at_scale(float(spec["alpha"]), pitch), {}
    if kind == "file":
        mu = load_measure_file(spec["path"])
        return (mu if mu.delta >= pitch else mu.regrid(pitch)), {}
    if kind == "construction":
        from quadenergy import constructions as cons

        ck = cons.ConstructionKind(spec["kind"])
        alpha = float(spec.get("alpha", 0.5 if ck is cons.ConstructionKind.UNBOUNDED_SUPPORT else 0.25))
        notes = {}
        if ck is cons.ConstructionKind.FROSTMAN_NECESSITY:
            notes["admissible"] = cons.small_error_bound(alpha, delta, default_kernel().eta).ok
        elif ck is cons.ConstructionKind.DIVERGENT_ENERGY:
            fam = cons.divergent_interval_family(alpha, delta)
            notes["intervals"] = int(fam.left.size)
            notes["interval_mass"] = [float(fam.mass.min()), float(fam.mass.max())]
        spec_obj = cons.ConstructionSpec(ck, alpha, delta)
        return cons.build(spec_obj, strict=bool(spec.get("strict", False)), pitch=pitch), notes
    raise ValueError(f"unknown measure spec {spec!r}")


@dataclass(frozen=True)
class ScanRow:
    delta: float
    energy: float
    I: tuple[float, ...]
    slice_sup: float
    runtime_ms: float | None = None
    notes: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.notes.get("total", float("nan"))

    def csv_line(self) -> str:
        runtime = "" if self.runtime_ms is None else repr(self.runtime_ms)
        vals = [self.delta, self.energy, *self.I, self.slice_sup]
        return ",".join(repr(float(v)) for v in vals) + "," + runtime


@dataclass(frozen=True)
class ScanReport:
    rows: tuple[ScanRow, ...]
    fit: FitResult | None
    claimed_exponent: float
    mode: str  # "upper" or "lower"
    verdict: str  # "pass", "fail" or "inconclusive"
    tol_fit: float = TOL_FIT
    config: dict = field(default_factory=dict)

    @property
    def baseline(self) -> float:
        return self.claimed_exponent

    @property
    def eps_hat(self) -> float | None:
        """Fitted slope minus the baseline exponent."""
        return None if self.fit is None else self.fit.slope - self.claimed_exponent

    @property
    def eps_band(self) -> tuple[float, float] | None:
        """``eps_hat +- 2 stderr``."""
        if self.fit is None:
            return None
        return (self.eps_hat - 2 * self.fit.stderr, self.eps_hat + 2 * self.fit.stderr)

    @property
    def ratios(self) -> list[float]:
        """``energy / delta^claimed`` per row."""
        return [r.energy / r.delta**self.claimed_exponent for r in self.rows]

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "claimed_exponent": self.claimed_exponent,
            "verdict": self.verdict,
            "tol_fit": self.tol_fit,
            "fit": None if self.fit is None else asdict(self.fit),
            "eps_hat": self.eps_hat,
            "eps_band": self.eps_band,
            "ratios": self.ratios,
            "rows": [{"delta": r.delta, **r.notes} for r in self.rows],
            "config": self.config,
        }


def _scan_row(cfg: ScanConfig, delta: float) -> ScanRow:
    kernel = default_kernel()
    start = time.perf_counter()
    mu, notes = measure_at(cfg, delta)
    nu = pushforward(cfg.poly, mu, delta)
    energy = smoothed_energy(nu, delta, kernel)
    split = coincidence_split(cfg.poly, mu, delta, cfg.kappa)
    slice_sup = nu.max_window(2)
    elapsed = (time.perf_counter() - start) * 1e3 if cfg.record_runtime else None
    notes = {**notes, "total": split.total, "atoms": mu.size}
    return ScanRow(delta, energy, split.I, slice_sup, elapsed, notes)


def worker_count(cfg: ScanConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, cfg.workers)


def run_scan(cfg: ScanConfig, kernel: SmoothingKernel | None = None) -> ScanReport:
    """Energy, coincidence split and slice mass at every ladder point, then a slope fit.

    Only non-degenerate polynomials are scanned; the classifier runs before
    any measure is built. Construction measures are probed as lower bounds
    (pass when slope <= claimed + tol_fit); anything else as an upper-bound
    probe against ``alpha - 1`` (pass when slope >= alpha - 1 - tol_fit).
    """
    verdict = classify(cfg.poly)
    if verdict is not Classification.NON_DEGENERATE:
        raise DegeneratePolynomial(f"refusing to scan {cfg.poly}: classified {verdict.value}")
    if kernel is not None and kernel is not default_kernel():
        raise ValueError("only the default bump kernel is supported in scans")

    workers = worker_count(cfg)
    if workers > 1 and len(cfg.ladder) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(_scan_row, [cfg] * len(cfg.ladder), cfg.ladder))
    else:
        rows = tuple(_scan_row(cfg, d) for d in cfg.ladder)

    if cfg.is_construction:
        from quadenergy.constructions import ConstructionKind, claimed_exponent

        kind = ConstructionKind(cfg.measure["kind"])
        alpha = 0.5 if kind is ConstructionKind.UNBOUNDED_SUPPORT else cfg.alpha
        claimed, mode = claimed_exponent(kind, alpha), "lower"
    else:
        claimed, mode = cfg.alpha - 1, "upper"

    fit = fit_exponent([(r.delta, r.energy) for r in rows]) if len(rows) >= 3 else None
    if fit is None:
        outcome = "inconclusive"
    elif mode == "upper":
        outcome = "pass" if fit.slope >= claimed - cfg.tol_fit else "fail"
    else:
        outcome = "pass" if fit.slope <= claimed + cfg.tol_fit else "fail"
    return ScanReport(rows, fit, claimed, mode, outcome, cfg.tol_fit, cfg.to_dict())


def report_csv(report: ScanReport) -> str:
    return "\n".join([CSV_HEADER, *(r.csv_line() for r in report.rows)]) + "\n"


def emit_report(report: ScanReport, csv_path=None, plot_path=None, summary_path=None) -> list[Path]:
    """Write the CSV table, and optionally an SVG log-log plot and a JSON summary."""
    written = []
    try:
        if csv_path is not None:
            Path(csv_path).write_text(report_csv(report))
            written.append(Path(csv_path))
        if summary_path is not None:
            Path(summary_path).write_text(json.dumps(report.summary(), indent=2, default=_json_default) + "\n")
            written.append(Path(summary_path))
        if plot_path is not None:
            from quadenergy.plotting import plot_scan

            plot_scan(report, plot_path)
            written.append(Path(plot_path))
    except OSError as exc:
        raise IoFailure(f"cannot write report: {exc}") from exc
    return written


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
