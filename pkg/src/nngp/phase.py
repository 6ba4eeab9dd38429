"""Mean-field diagnostics of the kernel recurrence.

Iterating the layer map drives every diagonal entry to a fixed-point
variance q* (or to divergence) and every correlation toward a fixed point
c*. The derivative chi1 of the correlation map at its fixed point controls
how fast structure in the kernel is forgotten with depth: chi1 = 1 marks
the critical line where the depth scale xi = -1/log(chi1) diverges, and
predictive performance concentrates near that line.

ReLU admits a closed-form map (used for its fixed points and for chi1,
whose value is independent of q*); other nonlinearities go through the
lookup table. Below the table's variance resolution the map is replaced by
its exact small-variance linearization around c = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .kernel import NetworkHyperparams, build_kernel_matrix
from .lookup import LookupTable, interpolate, load_or_build
from .regression import evaluate, posterior

_Q_TOL = 1e-10
_Q_MAX_ITERS = 10_000
_Q_DIVERGENCE = 1e6
_C_TOL = 1e-12
_C_MAX_ITERS = 10_000
_FD_STEP = 1e-5
_CRITICAL_BAND = 1e-4

# default sweep protocol: 30 x 30 grid over the two variances
SWEEP_SW2_GRID = np.linspace(0.1, 5.0, 30)
SWEEP_SB2_GRID = np.linspace(0.0, 2.0, 30)


@dataclass(frozen=True)
class PhaseDiagnostics:
    """Fixed points, stability multiplier and phase label for one (sw2, sb2).

    q_star is math.inf when the variance map diverges; xi is math.inf on the
    critical band |chi1 - 1| < 1e-4.
    """

    q_star: float
    c_star: float
    chi1: float
    xi: float
    phase: str

    @property
    def diverged(self) -> bool:
        return math.isinf(self.q_star)


def _variance_map(hp: NetworkHyperparams, table: LookupTable | None, analytic: bool):
    if analytic:
        def step(q):
            return hp.sigma_b2 + hp.sigma_w2 * q / 2.0
        return step, _Q_DIVERGENCE

    def step(q):
        return hp.sigma_b2 + hp.sigma_w2 * interpolate(table, q, q)
    return step, table.grid.s_max


def variance_fixed_point(hp: NetworkHyperparams, table: LookupTable | None = None,
                         method: str = "auto") -> float:
    """Fixed point of q <- sigma_b^2 + sigma_w^2 F(q, q, q), or math.inf.

    method: "analytic" (ReLU closed form), "table", or "auto" (analytic for
    ReLU, table otherwise). Divergence  -- q escaping the tabulated range, or
    monotone growth past 1e6 or through the iteration cap -- is a labeled
    outcome, not an error.
    """
    if method == "auto":
        method = "analytic" if hp.phi == "relu" else "table"
    if method == "analytic" and hp.phi != "relu":
        raise ValueError(f"no analytic variance map for phi = {hp.phi!r}")
    if method == "table" and table is None:
        raise ValueError("table method requires a lookup table")
    step, ceiling = _variance_map(hp, table, analytic=(method == "analytic"))

    q = hp.sigma_b2 + hp.sigma_w2
    if q > ceiling:
        return math.inf
    grew = True
    for _ in range(_Q_MAX_ITERS):
        q_next = step(q)
        if q_next > ceiling:
            return math.inf
        delta = q_next - q
        grew = grew and delta > 0.0
        q = q_next
        if abs(delta) < _Q_TOL * max(q, 1.0):
            return float(q)
    if grew:
        return math.inf
    return float(q)


def _correlation_map(hp: NetworkHyperparams, table: LookupTable | None, q_star: float):
    """Return (map R(c), highest c at which R may be differenced).

    The table-backed map is exactly flat within half a c-spacing of 1 (the
    diagonal routing), so finite differences stay inside the last genuine
    2D cell. Below the table's variance resolution the exact small-variance
    linearization R(c) = 1 - sw2 phi'(0)^2 (1 - c) is used instead.
    """
    if hp.phi == "relu":
        sw2, sb2 = hp.sigma_w2, hp.sigma_b2

        def r(c):
            c = min(max(c, -1.0), 1.0)
            theta = math.acos(c)
            f = (1.0 / (2.0 * math.pi)) * (math.sin(theta) + (math.pi - theta) * c)
            if math.isinf(q_star) or q_star <= 0.0:
                return sw2 * f
            return (sb2 + sw2 * q_star * f) / q_star
        return r, 1.0 - _FD_STEP

    if table is None:
        raise ValueError(f"phi = {hp.phi!r} requires a lookup table")
    if math.isinf(q_star):
        raise ValueError("correlation map undefined for divergent q*")
    s_resolution = float(table.grid.s[1])
    if q_star < s_resolution:
        slope = hp.sigma_w2 * table.activation.derivative_at_zero() ** 2

        def r(c):
            return 1.0 - slope * (1.0 - min(max(c, -1.0), 1.0))
        return r, 1.0 - _FD_STEP

    def r(c):
        c = min(max(c, -1.0), 1.0)
        return (hp.sigma_b2 + hp.sigma_w2 * interpolate(table, q_star * c, q_star)) / q_star
    return r, float(table.grid.c[-1]) - _FD_STEP


def correlation_fixed_point(hp: NetworkHyperparams, table: LookupTable | None,
                            q_star: float) -> tuple[float, float, float]:
    """(c*, chi1, xi) for the correlation map at a finite q*.

    chi1 is a centered finite difference of the map with step 1e-5 taken at
    c* (capped just below the diagonal plateau); xi = -1/log(chi1), flagged
    infinite within the critical band.
    """
    if math.isinf(q_star) and hp.phi != "relu":
        raise ValueError("q* must be finite")
    r, c_cap = _correlation_map(hp, table, q_star)

    if hp.sigma_w2 == 0.0:
        return 1.0, 0.0, 0.0

    c = 0.5
    for _ in range(_C_MAX_ITERS):
        c_next = min(max(r(c), -1.0), 1.0)
        if abs(c_next - c) < _C_TOL:
            c = c_next
            break
        c = c_next
    c_star = float(c)

    c_eval = min(c_star, c_cap)
    h = _FD_STEP
    chi1 = (r(c_eval + h) - r(c_eval - h)) / (2.0 * h)
    chi1 = float(max(chi1, 0.0))

    if abs(chi1 - 1.0) < _CRITICAL_BAND:
        xi = math.inf
    elif chi1 == 0.0:
        xi = 0.0
    elif chi1 < 1.0:
        xi = -1.0 / math.log(chi1)
    else:
        xi = math.inf
    return c_star, chi1, xi


def _phase_label(phi: str, q_star: float, c_star: float, diag_tol: float) -> str:
    if phi == "relu":
        return "bounded" if math.isfinite(q_star) else "unbounded"
    return "ordered" if 1.0 - c_star < diag_tol else "chaotic"


def _slope_at_unit_correlation(hp: NetworkHyperparams, table: LookupTable | None) -> float:
    """Derivative of the correlation map at c -> 1-.

    c = 1 is always a fixed point of the map; its stability flips exactly on
    the critical line, so this slope crosses 1 monotonically in sigma_w^2
    (the slope at an interior chaotic fixed point does not).
    """
    q_star = variance_fixed_point(hp, table)
    if math.isinf(q_star) and hp.phi != "relu":
        return math.nan
    r, c_cap = _correlation_map(hp, table, q_star)
    h = _FD_STEP
    c_eval = c_cap
    return float((r(c_eval + h) - r(c_eval - h)) / (2.0 * h))


def diagnose(hp: NetworkHyperparams, table: LookupTable | None = None) -> PhaseDiagnostics:
    """Full fixed-point diagnostics for one hyperparameter point."""
    q_star = variance_fixed_point(hp, table)
    if math.isinf(q_star) and hp.phi != "relu":
        return PhaseDiagnostics(q_star=q_star, c_star=math.nan, chi1=math.nan,
                                xi=math.nan, phase="unbounded")
    c_star, chi1, xi = correlation_fixed_point(hp, table, q_star)
    diag_tol = 1e-6 if table is None else table.diag_tol
    phase = _phase_label(hp.phi, q_star, c_star, diag_tol)
    return PhaseDiagnostics(q_star=q_star, c_star=c_star, chi1=chi1, xi=xi, phase=phase)


def chi1_at(phi: str, sw2: float, sb2: float, table: LookupTable | None = None) -> float:
    """Stability of the unit-correlation fixed point at one (sw2, sb2).

    This is the quantity whose crossing of 1 defines the critical line; at
    the crossing it coincides with the chi1 reported by diagnose().
    """
    hp = NetworkHyperparams(depth=1, sigma_w2=sw2, sigma_b2=sb2, phi=phi)
    return _slope_at_unit_correlation(hp, table)


def critical_line(phi: str, sb2_grid: np.ndarray, table: LookupTable | None = None,
                  bracket: tuple[float, float] = (1e-3, 10.0),
                  tol: float = 1e-6) -> np.ndarray:
    """sigma_w^2 with chi1 = 1, bisected per sigma_b^2 to ``tol`` in chi1.

    Cells whose bracket shows no sign change come back as nan.
    """
    sb2_grid = np.asarray(sb2_grid, dtype=np.float64)
    out = np.empty(sb2_grid.shape)
    for i, sb2 in enumerate(sb2_grid):
        lo, hi = bracket
        g_lo = chi1_at(phi, lo, float(sb2), table) - 1.0
        g_hi = chi1_at(phi, hi, float(sb2), table) - 1.0
        if not (np.isfinite(g_lo) and np.isfinite(g_hi)) or g_lo * g_hi > 0.0:
            out[i] = math.nan
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            g_mid = chi1_at(phi, mid, float(sb2), table) - 1.0
            if abs(g_mid) <= tol or (hi - lo) < 1e-14:
                break
            if g_lo * g_mid <= 0.0:
                hi = mid
            else:
                lo, g_lo = mid, g_mid
        out[i] = 0.5 * (lo + hi)
    return out


@dataclass(frozen=True)
class HeatmapSweep:
    """Validation accuracy per (sigma_w^2, sigma_b^2) cell.

    cells[i, j] corresponds to (sw2_grid[i], sb2_grid[j]); failed cells are
    nan and the sweep keeps going.
    """

    sw2_grid: np.ndarray
    sb2_grid: np.ndarray
    cells: np.ndarray

    def argmax(self) -> tuple[float, float, float]:
        """(sw2, sb2, accuracy) of the best populated cell."""
        if not np.any(np.isfinite(self.cells)):
            raise ValueError("no populated cells")
        flat = np.nanargmax(self.cells)
        i, j = np.unravel_index(flat, self.cells.shape)
        return float(self.sw2_grid[i]), float(self.sb2_grid[j]), float(self.cells[i, j])


def heatmap_sweep(dataset: Dataset, phi: str, depth: int,
                  sw2_grid: np.ndarray | None = None,
                  sb2_grid: np.ndarray | None = None,
                  table: LookupTable | None = None,
                  noise: float = 1e-10) -> HeatmapSweep:
    """Full kernel build + posterior + accuracy per grid cell.

    Accuracy is measured on the validation split; one lookup table is shared
    across all cells. Per-cell failures (variance escaping the table,
    factorization breakdown) leave nan cells.
    """
    sw2_grid = SWEEP_SW2_GRID if sw2_grid is None else np.asarray(sw2_grid, float)
    sb2_grid = SWEEP_SB2_GRID if sb2_grid is None else np.asarray(sb2_grid, float)
    if table is None:
        table = load_or_build(phi)
    x_train, t_train = dataset.train_inputs, dataset.train_targets
    x_valid, t_valid = dataset.valid_inputs, dataset.valid_targets
    cells = np.full((sw2_grid.size, sb2_grid.size), math.nan)
    for i, sw2 in enumerate(sw2_grid):
        for j, sb2 in enumerate(sb2_grid):
            hp = NetworkHyperparams(depth=depth, sigma_w2=float(sw2),
                                    sigma_b2=float(sb2), phi=phi, noise=noise)
            try:
                k = build_kernel_matrix(x_train, hp, table, x_valid)
                pred = posterior(k, t_train, hp)
                cells[i, j] = evaluate(pred, t_valid)["accuracy"]
            except (ArithmeticError, ValueError):
                continue
    return HeatmapSweep(sw2_grid=sw2_grid, sb2_grid=sb2_grid, cells=cells)
