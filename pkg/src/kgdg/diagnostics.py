"""Quantitative stability and convergence evaluators.

Stability: count sign changes of consecutive spatial differences of phi
(a proxy for spurious node-scale oscillation); a snapshot is stable when the
count divided by the number of nodes stays at or below a threshold eps_s.

Convergence: CV is the log10 relative L2 error of a coarse run against the
finest run, restricted to shared nodes; DCV measures how far the CV gap
between two coarse runs deviates from the gap a second-order method should
show.  Three readings of the expected gap are provided (see
:func:`convergence_deviation_dcv`); callers choose via DiagnosticsConfig.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .lattice import Field

__all__ = [
    "MINUS_INFINITY",
    "DCV_MODES",
    "DiagnosticsConfig",
    "StabilityRecord",
    "ConvergenceRecord",
    "stability_count",
    "stability_ratio",
    "first_instability_time",
    "relative_error_cv",
    "convergence_deviation_dcv",
    "first_divergence_time",
]

MINUS_INFINITY = float("-inf")  # sentinel: coarse and reference agree exactly

DCV_MODES = ("as-written", "doubling", "richardson")


@dataclass(frozen=True)
class DiagnosticsConfig:
    eps_stability: float = 0.01
    eps_convergence: float = 0.15
    dcv_mode: str = "as-written"

    def __post_init__(self):
        if not 0.0 < self.eps_stability < 1.0:
            raise ValueError("eps_stability must lie in (0, 1)")
        if self.eps_convergence <= 0.0:
            raise ValueError("eps_convergence must be positive")
        if self.dcv_mode not in DCV_MODES:
            raise ValueError(f"dcv_mode must be one of {DCV_MODES}")


@dataclass(frozen=True)
class StabilityRecord:
    time: float
    sn_count: int
    grid_points: int

    def __post_init__(self):
        if not 0 <= self.sn_count <= self.grid_points:
            raise ValueError("sn_count out of range")

    @property
    def ratio(self) -> float:
        return self.sn_count / self.grid_points


@dataclass(frozen=True)
class ConvergenceRecord:
    time: float
    grid_id: int
    cv: float
    dcv: float

    def __post_init__(self):
        if self.dcv < 0.0:
            raise ValueError("dcv must be nonnegative")


def _require_1d(phi: Field):
    if phi.grid.dim != 1:
        raise ValueError(
            "oscillation counting is defined for 1-D fields only; "
            "the aggregation over axes in higher dimensions is unspecified"
        )


def stability_count(phi: Field) -> int:
    """Number of nodes k where consecutive differences d[k] = phi[k+1]-phi[k]
    flip sign: d[k+1] * d[k] < 0, periodic, strict (zero differences never
    count)."""
    _require_1d(phi)
    v = phi.values
    d = np.roll(v, -1) - v
    return int(np.count_nonzero(np.roll(d, -1) * d < 0.0))


def stability_ratio(phi: Field) -> float:
    """stability_count over the number of nodes, in [0, 1]."""
    return stability_count(phi) / phi.grid.total_points


def first_instability_time(
    series: Iterable[tuple[float, Field]], eps_s: float
) -> Optional[float]:
    """Earliest sample time with stability_ratio strictly above eps_s, or
    None when the run stays stable throughout."""
    empty = True
    for t, phi in series:
        empty = False
        if stability_ratio(phi) > eps_s:
            return t
    if empty:
        raise ValueError("empty snapshot series")
    return None


def relative_error_cv(coarse: Field, reference: Field) -> float:
    """log10 relative L2 error of a coarse-grid field against a nested finer
    reference, both restricted to the coarse nodes.

    Returns MINUS_INFINITY when the restriction matches exactly.
    """
    if coarse.grid.dim != 1 or reference.grid.dim != 1:
        raise ValueError("convergence comparison is 1-D only")
    ng = coarse.grid.points[0]
    nG = reference.grid.points[0]
    if nG % ng != 0:
        raise ValueError(f"grids are not nested: {ng} does not divide {nG}")
    r = nG // ng
    ref = reference.values[::r]
    ref_norm = float(np.linalg.norm(ref))
    if ref_norm == 0.0:
        raise ValueError("reference field is identically zero on shared nodes")
    err = float(np.linalg.norm(coarse.values - ref))
    if err == 0.0:
        return MINUS_INFINITY
    return math.log10(err / ref_norm)


def expected_cv_gap(g: int, g_bar: int, mode: str, g_max: Optional[int] = None) -> float:
    """Expected CV_g - CV_gbar for a second-order method, by reading."""
    if mode == "as-written":
        return (g_bar / g) * math.log10(4.0)
    if mode == "doubling":
        return math.log2(g_bar / g) * math.log10(4.0)
    if mode == "richardson":
        # the reference itself carries an O(h_G^2) error of the same sign
        G = 2 * g_bar if g_max is None else g_max
        h_g, h_b, h_G = 1.0 / g, 1.0 / g_bar, 1.0 / G
        return math.log10((h_g**2 - h_G**2) / (h_b**2 - h_G**2))
    raise ValueError(f"unknown dcv mode {mode!r}")


def convergence_deviation_dcv(
    cv_coarse: float,
    cv_second: float,
    g: int,
    g_bar: int,
    mode: str = "as-written",
    g_max: Optional[int] = None,
) -> float:
    """|CV_gbar - CV_g + expected gap|: deviation of the observed refinement
    gain from second-order behavior.  Zero iff the gap is exactly as
    expected."""
    if g >= g_bar:
        raise ValueError("g must be smaller than g_bar")
    if not (math.isfinite(cv_coarse) and math.isfinite(cv_second)):
        raise ValueError(
            "CV inputs must be finite; handle the MINUS_INFINITY sentinel first"
        )
    return abs(cv_second - cv_coarse + expected_cv_gap(g, g_bar, mode, g_max))


def first_divergence_time(
    records: Sequence[ConvergenceRecord], eps_c: float
) -> Optional[float]:
    """Earliest record time with DCV strictly above eps_c, or None."""
    if not records:
        raise ValueError("empty convergence series")
    for rec in records:
        if rec.dcv > eps_c:
            return rec.time
    return None
