"""Scenario-level searches on top of the key-rate evaluator.

Three consumers: parameter sweeps for curve data, the optimal modulation
variance of a fixed scenario, and maximal secure distances including the
positive-rate boundary in the plane of the two fiber lengths. All searches
are deterministic; identical inputs give identical outputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .finite_size import (
    EstimationFailureError,
    FiniteSizeParams,
    KeyRateReport,
    asymptotic_key_rate,
    finite_key_rate,
)
from .protocol_model import ProtocolParams

log = logging.getLogger(__name__)

_SWEEP_VARIABLES = ("distance_ac", "distance_bc", "variance", "block_length")

# Golden ratio; bracket shrinks by 1/phi per iteration.
_PHI = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class SweepSpec:
    """One-variable sweep over an otherwise fixed scenario.

    finite=None evaluates the asymptotic rate instead (incompatible with
    sweeping the block length). Exactly one of `points` and `tolerance` must
    be set: `points` counts grid nodes, `tolerance` is a linear step size.
    """

    protocol: ProtocolParams
    finite: FiniteSizeParams | None
    variable: str
    lo: float
    hi: float
    points: int | None = None
    tolerance: float | None = None
    log_spacing: bool = False
    v_mode: str = "estimated"
    i_ab_worst: bool = False

    def __post_init__(self) -> None:
        if self.variable not in _SWEEP_VARIABLES:
            raise ValueError(
                f"unknown sweep variable {self.variable!r}, expected one of {_SWEEP_VARIABLES}"
            )
        if self.variable == "block_length" and self.finite is None:
            raise ValueError("cannot sweep the block length of an asymptotic evaluation")
        if (self.points is None) == (self.tolerance is None):
            raise ValueError("exactly one of points and tolerance must be set")
        if self.points is not None:
            if self.points < 1:
                raise ValueError(f"points must be at least 1, got {self.points}")
            if self.points == 1:
                if self.lo != self.hi:
                    raise ValueError("a single-point sweep needs lo == hi")
            elif not self.lo < self.hi:
                raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        else:
            if self.tolerance <= 0.0:
                raise ValueError(f"tolerance must be positive, got {self.tolerance}")
            if not self.lo < self.hi:
                raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
            if self.log_spacing:
                raise ValueError("tolerance stepping is linear; combine with points for log spacing")
        if self.log_spacing and self.lo <= 0.0:
            raise ValueError("log spacing needs a positive lower bound")

    def grid(self) -> np.ndarray:
        """Evaluation points, lo through hi inclusive, in sweep order."""
        if self.points is not None:
            if self.points == 1:
                return np.array([self.lo])
            if self.log_spacing:
                return np.geomspace(self.lo, self.hi, self.points)
            return np.linspace(self.lo, self.hi, self.points)
        return np.arange(self.lo, self.hi + 0.5 * self.tolerance, self.tolerance)


def sweep_point(spec: SweepSpec, value: float) -> KeyRateReport:
    """Evaluate one grid node of a sweep.

    Module-level and driven only by picklable arguments so sweep fan-out can
    cross process boundaries.
    """
    p = spec.protocol
    fs = spec.finite
    if spec.variable == "distance_ac":
        p = replace(p, l_ac=value)
    elif spec.variable == "distance_bc":
        p = replace(p, l_bc=value)
    elif spec.variable == "variance":
        # The published curves anneal both modulation variances together.
        p = replace(p, v_a=value, v_b=value)
    else:
        fs = replace(fs, n_total=value)
    if fs is None:
        return asymptotic_key_rate(p)
    return finite_key_rate(p, fs, v_mode=spec.v_mode, i_ab_worst=spec.i_ab_worst)


@dataclass(frozen=True)
class VarianceOptimum:
    """Result of the modulation-variance search."""

    v_star: float  # maximising modulation variance, SNU
    k_star: float  # key rate there, bits per use
    boundary: bool  # True when the optimum sat on the upper search bound


def _golden_max(f, lo: float, hi: float, rel_tol: float) -> tuple[float, float]:
    # Straight golden-section bracketing, maximising. Termination is
    # relative on the inner points, so wide variance scales converge in the
    # same number of steps as narrow ones.
    a, b = lo, hi
    c = b - (b - a) / _PHI
    d = a + (b - a) / _PHI
    while abs(c - d) > rel_tol * max(abs(c), abs(d)):
        if f(c) > f(d):
            b = d
        else:
            a = c
        c = b - (b - a) / _PHI
        d = a + (b - a) / _PHI
    x = 0.5 * (a + b)
    return x, f(x)


def optimal_modulation(
    protocol: ProtocolParams,
    finite: FiniteSizeParams | None = None,
    v_lo: float = 0.1,
    v_hi: float = 1e6,
    rel_tol: float = 1e-3,
    coarse_points: int = 40,
    v_mode: str = "estimated",
) -> VarianceOptimum:
    """Best joint modulation variance V_A = V_B of a fixed scenario.

    A log-spaced coarse scan brackets the maximum before golden-section
    refinement, guarding against surprises far from the optimum; the rate is
    unimodal in the variance on every scenario we evaluate, but that is an
    observation, not a theorem. When the scan peaks at the upper bound the
    rate is still climbing there (perfect reconciliation behaves this way)
    and the bound itself is returned with the boundary flag set instead of a
    fake interior maximum. With no positive rate anywhere the least negative
    point is reported; k_star <= 0 marks the outcome.
    """
    if not 0.0 < v_lo <= v_hi:
        raise ValueError(f"need 0 < v_lo <= v_hi, got [{v_lo}, {v_hi}]")

    def k_of_v(v: float) -> float:
        p = replace(protocol, v_a=v, v_b=v)
        try:
            if finite is None:
                return asymptotic_key_rate(p).k
            return finite_key_rate(p, finite, v_mode=v_mode).k
        except (EstimationFailureError, ValueError):
            return -math.inf

    if v_lo == v_hi:
        return VarianceOptimum(v_star=v_lo, k_star=k_of_v(v_lo), boundary=False)

    grid = np.logspace(math.log10(v_lo), math.log10(v_hi), coarse_points)
    vals = [k_of_v(v) for v in grid]
    if not any(math.isfinite(k) for k in vals):
        raise EstimationFailureError("no evaluable modulation variance in the search range")
    i = int(np.argmax(vals))
    if i == len(grid) - 1:
        return VarianceOptimum(v_star=float(grid[-1]), k_star=vals[-1], boundary=True)
    lo_b = float(grid[max(i - 1, 0)])
    hi_b = float(grid[i + 1])
    v_star, k_star = _golden_max(k_of_v, lo_b, hi_b, rel_tol)
    return VarianceOptimum(v_star=v_star, k_star=k_star, boundary=False)


def max_distance(
    protocol: ProtocolParams,
    finite: FiniteSizeParams | None,
    axis: str = "distance_ac",
    search_hi: float = 200.0,
    resolution_km: float = 0.1,
    optimize_variance: bool = False,
    v_lo: float = 0.1,
    v_hi: float = 1e6,
    v_mode: str = "estimated",
) -> float:
    """Largest fiber length on one axis with a positive key rate.

    Scans outward in 1 km steps to bracket the sign change, verifying on the
    way that the rate only ever decreases (a violation means the scenario is
    not the monotone regime this search assumes, and aborts loudly), then
    bisects the bracket down to `resolution_km`. Returns 0.0 when already
    insecure at zero distance and `search_hi` when the rate never crosses.

    With optimize_variance=True every probed length gets its own modulation
    search first, which is how the reconciliation-limited curves are meant
    to be read.
    """
    if axis not in ("distance_ac", "distance_bc"):
        raise ValueError(f"axis must be distance_ac or distance_bc, got {axis!r}")
    if search_hi <= 0.0 or resolution_km <= 0.0:
        raise ValueError("search_hi and resolution_km must be positive")

    def k_at(length: float) -> float:
        p = replace(protocol, **{"l_ac" if axis == "distance_ac" else "l_bc": length})
        try:
            if optimize_variance:
                return optimal_modulation(
                    p, finite, v_lo=v_lo, v_hi=v_hi, v_mode=v_mode
                ).k_star
            if finite is None:
                return asymptotic_key_rate(p).k
            return finite_key_rate(p, finite, v_mode=v_mode).k
        except (EstimationFailureError, ValueError):
            return -math.inf

    k_prev = k_at(0.0)
    if k_prev <= 0.0:
        log.warning("no positive key rate even at zero distance on %s (k=%.6g)", axis, k_prev)
        return 0.0
    lo = 0.0
    length = 1.0
    while length <= search_hi:
        k_here = k_at(length)
        if math.isfinite(k_here) and k_here >= k_prev + 1e-9 * max(1.0, abs(k_prev)):
            raise RuntimeError(
                f"key rate increased along {axis}: k({length - 1.0:g} km)={k_prev:.9g} "
                f"-> k({length:g} km)={k_here:.9g}; scenario is outside the "
                "monotone regime this search assumes"
            )
        if k_here <= 0.0:
            break
        lo, k_prev = length, k_here
        length += 1.0
    else:
        return search_hi
    hi_b = length
    while hi_b - lo > resolution_km:
        mid = 0.5 * (lo + hi_b)
        if k_at(mid) > 0.0:
            lo = mid
        else:
            hi_b = mid
    return 0.5 * (lo + hi_b)


def distance_frontier(
    protocol: ProtocolParams,
    finite: FiniteSizeParams | None,
    l_bc_grid,
    search_hi: float = 200.0,
    resolution_km: float = 0.1,
    v_mode: str = "estimated",
) -> list[tuple[float, float]]:
    """Positive-rate boundary in the (arm A length, arm B length) plane.

    For each arm B length in the (strictly increasing) grid, finds the
    maximal arm A length. Stops before the first grid point with no secure
    arm A distance at all, so every returned row is feasible. The boundary
    must shrink as arm B gets longer; growth beyond the bisection resolution
    aborts.
    """
    grid = [float(x) for x in l_bc_grid]
    if not grid:
        raise ValueError("arm B grid must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("arm B grid must be strictly increasing")
    out: list[tuple[float, float]] = []
    prev = math.inf
    for l_bc in grid:
        p = replace(protocol, l_bc=l_bc)
        best = max_distance(
            p, finite, axis="distance_ac", search_hi=search_hi,
            resolution_km=resolution_km, v_mode=v_mode,
        )
        if best <= 0.0:
            break
        if best > prev + resolution_km + 1e-9:
            raise RuntimeError(
                f"frontier grew from {prev:.3f} km to {best:.3f} km at arm B "
                f"length {l_bc:g} km; expected a nonincreasing boundary"
            )
        out.append((l_bc, best))
        prev = best
    return out
