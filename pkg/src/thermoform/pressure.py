"""Tree pressure, sup-Birkhoff averages and the hyperbolicity test.

The tree pressure at a base point ``x0`` is the sequence

    p_n = (1/n) log sum_{y in f^{-n}(x0)} exp(S_n phi(y)),

whose limsup is a lower bound for the topological pressure.  The
backward tree is grown one level at a time; Birkhoff sums are carried
from each node to its children, ``S_n(y) = phi(y) + S_{n-1}(f(y))``.
The tree is always split into the subtrees of the first-level
preimages and level sums are reduced with ``math.fsum`` (exactly
rounded), so the result does not depend on the worker count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NearCriticalWarning, NonHolderWarning, PreconditionError, UnsupportedError
from .interval_map import IntervalMap, periodic_points
from .potential import Potential, birkhoff_sum, holder_modulus

VERDICT_SLACK = 1e-3
BASE_POINT_CLEARANCE = 1e-6


@dataclass
class TreePressureSeries:
    base_point: float
    values: list[float]
    leaf_counts: list[int]
    tail_max: float
    near_critical_flag: bool
    log_sums: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HyperbolicityReport:
    base_point: float
    sup_avg: list[float]
    sup_avg_lower: list[float]
    pressure_lower: float
    pressure_ulam: Optional[float]
    gap: float
    margin: float
    verdict: str
    best_n: int

    @property
    def hyperbolic(self) -> bool:
        return self.verdict == "hyperbolic"

    def to_dict(self) -> dict:
        return asdict(self)


def tail_max(values: Sequence[float]) -> float:
    """Max over the last third (rounded up) of a sequence."""
    k = math.ceil(len(values) / 3)
    return max(values[-k:])


def log_sum_exp(s: np.ndarray) -> float:
    if s.size == 0:
        return -math.inf
    m = float(np.max(s))
    return m + math.log(math.fsum(np.exp(s - m).tolist()))


def generic_base_point(f: IntervalMap, depth: int = 20) -> float:
    """A deterministic base point away from the critical set and its forward orbit."""
    a, b = f.domain
    avoid = np.concatenate([f.critical_points, f.critical_orbit(depth)])
    for frac in (0.75, 0.3, 0.6, 0.35, 0.65, 0.1, 0.9, 0.45):
        x = a + frac * (b - a)
        if avoid.size == 0 or np.min(np.abs(avoid - x)) > 1e-3:
            return x
    return a + 0.6180339887498949 * (b - a)


def _check_base_point(f: IntervalMap, x0: float, n: int) -> bool:
    a, b = f.domain
    if not a < x0 < b:
        raise PreconditionError(f"base point {x0} must be interior to {f.domain}")
    crit_orbit = f.critical_orbit(n)
    if crit_orbit.size and np.min(np.abs(crit_orbit - x0)) < BASE_POINT_CLEARANCE:
        warnings.warn(
            f"base point {x0} lies within {BASE_POINT_CLEARANCE} of the critical orbit",
            NearCriticalWarning,
            stacklevel=3,
        )
        return True
    return False


def _subtree(f: IntervalMap, phi: Potential, y: float, s: float, depth: int):
    """Per-level Birkhoff sums of the backward subtree rooted at one node."""
    pts = np.array([y])
    sums = np.array([s])
    levels = [sums]
    near = False
    for _ in range(depth):
        pts, parents, nr = f.preimage_step(pts)
        near = near or nr
        sums = phi._eval(pts) + sums[parents]
        levels.append(sums)
    return levels, near


def backward_tree_sums(
    f: IntervalMap, phi: Potential, x0: float, n_max: int, threads: int = 1
) -> tuple[list[np.ndarray], bool]:
    """Birkhoff sums ``S_n phi`` over ``f^{-n}(x0)`` for ``n = 1..n_max``.

    Element ``n-1`` of the returned list holds the leaf sums at depth n,
    concatenated over first-level subtrees in left-to-right order.
    """
    first, _, near = f.preimage_step(np.array([float(x0)]))
    first_sums = phi._eval(first)
    jobs = [(float(y), float(s)) for y, s in zip(first, first_sums)]

    def run(job):
        return _subtree(f, phi, job[0], job[1], n_max - 1)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    per_level = []
    for k in range(n_max):
        parts = [levels[k] for levels, _ in results]
        per_level.append(np.concatenate(parts) if parts else np.zeros(0))
    near = near or any(nr for _, nr in results)
    return per_level, near


def tree_pressure_series(
    f: IntervalMap, phi: Potential, x0: float, n_max: int, threads: int = 1
) -> TreePressureSeries:
    """Tree pressure ``p_1 .. p_{n_max}`` at ``x0``.

    Examples
    --------
    >>> from thermoform.potential import Constant
    >>> s = tree_pressure_series(IntervalMap.chebyshev2(), Constant(0.0), 0.75, 6)
    >>> s.leaf_counts
    [2, 4, 8, 16, 32, 64]
    """
    if n_max < 1:
        raise PreconditionError("n_max must be >= 1")
    f.check_budget(n_max)
    x0 = float(x0)
    flagged = _check_base_point(f, x0, n_max)
    levels, near = backward_tree_sums(f, phi, x0, n_max, threads)
    if near:
        warnings.warn(f"preimages of {x0} pass within 1e-8 of a critical point", NearCriticalWarning, stacklevel=2)
    values, counts, logs = [], [], []
    for n, sums in enumerate(levels, start=1):
        ls = log_sum_exp(sums)
        logs.append(ls)
        values.append(ls / n)
        counts.append(int(sums.size))
    return TreePressureSeries(x0, values, counts, tail_max(values), bool(flagged or near), logs)


def sup_birkhoff_average(f: IntervalMap, phi: Potential, n: int, grid: int) -> tuple[float, float]:
    """Certified bracket ``lower <= sup_I (1/n) S_n phi <= upper``.

    ``lower`` is the max over ``grid`` equally spaced points.  Any point is
    within ``delta`` (half the spacing) of a grid point, its j-th images
    within ``L^j delta`` of each other, so the Hoelder bound
    ``C (L^j delta)^alpha`` summed over the orbit closes the bracket.
    """
    if not phi.is_holder:
        warnings.warn("sup-average bound needs a Hoelder potential", NonHolderWarning, stacklevel=2)
    alpha, C = holder_modulus(phi)
    if n < 1 or grid < 2:
        raise PreconditionError("need n >= 1 and grid >= 2")
    a, b = f.domain
    xs = np.linspace(a, b, grid)
    lower = float(np.max(birkhoff_sum(f, phi, xs, n))) / n
    delta = 0.5 * (b - a) / (grid - 1)
    L = f.sup_abs_derivative()
    slack = C / n * math.fsum((L**j * delta) ** alpha for j in range(n))
    return lower, lower + slack


def sup_invariant_average(f: IntervalMap, phi: Potential, K: int) -> float:
    """Best periodic-orbit average of ``phi`` over periods ``<= K``."""
    best = -math.inf
    for N in range(1, K + 1):
        for orb in periodic_points(f, N):
            if orb.period != N:
                continue
            best = max(best, math.fsum(np.atleast_1d(phi(np.array(orb.orbit))).tolist()) / N)
    return best


def hyperbolicity_report(
    f: IntervalMap,
    phi: Potential,
    n_max: int = 14,
    n_sup: int = 8,
    grid: int = 2**17 + 1,
    cells: Optional[int] = 4096,
    base_point: Optional[float] = None,
    threads: int = 1,
) -> HyperbolicityReport:
    """Compare sup-Birkhoff averages with a lower bound for the pressure.

    The verdict is ``"hyperbolic"`` when the smallest certified upper
    bound on ``sup (1/n) S_n phi`` plus a margin (1e-3 plus the width of
    that bracket) stays below the tree-pressure tail max; otherwise
    ``"undecided"``.  Set ``cells=None`` to skip the Ulam estimate.
    """
    if not phi.is_holder:
        warnings.warn("hyperbolicity verdicts require a Hoelder potential", NonHolderWarning, stacklevel=2)
        raise UnsupportedError("geometric potentials are not Hoelder; no hyperbolicity verdict")
    x0 = generic_base_point(f) if base_point is None else float(base_point)
    series = tree_pressure_series(f, phi, x0, n_max, threads)
    brackets = [sup_birkhoff_average(f, phi, n, grid) for n in range(1, n_sup + 1)]
    lowers = [lo for lo, _ in brackets]
    uppers = [hi for _, hi in brackets]
    best = int(np.argmin(uppers))
    margin = VERDICT_SLACK + (uppers[best] - lowers[best])
    gap = series.tail_max - uppers[best]
    verdict = "hyperbolic" if uppers[best] + margin < series.tail_max else "undecided"
    p_ulam = None
    if cells:
        from .transfer import leading_eigendata, ulam_operator

        lam, _, _ = leading_eigendata(ulam_operator(f, phi, cells))
        p_ulam = math.log(lam)
    return HyperbolicityReport(x0, uppers, lowers, series.tail_max, p_ulam, gap, margin, verdict, best + 1)
