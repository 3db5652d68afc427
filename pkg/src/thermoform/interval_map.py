"""Polynomial self-maps of a compact interval and their inverse branches.

An :class:`IntervalMap` is split at its interior critical points into
monotone branches.  Every backward question asked by the rest of the
package (preimage trees, pull-backs of intervals, laps of iterates) is
answered branch by branch with bracketed bisection, which stays reliable
next to critical points where Newton's method does not.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import (
    BudgetError,
    DomainError,
    MapError,
    NotFoundError,
    PreconditionError,
    SpecParseError,
)

DEDUP_RADIUS = 1e-10
NEAR_CRITICAL_RADIUS = 1e-8
BISECTION_WIDTH = 1e-13
DOMAIN_SLACK = 1e-12
DEFAULT_LEAF_BUDGET = 2**24
DEFAULT_ROOT_BUDGET = 2**20

Interval = tuple[float, float]


@dataclass(frozen=True)
class CriticalPoint:
    point: float
    order: int  # l_c = 1 + multiplicity as a root of f'


@dataclass(frozen=True)
class MonotoneBranch:
    """Restriction of the map to a closed interval where it is monotone."""

    index: int
    lo: float
    hi: float
    increasing: bool
    range_lo: float
    range_hi: float

    @property
    def sub(self) -> Interval:
        return (self.lo, self.hi)

    @property
    def range(self) -> Interval:
        return (self.range_lo, self.range_hi)


@dataclass(frozen=True)
class PeriodicOrbit:
    point: float
    period: int
    multiplier: float
    orbit: tuple[float, ...]
    at_endpoint: bool = False

    @property
    def is_repelling(self) -> bool:
        return abs(self.multiplier) > 1.0


def _real_roots(coeffs: np.ndarray, lo: float, hi: float) -> list[tuple[float, int]]:
    """Real roots of a polynomial in [lo, hi] with their multiplicities."""
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if coeffs.size <= 1:
        return []
    raw = P.polyroots(coeffs)
    scale = max(1.0, hi - lo)
    real = sorted(r.real for r in raw if abs(r.imag) <= 1e-6 * scale)
    # multiple roots come back as tight clusters
    clusters: list[list[float]] = []
    for r in real:
        if clusters and r - clusters[-1][-1] <= 1e-5 * scale:
            clusters[-1].append(r)
        else:
            clusters.append([r])
    out = []
    for cl in clusters:
        mult = len(cl)
        x = float(np.mean(cl))
        # polish against the first derivative of order `mult - 1` that has a simple root here
        d = coeffs
        for _ in range(mult - 1):
            d = P.polyder(d)
        dd = P.polyder(d)
        for _ in range(8):
            slope = P.polyval(x, dd)
            if slope == 0:
                break
            step = P.polyval(x, d) / slope
            x -= step
            if abs(step) < 1e-16 * scale:
                break
        if lo - 1e-13 <= x <= hi + 1e-13:
            out.append((float(min(max(x, lo), hi)), mult))
    return out


class IntervalMap:
    """A real polynomial mapping ``[a, b]`` into itself.

    Parameters
    ----------
    coeffs : sequence of float
        Coefficients in increasing degree, ``c0 + c1 x + c2 x**2 + ...``.
    domain : (float, float)
        The interval ``[a, b]``.
    name : str, optional
        Label used in reports.
    leaf_budget : int
        Upper bound on ``degree**n`` accepted by backward tree expansions.
    """

    def __init__(
        self,
        coeffs: Sequence[float],
        domain: Interval = (0.0, 1.0),
        name: Optional[str] = None,
        leaf_budget: int = DEFAULT_LEAF_BUDGET,
        root_budget: int = DEFAULT_ROOT_BUDGET,
    ):
        c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        if c.size == 0:
            c = np.zeros(1)
        a, b = float(domain[0]), float(domain[1])
        if not a < b:
            raise MapError(f"empty domain [{a}, {b}]")
        self.coeffs = c
        self.domain: Interval = (a, b)
        self.name = name or "poly:[{!r},{!r}]:{}".format(a, b, ",".join(repr(float(v)) for v in c))
        self.leaf_budget = int(leaf_budget)
        self.root_budget = int(root_budget)
        self._d1 = P.polyder(c) if c.size > 1 else np.zeros(1)
        self._d2 = P.polyder(self._d1) if self._d1.size > 1 else np.zeros(1)

        crit = _real_roots(self._d1, a, b)
        self.criticals: tuple[CriticalPoint, ...] = tuple(
            CriticalPoint(float(x), 1 + m) for x, m in crit
        )
        self._crit_points = np.array([cp.point for cp in self.criticals], dtype=float)

        cuts = [a] + [float(x) for x, _ in crit if a < x < b] + [b]
        branches = []
        for i, (lo, hi) in enumerate(zip(cuts[:-1], cuts[1:])):
            if hi - lo <= 0:
                continue
            flo, fhi = float(P.polyval(lo, c)), float(P.polyval(hi, c))
            if flo == fhi:
                raise MapError("map is constant on a branch")
            branches.append(
                MonotoneBranch(len(branches), lo, hi, fhi > flo, min(flo, fhi), max(flo, fhi))
            )
        self.branches: tuple[MonotoneBranch, ...] = tuple(branches)

        lo_img = min(br.range_lo for br in branches)
        hi_img = max(br.range_hi for br in branches)
        if lo_img < a - DOMAIN_SLACK or hi_img > b + DOMAIN_SLACK:
            raise MapError(f"image [{lo_img}, {hi_img}] is not contained in [{a}, {b}]")

    # -- constructors -----------------------------------------------------

    @classmethod
    def chebyshev2(cls, **kw) -> "IntervalMap":
        """``4x(1-x)`` on ``[0, 1]``."""
        return cls([0.0, 4.0, -4.0], (0.0, 1.0), name="cheb2", **kw)

    @classmethod
    def chebyshev3(cls, **kw) -> "IntervalMap":
        """``4x**3 - 3x`` on ``[-1, 1]``."""
        return cls([0.0, -3.0, 0.0, 4.0], (-1.0, 1.0), name="cheb3", **kw)

    @classmethod
    def quadratic(cls, a: float, **kw) -> "IntervalMap":
        """``a x(1-x)`` on ``[0, 1]``, ``0 < a <= 4``."""
        return cls([0.0, a, -a], (0.0, 1.0), name=f"quad:{a!r}", **kw)

    # -- evaluation -------------------------------------------------------

    @property
    def degree(self) -> int:
        return len(self.branches)

    @property
    def critical_points(self) -> np.ndarray:
        return self._crit_points.copy()

    def _check_domain(self, x):
        a, b = self.domain
        arr = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr < a - DOMAIN_SLACK) or np.any(arr > b + DOMAIN_SLACK):
            raise DomainError(f"point outside domain [{a}, {b}]")
        return np.clip(arr, a, b)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """f(x), clamped into the domain."""
        xs = self._check_domain(x)
        y = np.clip(P.polyval(xs, self.coeffs), *self.domain)
        return float(y) if y.ndim == 0 else y

    def derivative(self, x):
        xs = self._check_domain(x)
        y = P.polyval(xs, self._d1)
        return float(y) if y.ndim == 0 else y

    def _f(self, x: np.ndarray) -> np.ndarray:
        return P.polyval(x, self.coeffs)

    def iterate(self, x, n: int):
        """f^n(x) for n >= 0."""
        y = self._check_domain(x)
        a, b = self.domain
        for _ in range(n):
            y = np.clip(self._f(y), a, b)
        return float(y) if np.ndim(y) == 0 else y

    def orbit_derivative(self, x: float, n: int) -> float:
        """(f^n)'(x) by the chain rule."""
        y = float(self._check_domain(x))
        d = 1.0
        for _ in range(n):
            d *= float(P.polyval(y, self._d1))
            y = float(np.clip(P.polyval(y, self.coeffs), *self.domain))
        return d

    def sup_abs_derivative(self) -> float:
        a, b = self.domain
        cand = [a, b] + [x for x, _ in _real_roots(self._d2, a, b)]
        return float(max(abs(P.polyval(x, self._d1)) for x in cand))

    def distance_to_critical(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        if self._crit_points.size == 0:
            return np.full(xs.shape, np.inf)
        return np.min(np.abs(xs[..., None] - self._crit_points), axis=-1)

    def critical_orbit(self, n: int) -> np.ndarray:
        """Images f^k(c) for every critical point c and 1 <= k <= n."""
        pts = []
        y = self._crit_points.copy()
        for _ in range(n):
            y = np.clip(self._f(y), *self.domain)
            pts.append(y)
        return np.concatenate(pts) if pts else np.zeros(0)

    def image(self, lo: float, hi: float) -> Interval:
        """Exact image of ``[lo, hi]``: endpoint values plus interior critical values."""
        lo, hi = float(lo), float(hi)
        if lo > hi:
            raise PreconditionError("interval with lo > hi")
        self._check_domain([lo, hi])
        vals = [self._f(np.float64(lo)), self._f(np.float64(hi))]
        for c in self._crit_points:
            if lo < c < hi:
                vals.append(self._f(np.float64(c)))
        a, b = self.domain
        return (float(min(max(min(vals), a), b)), float(min(max(max(vals), a), b)))

    def is_full(self, lo: float, hi: float, tol: float = DOMAIN_SLACK) -> bool:
        a, b = self.domain
        return lo <= a + tol and hi >= b - tol

    # -- inverse branches -------------------------------------------------

    def solve_branch(self, branch: MonotoneBranch, targets) -> np.ndarray:
        """Solve ``f(y) = t`` on one monotone branch for an array of targets.

        Targets are clamped to the branch range.  Bisection to width
        1e-13, then two guarded Newton steps.
        """
        t = np.clip(np.asarray(targets, dtype=float), branch.range_lo, branch.range_hi)
        lo = np.full(t.shape, branch.lo)
        hi = np.full(t.shape, branch.hi)
        sign = 1.0 if branch.increasing else -1.0
        steps = max(1, math.ceil(math.log2((branch.hi - branch.lo) / BISECTION_WIDTH)))
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            right = sign * (self._f(mid) - t) < 0
            lo = np.where(right, mid, lo)
            hi = np.where(right, hi, mid)
        y = 0.5 * (lo + hi)
        for _ in range(2):
            r = self._f(y) - t
            d = P.polyval(y, self._d1)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = y - r / d
            ok = (d != 0) & np.isfinite(cand)
            cand = np.clip(np.where(ok, cand, y), branch.lo, branch.hi)
            better = np.abs(self._f(cand) - t) < np.abs(r)
            y = np.where(better, cand, y)
        # range endpoints come from branch endpoints exactly
        f_lo, f_hi = self._f(np.float64(branch.lo)), self._f(np.float64(branch.hi))
        y = np.where(t == f_lo, branch.lo, y)
        y = np.where(t == f_hi, branch.hi, y)
        return y

    def preimage_step(self, points) -> tuple[np.ndarray, np.ndarray, bool]:
        """All preimages of a batch of points.

        Returns ``(children, parents, near_critical)`` where children are
        sorted, merged at the dedup radius, and ``parents[i]`` indexes the
        point whose preimage ``children[i]`` is.
        """
        pts = np.asarray(points, dtype=float)
        kids, parents = [], []
        for br in self.branches:
            idx = np.nonzero((pts >= br.range_lo - DOMAIN_SLACK) & (pts <= br.range_hi + DOMAIN_SLACK))[0]
            if idx.size:
                kids.append(self.solve_branch(br, pts[idx]))
                parents.append(idx)
        if not kids:
            return np.zeros(0), np.zeros(0, dtype=np.intp), False
        y = np.concatenate(kids)
        p = np.concatenate(parents)
        order = np.lexsort((p, y))
        y, p = y[order], p[order]
        keep = np.ones(y.size, dtype=bool)
        keep[1:] = np.diff(y) > DEDUP_RADIUS
        y, p = y[keep], p[keep]
        near = bool(self._crit_points.size) and bool(np.any(self.distance_to_critical(y) <= NEAR_CRITICAL_RADIUS))
        return y, p, near

    def check_budget(self, n: int, budget: Optional[int] = None, what: str = "leaf") -> None:
        budget = self.leaf_budget if budget is None else budget
        if n * math.log(max(self.degree, 1)) > math.log(budget) + 1e-12:
            raise BudgetError(f"{what} budget exceeded: {self.degree}^{n} > {budget}")

    def preimages(self, x0: float, n: int, return_flag: bool = False):
        """Distinct solutions of ``f^n(y) = x0``, sorted ascending."""
        if n < 1:
            raise PreconditionError("depth must be >= 1")
        x = self._check_domain(float(x0))
        self.check_budget(n)
        pts = np.array([float(x)])
        near = False
        for _ in range(n):
            pts, _, nr = self.preimage_step(pts)
            near = near or nr
        return (pts, near) if return_flag else pts

    def __repr__(self) -> str:
        return f"IntervalMap({self.name})"


# -- interval operations -------------------------------------------------


def _merge(pieces: list[Interval], tol: float) -> list[Interval]:
    pieces.sort()
    out: list[list[float]] = []
    for lo, hi in pieces:
        if out and lo <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(lo, hi) for lo, hi in out]


def pull_back_once(f: IntervalMap, comps: Sequence[Interval]) -> list[Interval]:
    """Connected components of ``f^{-1}`` of a union of intervals."""
    if not comps:
        return []
    lo = np.array([c[0] for c in comps], dtype=float)
    hi = np.array([c[1] for c in comps], dtype=float)
    pieces: list[Interval] = []
    for br in f.branches:
        l = np.maximum(lo, br.range_lo)
        h = np.minimum(hi, br.range_hi)
        ok = l <= h + DOMAIN_SLACK
        if not np.any(ok):
            continue
        h = np.maximum(h[ok], l[ok])
        e1 = f.solve_branch(br, l[ok])
        e2 = f.solve_branch(br, h)
        pieces.extend(zip(np.minimum(e1, e2).tolist(), np.maximum(e1, e2).tolist()))
    return _merge(pieces, 1e-11)


def pull_backs(f: IntervalMap, J: Interval, n: int) -> list[Interval]:
    """Connected components of ``f^{-n}(J)``, left to right.

    Examples
    --------
    >>> f = IntervalMap.chebyshev2()
    >>> [tuple(round(v, 6) for v in w) for w in pull_backs(f, (0.96, 1.0), 1)]
    [(0.4, 0.6)]
    """
    lo, hi = float(J[0]), float(J[1])
    if lo > hi:
        raise PreconditionError("interval with lo > hi")
    f._check_domain([lo, hi])
    f.check_budget(n)
    comps: list[Interval] = [(lo, hi)]
    for _ in range(n):
        comps = pull_back_once(f, comps)
    return comps


def boundary_check(f: IntervalMap, J0: Interval, W: Interval, n: int, tol: float = 1e-9) -> bool:
    """True iff ``f^n`` maps both endpoints of the pull-back ``W`` into the boundary of ``J0``."""
    comps = pull_backs(f, J0, n)
    if not any(abs(c[0] - W[0]) <= tol and abs(c[1] - W[1]) <= tol for c in comps):
        raise PreconditionError(f"{W} is not a pull-back component of {J0} by f^{n}")
    ends = f.iterate(np.array([W[0], W[1]], dtype=float), n)
    return all(min(abs(e - J0[0]), abs(e - J0[1])) <= tol for e in ends)


def exactness_time(f: IntervalMap, U: Interval, n_max: int) -> Optional[int]:
    """Smallest ``n <= n_max`` with ``f^n(U) = I``, or None."""
    lo, hi = float(U[0]), float(U[1])
    if lo > hi:
        raise PreconditionError("empty interval")
    for n in range(n_max + 1):
        if f.is_full(lo, hi):
            return n
        lo, hi = f.image(lo, hi)
    return None


def _two_sided(f: IntervalMap, y: float, x0: float, n: int, eps_list=(1e-4, 1e-6)) -> bool:
    a, b = f.domain
    for eps in eps_list:
        xs = np.clip(y + eps * np.linspace(-1.0, 1.0, 17), a, b)
        vals = f.iterate(xs, n)
        if not (np.any(vals > x0) and np.any(vals < x0)):
            return False
    return True


def side_covering_points(f: IntervalMap, x0: float, U: Interval, n: int) -> tuple[float, float]:
    """Two distinct points of ``f^{-n}(x0)`` in ``U`` whose every neighbourhood
    is mapped by ``f^n`` across both sides of ``x0``.

    ``U`` is cut in half; one point is taken from each half, so the pair
    is distinct by construction.  Raises NotFoundError when ``n`` is too
    small for either half to cover the interval or no two-sided preimage
    exists yet.
    """
    a, b = f.domain
    if not a < x0 < b:
        raise PreconditionError("x0 must be an interior point")
    lo, hi = float(U[0]), float(U[1])
    if not lo < hi:
        raise PreconditionError("U must have nonempty interior")
    mid = 0.5 * (lo + hi)
    halves = [(lo, mid), (mid, hi)]
    for h in halves:
        t = exactness_time(f, h, n)
        if t is None or t > n:
            raise NotFoundError(f"f^{n} does not yet cover the interval from {h}")
    ys = f.preimages(x0, n)
    picked = []
    for i, (hl, hh) in enumerate(halves):
        in_half = ys[(ys >= hl) & (ys < hh)] if i == 0 else ys[(ys >= hl) & (ys <= hh)]
        centre = 0.5 * (hl + hh)
        for y in sorted(in_half.tolist(), key=lambda v: (abs(v - centre), v)):
            if _two_sided(f, y, x0, n):
                picked.append(y)
                break
        else:
            raise NotFoundError(f"no two-sided preimage of {x0} in {(hl, hh)} at depth {n}")
    return picked[0], picked[1]


# -- periodic points -----------------------------------------------------


def laps(f: IntervalMap, n: int) -> np.ndarray:
    """Breakpoints of the monotone laps of ``f^n`` (domain ends included)."""
    a, b = f.domain
    cuts = [np.array([a, b])]
    interior = [cp.point for cp in f.criticals if a < cp.point < b]
    for c in interior:
        pts = np.array([c])
        cuts.append(pts)
        for _ in range(n - 1):
            pts, _, _ = f.preimage_step(pts)
            cuts.append(pts)
    x = np.sort(np.concatenate(cuts))
    keep = np.ones(x.size, dtype=bool)
    keep[1:] = np.diff(x) > DEDUP_RADIUS
    return x[keep]


def periodic_points(f: IntervalMap, N: int, samples_per_lap: int = 16) -> list[PeriodicOrbit]:
    """All periodic orbits whose period divides ``N``, each reported once.

    Fixed points of ``f^N`` are bracketed on a sample grid inside every lap
    of ``f^N`` and refined by bisection to floating-point resolution.
    """
    if N < 1:
        raise PreconditionError("period must be >= 1")
    f.check_budget(N, f.root_budget, what="root")
    a, b = f.domain
    cuts = laps(f, N)
    t = np.linspace(0.0, 1.0, samples_per_lap + 1)
    grid = (cuts[:-1, None] + (cuts[1:] - cuts[:-1])[:, None] * t[None, :]).ravel()
    grid = np.unique(np.concatenate([grid, cuts]))

    def g(x):
        return f.iterate(x, N) - x

    gv = g(grid)
    scale = b - a
    roots = list(grid[np.abs(gv) <= 1e-14 * scale])
    change = np.nonzero(np.sign(gv[:-1]) * np.sign(gv[1:]) < 0)[0]
    lo, hi = grid[change], grid[change + 1]
    glo = gv[change]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        same = np.sign(gm) == np.sign(glo)
        lo = np.where(same, mid, lo)
        glo = np.where(same, gm, glo)
        hi = np.where(same, hi, mid)
    glo_abs, ghi_abs = np.abs(g(lo)), np.abs(g(hi))
    roots.extend(np.where(glo_abs <= ghi_abs, lo, hi).tolist())
    roots = np.sort(np.array(roots, dtype=float))
    if roots.size:
        keep = np.ones(roots.size, dtype=bool)
        keep[1:] = np.diff(roots) > 1e-9 * scale
        roots = roots[keep]

    tol = 1e-9 * scale
    used = np.zeros(roots.size, dtype=bool)
    orbits = []
    for i, p in enumerate(roots):
        if used[i]:
            continue
        period = N
        for d in range(1, N + 1):
            if N % d == 0 and abs(f.iterate(p, d) - p) <= tol:
                period = d
                break
        members = [i]
        y = p
        for _ in range(period - 1):
            y = f.iterate(y, 1)
            j = int(np.argmin(np.abs(roots - y)))
            members.append(j)
        used[members] = True
        pts = [float(roots[j]) for j in members]
        k = int(np.argmin(pts))
        pts = pts[k:] + pts[:k]
        mult = float(np.prod(f.derivative(np.array(pts))))
        at_end = any(min(abs(x - a), abs(x - b)) <= 1e-12 * scale for x in pts)
        orbits.append(PeriodicOrbit(pts[0], period, mult, tuple(pts), at_end))
    orbits.sort(key=lambda o: (o.period, o.point))
    return orbits


# -- map mini-language ---------------------------------------------------

_POLY_RE = re.compile(r"^poly:\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]:(.+)$")


def parse_map(spec: str, **kw) -> IntervalMap:
    """Build a map from ``cheb2``, ``cheb3``, ``quad:a`` or ``poly:[a,b]:c0,c1,...``."""
    s = spec.strip()
    try:
        if s == "cheb2":
            return IntervalMap.chebyshev2(**kw)
        if s == "cheb3":
            return IntervalMap.chebyshev3(**kw)
        if s.startswith("quad:"):
            tok = s[5:]
            a = float(tok)
            if not 0 < a <= 4:
                raise SpecParseError(f"quad parameter {tok!r} outside (0, 4]")
            return IntervalMap.quadratic(a, **kw)
        m = _POLY_RE.match(s)
        if m:
            lo, hi = float(m.group(1)), float(m.group(2))
            coeffs = [float(t) for t in m.group(3).split(",")]
            return IntervalMap(coeffs, (lo, hi), name=s, **kw)
    except SpecParseError:
        raise
    except (ValueError, MapError) as exc:
        raise SpecParseError(f"bad map spec {spec!r}: {exc}") from exc
    raise SpecParseError(f"unknown map spec {spec!r}")
