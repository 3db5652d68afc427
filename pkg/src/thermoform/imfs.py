"""Iterated multivalued function systems generated by an interval map.

An IMFS on a base interval ``B0`` is a family of inverse branches
``phi_l = (f^{m_l}|_{W_l})^{-1}`` with windows ``W_l`` inside ``B0`` and
``f^{m_l}(W_l) = B0``.  Words compose right to left:
``phi_{l1 ... lk} = phi_{l1} o ... o phi_{lk}``, and the time of a word is
the sum of the times of its letters.

Word images are finite point sets.  Two sets are *disjoint* when their
closest points are more than 1e-8 apart and *coincide* when their
Hausdorff distance is below 1e-10; anything in between raises
:class:`~thermoform.errors.AmbiguityError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import (
    AmbiguityError,
    BudgetError,
    ConstructionError,
    InvariantViolation,
    PreconditionError,
)
from .interval_map import DEDUP_RADIUS, Interval, IntervalMap
from .potential import SINGULARITY_RADIUS, Potential
from .pressure import tree_pressure_series
from .transfer import MeasureEstimate, integrate

DISJOINT_RADIUS = 1e-8
COINCIDE_RADIUS = 1e-10
WINDOW_TOL = 1e-9
DEFAULT_WORD_BUDGET = 2**20

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ImfsBranch:
    time: int
    window: Interval
    inverse: Evaluator


@dataclass(frozen=True)
class Word:
    letters: tuple[int, ...]
    time: int

    @property
    def length(self) -> int:
        return len(self.letters)


def _unique(points: np.ndarray) -> np.ndarray:
    y = np.sort(np.asarray(points, dtype=float))
    if y.size:
        keep = np.ones(y.size, dtype=bool)
        keep[1:] = np.diff(y) > DEDUP_RADIUS
        y = y[keep]
    return y


def monotone_inverse(f: IntervalMap, n: int, lo: float, hi: float) -> Evaluator:
    """Inverse of ``f^n`` restricted to ``[lo, hi]``, where it must be monotone.

    Applied elementwise; targets outside the image are clamped to it.
    """
    e_lo, e_hi = f.iterate(np.array([lo, hi]), n)
    increasing = e_hi > e_lo
    t_min, t_max = min(e_lo, e_hi), max(e_lo, e_hi)
    steps = max(1, math.ceil(math.log2(max(hi - lo, 1e-300) / 1e-15)))

    def inverse(points):
        t = np.clip(np.asarray(points, dtype=float), t_min, t_max)
        a = np.full(t.shape, lo)
        b = np.full(t.shape, hi)
        for _ in range(steps):
            mid = 0.5 * (a + b)
            v = f.iterate(mid, n)
            right = (v < t) if increasing else (v > t)
            a = np.where(right, mid, a)
            b = np.where(right, b, mid)
        return 0.5 * (a + b)

    return inverse


def pullback_inverse(f: IntervalMap, n: int, window: Interval) -> Evaluator:
    """``A -> f^{-n}(A) & window`` through the full preimage tree."""

    lo, hi = window

    def inverse(points):
        pts = np.asarray(points, dtype=float)
        for _ in range(n):
            pts, _, _ = f.preimage_step(pts)
        return _unique(pts[(pts >= lo - WINDOW_TOL) & (pts <= hi + WINDOW_TOL)])

    return inverse


@dataclass
class Imfs:
    map: IntervalMap
    base: Interval
    branches: list[ImfsBranch]
    word_budget: int = DEFAULT_WORD_BUDGET

    def word(self, letters: Sequence[int]) -> Word:
        letters = tuple(int(l) for l in letters)
        if not letters:
            raise PreconditionError("words are nonempty")
        if any(not 0 <= l < len(self.branches) for l in letters):
            raise PreconditionError(f"letter out of range in {letters}")
        return Word(letters, sum(self.branches[l].time for l in letters))

    def validate(self, tol: float = WINDOW_TOL) -> None:
        """Check ``W_l`` inside ``B0`` and ``f^{m_l}(W_l) = B0`` for every branch."""
        b0, b1 = self.base
        for i, br in enumerate(self.branches):
            lo, hi = br.window
            if br.time < 1:
                raise ConstructionError(f"branch {i}: time must be >= 1")
            if lo < b0 - tol or hi > b1 + tol or lo > hi:
                raise ConstructionError(f"branch {i}: window {br.window} not inside B0 {self.base}")
            img = (lo, hi)
            for _ in range(br.time):
                img = self.map.image(*img)
            if abs(img[0] - b0) > tol or abs(img[1] - b1) > tol:
                raise ConstructionError(f"branch {i}: f^{br.time}(W) = {img} differs from B0 {self.base}")


def build_full_shift_imfs(f: IntervalMap, B0: Optional[Interval] = None) -> Imfs:
    """One time-1 branch for every monotone branch whose pull-back of ``B0`` lies in ``B0``."""
    b0, b1 = f.domain if B0 is None else (float(B0[0]), float(B0[1]))
    branches = []
    for br in f.branches:
        if b0 < br.range_lo - WINDOW_TOL or b1 > br.range_hi + WINDOW_TOL:
            continue
        e = f.solve_branch(br, np.array([b0, b1]))
        lo, hi = float(min(e)), float(max(e))
        if lo < b0 - WINDOW_TOL or hi > b1 + WINDOW_TOL:
            continue

        def inverse(points, br=br):
            return _unique(f.solve_branch(br, points))

        branches.append(ImfsBranch(1, (lo, hi), inverse))
    if not branches:
        raise ConstructionError(f"no depth-1 pull-back of {(b0, b1)} lies inside it")
    return Imfs(f, (b0, b1), branches)


def parse_imfs(text: str, f: IntervalMap) -> Imfs:
    """Read ``B0`` from the first line (``lo hi``) and branches from ``m lo hi`` lines."""
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.replace(",", " ").split())
    if not rows or len(rows[0]) != 2:
        raise ConstructionError("first line must be 'lo hi' for B0")
    try:
        base = (float(rows[0][0]), float(rows[0][1]))
        branches = []
        for r in rows[1:]:
            if len(r) != 3:
                raise ConstructionError(f"branch line needs 'm lo hi', got {' '.join(r)!r}")
            m, lo, hi = int(r[0]), float(r[1]), float(r[2])
            branches.append(ImfsBranch(m, (lo, hi), pullback_inverse(f, m, (lo, hi))))
    except ValueError as exc:
        raise ConstructionError(f"malformed IMFS description: {exc}") from exc
    imfs = Imfs(f, base, branches)
    imfs.validate()
    return imfs


def word_image(imfs: Imfs, w: Word | Sequence[int], x0: float) -> np.ndarray:
    """``phi_w(x0)``, applying the rightmost letter first."""
    if not isinstance(w, Word):
        w = imfs.word(w)
    b0, b1 = imfs.base
    if not b0 - WINDOW_TOL <= x0 <= b1 + WINDOW_TOL:
        raise PreconditionError(f"x0 = {x0} is not in B0 = {imfs.base}")
    pts = np.array([float(x0)])
    for l in reversed(w.letters):
        pts = imfs.branches[l].inverse(pts)
        if pts.size == 0:
            raise InvariantViolation(f"empty image under letter {l}: malformed IMFS")
    return pts


def word_window(imfs: Imfs, w: Word | Sequence[int]) -> Interval:
    """Convex hull of ``phi_w(B0)``.

    Each inverse branch sends the ends of an interval to the ends of its
    image, so only the two endpoints are carried through the letters.
    """
    if not isinstance(w, Word):
        w = imfs.word(w)
    A = np.array(imfs.base, dtype=float)
    for l in reversed(w.letters):
        img = imfs.branches[l].inverse(A)
        if img.size == 0:
            raise InvariantViolation(f"empty window under letter {l}")
        A = np.array([img.min(), img.max()])
    return (float(A[0]), float(A[1]))


def words_by_time(imfs: Imfs, x0: float, T: int) -> dict[int, list[tuple[tuple[int, ...], np.ndarray]]]:
    """All words of time ``1..T`` with their images of ``x0``, in a fixed order."""
    times = [br.time for br in imfs.branches]
    words: dict[int, list] = {t: [] for t in range(1, T + 1)}
    start = np.array([float(x0)])
    count = 0
    for t in range(1, T + 1):
        for l, m in enumerate(times):
            if m > t:
                continue
            tails = [((), start)] if m == t else words[t - m]
            for tail, img in tails:
                out = imfs.branches[l].inverse(img)
                if out.size == 0:
                    raise InvariantViolation(f"empty image under letter {l}: malformed IMFS")
                words[t].append(((l,) + tail, out))
                count += 1
                if count > imfs.word_budget:
                    raise BudgetError(f"more than {imfs.word_budget} words up to time {T}")
    return words


def _classify(entries) -> tuple[int, int]:
    """Count coinciding and overlapping pairs among same-time word images."""
    if len(entries) < 2:
        return 0, 0
    pts = np.concatenate([img for _, img in entries])
    lab = np.concatenate([np.full(img.size, k) for k, (_, img) in enumerate(entries)])
    order = np.argsort(pts, kind="stable")
    pts, lab = pts[order], lab[order]
    pairs = set()
    for i in range(pts.size - 1):
        j = i + 1
        while j < pts.size and pts[j] - pts[i] <= DISJOINT_RADIUS:
            if lab[j] != lab[i]:
                pairs.add((min(lab[i], lab[j]), max(lab[i], lab[j])))
            j += 1
    same = overlap = 0
    for p, q in sorted(pairs):
        A, B = entries[p][1], entries[q][1]
        d = np.abs(A[:, None] - B[None, :])
        dmin = float(d.min())
        haus = max(float(d.min(axis=1).max()), float(d.min(axis=0).max()))
        if haus < COINCIDE_RADIUS:
            same += 1
        elif dmin <= COINCIDE_RADIUS:
            overlap += 1
        else:
            raise AmbiguityError(
                f"words {entries[p][0]} and {entries[q][0]} are {dmin:.3g} apart: neither disjoint nor equal"
            )
    return same, overlap


def star_property_check(imfs: Imfs, x0: float, T: int) -> bool:
    """Equal-time word images either coincide or are disjoint, up to time ``T``."""
    words = words_by_time(imfs, x0, T)
    return all(_classify(words[t])[1] == 0 for t in words)


def freeness_check(imfs: Imfs, x0: float, T: int) -> bool:
    """Distinct equal-time word images are pairwise disjoint, up to time ``T``."""
    words = words_by_time(imfs, x0, T)
    return all(_classify(words[t]) == (0, 0) for t in words)


@dataclass
class BranchBoundResult:
    holds: bool
    skipped: int
    worst_slack: float

    def __bool__(self) -> bool:
        return self.holds


def branch_bound_check(
    imfs: Imfs, psi: Potential, nu: MeasureEstimate, D: float, samples: int = 257
) -> BranchBoundResult:
    """Test ``S_{m_l}(psi)(y) >= m_l * int psi dnu - D`` on samples of every ``phi_l(B0)``.

    Samples are uniform in each window, endpoints included.  For a
    geometric ``psi`` samples whose orbit meets the singular set are
    skipped and counted.
    """
    if D < 0:
        raise PreconditionError("D must be >= 0")
    f = imfs.map
    avoid = () if psi.is_holder else f.critical_points
    mean = integrate(nu, psi._eval, avoid)
    holds = True
    skipped = 0
    worst = math.inf
    for l, br in enumerate(imfs.branches):
        lo, hi = word_window(imfs, (l,))
        y = np.linspace(lo, hi, samples)
        total = np.zeros(y.size)
        alive = np.ones(y.size, dtype=bool)
        z = y.copy()
        for j in range(br.time):
            if not psi.is_holder:
                alive &= f.distance_to_critical(z) > SINGULARITY_RADIUS
                vals = np.zeros(z.size)
                if np.any(alive):
                    vals[alive] = psi._eval(z[alive])
            else:
                vals = psi._eval(z)
            total += vals
            z = f.iterate(z, 1)
        skipped += int((~alive).sum())
        if np.any(alive):
            slack = float(np.min(total[alive])) - (br.time * mean - D)
            worst = min(worst, slack)
            holds = holds and slack >= 0
    return BranchBoundResult(holds, skipped, worst)


@dataclass
class KeyLemmaResult:
    x0: float
    tail_max: float
    int_phi: float
    margin: float
    strict: bool


def key_lemma_check(
    f: IntervalMap,
    phi: Potential,
    nu: MeasureEstimate,
    x0_list: Iterable[float],
    n_max: int,
    threads: int = 1,
) -> list[KeyLemmaResult]:
    """Growth rate of the preimage sum against ``int phi dnu`` at each base point.

    The radius of convergence of ``sum_n (sum_{f^{-n} x0} exp S_n phi) s^n``
    is ``exp(-limsup p_n)``, so comparing it with ``exp(-int phi dnu)``
    is the same as comparing the tail max of ``p_n`` with the integral.
    """
    avoid = () if phi.is_holder else f.critical_points
    ip = integrate(nu, phi._eval, avoid)
    out = []
    for x0 in x0_list:
        tm = tree_pressure_series(f, phi, x0, n_max, threads).tail_max
        out.append(KeyLemmaResult(float(x0), tm, ip, tm - ip, tm - ip > 1e-3))
    return out
