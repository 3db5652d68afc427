"""Ulam discretisation of the weighted transfer operator.

For a partition of the domain into ``m`` equal cells, row ``i`` of the
matrix collects, for every inverse branch ``g`` of ``f``, the pieces of
``g(C_i)`` that fall in each cell ``C_j``::

    M[i, j] += exp(phi(midpoint of g(C_i) & C_j)) * |g(C_i) & C_j| / |g(C_i)|

so ``(M v)_i`` approximates ``sum_g exp(phi(g x)) v(g x)`` on ``C_i``.
The leading eigenvalue approximates ``exp(P(f, phi))``; the product of
the left and right Perron vectors gives a Gibbs-weight estimate of the
equilibrium state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import warnings
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, IrreducibilityWarning, PreconditionError, SingularityError
from .interval_map import IntervalMap
from .potential import SINGULARITY_RADIUS, Potential

RUELLE_TOLERANCE = 0.02
MAX_EXCLUDED_WEIGHT = 0.01


@dataclass
class UlamOperator:
    edges: np.ndarray
    matrix: sparse.csr_matrix
    irreducible: bool = True

    @property
    def m(self) -> int:
        return self.edges.size - 1

    def to_csv(self) -> str:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = ["i,j,value"]
        lines += [f"{coo.row[k]},{coo.col[k]},{float(coo.data[k])!r}" for k in order]
        return "\n".join(lines) + "\n"


@dataclass
class MeasureEstimate:
    """Probability weights on cells ``[lo_i, hi_i]``; degenerate cells are atoms."""

    lo: np.ndarray
    hi: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or w.shape != self.lo.shape:
            raise PreconditionError("weights must be nonnegative, one per cell")
        total = math.fsum(w.tolist())
        if abs(total - 1.0) > 1e-12:
            w = w / total
        self.weights = w

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @classmethod
    def point_mass(cls, x: float) -> "MeasureEstimate":
        return cls(np.array([x]), np.array([x]), np.array([1.0]))

    @classmethod
    def orbit(cls, points: Sequence[float]) -> "MeasureEstimate":
        """Equidistributed atoms on a periodic orbit."""
        p = np.asarray(points, dtype=float)
        return cls(p, p, np.full(p.size, 1.0 / p.size))

    @classmethod
    def uniform(cls, domain, m: int) -> "MeasureEstimate":
        e = np.linspace(domain[0], domain[1], m + 1)
        return cls(e[:-1], e[1:], np.full(m, 1.0 / m))

    def mass(self, lo: float, hi: float) -> float:
        """Weight of cells whose midpoint lies in ``[lo, hi]``."""
        mid = self.midpoints
        return math.fsum(self.weights[(mid >= lo) & (mid <= hi)].tolist())


@dataclass
class EquilibriumReport:
    pressure_ulam: float
    pressure_used: float
    entropy: float
    lyapunov: float
    int_phi: float
    cells: int
    excluded_weight: float
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def _weights_at(phi: Potential, f: IntervalMap, mid: np.ndarray, width: np.ndarray) -> np.ndarray:
    """``exp(phi)`` at piece midpoints; pieces centred on a critical point are split once."""
    if phi.is_holder or f.critical_points.size == 0:
        return np.exp(phi._eval(mid))
    bad = f.distance_to_critical(mid) <= SINGULARITY_RADIUS
    out = np.empty(mid.shape)
    out[~bad] = np.exp(phi._eval(mid[~bad]))
    if np.any(bad):
        q1 = mid[bad] - 0.25 * width[bad]
        q2 = mid[bad] + 0.25 * width[bad]
        out[bad] = 0.5 * (np.exp(phi._eval(q1)) + np.exp(phi._eval(q2)))
    return out


def ulam_operator(f: IntervalMap, phi: Potential, m: int) -> UlamOperator:
    """Assemble the ``m x m`` Ulam matrix of the transfer operator of ``phi``.

    Examples
    --------
    >>> from thermoform.potential import Constant
    >>> ulam_operator(IntervalMap.chebyshev2(), Constant(0.0), 2).matrix.toarray()
    array([[1., 1.],
           [1., 1.]])
    """
    if m < 2:
        raise PreconditionError("need at least 2 cells")
    a, b = f.domain
    edges = np.linspace(a, b, m + 1)
    rows, cols, vals = [], [], []
    for br in f.branches:
        cell = np.arange(m)
        meets = (edges[1:] > br.range_lo) & (edges[:-1] < br.range_hi)
        cell = cell[meets]
        t_lo = np.clip(edges[cell], br.range_lo, br.range_hi)
        t_hi = np.clip(edges[cell + 1], br.range_lo, br.range_hi)
        y1 = f.solve_branch(br, t_lo)
        y2 = f.solve_branch(br, t_hi)
        g_lo, g_hi = np.minimum(y1, y2), np.maximum(y1, y2)
        g_len = g_hi - g_lo
        ok = g_len > 0
        cell, g_lo, g_hi, g_len = cell[ok], g_lo[ok], g_hi[ok], g_len[ok]
        j_first = np.clip(np.searchsorted(edges, g_lo, side="right") - 1, 0, m - 1)
        j_last = np.clip(np.searchsorted(edges, g_hi, side="left") - 1, 0, m - 1)
        counts = j_last - j_first + 1
        total = int(counts.sum())
        owner = np.repeat(np.arange(cell.size), counts)
        offset = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        col = j_first[owner] + offset
        ov_lo = np.maximum(g_lo[owner], edges[col])
        ov_hi = np.minimum(g_hi[owner], edges[col + 1])
        ov = ov_hi - ov_lo
        keep = ov > 0
        owner, col, ov_lo, ov_hi, ov = owner[keep], col[keep], ov_lo[keep], ov_hi[keep], ov[keep]
        w = _weights_at(phi, f, 0.5 * (ov_lo + ov_hi), ov) * ov / g_len[owner]
        rows.append(cell[owner])
        cols.append(col)
        vals.append(w)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    order = np.lexsort((c, r))
    mat = sparse.coo_matrix((v[order], (r[order], c[order])), shape=(m, m)).tocsr()
    mat.sum_duplicates()
    n_comp, _ = connected_components(mat, directed=True, connection="strong")
    if n_comp > 1:
        warnings.warn(f"Ulam matrix has {n_comp} strongly connected components", IrreducibilityWarning, stacklevel=2)
    return UlamOperator(edges, mat, n_comp == 1)


def _power(mat, tol: float, max_iter: int) -> tuple[float, np.ndarray]:
    n = mat.shape[0]
    v = np.full(n, 1.0 / n)
    lam_prev = math.nan
    for _ in range(max_iter):
        w = mat @ v
        lam = float(w.sum())
        if not lam > 0:
            raise ConvergenceError("iterate collapsed to zero")
        w /= lam
        if abs(lam - lam_prev) <= tol * lam and float(np.abs(w - v).sum()) <= tol:
            return lam, w
        v, lam_prev = w, lam
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def leading_eigendata(
    op: UlamOperator | sparse.spmatrix | np.ndarray, tol: float = 1e-12, max_iter: int = 200_000
) -> tuple[float, np.ndarray, np.ndarray]:
    """Perron eigenvalue with right and left eigenvectors by power iteration.

    Returns ``(lam, v, u)`` with ``sum(v) = 1`` and ``sum(u * v) = 1``.
    Both iterations start from the uniform vector.
    """
    mat = op.matrix if isinstance(op, UlamOperator) else sparse.csr_matrix(op)
    lam, v = _power(mat, tol, max_iter)
    lam_left, u = _power(mat.T.tocsr(), tol, max_iter)
    if abs(lam_left - lam) > 1e3 * tol * lam + 1e-12:
        raise ConvergenceError(f"left and right Perron values disagree: {lam} vs {lam_left}")
    u = u / math.fsum((u * v).tolist())
    return lam, v, u


def equilibrium_estimate(op: UlamOperator, eigendata) -> MeasureEstimate:
    _, v, u = eigendata
    w = u * v
    w = w / math.fsum(w.tolist())
    return MeasureEstimate(op.edges[:-1].copy(), op.edges[1:].copy(), w)


def _integrate(mu: MeasureEstimate, g: Callable, avoid=(), radius: float = SINGULARITY_RADIUS):
    mid = mu.midpoints
    w = mu.weights
    avoid = np.asarray(avoid, dtype=float)
    excluded = 0.0
    if avoid.size:
        bad = np.min(np.abs(mid[:, None] - avoid[None, :]), axis=1) <= radius
        excluded = math.fsum(w[bad].tolist())
        if excluded > MAX_EXCLUDED_WEIGHT:
            raise SingularityError(f"excluding {excluded:.3g} of the mass near singular points")
        mid, w = mid[~bad], w[~bad]
        w = w / (1.0 - excluded)
    vals = np.asarray(g(mid), dtype=float) * w
    return math.fsum(vals.tolist()), excluded


def integrate(mu: MeasureEstimate, g: Callable, avoid=()) -> float:
    """``sum_i w_i g(mid_i)``; cells within 1e-9 of ``avoid`` are dropped and the rest renormalised."""
    return _integrate(mu, g, avoid)[0]


def lyapunov_exponent(f: IntervalMap, mu: MeasureEstimate) -> tuple[float, float]:
    """``(int log|f'| dmu, excluded weight)``."""
    return _integrate(mu, lambda x: np.log(np.abs(f.derivative(x))), f.critical_points)


def ruelle_ok(entropy: float, lyapunov: float, tol: float = RUELLE_TOLERANCE) -> bool:
    return entropy <= max(lyapunov, 0.0) + tol


def equilibrium_state(f: IntervalMap, phi: Potential, m: int, tol: float = 1e-12):
    """``(operator, eigendata, measure)`` for ``phi`` on ``m`` cells."""
    op = ulam_operator(f, phi, m)
    eig = leading_eigendata(op, tol)
    return op, eig, equilibrium_estimate(op, eig)


def equilibrium_report(
    f: IntervalMap,
    phi: Potential,
    m: int,
    pressure_used: Optional[float] = None,
    state=None,
) -> EquilibriumReport:
    """Entropy, Lyapunov exponent and Ruelle check for the estimated equilibrium state.

    Entropy comes from the pressure identity ``h = P - int phi``.  If
    ``pressure_used`` is omitted the Ulam pressure is used.
    """
    op, eig, mu = state if state is not None else equilibrium_state(f, phi, m)
    p_ulam = math.log(eig[0])
    p = p_ulam if pressure_used is None else float(pressure_used)
    avoid = () if phi.is_holder else f.critical_points
    int_phi, ex1 = _integrate(mu, phi._eval, avoid)
    chi, ex2 = lyapunov_exponent(f, mu)
    h = p - int_phi
    flags = {
        "entropy_positive": bool(h > 0),
        "lyapunov_positive": bool(chi > 0),
        "ruelle_ok": ruelle_ok(h, chi),
    }
    return EquilibriumReport(p_ulam, p, h, chi, int_phi, op.m, max(ex1, ex2), flags)
