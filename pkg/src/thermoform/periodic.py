"""Repelling periodic orbits, the periodic gap inequality and horseshoes.

At a repelling periodic point ``x0`` of period ``N`` the tree pressure
should beat the orbit average::

    limsup_n (1/n) log sum_{f^{-n} x0} exp(S_n phi) > (1/N) S_N phi(x0).

The argument behind this goes through an induced full 2-shift: two
disjoint intervals ``U0 (containing x0), U1`` inside ``V = B(x0, rho)``,
each mapped monotonically onto ``V`` by the same iterate ``f^K``.  The
certificate is searched for directly among the pull-backs of ``V`` and
then checked; the induced series uses ``phi_hat = S_K(phi) / K``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import CertificateQualityWarning, NotFoundError, PreconditionError
from .imfs import Imfs, ImfsBranch, _unique, monotone_inverse
from .interval_map import Interval, IntervalMap, PeriodicOrbit, periodic_points, pull_backs
from .potential import Potential, birkhoff_sum
from .pressure import log_sum_exp, tail_max, tree_pressure_series

REPELLING_SLACK = 1e-6
STRICT_SLACK = 1e-3
ENDPOINT_TOL = 1e-8
DISJOINT_GAP = 1e-9
CONTAIN_TOL = 1e-12


@dataclass
class PeriodicGapReport:
    x0: float
    period: int
    multiplier: float
    lhs: float
    rhs: float
    margin: float
    strict: bool
    values: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HorseshoeCertificate:
    x0: float
    K: int
    U0: Interval
    U1: Interval
    V: Interval
    N: int = 1

    def _onto(self, f: IntervalMap, U: Interval) -> bool:
        lo, hi = U
        ends = f.iterate(np.array([lo, hi]), self.K)
        if abs(min(ends) - self.V[0]) > ENDPOINT_TOL or abs(max(ends) - self.V[1]) > ENDPOINT_TOL:
            return False
        crit = f.critical_points
        for _ in range(self.K):
            if np.any((crit > lo) & (crit < hi)):
                return False
            lo, hi = f.image(lo, hi)
        return True

    def verify(self, f: IntervalMap) -> bool:
        """Disjointness, containment in ``V`` and monotone onto-ness of both pieces."""
        (a0, b0), (a1, b1) = sorted([self.U0, self.U1])
        if a1 - b0 <= DISJOINT_GAP:
            return False
        v0, v1 = self.V
        for lo, hi in (self.U0, self.U1):
            if lo < v0 - CONTAIN_TOL or hi > v1 + CONTAIN_TOL:
                return False
        return self._onto(f, self.U0) and self._onto(f, self.U1)

    def to_dict(self) -> dict:
        return {
            "x0": self.x0,
            "K": self.K,
            "U0": list(self.U0),
            "U1": list(self.U1),
            "V": list(self.V),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class InducedGapReport:
    x0: float
    K: int
    phi_hat_x0: float
    values: list[float]
    itinerary_counts: list[int]
    tail_max: float
    margin: float
    distortion_slack: float
    strict: bool

    def to_dict(self) -> dict:
        return asdict(self)


def repelling_orbits(f: IntervalMap, N_max: int) -> list[PeriodicOrbit]:
    """Orbits of exact period ``<= N_max`` with ``|multiplier| > 1 + 1e-6``.

    Interior orbits come first; within each group the order is by period
    and then by the canonical point.
    """
    out = []
    for N in range(1, N_max + 1):
        for orb in periodic_points(f, N):
            if orb.period == N and abs(orb.multiplier) > 1.0 + REPELLING_SLACK:
                out.append(orb)
    out.sort(key=lambda o: (o.at_endpoint, o.period, o.point))
    return out


def _require_repelling(orbit: PeriodicOrbit) -> None:
    if not abs(orbit.multiplier) > 1.0 + REPELLING_SLACK:
        raise PreconditionError(f"orbit of {orbit.point} is not repelling (multiplier {orbit.multiplier})")


def periodic_gap_check(
    f: IntervalMap, phi: Potential, orbit: PeriodicOrbit, n_max: int, threads: int = 1
) -> PeriodicGapReport:
    """Tree-pressure tail max at ``x0`` against the orbit average of ``phi``.

    Examples
    --------
    >>> from thermoform.potential import Constant
    >>> f = IntervalMap.chebyshev2()
    >>> orb = repelling_orbits(f, 1)[0]
    >>> r = periodic_gap_check(f, Constant(0.0), orb, 8)
    >>> round(r.margin, 6), r.strict
    (0.693147, True)
    """
    _require_repelling(orbit)
    x0 = float(orbit.point)
    N = int(orbit.period)
    series = tree_pressure_series(f, phi, x0, n_max, threads)
    rhs = float(birkhoff_sum(f, phi, x0, N)) / N
    margin = series.tail_max - rhs
    return PeriodicGapReport(
        x0, N, float(orbit.multiplier), series.tail_max, rhs, margin, margin > STRICT_SLACK, series.values
    )


def horseshoe_certificate(f: IntervalMap, orbit: PeriodicOrbit, rho: float, K_max: int) -> HorseshoeCertificate:
    """Search ``K = 2N, 4N, ...`` for a two-piece horseshoe inside ``B(x0, rho)``.

    ``U0`` is the pull-back component of ``V`` containing ``x0``; ``U1``
    is the leftmost other valid component.  Raises
    :class:`~thermoform.errors.NotFoundError` if nothing works up to
    ``K_max``.
    """
    _require_repelling(orbit)
    if orbit.at_endpoint:
        raise PreconditionError("no certificates at endpoint orbits")
    if rho <= 0:
        raise PreconditionError("rho must be positive")
    x0 = float(orbit.point)
    N = int(orbit.period)
    a, b = f.domain
    V = (x0 - rho, x0 + rho)
    if not (a < V[0] and V[1] < b):
        raise PreconditionError(f"B({x0}, {rho}) is not inside the interior of {f.domain}")
    K = 2 * N
    while K <= K_max:
        comps = pull_backs(f, V, K)
        home = None
        others = []
        for W in comps:
            if W[0] < V[0] - CONTAIN_TOL or W[1] > V[1] + CONTAIN_TOL:
                continue
            probe = HorseshoeCertificate(x0, K, W, W, V, N)
            if not probe._onto(f, W):
                continue
            if W[0] <= x0 <= W[1]:
                home = W
            else:
                others.append(W)
        if home is not None:
            for W in others:
                cert = HorseshoeCertificate(x0, K, home, W, V, N)
                if cert.verify(f):
                    return cert
        K += 2 * N
    raise NotFoundError(f"no horseshoe in B({x0}, {rho}) with K <= {K_max}")


def induced_imfs(f: IntervalMap, cert: HorseshoeCertificate) -> Imfs:
    """The two-branch system ``(f^K|U_i)^{-1}`` on ``V``."""
    branches = []
    for U in (cert.U0, cert.U1):
        inv = monotone_inverse(f, cert.K, *U)
        branches.append(ImfsBranch(cert.K, U, lambda pts, inv=inv: _unique(inv(pts))))
    return Imfs(f, cert.V, branches)


def induced_gap_series(
    f: IntervalMap, phi: Potential, cert: HorseshoeCertificate, m_max: int, probes: int = 5
) -> InducedGapReport:
    """Induced pressure ``q_m`` at ``x0`` against ``phi_hat(x0)``.

    All ``2^m`` compositions of the two inverse branches are applied to
    ``x0`` and, to measure distortion, to ``probes`` points spread over
    ``V``.  The distortion slack is the largest spread of the induced
    Birkhoff sum across one itinerary class.
    """
    if m_max < 1:
        raise PreconditionError("m_max must be >= 1")
    f.check_budget(m_max)
    K = cert.K
    inverses = [monotone_inverse(f, K, *U) for U in (cert.U0, cert.U1)]

    def phi_hat(y):
        return birkhoff_sum(f, phi, y, K) / K

    v0, v1 = cert.V
    starts = np.unique(np.concatenate([[cert.x0], np.linspace(v0, v1, probes)]))
    col = int(np.searchsorted(starts, cert.x0))
    pts = starts[None, :]
    sums = np.zeros_like(pts)
    values, counts = [], []
    slack = 0.0
    for m in range(1, m_max + 1):
        kids = [inv(pts) for inv in inverses]
        pts = np.concatenate(kids, axis=0)
        sums = phi_hat(pts) + np.concatenate([sums, sums], axis=0)
        s0 = sums[:, col]
        values.append(log_sum_exp(s0) / m)
        counts.append(int(_unique(pts[:, col]).size))
        slack = max(slack, float(np.max(np.max(sums, axis=1) - np.min(sums, axis=1))))
        if counts[-1] < 2**m:
            warnings.warn(
                f"only {counts[-1]} of {2**m} itineraries reached at induced depth {m}",
                CertificateQualityWarning,
                stacklevel=2,
            )
    ph0 = float(phi_hat(cert.x0))
    tm = tail_max(values)
    margin = tm - ph0
    return InducedGapReport(cert.x0, K, ph0, values, counts, tm, margin, slack, margin > STRICT_SLACK)


def default_orbit(f: IntervalMap, N: int, near: Optional[float] = None) -> PeriodicOrbit:
    """First interior repelling orbit of exact period ``N`` (or the one passing nearest ``near``)."""
    cands = [o for o in repelling_orbits(f, N) if o.period == N and not o.at_endpoint]
    if not cands:
        raise NotFoundError(f"no interior repelling orbit of period {N}")
    if near is None:
        return cands[0]
    best = min(cands, key=lambda o: min(abs(p - near) for p in o.orbit))
    i = int(np.argmin([abs(p - near) for p in best.orbit]))
    if i == 0:
        return best
    p = best.orbit[i]
    return PeriodicOrbit(p, best.period, best.multiplier, best.orbit[i:] + best.orbit[:i], best.at_endpoint)
