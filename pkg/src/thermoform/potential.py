"""Potentials on the interval and their Birkhoff sums.

Four kinds are supported: constants, polynomials, a rescaled cosine, and
the geometric family ``phi - t log|f'|``.  Everything except the
geometric kind carries a Hoelder modulus ``(alpha, C)``.  Potentials
combine linearly with ``+``, ``-`` and scalar ``*``.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import SingularityError, SpecParseError, UnsupportedError
from .interval_map import IntervalMap, _real_roots

SINGULARITY_RADIUS = 1e-9


class Potential:
    """Base class.  Subclasses implement ``_eval`` on float arrays."""

    kind = "abstract"
    is_holder = True

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        y = self._eval(xs)
        return float(y) if np.ndim(y) == 0 else y

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def holder(self) -> tuple[float, float]:
        raise UnsupportedError(f"{self.kind} potential has no Hoelder modulus")

    def describe(self) -> str:
        return self.kind

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Constant(float(other))
        if not isinstance(other, Potential):
            return NotImplemented
        return Combination(((1.0, self), (1.0, other)))

    __radd__ = __add__

    def __mul__(self, k):
        if not isinstance(k, (int, float)):
            return NotImplemented
        return Combination(((float(k), self),))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __repr__(self) -> str:
        return f"Potential({self.describe()})"


class Constant(Potential):
    kind = "const"

    def __init__(self, c: float):
        self.c = float(c)

    def _eval(self, x):
        return np.full(np.shape(x), self.c)

    def holder(self):
        return (1.0, 0.0)

    def describe(self):
        return f"const:{self.c!r}"


class Polynomial(Potential):
    """``c0 + c1 x + ...`` in the raw domain coordinate."""

    kind = "poly"

    def __init__(self, coeffs, domain=(0.0, 1.0)):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.domain = (float(domain[0]), float(domain[1]))

    def _eval(self, x):
        return P.polyval(x, self.coeffs)

    def holder(self):
        # Lipschitz constant = sup |phi'| on the domain, attained at an end or a zero of phi''
        if self.coeffs.size <= 1:
            return (1.0, 0.0)
        d1 = P.polyder(self.coeffs)
        a, b = self.domain
        cand = [a, b]
        if d1.size > 1:
            cand += [x for x, _ in _real_roots(P.polyder(d1), a, b)]
        return (1.0, float(max(abs(P.polyval(x, d1)) for x in cand)))

    def describe(self):
        return "poly:" + ",".join(repr(float(c)) for c in self.coeffs)


class Cosine(Potential):
    """``amplitude * cos(2 pi u)`` with ``u`` the domain coordinate rescaled to [0, 1]."""

    kind = "cos"

    def __init__(self, amplitude: float, domain=(0.0, 1.0)):
        self.amplitude = float(amplitude)
        self.domain = (float(domain[0]), float(domain[1]))

    def _eval(self, x):
        a, b = self.domain
        return self.amplitude * np.cos(2.0 * np.pi * (x - a) / (b - a))

    def holder(self):
        a, b = self.domain
        return (1.0, 2.0 * math.pi * abs(self.amplitude) / (b - a))

    def describe(self):
        return f"cos:{self.amplitude!r}"


class Geometric(Potential):
    """``base - t log|f'|``; singular at the critical points of ``f``."""

    kind = "geom"
    is_holder = False

    def __init__(self, f: IntervalMap, t: float, base: Optional[Potential] = None):
        if t < 0:
            raise ValueError("t must be >= 0")
        self.map = f
        self.t = float(t)
        self.base = base if base is not None else Constant(0.0)

    def _eval(self, x):
        if np.any(self.map.distance_to_critical(x) <= SINGULARITY_RADIUS):
            raise SingularityError("geometric potential evaluated within 1e-9 of a critical point")
        return self.base._eval(x) - self.t * np.log(np.abs(self.map.derivative(x)))

    def describe(self):
        return f"geom:{self.t!r}:{self.base.describe()}"


class Combination(Potential):
    """Finite linear combination of potentials."""

    kind = "combo"

    def __init__(self, terms):
        flat = []
        for w, p in terms:
            if isinstance(p, Combination):
                flat.extend((w * w2, p2) for w2, p2 in p.terms)
            else:
                flat.append((float(w), p))
        self.terms = tuple(flat)
        self.is_holder = all(p.is_holder for _, p in self.terms)

    def _eval(self, x):
        out = np.zeros(np.shape(x))
        for w, p in self.terms:
            out = out + w * p._eval(x)
        return out

    def holder(self):
        if not self.is_holder:
            raise UnsupportedError("combination contains a geometric potential")
        mods = [(w, p.holder(), getattr(p, "domain", None)) for w, p in self.terms]
        alpha = min(m[1][0] for m in mods)
        c = 0.0
        for w, (al, cc), dom in mods:
            diam = (dom[1] - dom[0]) if dom else 1.0
            c += abs(w) * cc * diam ** (al - alpha)
        return (alpha, c)

    def describe(self):
        return " + ".join(f"{w!r}*({p.describe()})" for w, p in self.terms)


def eval_potential(phi: Potential, x):
    return phi(x)


def holder_modulus(phi: Potential) -> tuple[float, float]:
    """Declared ``(alpha, C)``; exact derivative bound for poly and cosine kinds."""
    return phi.holder()


def birkhoff_sum(f: IntervalMap, phi: Potential, x, n: int):
    """``S_n(phi)(x) = sum_{j<n} phi(f^j x)``; vectorised over ``x``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    y = np.asarray(f._check_domain(x), dtype=float)
    total = np.zeros(y.shape)
    for j in range(n):
        total = total + phi._eval(y)
        if j + 1 < n:
            y = np.clip(f._f(y), *f.domain)
    return float(total) if total.ndim == 0 else total


def parse_potential(spec: str, f: IntervalMap) -> Potential:
    """Parse ``const:c``, ``cos:a``, ``poly:c0,c1,...`` or ``geom:t[:base]``."""
    s = spec.strip()
    head, _, rest = s.partition(":")
    try:
        if head == "const":
            return Constant(float(rest))
        if head == "cos":
            return Cosine(float(rest), f.domain)
        if head == "poly":
            coeffs = [float(t) for t in rest.split(",")]
            return Polynomial(coeffs, f.domain)
        if head == "geom":
            t_tok, _, base_tok = rest.partition(":")
            t = float(t_tok)
            if t < 0:
                raise SpecParseError(f"geom exponent {t_tok!r} must be >= 0")
            base = parse_potential(base_tok, f) if base_tok else None
            return Geometric(f, t, base)
    except SpecParseError:
        raise
    except ValueError as exc:
        raise SpecParseError(f"bad potential spec {spec!r}: {exc}") from exc
    raise SpecParseError(f"unknown potential kind {head!r} in {spec!r}")
