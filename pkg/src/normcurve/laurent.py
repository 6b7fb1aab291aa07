"""
Truncated Laurent series in one variable ``w`` with complex coefficients.

A series stores the coefficients of ``w**lo ... w**hi`` together with a
truncation marker ``trunc``: every exponent below ``trunc`` has been
discarded (its coefficient is unknown, not zero).  ``trunc=None`` marks an
exact Laurent polynomial.  Arithmetic propagates the marker so that
:func:`residue` can refuse to read a coefficient that truncation has polluted.

Expansions are around ``w = infinity``: the series are meant to be read as
``c_hi w**hi + c_{hi-1} w**(hi-1) + ...`` with the tail towards negative
exponents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular


class TruncationError(ValueError):
    """Requested coefficient lies below the series' valid window."""


@dataclass(frozen=True, eq=False)
class LaurentSeries:
    """Immutable truncated Laurent series.

    Parameters
    ----------
    lo : int
        Exponent of ``coeffs[0]``.
    coeffs : ndarray of complex
        Coefficients of ``w**lo, ..., w**hi``.
    trunc : int or None
        Lowest exponent whose coefficient is known.  ``None`` means exact.
    """

    lo: int
    coeffs: np.ndarray
    trunc: Optional[int] = None

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).ravel()
        lo = int(self.lo)
        trunc = None if self.trunc is None else int(self.trunc)
        if trunc is not None and lo < trunc:
            c = c[trunc - lo:]
            lo = trunc
        # drop exactly-zero top terms, keep at least one coefficient
        nz = np.flatnonzero(c)
        if nz.size == 0:
            c = np.zeros(1, dtype=complex)
            lo = lo if trunc is None else max(lo, trunc)
        else:
            c = c[: nz[-1] + 1]
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "trunc", trunc)

    # -- construction -------------------------------------------------------

    @classmethod
    def monomial(cls, k: int, c: complex = 1.0) -> "LaurentSeries":
        return cls(k, np.array([c], dtype=complex))

    @classmethod
    def from_dict(cls, terms: dict, trunc: Optional[int] = None) -> "LaurentSeries":
        """Build from ``{exponent: coefficient}``."""
        if not terms:
            return cls(0, np.zeros(1), trunc)
        lo, hi = min(terms), max(terms)
        c = np.zeros(hi - lo + 1, dtype=complex)
        for k, v in terms.items():
            c[k - lo] = v
        return cls(lo, c, trunc)

    # -- inspection -----------------------------------------------------------

    @property
    def hi(self) -> int:
        return self.lo + len(self.coeffs) - 1

    @property
    def exact(self) -> bool:
        return self.trunc is None

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def valid_at(self, k: int) -> bool:
        return self.trunc is None or k >= self.trunc

    def coeff(self, k: int) -> complex:
        """Coefficient of ``w**k``; raises if ``k`` was truncated away."""
        if not self.valid_at(k):
            raise TruncationError(
                f"coefficient of w^{k} requested but terms below w^{self.trunc} were discarded"
            )
        if self.lo <= k <= self.hi:
            return complex(self.coeffs[k - self.lo])
        return 0j

    def truncate(self, k: int) -> "LaurentSeries":
        """Discard every exponent below ``k``."""
        t = k if self.trunc is None else max(k, self.trunc)
        return LaurentSeries(self.lo, self.coeffs, t)

    def __call__(self, w):
        """Evaluate the stored terms at ``w`` (array-friendly)."""
        w = np.asarray(w, dtype=complex)
        # Horner in w and 1/w separately keeps cancellation small
        out = np.zeros_like(w)
        for i in range(len(self.coeffs) - 1, -1, -1):
            k = self.lo + i
            if self.coeffs[i] != 0:
                out = out + self.coeffs[i] * w**k
        return out

    def allclose(self, other: "LaurentSeries", atol: float = 1e-12) -> bool:
        lo = min(self.lo, other.lo)
        hi = max(self.hi, other.hi)
        t = _max_trunc(self.trunc, other.trunc)
        if t is not None:
            lo = max(lo, t)
        return all(abs(self.coeff(k) - other.coeff(k)) <= atol for k in range(lo, hi + 1))

    def __repr__(self):
        terms = [f"({c:.6g})w^{self.lo + i}" for i, c in enumerate(self.coeffs) if c != 0]
        tail = "" if self.trunc is None else f" + O(w^{self.trunc - 1})"
        return "LaurentSeries(" + (" + ".join(reversed(terms)) or "0") + tail + ")"

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __neg__(self):
        return LaurentSeries(self.lo, -self.coeffs, self.trunc)

    def __sub__(self, other):
        return add(self, -_coerce(other))

    def __rsub__(self, other):
        return add(_coerce(other), -self)

    def __mul__(self, other):
        if np.isscalar(other):
            return LaurentSeries(self.lo, self.coeffs * other, self.trunc)
        return mul(self, other)

    def __rmul__(self, other):
        return self * other


def _coerce(x) -> LaurentSeries:
    if isinstance(x, LaurentSeries):
        return x
    return LaurentSeries.monomial(0, complex(x))


def _max_trunc(a: Optional[int], b: Optional[int]) -> Optional[int]:
    if a is None:
        return b
    if b is None:
        return a
    return max(a, b)


def add(a: LaurentSeries, b: LaurentSeries) -> LaurentSeries:
    """Coefficientwise sum, valid on the intersection of the two windows."""
    lo = min(a.lo, b.lo)
    hi = max(a.hi, b.hi)
    c = np.zeros(hi - lo + 1, dtype=complex)
    c[a.lo - lo: a.hi - lo + 1] += a.coeffs
    c[b.lo - lo: b.hi - lo + 1] += b.coeffs
    return LaurentSeries(lo, c, _max_trunc(a.trunc, b.trunc))


def mul(a: LaurentSeries, b: LaurentSeries, keep_from: Optional[int] = None) -> LaurentSeries:
    """Cauchy product.

    If ``a`` is known down to ``A`` its error terms have exponents ``< A``;
    multiplied by ``b`` (top exponent ``b.hi``) they pollute exponents
    ``< A + b.hi``.  The result is therefore valid from
    ``max(A + b.hi, B + a.hi)``.  ``keep_from`` additionally discards
    everything below the given exponent, saving work when only the top of
    the product is needed.
    """
    trunc = None
    if a.trunc is not None:
        trunc = a.trunc + b.hi
    if b.trunc is not None:
        trunc = _max_trunc(trunc, b.trunc + a.hi)
    if keep_from is not None:
        trunc = _max_trunc(trunc, keep_from)
    ca, cb = a.coeffs, b.coeffs
    lo = a.lo + b.lo
    if trunc is not None and trunc > lo:
        # only products landing at exponent >= trunc are needed
        skip = trunc - lo
        na, nb = len(ca), len(cb)
        if skip >= na + nb - 1:
            return LaurentSeries(trunc, np.zeros(1), trunc)
        ca = ca[max(0, skip - nb + 1):]
        cb = cb[max(0, skip - na + 1):]
        lo = a.lo + max(0, skip - nb + 1) + b.lo + max(0, skip - na + 1)
    return LaurentSeries(lo, np.convolve(ca, cb), trunc)


def inv_power(a: LaurentSeries, j: int, order: int) -> LaurentSeries:
    """``a**(-j)`` expanded around infinity, correct down to ``w**(-order)``.

    ``a`` is written ``c w**p (1 + u)`` with ``u`` made of negative powers;
    ``(1 + u)**(-1)`` is the geometric series ``sum (-u)**m``, obtained here
    as the solution of a unit lower-triangular Toeplitz system, then raised
    to the ``j``-th power by repeated multiplication.
    """
    if j < 1:
        raise ValueError("j must be a positive integer")
    if a.is_zero:
        raise ZeroDivisionError("series has no nonzero leading term")
    p = a.hi
    c = a.coeffs[-1]
    if not a.valid_at(p):
        raise TruncationError("leading coefficient lies below the valid window")
    # u in the variable x = 1/w: u_m is the coefficient of x**m, m >= 1
    m_max = order - p * j
    if m_max < 0:
        return LaurentSeries(-order, np.zeros(1), -order)
    known = m_max if a.trunc is None else min(m_max, p - a.trunc)
    f = np.zeros(m_max + 1, dtype=complex)
    rev = a.coeffs[::-1] / c  # rev[m] is coefficient of w**(p-m)
    n_copy = min(len(rev), known + 1)
    f[:n_copy] = rev[:n_copy]
    # lower-triangular Toeplitz matrix of (1 + u)
    idx = np.subtract.outer(np.arange(m_max + 1), np.arange(m_max + 1))
    T = np.where(idx >= 0, f[np.clip(idx, 0, None)], 0)
    e0 = np.zeros(m_max + 1, dtype=complex)
    e0[0] = 1.0
    g = solve_triangular(T, e0, lower=True, unit_diagonal=True)
    gj = g
    for _ in range(j - 1):
        gj = np.convolve(gj, g)[: m_max + 1]
    gj = gj[: known + 1] * c ** (-j)
    # back to exponents of w: x**m -> w**(-p*j - m)
    top = -p * j
    lo = top - known
    trunc = max(-order, lo)
    return LaurentSeries(lo, gj[::-1], trunc)


def residue(a: LaurentSeries) -> complex:
    """Coefficient of ``w**-1``."""
    return a.coeff(-1)


def residue_of_product(a: LaurentSeries, b: LaurentSeries) -> complex:
    """Coefficient of ``w**-1`` in ``a*b`` without forming the product."""
    # validity of the product at exponent -1
    if a.trunc is not None and -1 < a.trunc + b.hi:
        raise TruncationError("residue of product falls below the valid window")
    if b.trunc is not None and -1 < b.trunc + a.hi:
        raise TruncationError("residue of product falls below the valid window")
    total = 0j
    # sum over k of a_k b_{-1-k}
    k_lo = max(a.lo, -1 - b.hi)
    k_hi = min(a.hi, -1 - b.lo)
    if k_lo > k_hi:
        return 0j
    ak = a.coeffs[k_lo - a.lo: k_hi - a.lo + 1]
    bk = b.coeffs[(-1 - k_hi) - b.lo: (-1 - k_lo) - b.lo + 1][::-1]
    total = complex(np.dot(ak, bk))
    return total


def derivative(a: LaurentSeries) -> LaurentSeries:
    """Termwise d/dw."""
    k = np.arange(a.lo, a.hi + 1)
    trunc = None if a.trunc is None else a.trunc - 1
    return LaurentSeries(a.lo - 1, a.coeffs * k, trunc)


def reflect_conj(a: LaurentSeries) -> LaurentSeries:
    """The series ``conj(a)(1/w)``: ``c_k w**k -> conj(c_k) w**(-k)``.

    Only defined for exact series (the reflected tail would sit at the top).
    """
    if not a.exact:
        raise TruncationError("cannot reflect a truncated series")
    return LaurentSeries(-a.hi, np.conj(a.coeffs[::-1]))
