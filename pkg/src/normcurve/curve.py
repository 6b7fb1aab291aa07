"""
Polynomial curves ``h(w) = r w + a_0 + a_1/w + ... + a_n/w**n`` on ``|w| = 1``.

The curve type carries the forward moment map (exterior harmonic moments and
area), validity checks, the Schwarz function / reflection, interior moments
and a point-classification helper.  Exterior moments are computed exactly as
residues at infinity with :mod:`normcurve.laurent`; a trapezoidal contour
quadrature of the same integral is kept alongside as an independent check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Optional

import numpy as np
import shapely

from . import laurent as L
from .errors import InversionError, ToleranceError, ConvergenceError

DEFAULT_SAMPLES = 4096


class Region(IntEnum):
    OUTSIDE = -1
    BOUNDARY = 0
    INSIDE = 1


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Area ``pi*t0`` and exterior harmonic moments ``t_1 ... t_{n+1}``."""

    t0: float
    t: np.ndarray

    def __post_init__(self):
        t0 = float(self.t0)
        if not np.isfinite(t0) or t0 <= 0:
            raise ValueError(f"t0 must be a positive real number, got {self.t0!r}")
        t = np.atleast_1d(np.asarray(self.t, dtype=complex)).copy()
        if t.size == 0:
            t = np.zeros(1, dtype=complex)
        t.setflags(write=False)
        object.__setattr__(self, "t0", t0)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        """Degree of the curve these moments describe."""
        return len(self.t) - 1

    def moment(self, j: int) -> complex:
        """``t_j`` for ``j >= 1`` (zero beyond the stored range)."""
        return complex(self.t[j - 1]) if 1 <= j <= len(self.t) else 0j

    def to_json(self) -> dict:
        return {"t0": self.t0, "t": [[float(v.real), float(v.imag)] for v in self.t]}

    @classmethod
    def from_json(cls, d: dict) -> "MomentVector":
        if set(d) - {"t0", "t"}:
            raise ValueError(f"unknown moment fields: {sorted(set(d) - {'t0', 't'})}")
        return cls(d["t0"], _complex_list(d.get("t", [])))


@dataclass(frozen=True, eq=False)
class PolynomialCurve:
    """Parametrization ``h(w) = r w + sum_j a[j] w**(-j)``.

    Parameters
    ----------
    r : float
        Leading coefficient, ``r > 0``.
    a : array_like of complex
        Trailing coefficients ``a_0 ... a_n``.  Trailing zeros are allowed, so
        the nominal degree ``n`` may exceed the true one.
    """

    r: float
    a: np.ndarray

    def __post_init__(self):
        r = float(self.r)
        if not np.isfinite(r) or r <= 0:
            raise ValueError(f"r must be positive, got {self.r!r}")
        a = np.atleast_1d(np.asarray(self.a, dtype=complex)).copy()
        if a.size == 0:
            a = np.zeros(1, dtype=complex)
        a.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return len(self.a) - 1

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.a[1:])
        return 0 if nz.size == 0 else int(nz[-1]) + 1

    def __call__(self, w):
        return evaluate(self, w)

    def laurent(self) -> L.LaurentSeries:
        return L.LaurentSeries(-self.n, np.concatenate([self.a[::-1], [self.r]]))

    def conj(self) -> "PolynomialCurve":
        """The curve with conjugated coefficients (the function ``h-bar``)."""
        return PolynomialCurve(self.r, np.conj(self.a))

    def shifted(self, delta: complex) -> "PolynomialCurve":
        a = self.a.copy()
        a[0] += delta
        return PolynomialCurve(self.r, a)

    def scaled_params(self):
        """``(rho, alpha)`` with ``rho = r**2`` and ``alpha_j = a_j / r**j``."""
        j = np.arange(len(self.a))
        return self.r**2, self.a / self.r**j

    @classmethod
    def from_scaled(cls, rho: float, alpha) -> "PolynomialCurve":
        r = np.sqrt(rho)
        alpha = np.asarray(alpha, dtype=complex)
        return cls(r, alpha * r ** np.arange(len(alpha)))

    def to_json(self) -> dict:
        return {"r": self.r, "a": [[float(v.real), float(v.imag)] for v in self.a]}

    @classmethod
    def from_json(cls, d: dict) -> "PolynomialCurve":
        if set(d) - {"r", "a"}:
            raise ValueError(f"unknown curve fields: {sorted(set(d) - {'r', 'a'})}")
        return cls(d["r"], _complex_list(d.get("a", [])))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _complex_list(pairs) -> np.ndarray:
    out = []
    for p in pairs:
        if isinstance(p, (int, float)):
            out.append(complex(p))
        elif len(p) == 2:
            out.append(complex(float(p[0]), float(p[1])))
        else:
            raise ValueError(f"expected [re, im] pair, got {p!r}")
    return np.array(out, dtype=complex)


# ---------------------------------------------------------------------------
# evaluation


def evaluate(c: PolynomialCurve, w):
    """``h(w)``; ``w = 0`` is rejected."""
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0):
        raise ValueError("h is singular at w = 0")
    x = 1.0 / w
    acc = np.zeros_like(w)
    for aj in c.a[:0:-1]:
        acc = (acc + aj) * x
    out = c.r * w + c.a[0] + acc
    return out[()] if out.ndim == 0 else out


def derivative(c: PolynomialCurve, w):
    """``h'(w) = r - sum_j j a_j w**(-j-1)``."""
    w = np.asarray(w, dtype=complex)
    x = 1.0 / w
    acc = np.zeros_like(w)
    for j in range(c.n, 0, -1):
        acc = (acc + j * c.a[j]) * x
    out = c.r - acc * x
    return out[()] if out.ndim == 0 else out


def boundary(c: PolynomialCurve, samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    """Points ``h(exp(i theta))`` on a uniform ``theta`` grid."""
    w = np.exp(2j * np.pi * np.arange(samples) / samples)
    return evaluate(c, w)


# ---------------------------------------------------------------------------
# validity


def critical_radius(c: PolynomialCurve) -> float:
    """Largest modulus of a zero of ``h'``.

    Zeros of ``w**(n+1) h'(w) = r w**(n+1) - sum_j j a_j w**(n-j)`` from the
    companion matrix (``numpy.roots``).
    """
    poly = np.zeros(c.n + 2, dtype=complex)
    poly[0] = c.r
    for j in range(1, c.n + 1):
        poly[j + 1] = -j * c.a[j]
    roots = np.roots(poly)
    return float(np.max(np.abs(roots))) if roots.size else 0.0


def _winding(z: np.ndarray) -> float:
    d = np.angle(np.roll(z, -1) / z)
    return float(np.sum(d) / (2 * np.pi))


def tangent_winding(c: PolynomialCurve, samples: int = DEFAULT_SAMPLES) -> float:
    """Turning number of the tangent ``t(w) = i w h'(w)`` around the circle."""
    w = np.exp(2j * np.pi * np.arange(samples) / samples)
    return _winding(1j * w * derivative(c, w))


def is_simple_positively_oriented(c: PolynomialCurve, samples: int = DEFAULT_SAMPLES) -> bool:
    """Critical radius < 1, no self-intersection, tangent turning number +1."""
    if critical_radius(c) >= 1.0:
        return False
    z = boundary(c, samples)
    ring = shapely.linearrings(np.column_stack([z.real, z.imag]))
    if not shapely.is_simple(ring):
        return False
    return round(tangent_winding(c, samples)) == 1


def winding_number(c: PolynomialCurve, z0: complex = 0.0, samples: int = DEFAULT_SAMPLES) -> int:
    z = boundary(c, samples) - z0
    if np.any(z == 0):
        return 0
    return int(round(_winding(z)))


def encloses_origin(c: PolynomialCurve, samples: int = DEFAULT_SAMPLES) -> bool:
    return winding_number(c, 0.0, samples) == 1


def diameter(c: PolynomialCurve, samples: int = 512) -> float:
    z = boundary(c, samples)
    return float(np.max(np.abs(z[:, None] - z[None, :])))


# ---------------------------------------------------------------------------
# moments


def default_order(n: int) -> int:
    """Truncation order for ``h**-j``: the ``n + 1`` exponents the residue
    needs plus a safety margin of ``4 (n + 2)``."""
    return (n + 1) + 4 * (n + 2)


def forward_moments(c: PolynomialCurve, order: Optional[int] = None) -> MomentVector:
    """Area and exterior moments of the curve.

    ``t0 = r**2 - sum j |a_j|**2`` and ``j t_j`` is the coefficient of
    ``w**-1`` in ``h-bar(1/w) h'(w) h(w)**-j`` expanded at infinity, for
    ``j = 1 .. n+1``.  For curves not encircling the origin this is the
    polynomial extension of the moment map.
    """
    t0, t = forward_moments_raw(c, order)
    if t0 <= 0:
        raise ValueError(f"curve has non-positive area parameter t0 = {t0:g}")
    return MomentVector(t0, t)


def forward_moments_raw(c: PolynomialCurve, order: Optional[int] = None):
    """Like :func:`forward_moments` but returns ``(t0, t)`` without the
    positivity check on ``t0`` (used inside Newton iterations)."""
    n = c.n
    if order is None:
        order = default_order(n)
    if order < n + 1:
        raise L.TruncationError("order too small to resolve the residues")
    h = c.laurent()
    q = L.mul(L.reflect_conj(h), L.derivative(h))
    g = L.inv_power(h, 1, order)
    t = np.empty(n + 1, dtype=complex)
    hj = g
    for j in range(1, n + 2):
        if j > 1:
            hj = L.mul(hj, g, keep_from=-order)
        t[j - 1] = L.residue_of_product(q, hj) / j
    j = np.arange(1, n + 1)
    return c.r**2 - float(np.sum(j * np.abs(c.a[1:]) ** 2)), t


def zero_radius(c: PolynomialCurve) -> float:
    """Largest modulus of a zero of ``h`` (where contours must not pass)."""
    poly = np.concatenate([[c.r], c.a])
    roots = np.roots(poly)
    return float(np.max(np.abs(roots))) if roots.size else 0.0


def forward_moments_quadrature(
    c: PolynomialCurve,
    j: int,
    radius: float = 1.0,
    tol: float = 1e-13,
    nodes: int = 64,
    max_nodes: int = 1 << 16,
) -> complex:
    """``t_j`` by the trapezoidal rule for the contour integral

    ``j t_j = (1/2 pi i) oint_{|w|=radius} h-bar(1/w) h'(w) h(w)**-j dw``.

    The node count doubles until two successive values agree to ``tol``
    (relative to ``r``); :class:`ConvergenceError` otherwise.
    """
    if radius < 1.0:
        raise ValueError("contour radius must be >= 1")
    if j < 1:
        raise ValueError("j must be >= 1")
    hbar = c.conj()

    def trap(m):
        w = radius * np.exp(2j * np.pi * np.arange(m) / m)
        f = evaluate(hbar, 1.0 / w) * derivative(c, w) * evaluate(c, w) ** (-j)
        # dw = i w dtheta
        return complex(np.mean(f * w)) / j

    m = nodes
    prev = trap(m)
    scale = max(c.r, 1e-300) ** (2 - j)
    while m < max_nodes:
        m *= 2
        cur = trap(m)
        if abs(cur - prev) <= tol * max(scale, abs(cur)):
            return cur
        prev = cur
    raise ConvergenceError(f"contour quadrature for t_{j} did not converge with {m} nodes")


def area_green(c: PolynomialCurve, samples: int = DEFAULT_SAMPLES) -> float:
    """Enclosed area ``(1/2) oint Im(conj(z) dz)`` by the trapezoidal rule."""
    w = np.exp(2j * np.pi * np.arange(samples) / samples)
    z = evaluate(c, w)
    dz = 1j * w * derivative(c, w)
    return float(0.5 * np.mean(np.imag(np.conj(z) * dz)) * 2 * np.pi)


def interior_moments(c: PolynomialCurve, kmax: int, tol: float = 1e-9) -> np.ndarray:
    """``v_k = (1/pi) int_{D+} z**k d^2z`` for ``k = 0 .. kmax``.

    Read off the expansion of the Schwarz function at infinity: ``v_k`` is
    the residue of ``h-bar(1/w) h(w)**k h'(w)``.  A contour quadrature of
    ``(1/2 pi i) oint conj(z) z**k dz`` cross-checks every value;
    disagreement beyond ``tol`` (relative) raises :class:`ToleranceError`.
    """
    h = c.laurent()
    q = L.mul(L.reflect_conj(h), L.derivative(h))
    out = np.empty(kmax + 1, dtype=complex)
    hk = L.LaurentSeries.monomial(0, 1.0)
    for k in range(kmax + 1):
        out[k] = L.residue_of_product(q, hk)
        hk = L.mul(hk, h)
    # oracle: quadrature on the sampled boundary
    m = 2 * (kmax + 2) * (c.n + 2) + 64
    w = np.exp(2j * np.pi * np.arange(m) / m)
    z = evaluate(c, w)
    dz = w * derivative(c, w)  # dz / (i dtheta)
    rad = float(np.max(np.abs(z)))
    for k in range(kmax + 1):
        vq = complex(np.mean(np.conj(z) * z**k * dz))
        scale = max(abs(out[0]), 1e-300) * rad**k
        if abs(vq - out[k]) > tol * scale:
            raise ToleranceError(
                f"interior moment v_{k}: residue {out[k]:.12g} vs quadrature {vq:.12g}"
            )
    return out


def centroid(c: PolynomialCurve) -> complex:
    v = interior_moments(c, 1)
    return complex(v[1] / v[0])


def area_integral(
    c: PolynomialCurve,
    f: Callable[[np.ndarray], np.ndarray],
    apex: complex = 0.0,
    n_radial: int = 48,
    n_angular: int = 512,
) -> complex:
    """``int_{D+} f d^2z`` over the cone map ``(s, theta) -> apex + s (h - apex)``.

    The Jacobian is ``s * Im(conj(h - apex) dh/dtheta)``; for any apex the
    signed cones cover the interior exactly once, so ``f`` only has to be
    smooth on the cones.  Gauss-Legendre in ``s``, trapezoid in ``theta``.
    """
    x, wx = np.polynomial.legendre.leggauss(n_radial)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * wx
    w = np.exp(2j * np.pi * np.arange(n_angular) / n_angular)
    g = evaluate(c, w) - apex
    jac = np.imag(np.conj(g) * (1j * w * derivative(c, w)))
    pts = apex + s[:, None] * g[None, :]
    vals = f(pts)
    return complex(np.sum(ws[:, None] * s[:, None] * vals * jac[None, :]) * 2 * np.pi / n_angular)


# ---------------------------------------------------------------------------
# inversion, Schwarz function, reflection


def _newton_invert(c: PolynomialCurve, z: np.ndarray, w: np.ndarray, iters: int = 60):
    for _ in range(iters):
        step = (evaluate(c, w) - z) / derivative(c, w)
        w = w - step
        if np.all(np.abs(step) <= 1e-15 * np.abs(w)):
            break
    return w


def invert(
    c: PolynomialCurve,
    z,
    rmin: Optional[float] = None,
    rmax: Optional[float] = None,
) -> np.ndarray:
    """Solve ``h(w) = z`` for ``w`` with ``rmin < |w| < rmax``.

    Defaults to the reflection annulus ``R < |w| < 1/R``.  Newton from the
    far-field seed ``(z - a_0)/r``; points where that fails are resolved from
    all ``n + 1`` roots of ``r w**(n+1) + (a_0 - z) w**n + ... + a_n``.
    Raises :class:`InversionError` if some ``z`` has no preimage there.
    """
    R = critical_radius(c)
    if rmin is None:
        rmin = R
    if rmax is None:
        rmax = np.inf if R == 0 else 1.0 / R
    z = np.asarray(z, dtype=complex)
    zf = z.ravel()
    w = _newton_invert(c, zf, (zf - c.a[0]) / c.r)
    scale = np.abs(zf) + c.r
    with np.errstate(all="ignore"):
        ok = (
            np.isfinite(w)
            & (np.abs(evaluate(c, np.where(w == 0, 1, w)) - zf) <= 1e-11 * scale)
            & (np.abs(w) > rmin)
            & (np.abs(w) < rmax)
        )
    for i in np.flatnonzero(~ok):
        poly = np.concatenate([[c.r], c.a]).astype(complex)
        poly[1] -= zf[i]
        roots = np.roots(poly)
        roots = roots[(np.abs(roots) > rmin) & (np.abs(roots) < rmax)]
        if roots.size == 0:
            raise InversionError(f"h(w) = {zf[i]:.6g} has no solution with {rmin:.6g} < |w| < {rmax:.6g}")
        wi = roots[np.argmax(np.abs(roots))]
        w[i] = _newton_invert(c, np.array([zf[i]]), np.array([wi]), iters=8)[0]
    w = w.reshape(z.shape)
    return w[()] if w.ndim == 0 else w


def schwarz(c: PolynomialCurve, z):
    """Schwarz function ``S(z) = h-bar(1 / h^{-1}(z))``; equals ``conj(z)`` on the curve."""
    w = invert(c, z)
    return evaluate(c.conj(), 1.0 / w)


def reflection(c: PolynomialCurve, z):
    """Schwarz reflection ``rho(z) = h(1 / conj(h^{-1}(z)))``, an involution fixing the curve."""
    w = invert(c, z)
    return evaluate(c, 1.0 / np.conj(w))


# ---------------------------------------------------------------------------
# point classification


def _project(c: PolynomialCurve, z: np.ndarray, theta: np.ndarray, iters: int = 30):
    """Newton on ``d/dtheta |h(e^{i theta}) - z|**2 = 0``."""
    for _ in range(iters):
        w = np.exp(1j * theta)
        d = evaluate(c, w) - z
        hp = derivative(c, w)
        z1 = 1j * w * hp  # dh/dtheta
        # second derivative of h(e^{i theta}) in theta
        hpp = _second_derivative(c, w)
        z2 = -w * hp - w**2 * hpp
        g = np.real(np.conj(d) * z1)
        gp = np.abs(z1) ** 2 + np.real(np.conj(d) * z2)
        step = np.where(gp > 0, g / np.where(gp > 0, gp, 1), 0.0)
        step = np.clip(step, -0.1, 0.1)
        theta = theta - step
        if np.all(np.abs(step) < 1e-15):
            break
    return theta


def _second_derivative(c: PolynomialCurve, w):
    x = 1.0 / w
    acc = np.zeros_like(w)
    for j in range(c.n, 0, -1):
        acc = (acc + j * (j + 1) * c.a[j]) * x
    return acc * x * x


def classify(
    c: PolynomialCurve,
    z,
    band: float = 1e-9,
    samples: int = DEFAULT_SAMPLES,
) -> np.ndarray:
    """Tri-state classification of points against the curve.

    A point is BOUNDARY when its distance to the curve is at most
    ``band * diameter``.  Far points are decided on the sampled polygon;
    points within a few chord lengths are projected onto the exact curve
    and decided by the side of the outward normal ``w h'(w)``.
    """
    z = np.asarray(z, dtype=complex)
    zf = z.ravel()
    zb = boundary(c, samples)
    diam = diameter(c)
    ring = shapely.linearrings(np.column_stack([zb.real, zb.imag]))
    poly = shapely.polygons(ring)
    shapely.prepare(poly)
    inside = shapely.contains_xy(poly, zf.real, zf.imag)
    out = np.where(inside, Region.INSIDE, Region.OUTSIDE).astype(np.int8)
    chord = float(np.max(np.abs(np.diff(np.append(zb, zb[0])))))
    # points outside a 5-chord buffer are at least 4 chords from the curve
    band_geom = shapely.buffer(ring, 5 * chord)
    shapely.prepare(band_geom)
    near = np.flatnonzero(shapely.contains_xy(band_geom, zf.real, zf.imag))
    if near.size:
        zn = zf[near]
        # nearest boundary sample, in chunks to bound memory
        k = np.concatenate([np.argmin(np.abs(zn[i:i + 4096, None] - zb[None, :]), axis=1)
                            for i in range(0, zn.size, 4096)])
        theta = _project(c, zn, 2 * np.pi * k / samples)
        w = np.exp(1j * theta)
        d = zn - evaluate(c, w)
        side = np.real(d * np.conj(w * derivative(c, w)))
        true_dist = np.abs(d)
        out[near] = np.where(side > 0, Region.OUTSIDE, Region.INSIDE)
        out[near[true_dist <= band * diam]] = Region.BOUNDARY
    out = out.reshape(z.shape)
    return out


def contains(c: PolynomialCurve, z, band: float = 1e-9) -> Region:
    """Classify one point: ``Region.INSIDE``, ``OUTSIDE`` or ``BOUNDARY``."""
    return Region(int(classify(c, np.array([z]), band)[0]))
