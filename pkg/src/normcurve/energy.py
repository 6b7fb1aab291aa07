"""
Potential, energy field and the variational verification.

For a curve bounding ``D+`` the field is

    E(z) = V(z) + (2 / (pi t0)) * (L(0) - L(z)),   L(x) = int_{D+} log|x - zeta| d^2 zeta,

normalised so that ``E`` vanishes on ``D+`` when the curve solves the
moment problem for ``V``.  Three routes to ``E`` are provided:

* :func:`energy_quadrature`: two-dimensional product quadrature over cones
  with apex at the evaluation point (slow oracle);
* :func:`energy_boundary_integral`: the radial part of the same cone
  integral done analytically, leaving a periodic integral in ``theta``;
* :func:`energy_exterior_closed_form`: the exact exterior expression from the
  antiderivative of ``conj(h)(1/w) h'(w)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import shapely
from scipy.integrate import quad

from . import laurent as L
from .curve import (
    MomentVector,
    PolynomialCurve,
    Region,
    area_integral,
    classify,
    derivative,
    evaluate,
    invert,
    reflection,
)
from .errors import ToleranceError


@dataclass(frozen=True, eq=False)
class Potential:
    """``V(z) = (|z|^2 - 2 Re sum_k t_k z^k) / t0``."""

    t0: float
    t: np.ndarray

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        object.__setattr__(self, "t", np.atleast_1d(np.asarray(self.t, dtype=complex)))

    @classmethod
    def from_moments(cls, m: MomentVector) -> "Potential":
        return cls(m.t0, m.t)

    def moments(self) -> MomentVector:
        return MomentVector(self.t0, self.t)

    def harmonic_part(self, z):
        """``p(z) = sum_k t_k z^k`` (Horner)."""
        z = np.asarray(z, dtype=complex)
        acc = np.zeros_like(z)
        for tk in self.t[::-1]:
            acc = (acc + tk) * z
        return acc

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        out = (np.abs(z) ** 2 - 2 * np.real(self.harmonic_part(z))) / self.t0
        return out[()] if out.ndim == 0 else out


def potential_value(p: Potential, z):
    return p.value(z)


# ---------------------------------------------------------------------------
# domain


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Closed disk ``|z - center| <= radius``, or a polygon if ``polygon`` is set."""

    center: complex = 0.0
    radius: float = 1.0
    polygon: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.polygon is None:
            if not self.radius > 0:
                raise ValueError("domain radius must be positive")
        else:
            poly = np.asarray(self.polygon, dtype=complex)
            if poly.ndim != 1 or poly.size < 3:
                raise ValueError("polygon needs at least three vertices")
            object.__setattr__(self, "polygon", poly)

    @property
    def is_disk(self) -> bool:
        return self.polygon is None

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        if self.is_disk:
            return np.abs(z - self.center) <= self.radius
        g = shapely.polygons(np.column_stack([self.polygon.real, self.polygon.imag]))
        out = shapely.intersects_xy(g, z.real, z.imag)
        return np.asarray(out).reshape(z.shape)

    def bbox(self):
        """``(xmin, xmax, ymin, ymax)``."""
        if self.is_disk:
            c = complex(self.center)
            return (c.real - self.radius, c.real + self.radius,
                    c.imag - self.radius, c.imag + self.radius)
        p = self.polygon
        return (p.real.min(), p.real.max(), p.imag.min(), p.imag.max())

    def to_json(self) -> dict:
        c = complex(self.center)
        if self.is_disk:
            return {"center": [c.real, c.imag], "radius": self.radius}
        return {"polygon": [[v.real, v.imag] for v in self.polygon]}

    @classmethod
    def from_json(cls, d: dict) -> "DomainSpec":
        allowed = {"center", "radius", "polygon"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown domain fields: {sorted(extra)}")
        if "polygon" in d:
            if "radius" in d:
                raise ValueError("domain is either a disk or a polygon, not both")
            return cls(polygon=np.array([complex(x, y) for x, y in d["polygon"]]))
        cx, cy = d.get("center", [0.0, 0.0])
        return cls(complex(cx, cy), float(d["radius"]))


def positivity_radius(p: Potential, center: complex = 0.0, rmax: Optional[float] = None,
                      n_radial: int = 2000, n_angular: int = 720) -> float:
    """Largest radius ``rho`` with ``t0 V > 0`` on ``0 < |z - center| < rho``.

    Scanned on a polar grid up to ``rmax`` (default ``100 sqrt(t0)``);
    returns ``rmax`` if no sign change is found.
    """
    if rmax is None:
        rmax = 100.0 * np.sqrt(p.t0)
    rs = np.linspace(rmax / n_radial, rmax, n_radial)
    th = 2 * np.pi * np.arange(n_angular) / n_angular
    z = center + rs[:, None] * np.exp(1j * th)[None, :]
    bad = np.min(p.t0 * p.value(z), axis=1) <= 0
    if not bad.any():
        return float(rmax)
    i = int(np.argmax(bad))
    return float(rs[i - 1]) if i > 0 else 0.0


def default_domain(p: Potential, center: complex = 0.0, safety: float = 0.95,
                   cap: float = 5.0) -> DomainSpec:
    """Disk of radius ``safety * positivity_radius``, capped at ``cap * sqrt(t0)``."""
    limit = cap * np.sqrt(p.t0)
    rho = positivity_radius(p, center, rmax=limit / safety)
    return DomainSpec(center, min(safety * rho, limit))


# ---------------------------------------------------------------------------
# the log potential of D+


def _boundary_data(c: PolynomialCurve, m: int):
    w = np.exp(2j * np.pi * np.arange(m) / m)
    return evaluate(c, w), 1j * w * derivative(c, w)


def _log_potential_trap(gamma, dgamma, x):
    """``L(x)`` for each ``x`` with an ``m``-node trapezoid (vectorised)."""
    d = gamma[None, :] - x[:, None]
    jac = np.imag(np.conj(d) * dgamma[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = jac * (0.5 * np.log(np.abs(d)) - 0.25)
    integrand = np.where(np.abs(d) == 0, 0.0, integrand)
    return integrand.mean(axis=1) * 2 * np.pi


def log_potential(c: PolynomialCurve, x, tol: float = 1e-12, m0: int = 512,
                  m_max: int = 1 << 15) -> np.ndarray:
    """``int_{D+} log|x - zeta| d^2 zeta`` by the cone-map boundary integral.

    The radial integral is exact: ``L(x) = int J(theta) (log|gamma - x| / 2 - 1/4) dtheta``
    with ``J = Im(conj(gamma - x) gamma')``.  The periodic ``theta`` integral
    uses trapezoid rules with node doubling (the error estimate is the change
    from the half rule); points close to the curve that do not settle by
    ``m_max`` nodes are finished by adaptive quadrature split at the nearest
    boundary parameter.
    """
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    out = np.empty(x.shape, dtype=float)
    flat = x.ravel()
    res = np.empty(flat.size)
    todo = np.arange(flat.size)
    m = m0
    g, dg = _boundary_data(c, m)
    prev = _log_potential_trap(g, dg, flat)
    scale = max(1.0, np.pi * c.r**2)
    while todo.size and m < m_max:
        m *= 2
        g, dg = _boundary_data(c, m)
        cur = _log_potential_trap(g, dg, flat[todo])
        done = np.abs(cur - prev) <= tol * scale
        res[todo[done]] = cur[done]
        todo = todo[~done]
        prev = cur[~done]
    if todo.size:
        gb, _ = _boundary_data(c, 4096)
        for i in todo:
            xi = flat[i]
            th0 = 2 * np.pi * int(np.argmin(np.abs(gb - xi))) / 4096

            def f(th, xi=xi):
                w = np.exp(1j * th)
                d = evaluate(c, w) - xi
                jac = np.imag(np.conj(d) * 1j * w * derivative(c, w))
                ad = abs(d)
                return 0.0 if ad == 0 else jac * (0.5 * np.log(ad) - 0.25)

            # integrate over one period starting at the nearest point
            v1, e1 = quad(f, th0, th0 + np.pi, limit=400, epsabs=tol * scale, epsrel=0)
            v2, e2 = quad(f, th0 + np.pi, th0 + 2 * np.pi, limit=400, epsabs=tol * scale, epsrel=0)
            if e1 + e2 > 100 * tol * scale:
                raise ToleranceError(f"log potential at {xi} did not converge (error {e1 + e2:.2e})")
            res[i] = v1 + v2
    out[...] = res.reshape(x.shape)
    return out


def log_potential_quadrature(c: PolynomialCurve, x: complex, levels: int = 24,
                             nodes: int = 16, n_angular: int = 1024) -> float:
    """Slow 2-D oracle for ``L(x)``: graded Gauss-Legendre in ``s`` times trapezoid in ``theta``.

    The cones have their apex at ``x``, so the logarithmic singularity sits at
    ``s = 0`` where the radial panels are refined geometrically.
    """
    gl, wl = np.polynomial.legendre.leggauss(nodes)
    edges = np.concatenate([[0.0], 2.0 ** -np.arange(levels, -1, -1)])
    s_list, w_list = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        s_list.append(a + (b - a) * 0.5 * (gl + 1))
        w_list.append((b - a) * 0.5 * wl)
    s = np.concatenate(s_list)
    ws = np.concatenate(w_list)
    g, dg = _boundary_data(c, n_angular)
    d = g - x
    jac = np.imag(np.conj(d) * dg)
    zeta = x + s[:, None] * d[None, :]
    vals = np.log(np.abs(zeta - x))
    return float(np.sum(ws[:, None] * s[:, None] * vals * jac[None, :]) * 2 * np.pi / n_angular)


# ---------------------------------------------------------------------------
# energy field


def energy_boundary_integral(p: Potential, c: PolynomialCurve, z, tol: float = 1e-12):
    """``E(z)`` from :func:`log_potential` (fast route, any ``z``)."""
    z = np.asarray(z, dtype=complex)
    l0 = log_potential(c, 0.0, tol)[0]
    lz = log_potential(c, z, tol).reshape(z.shape)
    out = p.value(z) + 2.0 / (np.pi * p.t0) * (l0 - lz)
    return out[()] if np.ndim(out) == 0 else out


def energy_quadrature(p: Potential, c: PolynomialCurve, z: complex, tol: float = 1e-6,
                      n_angular: int = 512, max_angular: int = 1 << 14) -> float:
    """Slow oracle for ``E(z)`` with error control.

    Each area integral is computed with ``n_angular`` and ``2 n_angular``
    angular nodes (and a finer radial grading for the latter); the angular
    resolution doubles until the two agree to ``tol``.
    Raises :class:`ToleranceError` otherwise.
    """
    z = complex(z)
    k = 2.0 / (np.pi * p.t0)

    def field(m, levels):
        return p.value(z) + k * (log_potential_quadrature(c, 0.0, levels, 16, m)
                                 - log_potential_quadrature(c, z, levels, 16, m))

    m = n_angular
    coarse = field(m, 20)
    while m <= max_angular:
        fine = field(2 * m, 28)
        if abs(fine - coarse) <= tol:
            return float(fine)
        coarse = fine
        m *= 2
    raise ToleranceError(f"energy quadrature at {z} not converged to {tol:g}")


def exterior_antiderivative(c: PolynomialCurve):
    """``(Q, t0)`` with ``int q = Q(w) + t0 log w`` for ``q = conj(h)(1/w) h'(w)``."""
    h = c.laurent()
    q = L.mul(L.reflect_conj(h), L.derivative(h))
    k = np.arange(q.lo, q.hi + 1)
    c_log = q.coeff(-1)
    coeffs = np.where(k == -1, 0, q.coeffs / np.where(k == -1, 1, k + 1))
    Q = L.LaurentSeries(q.lo + 1, coeffs)
    return Q, c_log


def energy_exterior_closed_form(p: Potential, c: PolynomialCurve, w):
    """``E(h(w))`` for ``|w| >= 1`` from the exact antiderivative.

    ``t0 E(h(w)) = |h(w)|^2 - |h(1)|^2 - 2 Re int_1^w conj(h)(1/u) h'(u) du``.
    This uses only the curve: it equals the field of ``V`` when ``c`` solves
    the moment problem for ``p``.
    """
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(w) < 1 - 1e-12):
        raise ValueError("closed form holds for |w| >= 1 only")
    Q, c_log = exterior_antiderivative(c)
    integral = Q(w) - Q(1.0) + c_log * np.log(w)
    hw = evaluate(c, w)
    h1 = evaluate(c, 1.0)
    out = (np.abs(hw) ** 2 - abs(h1) ** 2 - 2 * np.real(integral)) / p.t0
    return out[()] if out.ndim == 0 else out


def energy_at(p: Potential, c: PolynomialCurve, z, band: float = 1e-9):
    """``E`` at arbitrary points: closed form outside the curve, boundary integral inside."""
    z = np.asarray(z, dtype=complex)
    zf = z.ravel()
    cls = np.atleast_1d(classify(c, zf, band)).ravel()
    out = np.empty(zf.size)
    ext = cls != Region.INSIDE
    if ext.any():
        w = invert(c, zf[ext], rmin=1 - 1e-9, rmax=np.inf)
        w = np.where(np.abs(w) < 1, w / np.abs(w), w)
        out[ext] = energy_exterior_closed_form(p, c, w)
    if (~ext).any():
        out[~ext] = energy_boundary_integral(p, c, zf[~ext])
    out = out.reshape(z.shape)
    return out[()] if out.ndim == 0 else out


def wirtinger_dzbar(f, z: complex, step: float) -> complex:
    """``d/dzbar f = (f_x + i f_y) / 2`` by Richardson-extrapolated central differences."""

    def cd(hh):
        fx = (f(z + hh) - f(z - hh)) / (2 * hh)
        fy = (f(z + 1j * hh) - f(z - 1j * hh)) / (2 * hh)
        return 0.5 * (fx + 1j * fy)

    return (4 * cd(step / 2) - cd(step)) / 3


def gradient_check(p: Potential, c: PolynomialCurve, z: complex, rel_step: float = 1e-5):
    """``(lhs, rhs)`` with ``lhs = dE/dzbar`` numerically and ``rhs = (z - rho(z)) / t0``."""
    z = complex(z)
    rhs = (z - complex(reflection(c, z))) / p.t0
    lhs = wirtinger_dzbar(lambda x: float(energy_at(p, c, x)), z, rel_step * np.sqrt(p.t0))
    return complex(lhs), complex(rhs)


# ---------------------------------------------------------------------------
# grid verification


@dataclass
class FieldGrid:
    bbox: tuple
    nx: int
    ny: int
    values: np.ndarray
    classification: np.ndarray
    in_domain: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.bbox[0], self.bbox[1], self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.bbox[2], self.bbox[3], self.ny)

    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return X + 1j * Y

    def write_csv(self, path) -> None:
        z = self.points()
        names = {int(Region.INSIDE): "inside", int(Region.OUTSIDE): "outside",
                 int(Region.BOUNDARY): "boundary"}
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "y", "E", "class"])
            for i in range(self.nx):
                for j in range(self.ny):
                    wr.writerow([f"{z[i, j].real:.17g}", f"{z[i, j].imag:.17g}",
                                 f"{self.values[i, j]:.17g}", names[int(self.classification[i, j])]])


def field_grid(p: Potential, c: PolynomialCurve, domain: DomainSpec, nx: int = 200,
               ny: Optional[int] = None, band: float = 1e-9) -> FieldGrid:
    """Sample ``E`` on the bounding box of ``domain``."""
    ny = nx if ny is None else ny
    bbox = domain.bbox()
    g = FieldGrid(bbox, nx, ny, np.empty((nx, ny)), np.empty((nx, ny), dtype=np.int8),
                  np.empty((nx, ny), dtype=bool))
    z = g.points()
    g.classification[...] = classify(c, z, band)
    g.in_domain[...] = domain.contains(z)
    g.values[...] = energy_at(p, c, z, band)
    return g


@dataclass
class VerifyReport:
    interior_max_abs: float
    exterior_min: float
    measured_E0: float
    min_t0V_over_r2: float
    closed_form_vs_boundary_integral: float
    interior_tol: float
    exterior_tol: float
    n_interior: int
    n_exterior: int
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.interior_max_abs <= self.interior_tol
                           and self.exterior_min >= -self.exterior_tol)

    def to_json(self) -> dict:
        return {k: (v if not isinstance(v, np.generic) else v.item())
                for k, v in self.__dict__.items()}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def variational_verify(p: Potential, c: PolynomialCurve, domain: DomainSpec, grid: int = 200,
                       interior_tol: float = 1e-5, exterior_tol: float = 1e-5,
                       n_cross: int = 20, return_grid: bool = False):
    """Check ``E = 0`` on ``D+`` and ``E >= 0`` on ``D \\ D+`` over a grid.

    Also reports the measured interior mean (``E0``), the smallest
    ``t0 V / |z|^2`` on the domain away from the origin, and the largest
    disagreement between the exterior closed form and the boundary integral
    at ``n_cross`` exterior nodes.
    """
    g = field_grid(p, c, domain, grid)
    z = g.points()
    inside = (g.classification == Region.INSIDE) & g.in_domain
    outside = (g.classification == Region.OUTSIDE) & g.in_domain
    vin = g.values[inside]
    vout = g.values[outside]
    rmin = 0.05 * np.sqrt(p.t0)
    zd = z[g.in_domain & (np.abs(z) > rmin)]
    ratio = float(np.min(p.t0 * p.value(zd) / np.abs(zd) ** 2)) if zd.size else float("nan")
    zo = z[outside]
    cross = 0.0
    if zo.size and n_cross > 0:
        pick = zo[np.linspace(0, zo.size - 1, min(n_cross, zo.size)).astype(int)]
        cross = float(np.max(np.abs(energy_boundary_integral(p, c, pick)
                                    - energy_at(p, c, pick))))
    rep = VerifyReport(
        interior_max_abs=float(np.max(np.abs(vin))) if vin.size else 0.0,
        exterior_min=float(np.min(vout)) if vout.size else float("inf"),
        measured_E0=float(np.mean(vin)) if vin.size else float("nan"),
        min_t0V_over_r2=ratio,
        closed_form_vs_boundary_integral=cross,
        interior_tol=interior_tol,
        exterior_tol=exterior_tol,
        n_interior=int(vin.size),
        n_exterior=int(vout.size),
    )
    return (rep, g) if return_grid else rep


# ---------------------------------------------------------------------------
# discrete and smoothed energies


def discrete_energy(p: Potential, z) -> tuple:
    """``(H, H / N^2)`` with ``H = N sum V(z_i) - 2 sum_{i<j} log|z_i - z_j|``.

    Coincident points give ``(inf, inf)``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    n = z.size
    if n == 0:
        raise ValueError("need at least one point")
    d = np.abs(z[:, None] - z[None, :])
    iu = np.triu_indices(n, 1)
    dist = d[iu]
    if np.any(dist == 0):
        return float("inf"), float("inf")
    H = n * float(np.sum(p.value(z))) - 2.0 * float(np.sum(np.log(dist)))
    return H, H / n**2


def equilibrium_energy(p: Potential, c: PolynomialCurve, n_radial: int = 64,
                       n_angular: int = 1024) -> float:
    """``I0 = I(mu)`` for the uniform measure on ``D+``.

    On the support ``E = 0`` gives ``I0 = <V>_mu / 2 - L(0) / (pi t0)``.
    """
    meanV = area_integral(c, lambda z: p.value(z), n_radial=n_radial,
                          n_angular=n_angular).real / (np.pi * p.t0)
    return 0.5 * meanV - log_potential(c, 0.0)[0] / (np.pi * p.t0)


def smoothed_energy(p: Potential, centers, weights, eps: float) -> float:
    """``I(mu)`` for ``mu = sum_i weights_i * Uniform(disk(centers_i, eps))``.

    Exact for disks that do not overlap: a uniform disk's log potential
    outside the disk is that of a point charge, its self energy is
    ``-log eps + 1/4``, and the average of ``V`` over it is
    ``V(c_i) + eps^2 / (2 t0)``.
    """
    c = np.asarray(centers, dtype=complex)
    wts = np.asarray(weights, dtype=float)
    if c.shape != wts.shape:
        raise ValueError("centers and weights differ in length")
    if np.any(wts < 0) or not np.isclose(wts.sum(), 1.0):
        raise ValueError("weights must form a probability vector")
    d = np.abs(c[:, None] - c[None, :])
    off = ~np.eye(c.size, dtype=bool)
    if np.any(d[off] < 2 * eps):
        raise ValueError("smoothing disks overlap")
    pot = float(np.sum(wts * (p.value(c) + eps**2 / (2 * p.t0))))
    with np.errstate(divide="ignore"):
        K = np.where(off, -np.log(np.where(off, d, 1.0)), -np.log(eps) + 0.25)
    return pot + float(wts @ K @ wts)


def gaussian_positivity_lemma(alpha: float, x: float) -> float:
    """``f(x) = (x - 1)(1 + alpha/x) - (1 + alpha) log x`` on ``0 <= alpha <= 1, x >= 1``."""
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any((alpha < 0) | (alpha > 1)):
        raise ValueError("alpha must lie in [0, 1]")
    if np.any(x < 1):
        raise ValueError("x must be >= 1")
    out = (x - 1) * (1 + alpha / x) - (1 + alpha) * np.log(x)
    return out[()] if out.ndim == 0 else out
