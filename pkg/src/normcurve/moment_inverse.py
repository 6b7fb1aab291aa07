"""
Inverse moment problem: recover a polynomial curve from ``(t0; t_1..t_{n+1})``.

Newton's method runs on the real-linearized map

    F : (rho, alpha_0, ..., alpha_n) -> (t0, t_1, ..., t_{n+1}),

with ``rho = r**2`` and ``alpha_j = a_j / r**j`` (``2n + 3`` real unknowns and
equations), combined with continuation in ``t0``: the target area is ramped
geometrically from a small fraction of ``t0``, where the ellipse-like initial
guess is accurate, and each converged solution seeds the next step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from math import comb
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize

from . import laurent as L
from .curve import (
    MomentVector,
    PolynomialCurve,
    critical_radius,
    default_order,
    encloses_origin,
    forward_moments_raw,
    is_simple_positively_oriented,
)
from .errors import ConvergenceError, RegimeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-13
    max_newton_iters: int = 40
    continuation_steps: int = 8
    t0_start_fraction: float = 1.0 / 256
    jacobian: str = "analytic"  # or "fd"
    fd_step: float = 1e-6

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be >= 1")
        if not 0 < self.t0_start_fraction <= 1:
            raise ValueError("t0_start_fraction must lie in (0, 1]")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if self.jacobian not in ("analytic", "fd"):
            raise ValueError("jacobian must be 'analytic' or 'fd'")


@dataclass(frozen=True, eq=False)
class ScaledParams:
    """``rho = r**2`` and ``alpha_j = r**(-j) a_j``."""

    rho: float
    alpha: np.ndarray

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=complex))

    def to_vector(self) -> np.ndarray:
        x = np.empty(1 + 2 * len(self.alpha))
        x[0] = self.rho
        x[1::2] = self.alpha.real
        x[2::2] = self.alpha.imag
        return x

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "ScaledParams":
        return cls(float(x[0]), x[1::2] + 1j * x[2::2])

    def curve(self) -> PolynomialCurve:
        return PolynomialCurve.from_scaled(self.rho, self.alpha)

    @classmethod
    def from_curve(cls, c: PolynomialCurve) -> "ScaledParams":
        rho, alpha = c.scaled_params()
        return cls(rho, alpha)


@dataclass
class SolveReport:
    iterations: List[int] = field(default_factory=list)
    t0_ramp: List[float] = field(default_factory=list)
    residual: float = float("nan")
    cusp_margin: float = float("nan")

    def to_json(self) -> dict:
        return asdict(self)


def _check_t2(t: MomentVector):
    if abs(t.moment(2)) >= 0.5:
        raise ValueError(f"solver requires |t2| < 1/2, got |t2| = {abs(t.moment(2)):.6g}")


def initial_guess(t: MomentVector) -> ScaledParams:
    """Small-area guess ``rho = t0``, ``alpha_0 = 0``, ``alpha_j = (j+1) conj(t_{j+1})``."""
    _check_t2(t)
    n = t.n
    alpha = np.zeros(n + 1, dtype=complex)
    for j in range(1, n + 1):
        alpha[j] = (j + 1) * np.conj(t.moment(j + 1))
    return ScaledParams(t.t0, alpha)


def _moments_vector(t0: float, t: np.ndarray) -> np.ndarray:
    y = np.empty(1 + 2 * len(t))
    y[0] = t0
    y[1::2] = t.real
    y[2::2] = t.imag
    return y


def forward_map(x: np.ndarray) -> np.ndarray:
    """Real form of ``F``: parameter vector -> moment vector."""
    p = ScaledParams.from_vector(x)
    t0, t = forward_moments_raw(p.curve())
    return _moments_vector(t0, t)


def jacobian_fd(x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences, step relative to each coordinate."""
    m = len(x)
    J = np.empty((m, m))
    for i in range(m):
        if i == 0:
            h = step * x[0]
        else:
            h = step * max(abs(x[i]), 1e-2)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (forward_map(xp) - forward_map(xm)) / (2 * h)
    return J


def jacobian_analytic(x: np.ndarray) -> np.ndarray:
    """Exact Jacobian of :func:`forward_map` from residue identities.

    With ``P = h-bar(1/w)``, ``G_j = h**-j`` and ``q = P h'``:

    * ``d(j t_j)/da_k    = -k res(P w^{-k-1} G_j) - j res(q w^{-k} G_{j+1})``
    * ``d(j t_j)/dconj(a_k) = res(w^k h' G_j)``
    * ``d(j t_j)/dr      = res(w^{-1} h' G_j) + res(P G_j) - j res(q w G_{j+1})``

    followed by the chain rule to ``(rho, alpha)``.
    """
    p = ScaledParams.from_vector(x)
    c = p.curve()
    n, r = c.n, c.r
    order = default_order(n) + 2
    h = c.laurent()
    hp = L.derivative(h)
    P = L.reflect_conj(h)
    q = L.mul(P, hp)
    g = L.inv_power(h, 1, order)
    G = [None, g]
    for j in range(2, n + 3):
        G.append(L.mul(G[-1], g, keep_from=-order))

    da = np.zeros((n + 1, n + 1), dtype=complex)  # [j-1, k] -> dt_j/da_k
    dab = np.zeros((n + 1, n + 1), dtype=complex)  # dt_j/dconj(a_k)
    dr = np.zeros(n + 1, dtype=complex)
    for j in range(1, n + 2):
        PG = L.mul(P, G[j])
        hG = L.mul(hp, G[j])
        qG1 = L.mul(q, G[j + 1])
        for k in range(n + 1):
            # res(X w^m) is the coefficient of w^(-1-m) in X
            da[j - 1, k] = (-k * PG.coeff(k) - j * qG1.coeff(k - 1)) / j
            dab[j - 1, k] = hG.coeff(-1 - k) / j
        dr[j - 1] = (hG.coeff(0) + PG.coeff(-1) - j * qG1.coeff(-2)) / j

    kk = np.arange(n + 1)
    alpha = p.alpha
    rk = r**kk
    # holding rho fixed
    dt_dalpha = da * rk[None, :]
    dt_dalphab = dab * rk[None, :]
    # holding alpha fixed, a_k = r^k alpha_k, dr/drho = 1/(2r)
    rkm1 = np.where(kk > 0, kk * r ** (kk - 1.0), 0.0)
    dt_drho = (dr + da @ (rkm1 * alpha) + dab @ (rkm1 * np.conj(alpha))) / (2 * r)

    m = 2 * n + 3
    J = np.empty((m, m))
    rho = p.rho
    J[0, 0] = 1.0 - float(np.sum(kk**2 * rho ** (kk - 1.0) * np.abs(alpha) ** 2))
    J[0, 1::2] = -2 * kk * rho**kk * alpha.real
    J[0, 2::2] = -2 * kk * rho**kk * alpha.imag
    J[1::2, 0] = dt_drho.real
    J[2::2, 0] = dt_drho.imag
    du = dt_dalpha + dt_dalphab
    dv = 1j * (dt_dalpha - dt_dalphab)
    J[1::2, 1::2] = du.real
    J[2::2, 1::2] = du.imag
    J[1::2, 2::2] = dv.real
    J[2::2, 2::2] = dv.imag
    return J


def _newton(x0: np.ndarray, target: np.ndarray, cfg: SolverConfig):
    """Plain Newton with step halving to keep ``rho > 0``."""
    x = x0.copy()
    scale = np.ones_like(target)
    scale[0] = 1.0 / target[0]  # t0 residual measured relative to t0
    tol = cfg.newton_tol * max(1.0, float(np.max(np.abs(target[1:]), initial=0.0)))
    res = (forward_map(x) - target) * scale
    for it in range(1, cfg.max_newton_iters + 1):
        if cfg.jacobian == "analytic":
            J = jacobian_analytic(x)
        else:
            J = jacobian_fd(x, cfg.fd_step)
        try:
            dx = np.linalg.solve(J, -(res / scale))
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Jacobian") from exc
        lam = 1.0
        while x[0] + lam * dx[0] <= 0:
            lam *= 0.5
            if lam < 1e-8:
                raise ConvergenceError("Newton step drives rho non-positive")
        x = x + lam * dx
        if not np.all(np.isfinite(x)):
            raise ConvergenceError("Newton iterate is not finite")
        res = (forward_map(x) - target) * scale
        err = float(np.max(np.abs(res)))
        if err <= tol:
            return x, it, err
    raise ConvergenceError(
        f"Newton did not converge in {cfg.max_newton_iters} iterations (residual {err:.3e})"
    )


def solve_with_report(t: MomentVector, cfg: Optional[SolverConfig] = None):
    """Solve the inverse problem; returns ``(curve, SolveReport)``."""
    cfg = cfg or SolverConfig()
    _check_t2(t)
    report = SolveReport()
    steps = cfg.continuation_steps
    f = cfg.t0_start_fraction
    ramp = [t.t0 * f ** ((steps - k) / steps) for k in range(steps + 1)]
    ramp[-1] = t.t0
    x = initial_guess(MomentVector(ramp[0], t.t)).to_vector()
    for t0k in ramp:
        target = _moments_vector(t0k, t.t)
        try:
            x, its, err = _newton(x, target, cfg)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"no convergence at t0 = {t0k:.6g} (outside small-area regime / near cusp): {exc}"
            ) from exc
        report.iterations.append(its)
        report.t0_ramp.append(t0k)
        R = critical_radius(ScaledParams.from_vector(x).curve())
        if R >= 1.0:
            raise RegimeError(
                f"critical radius {R:.6f} >= 1 at t0 = {t0k:.6g} (outside small-area regime / near cusp)"
            )
    report.residual = err
    c = ScaledParams.from_vector(x).curve()
    if not is_simple_positively_oriented(c):
        raise RegimeError("converged curve is not simple and positively oriented "
                          "(outside small-area regime / near cusp)")
    t1, t2 = t.moment(1), t.moment(2)
    if abs(t1) ** 2 < t.t0 * (0.5 - abs(t2)) and not encloses_origin(c):
        raise RegimeError("converged curve does not encircle the origin")
    report.cusp_margin = cusp_margin(c)
    log.debug("solved t0=%g in %s Newton iterations", t.t0, report.iterations)
    return c, report


def solve(t: MomentVector, cfg: Optional[SolverConfig] = None) -> PolynomialCurve:
    """The unique valid polynomial curve with moments ``t`` (small-area branch)."""
    return solve_with_report(t, cfg)[0]


def cusp_margin(c: PolynomialCurve) -> float:
    """``1 - R``: distance of the critical radius from the unit circle."""
    return 1.0 - critical_radius(c)


# ---------------------------------------------------------------------------
# origin shift


def _U(z, t: np.ndarray):
    """``|z|^2 - 2 Re sum_k t_k z^k``."""
    z = np.asarray(z, dtype=complex)
    p = np.zeros_like(z)
    for tk in t[::-1]:
        p = (p + tk) * z
    return np.abs(z) ** 2 - 2 * np.real(p)


def _grad_U(x, t):
    z = complex(x[0], x[1])
    dp = 0j
    for k in range(len(t), 0, -1):
        dp = dp * z + k * t[k - 1]
    # dU/dzbar = z - conj(p'(z)); gradient (dx, dy) = 2 (Re, Im) of that
    g = z - np.conj(dp)
    return np.array([2 * g.real, 2 * g.imag])


def find_potential_minima(t: MomentVector, center: complex = 0.0, radius: Optional[float] = None,
                          grid: int = 201) -> List[complex]:
    """Local minima of ``U`` inside a disk, from a grid scan plus BFGS polish."""
    tt = np.asarray(t.t)
    if radius is None:
        radius = 10.0 * np.sqrt(t.t0) + 2.0 * abs(t.moment(1))
    xs = np.linspace(-radius, radius, grid)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    Z = center + X + 1j * Y
    U = _U(Z, tt)
    inside = np.abs(Z - center) <= radius
    U = np.where(inside, U, np.inf)
    core = U[1:-1, 1:-1]
    is_min = np.ones_like(core, dtype=bool)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx or dy:
                is_min &= core <= U[1 + dx: grid - 1 + dx, 1 + dy: grid - 1 + dy]
    is_min &= np.isfinite(core)
    found: List[complex] = []
    h = xs[1] - xs[0]
    for i, j in zip(*np.nonzero(is_min)):
        z0 = Z[i + 1, j + 1]
        c0 = complex(center)
        bounds = [(c0.real - radius, c0.real + radius), (c0.imag - radius, c0.imag + radius)]
        res = minimize(lambda v: float(_U(complex(v[0], v[1]), tt)), [z0.real, z0.imag],
                       jac=lambda v: _grad_U(v, tt), method="L-BFGS-B", bounds=bounds,
                       options={"gtol": 1e-14, "ftol": 1e-15})
        zm = complex(res.x[0], res.x[1])
        if abs(zm - center) >= radius - h or np.linalg.norm(_grad_U(res.x, tt)) > 1e-8:
            continue
        if all(abs(zm - f) > 2 * h for f in found):
            found.append(zm)
    return found


def shift_moments(t: MomentVector, z: complex) -> MomentVector:
    """Moments of the potential re-expanded about ``z``: ``U(z + .) - U(z)``."""
    tt = np.asarray(t.t)
    n1 = len(tt)
    out = np.zeros(n1, dtype=complex)
    for m in range(1, n1 + 1):
        out[m - 1] = sum(tt[k - 1] * comb(k, m) * z ** (k - m) for k in range(m, n1 + 1))
    out[0] -= np.conj(z)
    return MomentVector(t.t0, out)


def solve_shifted(t: MomentVector, cfg: Optional[SolverConfig] = None,
                  center: complex = 0.0, radius: Optional[float] = None) -> PolynomialCurve:
    """Solve after moving the origin to the minimizer of ``U``.

    The minimizer must be unique in the search disk and non-degenerate
    (``|p''(z*)| < 1``); several minima point to a disconnected support and
    are rejected.
    """
    minima = find_potential_minima(t, center, radius)
    if not minima:
        raise RegimeError("potential has no interior minimum in the search disk")
    if len(minima) > 1:
        raise RegimeError(f"potential has {len(minima)} local minima: {minima}")
    zs = minima[0]
    tt = np.asarray(t.t)
    d2p = sum(k * (k - 1) * tt[k - 1] * zs ** (k - 2) for k in range(2, len(tt) + 1))
    if abs(d2p) >= 1.0:
        raise RegimeError("minimum of the potential is degenerate")
    ts = shift_moments(t, zs)
    # first moment vanishes at the minimizer up to rounding
    c = solve(ts, cfg)
    return c.shifted(zs)
