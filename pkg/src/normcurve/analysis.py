"""
Density estimates and moment statistics for recorded gas configurations.

Error bars come from batch means over independent chains: each chain's
time average is one batch, and the standard error is the sample standard
deviation of the chain means over ``sqrt(chains)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .curve import (
    PolynomialCurve,
    Region,
    area_integral,
    centroid,
    classify,
    forward_moments,
    interior_moments,
)
from .gas_sampler import SampleSet

TestFunction = Tuple[str, Callable[[np.ndarray], np.ndarray]]


@dataclass
class DensityEstimate:
    bbox: tuple
    nx: int
    ny: int
    counts: np.ndarray
    density: np.ndarray
    n_samples: int

    @property
    def cell_area(self) -> float:
        x0, x1, y0, y1 = self.bbox
        return (x1 - x0) * (y1 - y0) / (self.nx * self.ny)

    def edges(self):
        x0, x1, y0, y1 = self.bbox
        return np.linspace(x0, x1, self.nx + 1), np.linspace(y0, y1, self.ny + 1)

    def centers(self) -> np.ndarray:
        ex, ey = self.edges()
        cx = 0.5 * (ex[1:] + ex[:-1])
        cy = 0.5 * (ey[1:] + ey[:-1])
        X, Y = np.meshgrid(cx, cy, indexing="ij")
        return X + 1j * Y

    def write_csv(self, path) -> None:
        z = self.centers()
        with open(path, "w") as fh:
            fh.write("x,y,density\n")
            for i in range(self.nx):
                for j in range(self.ny):
                    fh.write(f"{z[i, j].real:.17g},{z[i, j].imag:.17g},{self.density[i, j]:.17g}\n")


def histogram(samples: SampleSet, nx: int = 50, ny: Optional[int] = None,
              bbox: Optional[tuple] = None) -> DensityEstimate:
    """Bin every recorded position; density = counts / (points * cell area).

    Without ``bbox`` the extent of the data is used (slightly padded so the
    extreme points fall inside).
    """
    z = samples.points()
    if z.size == 0:
        raise ValueError("empty sample set")
    ny = nx if ny is None else ny
    if bbox is None:
        x0, x1 = z.real.min(), z.real.max()
        y0, y1 = z.imag.min(), z.imag.max()
        pad = 1e-9 * max(x1 - x0, y1 - y0, 1.0)
        bbox = (x0 - pad, x1 + pad, y0 - pad, y1 + pad)
    x0, x1, y0, y1 = bbox
    counts, _, _ = np.histogram2d(z.real, z.imag, bins=[nx, ny], range=[[x0, x1], [y0, y1]])
    counts = counts.astype(np.int64)
    est = DensityEstimate(tuple(float(b) for b in bbox), nx, ny, counts,
                          np.zeros((nx, ny)), int(z.size))
    est.density = counts / (z.size * est.cell_area)
    return est


def interior_bins(est: DensityEstimate, c: PolynomialCurve, t0: float,
                  min_expected: float = 50.0) -> np.ndarray:
    """Mask of bins lying entirely inside the curve whose expected count under
    the uniform measure is at least ``min_expected``."""
    ex, ey = est.edges()
    X, Y = np.meshgrid(ex, ey, indexing="ij")
    corners_in = np.asarray(classify(c, X + 1j * Y)) == Region.INSIDE
    inside = (corners_in[:-1, :-1] & corners_in[1:, :-1]
              & corners_in[:-1, 1:] & corners_in[1:, 1:])
    expected = est.n_samples * est.cell_area / (np.pi * t0)
    return inside & (expected >= min_expected)


def default_dilation(N: int) -> float:
    return 1.0 + 2.0 / np.sqrt(N)


def support_fraction(samples: SampleSet, c: PolynomialCurve, dilation: float) -> float:
    """Fraction of points inside the curve scaled by ``dilation`` about its centroid."""
    if dilation < 0:
        raise ValueError("dilation must be non-negative")
    if dilation == 0:
        return 0.0
    if np.isinf(dilation):
        return 1.0
    z = samples.points()
    z0 = centroid(c)
    pulled = z0 + (z - z0) / dilation
    cls = np.asarray(classify(c, pulled))
    return float(np.mean(cls != Region.OUTSIDE))


def _chain_stats(per_config: np.ndarray) -> Tuple[complex, float, float]:
    """Mean and standard errors (real, imag) from an array ``(chains, configs)``."""
    means = per_config.mean(axis=1)
    mean = complex(means.mean())
    k = means.size
    if k < 2:
        return mean, float("nan"), float("nan")
    se_re = float(np.std(means.real, ddof=1) / np.sqrt(k))
    se_im = float(np.std(means.imag, ddof=1) / np.sqrt(k))
    return mean, se_re, se_im


def moment_estimate(samples: SampleSet, k: int, t0: float) -> Tuple[complex, float]:
    """``(mean, stderr)`` of ``(t0 / N) sum_i z_i^k`` over recorded configurations.

    The standard error is the larger of the real and imaginary parts' errors.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        # every configuration contributes exactly t0; avoid rounding in the averages
        return complex(t0), 0.0
    per = t0 * (np.sum(samples.z**k, axis=2) / samples.N)
    mean, se_re, se_im = _chain_stats(per)
    return mean, max(se_re, se_im)


def _bump(center: complex, radius: float):
    def f(z):
        u = np.abs(np.asarray(z) - center) ** 2 / radius**2
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(u < 1, np.exp(-1.0 / np.maximum(1 - u, 1e-300)), 0.0)
    return f


def default_test_functions(c: PolynomialCurve) -> List[TestFunction]:
    """Monomials ``z^a conj(z)^b`` with ``a + b <= 4`` and two interior bumps."""
    fns: List[TestFunction] = []
    for deg in range(5):
        for a in range(deg, -1, -1):
            b = deg - a
            fns.append((f"z^{a} zbar^{b}", lambda z, a=a, b=b: z**a * np.conj(z) ** b))
    z0 = centroid(c)
    zb = c(np.exp(2j * np.pi * np.arange(512) / 512))
    inr = float(np.min(np.abs(zb - z0)))
    fns.append(("bump(centroid, 0.5 inradius)", _bump(z0, 0.5 * inr)))
    fns.append(("bump(centroid, 0.9 inradius)", _bump(z0, 0.9 * inr)))
    return fns


def _finite_or_none(x: float) -> Optional[float]:
    return float(x) if np.isfinite(x) else None


def _z_score(mean: float, pred: float, se: float) -> Optional[float]:
    # None when a single chain gives no error estimate
    if not np.isfinite(se):
        return None
    if se > 0:
        return float((mean - pred) / se)
    return 0.0 if mean == pred else float("inf")


def weak_convergence_test(samples: SampleSet, c: PolynomialCurve,
                          test_functions: Optional[Sequence[TestFunction]] = None,
                          n_radial: int = 64, n_angular: int = 1024) -> dict:
    """Compare ``(1/N) sum phi(z_i)`` with ``int phi d mu`` for ``mu`` uniform on ``D+``.

    Returns a JSON-ready report with real and imaginary z-scores per test
    function.  These are finite-N comparisons: observables that are not
    harmonic carry an ``O(1/N)`` bias that z-scores do not account for.
    """
    fns = list(test_functions) if test_functions is not None else default_test_functions(c)
    t0 = forward_moments(c).t0
    rows = []
    for name, f in fns:
        pred = area_integral(c, f, n_radial=n_radial, n_angular=n_angular) / (np.pi * t0)
        per = np.mean(f(samples.z), axis=2).astype(complex)
        mean, se_re, se_im = _chain_stats(per)
        z_re = _z_score(mean.real, float(pred.real), se_re)
        z_im = _z_score(mean.imag, float(pred.imag), se_im)
        rows.append({
            "name": name,
            "empirical": [mean.real, mean.imag],
            "predicted": [float(pred.real), float(pred.imag)],
            "stderr": [_finite_or_none(se_re), _finite_or_none(se_im)],
            "z_score": [z_re, z_im],
        })
    return {"t0": float(t0), "N": samples.N, "chains": samples.chains, "results": rows}


def moments_report(samples: SampleSet, c: PolynomialCurve, t0: float, kmax: int = 4) -> dict:
    """Moment estimates ``k = 0..kmax`` against the curve's interior moments."""
    v = interior_moments(c, kmax)
    rows = []
    for k in range(kmax + 1):
        mean, se = moment_estimate(samples, k, t0)
        if not np.isfinite(se):
            z = None
        elif se > 0:
            z = float(abs(mean - v[k]) / se)
        else:
            z = 0.0 if abs(mean - v[k]) <= 1e-12 * t0 else float("inf")
        rows.append({"k": k, "mean": [mean.real, mean.imag], "stderr": _finite_or_none(se),
                     "predicted": [float(v[k].real), float(v[k].imag)], "z_abs": z})
    return {"t0": t0, "moments": rows}


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
