"""
Metropolis sampler for the restricted eigenvalue gas.

The target density on ``D^N`` is proportional to ``exp(-H)`` with

    H(z) = N sum_i V(z_i) - 2 sum_{i<j} log|z_i - z_j|.

Each sweep visits the particles in order and proposes a Gaussian move for
each one; moves leaving the domain ``D`` are rejected (hard wall).  Only
the eigenvalues are sampled: the unitary part of the matrix measure
integrates out of every eigenvalue observable.

Random numbers are drawn outside the compiled kernel from one
``numpy.random.Generator`` per chain, a Philox stream keyed by
``SeedSequence(seed, spawn_key=(chain,))``; chains never share a stream and
the output does not depend on how chains are scheduled on threads.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from numba import njit

from .curve import PolynomialCurve, Region, boundary, classify
from .energy import DomainSpec, Potential, discrete_energy
from .errors import ToleranceError

log = logging.getLogger(__name__)

BLOCK = 256  # sweeps per kernel call; RNG arrays are drawn per block
COINCIDENCE = 1e-14
CACHE_RTOL = 1e-8
SIGMA_FACTOR = 1.0  # proposal scale in units of sqrt(t0 / N)


@dataclass(frozen=True)
class SamplerConfig:
    N: int
    sweeps: int
    burn_in: int = 0
    proposal_sigma: Optional[float] = None  # default SIGMA_FACTOR * sqrt(t0 / N)
    seed: int = 0
    thinning: int = 1
    chains: int = 1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.burn_in < 0 or self.sweeps <= self.burn_in:
            raise ValueError("need sweeps > burn_in >= 0")
        if self.proposal_sigma is not None and not self.proposal_sigma > 0:
            raise ValueError("proposal_sigma must be positive")
        if self.thinning < 1 or self.chains < 1:
            raise ValueError("thinning and chains must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def sigma(self, t0: float) -> float:
        if self.proposal_sigma is not None:
            return float(self.proposal_sigma)
        return SIGMA_FACTOR * float(np.sqrt(t0 / self.N))

    def recorded_sweeps(self) -> np.ndarray:
        """1-based sweep indices that are recorded."""
        k = np.arange(self.burn_in + 1, self.sweeps + 1)
        return k[(k - self.burn_in) % self.thinning == 0]

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "SamplerConfig":
        names = set(cls.__dataclass_fields__)
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown sampler fields: {sorted(extra)}")
        return cls(**d)


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chain,))))


@dataclass
class GasState:
    z: np.ndarray
    energy: float
    sweep_index: int = 0

    @property
    def N(self) -> int:
        return self.z.size


def init_state(cfg: SamplerConfig, c: PolynomialCurve, p: Potential,
               domain: Optional[DomainSpec] = None,
               rng: Optional[np.random.Generator] = None) -> GasState:
    """``N`` points uniform in ``D+`` (and in ``D``), by rejection from the curve's bounding box."""
    rng = chain_rng(cfg.seed, 0) if rng is None else rng
    zb = boundary(c, 1024)
    x0, x1 = zb.real.min(), zb.real.max()
    y0, y1 = zb.imag.min(), zb.imag.max()
    pts: List[complex] = []
    for _ in range(1000):
        m = max(64, 4 * (cfg.N - len(pts)))
        cand = rng.uniform(x0, x1, m) + 1j * rng.uniform(y0, y1, m)
        ok = np.atleast_1d(classify(c, cand)) == Region.INSIDE
        if domain is not None:
            ok &= domain.contains(cand)
        pts.extend(cand[ok][: cfg.N - len(pts)])
        if len(pts) == cfg.N:
            break
    else:
        raise RuntimeError("could not place particles inside the curve and the domain")
    z = np.array(pts, dtype=complex)
    return GasState(z, discrete_energy(p, z)[0], 0)


# ---------------------------------------------------------------------------
# compiled kernel


@njit(cache=True, nogil=True)
def _v(x, y, t0, tre, tim):
    # (|z|^2 - 2 Re sum t_k z^k) / t0, Horner in complex arithmetic
    z = complex(x, y)
    acc = 0j
    for k in range(tre.size - 1, -1, -1):
        acc = (acc + complex(tre[k], tim[k])) * z
    return (x * x + y * y - 2.0 * acc.real) / t0


@njit(cache=True, nogil=True)
def _in_domain(x, y, kind, cx, cy, rad, px, py):
    if kind == 0:
        return (x - cx) ** 2 + (y - cy) ** 2 <= rad * rad
    inside = False
    m = px.size
    j = m - 1
    for i in range(m):
        if (py[i] > y) != (py[j] > y):
            xc = px[i] + (y - py[i]) * (px[j] - px[i]) / (py[j] - py[i])
            if x < xc:
                inside = not inside
        j = i
    return inside


@njit(cache=True, nogil=True)
def _run_block(zx, zy, energy, t0, tre, tim, kind, cx, cy, rad, px, py,
               sigma, normals, logu, record, out_x, out_y):
    """Run ``len(logu)`` sweeps in place; returns ``(energy, accepted, n_recorded)``."""
    n = zx.size
    nf = float(n)
    acc = 0
    nrec = 0
    for s in range(logu.shape[0]):
        for i in range(n):
            xn = zx[i] + sigma * normals[s, i, 0]
            yn = zy[i] + sigma * normals[s, i, 1]
            if not _in_domain(xn, yn, kind, cx, cy, rad, px, py):
                continue
            dh = nf * (_v(xn, yn, t0, tre, tim) - _v(zx[i], zy[i], t0, tre, tim))
            bad = False
            for j in range(n):
                if j == i:
                    continue
                dxn = xn - zx[j]
                dyn = yn - zy[j]
                d2n = dxn * dxn + dyn * dyn
                if d2n < COINCIDENCE * COINCIDENCE:
                    bad = True
                    break
                dxo = zx[i] - zx[j]
                dyo = zy[i] - zy[j]
                # -2 (log|new| - log|old|) = -(log d2n - log d2o)
                dh -= np.log(d2n / (dxo * dxo + dyo * dyo))
            if bad:
                continue
            if logu[s, i] < -dh:
                zx[i] = xn
                zy[i] = yn
                energy += dh
                acc += 1
        if record[s]:
            for i in range(n):
                out_x[nrec, i] = zx[i]
                out_y[nrec, i] = zy[i]
            nrec += 1
    return energy, acc, nrec


def _domain_args(domain: Optional[DomainSpec]):
    empty = np.zeros(1)
    if domain is None:
        return 0, 0.0, 0.0, np.inf, empty, empty
    if domain.is_disk:
        c = complex(domain.center)
        return 0, c.real, c.imag, float(domain.radius), empty, empty
    poly = domain.polygon
    return 1, 0.0, 0.0, 0.0, np.ascontiguousarray(poly.real), np.ascontiguousarray(poly.imag)


def sweep(state: GasState, p: Potential, domain: Optional[DomainSpec], rng: np.random.Generator,
          sigma: float, n: int = 1) -> GasState:
    """``n`` systematic-scan sweeps applied to a copy of ``state``."""
    zx = state.z.real.copy()
    zy = state.z.imag.copy()
    normals = rng.standard_normal((n, state.N, 2))
    logu = np.log(rng.random((n, state.N)))
    rec = np.zeros(n, dtype=np.bool_)
    buf = np.empty((0, state.N))
    e, _, _ = _run_block(zx, zy, state.energy, p.t0, np.ascontiguousarray(p.t.real),
                         np.ascontiguousarray(p.t.imag), *_domain_args(domain), sigma,
                         normals, logu, rec, buf, buf)
    return GasState(zx + 1j * zy, e, state.sweep_index + n)


# ---------------------------------------------------------------------------
# runs


@dataclass
class SampleSet:
    """Recorded configurations of all chains, ordered by (chain, sweep).

    ``z`` has shape ``(chains, n_recorded, N)`` and ``sweeps`` holds the
    1-based sweep index of each recorded configuration.
    """

    z: np.ndarray
    sweeps: np.ndarray
    config: dict = field(default_factory=dict)
    seeds: List[list] = field(default_factory=list)
    acceptance: List[float] = field(default_factory=list)
    t0: Optional[float] = None
    wall_time: Optional[float] = None

    @property
    def chains(self) -> int:
        return self.z.shape[0]

    @property
    def N(self) -> int:
        return self.z.shape[2]

    def points(self) -> np.ndarray:
        return self.z.ravel()

    def sidecar(self) -> dict:
        return {
            "config": self.config,
            "t0": self.t0,
            "seeds": self.seeds,
            "acceptance": self.acceptance,
            "shape": list(self.z.shape),
            "sweeps": [int(s) for s in self.sweeps],
        }

    def write(self, csv_path, json_path=None) -> None:
        """CSV ``chain, sweep, particle, re, im`` plus a JSON sidecar.

        Wall time is left out of the sidecar so that repeated runs produce
        identical bytes; :meth:`write_timing` stores it separately.
        """
        C, S, N = self.z.shape
        with open(csv_path, "w", newline="") as fh:
            fh.write("chain,sweep,particle,re,im\n")
            lines = []
            for ci in range(C):
                for si in range(S):
                    row = self.z[ci, si]
                    k = int(self.sweeps[si])
                    for pi in range(N):
                        lines.append(f"{ci},{k},{pi},{row[pi].real:.17g},{row[pi].imag:.17g}\n")
            fh.writelines(lines)
        if json_path is not None:
            with open(json_path, "w") as fh:
                json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
                fh.write("\n")

    def write_timing(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"wall_time_seconds {self.wall_time:.3f}\n")

    @classmethod
    def read(cls, csv_path, json_path=None) -> "SampleSet":
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 5 or data.shape[0] == 0:
            raise ValueError(f"{csv_path}: expected columns chain,sweep,particle,re,im")
        ch = data[:, 0].astype(int)
        sw = data[:, 1].astype(int)
        pa = data[:, 2].astype(int)
        C = ch.max() + 1
        sweeps = np.unique(sw)
        N = pa.max() + 1
        if data.shape[0] != C * sweeps.size * N:
            raise ValueError(f"{csv_path}: incomplete sample table")
        z = np.empty((C, sweeps.size, N), dtype=complex)
        si = np.searchsorted(sweeps, sw)
        z[ch, si, pa] = data[:, 3] + 1j * data[:, 4]
        meta = {}
        if json_path is not None:
            with open(json_path) as fh:
                meta = json.load(fh)
        return cls(z, sweeps, meta.get("config", {}), meta.get("seeds", []),
                   meta.get("acceptance", []), meta.get("t0"))


def _run_chain(chain: int, cfg: SamplerConfig, p: Potential, c: PolynomialCurve,
               domain: Optional[DomainSpec], check_every: int):
    rng = chain_rng(cfg.seed, chain)
    state = init_state(cfg, c, p, domain, rng)
    sigma = cfg.sigma(p.t0)
    zx = state.z.real.copy()
    zy = state.z.imag.copy()
    energy = state.energy
    tre = np.ascontiguousarray(p.t.real)
    tim = np.ascontiguousarray(p.t.imag)
    dargs = _domain_args(domain)
    rec_sweeps = cfg.recorded_sweeps()
    out = np.empty((rec_sweeps.size, cfg.N), dtype=complex)
    nrec = 0
    accepted = 0
    proposed = 0
    done = 0
    blocks = 0
    while done < cfg.sweeps:
        b = min(BLOCK, cfg.sweeps - done)
        k = np.arange(done + 1, done + b + 1)
        record = (k > cfg.burn_in) & ((k - cfg.burn_in) % cfg.thinning == 0)
        normals = rng.standard_normal((b, cfg.N, 2))
        logu = np.log(rng.random((b, cfg.N)))
        bx = np.empty((int(record.sum()), cfg.N))
        by = np.empty_like(bx)
        energy, acc, nr = _run_block(zx, zy, energy, p.t0, tre, tim, *dargs, sigma,
                                     normals, logu, record, bx, by)
        out[nrec: nrec + nr] = bx + 1j * by
        nrec += nr
        if done + b > cfg.burn_in:
            # acceptance counted from blocks that end after burn-in
            accepted += acc
            proposed += b * cfg.N
        done += b
        blocks += 1
        if blocks % check_every == 0 or done == cfg.sweeps:
            exact = discrete_energy(p, zx + 1j * zy)[0]
            if abs(exact - energy) > CACHE_RTOL * max(abs(exact), 1.0):
                raise ToleranceError(f"energy cache drifted: cached {energy!r}, exact {exact!r}")
            energy = exact
    return out, (accepted / proposed if proposed else float("nan"))


def run(cfg: SamplerConfig, p: Potential, c: PolynomialCurve,
        domain: Optional[DomainSpec] = None, threads: int = 1, check_every: int = 1) -> SampleSet:
    """Run all chains (concurrently up to ``threads``) and collect a :class:`SampleSet`."""
    t_start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        futs = [ex.submit(_run_chain, k, cfg, p, c, domain, check_every) for k in range(cfg.chains)]
        results = [f.result() for f in futs]
    z = np.stack([r[0] for r in results])
    acc = [float(r[1]) for r in results]
    seeds = [[int(cfg.seed), k] for k in range(cfg.chains)]
    conf = cfg.to_json()
    conf["proposal_sigma"] = cfg.sigma(p.t0)
    ss = SampleSet(z, cfg.recorded_sweeps(), conf, seeds, acc, float(p.t0),
                   time.perf_counter() - t_start)
    log.info("sampled %d chains, acceptance %s, %.1fs", cfg.chains, acc, ss.wall_time)
    return ss
