"""Trace-class fractional Brownian motion on a uniform grid.

Mode ``i`` of the noise is ``sqrt(q_i)`` times an independent scalar fBm.
Scalar paths are drawn exactly on the grid by circulant embedding of the
fractional Gaussian noise covariance (Davies-Harte), then summed and
pinned so that the path vanishes at time zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericFailure
from .hilbert import GridPath, TimeGrid


@dataclass(frozen=True)
class FbmSpec:
    """Hurst index, per-mode variances ``q_i`` and RNG seed."""

    H: float
    q: tuple[float, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        if not 1.0 / 3.0 < self.H <= 0.5:
            raise DomainError(f"H must lie in (1/3, 1/2], got {self.H}")
        q = tuple(float(x) for x in self.q)
        if not q or any(x <= 0 for x in q):
            raise DomainError("mode variances must be positive")
        if any(b > a for a, b in zip(q, q[1:])):
            raise DomainError("mode variances must be nonincreasing")
        object.__setattr__(self, "q", q)

    @property
    def dim(self) -> int:
        return len(self.q)

    @classmethod
    def power_law(cls, H: float, d: int, p: float = 2.0, scale: float = 1.0,
                  seed: int = 0) -> "FbmSpec":
        """``q_i = scale^2 * i^(-p)``."""
        if p <= 1.0:
            raise DomainError("decay exponent p must exceed 1 for a trace-class covariance")
        q = tuple(scale**2 * (i + 1.0) ** (-p) for i in range(d))
        return cls(H, q, seed)


@dataclass(frozen=True)
class NoisePath:
    """A driving path; ``level`` marks a dyadic piecewise-linear approximation."""

    path: GridPath
    level: int | None = None

    @property
    def grid(self) -> TimeGrid:
        return self.path.grid

    @property
    def values(self) -> np.ndarray:
        return self.path.values

    @property
    def times(self) -> np.ndarray:
        return self.path.times

    @property
    def dim(self) -> int:
        return self.path.dim

    def restrict(self, j: int, k: int) -> "NoisePath":
        return NoisePath(self.path.restrict(j, k), self.level)


def as_path(x: GridPath | NoisePath) -> GridPath:
    return x.path if isinstance(x, NoisePath) else x


def fbm_covariance(H: float, s: float | np.ndarray, t: float | np.ndarray) -> float | np.ndarray:
    """``E[B(s)B(t)] = (|t|^2H + |s|^2H - |t-s|^2H)/2`` for two-sided fBm."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * H
    out = 0.5 * (np.abs(t) ** h2 + np.abs(s) ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def _fgn_eigenvalues(H: float, n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * H
    gam = 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise NumericFailure(f"circulant embedding is not positive semidefinite (min {lam.min():.3e})")
    return np.clip(lam, 0.0, None)


def sample_fgn(H: float, n: int, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """``count`` independent unit-step fractional Gaussian noise sequences of length ``n``."""
    lam = _fgn_eigenvalues(H, n)
    m = lam.size
    z = rng.standard_normal((count, m)) + 1j * rng.standard_normal((count, m))
    w = np.fft.fft(np.sqrt(lam / m) * z, axis=-1)
    return w.real[:, :n]


def sample_fbm(spec: FbmSpec, grid: TimeGrid) -> NoisePath:
    """Exact draw of the ``d``-mode fBm on ``grid``, pinned to zero at time 0.

    The window may contain negative times; time zero must lie on the grid
    lattice (it may sit outside the window, in which case the lattice is
    extended to reach it before pinning).
    """
    dt = grid.dt
    k0 = -grid.t0 / dt
    if abs(k0 - round(k0)) > 1e-9 * max(1.0, abs(k0)):
        raise DomainError("time zero is not on the grid lattice")
    k0 = int(round(k0))
    lo, hi = min(0, k0), max(grid.N, k0)
    n = hi - lo
    rng = np.random.default_rng(spec.seed)
    inc = sample_fgn(spec.H, n, rng, spec.dim) * dt**spec.H          # (d, n)
    path = np.zeros((spec.dim, n + 1))
    path[:, 1:] = np.cumsum(inc, axis=1)
    path -= path[:, [k0 - lo]]
    vals = path[:, -lo : -lo + grid.N + 1].T * np.sqrt(np.asarray(spec.q))[None, :]
    return NoisePath(GridPath(grid, vals))


def dyadic_linearize(omega: NoisePath | GridPath, n: int) -> NoisePath:
    """Piecewise-linear interpolant on ``2^n`` equal pieces of the window, resampled on the grid."""
    p = as_path(omega)
    N = p.grid.N
    if n < 0 or N % (2**n) != 0:
        raise DomainError(f"level {n} needs the grid size {N} to be a multiple of 2^{n}")
    step = N // 2**n
    nodes = np.arange(0, N + 1, step)
    t = p.times
    vals = np.stack([np.interp(t, t[nodes], p.values[nodes, i]) for i in range(p.dim)], axis=1)
    return NoisePath(GridPath(p.grid, vals), level=n)


def wiener_shift(omega: NoisePath | GridPath, tau: float) -> NoisePath:
    """``(theta_tau omega)(t) = omega(t + tau) - omega(tau)`` on the window shifted by ``-tau``."""
    p = as_path(omega)
    g = p.grid
    k = tau / g.dt
    if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
        raise DomainError(f"shift {tau} is not a multiple of the grid step")
    j = g.index_of(tau)
    shifted = TimeGrid(g.t0 - tau, g.T - tau, g.N)
    vals = p.values - p.values[j]
    level = omega.level if isinstance(omega, NoisePath) else None
    return NoisePath(GridPath(shifted, vals), level)


def window(omega: NoisePath | GridPath, a: float, b: float) -> NoisePath:
    """Restriction of a path to the grid window ``[a, b]``."""
    p = as_path(omega)
    j, k = p.grid.index_of(a), p.grid.index_of(b)
    level = omega.level if isinstance(omega, NoisePath) else None
    return NoisePath(p.restrict(j, k), level)


def hurst_estimate(omega: NoisePath | GridPath, max_lag: int = 16) -> np.ndarray:
    """Per-mode roughness index from the log-log slope of mean squared increments.

    For fBm ``E|B(t+h)-B(t)|^2 = q h^(2H)`` exactly, so half the slope over
    dyadic lags estimates the Hoelder exponent.  Short lags carry the most
    independent increments; lags stop at ``max_lag`` steps (and ``N/4``).
    """
    p = as_path(omega)
    N = p.grid.N
    lags = []
    k = 1
    while k <= min(max_lag, N // 4):
        lags.append(k)
        k *= 2
    if len(lags) < 2:
        raise DomainError("grid too short for a slope estimate")
    x = np.log(np.asarray(lags) * p.grid.dt)
    ms = np.array([np.mean((p.values[h:] - p.values[:-h]) ** 2, axis=0) for h in lags])
    slopes = np.polyfit(x, np.log(ms), 1)[0]
    return 0.5 * np.atleast_1d(slopes)
