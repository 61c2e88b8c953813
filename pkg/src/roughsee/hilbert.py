"""Galerkin representation of the state space.

A state is a vector of ``d`` coordinates with respect to an orthonormal
eigenbasis of the generator.  The generator ``-A`` is diagonal with
eigenvalues ``lambda_i``, so the semigroup and all fractional powers act
componentwise.  Time is discretised on a uniform grid; paths carry one
vector per grid point and areas one ``d x d`` matrix per ordered pair.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DomainError, StructuralError

# relative slack used when snapping times onto a grid
_SNAP = 1e-9


@dataclass(frozen=True)
class SpectralOperator:
    """Diagonal generator ``-A`` given by its nondecreasing positive eigenvalues."""

    eigenvalues: np.ndarray

    def __post_init__(self) -> None:
        lam = np.atleast_1d(np.asarray(self.eigenvalues, dtype=float))
        if lam.ndim != 1 or lam.size == 0:
            raise DomainError("eigenvalues must be a nonempty 1-d array")
        if not np.all(np.isfinite(lam)) or lam[0] <= 0.0:
            raise DomainError("eigenvalues must be finite with lambda_1 > 0")
        if np.any(np.diff(lam) < 0.0):
            raise DomainError("eigenvalues must be nondecreasing")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.size)

    def decay(self, t: float | np.ndarray) -> np.ndarray:
        """Diagonal of ``S(t)``; broadcasts over an array of times (last axis = mode)."""
        t = np.asarray(t, dtype=float)
        return np.exp(-np.multiply.outer(t, self.eigenvalues))

    def to_dict(self) -> dict:
        return {"eigenvalues": [float(x) for x in self.eigenvalues]}

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralOperator":
        return cls(np.asarray(data["eigenvalues"], dtype=float))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t0 + k*dt`` for ``k = 0..N``."""

    t0: float
    T: float
    N: int

    def __post_init__(self) -> None:
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")
        if not np.isfinite(self.t0) or not np.isfinite(self.T) or self.T <= self.t0:
            raise DomainError(f"need t0 < T, got [{self.t0}, {self.T}]")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.N

    @property
    def points(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.N + 1)

    def __len__(self) -> int:
        return self.N + 1

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to ``t``; raises if ``t`` is off-grid."""
        x = (t - self.t0) / self.dt
        k = int(round(x))
        if abs(x - k) > _SNAP * max(1.0, abs(x)) or k < 0 or k > self.N:
            raise DomainError(f"time {t} is not a point of {self}")
        return k

    def sub(self, j: int, k: int) -> "TimeGrid":
        """Grid made of points ``j..k`` of this grid."""
        if not 0 <= j < k <= self.N:
            raise DomainError(f"bad sub-range ({j}, {k}) of a grid with N={self.N}")
        return TimeGrid(self.t0 + j * self.dt, self.t0 + k * self.dt, k - j)

    def same_as(self, other: "TimeGrid") -> bool:
        tol = _SNAP * max(1.0, abs(self.T), abs(self.t0))
        return (
            self.N == other.N
            and abs(self.t0 - other.t0) <= tol
            and abs(self.T - other.T) <= tol
        )

    def to_dict(self) -> dict:
        return {"t0": self.t0, "T": self.T, "N": self.N}

    @classmethod
    def from_dict(cls, data: dict) -> "TimeGrid":
        return cls(float(data["t0"]), float(data["T"]), int(data["N"]))


@dataclass(frozen=True)
class GridPath:
    """Values in R^d at every point of a grid, linearly interpolated in between."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != len(self.grid):
            raise StructuralError(
                f"path has {vals.shape[0]} samples, grid has {len(self.grid)} points"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("path values must be finite")
        vals = np.array(vals, copy=True)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    def at(self, t: float | np.ndarray) -> np.ndarray:
        """Linear interpolation at arbitrary times inside the grid window."""
        t = np.asarray(t, dtype=float)
        x = self.times
        out = np.stack([np.interp(t, x, self.values[:, i]) for i in range(self.dim)], axis=-1)
        return out

    def restrict(self, j: int, k: int) -> "GridPath":
        return GridPath(self.grid.sub(j, k), self.values[j : k + 1])

    def __add__(self, other: "GridPath") -> "GridPath":
        _check_grid(self.grid, other.grid)
        return GridPath(self.grid, self.values + other.values)

    def __sub__(self, other: "GridPath") -> "GridPath":
        _check_grid(self.grid, other.grid)
        return GridPath(self.grid, self.values - other.values)

    def scaled(self, c: float) -> "GridPath":
        return GridPath(self.grid, c * self.values)


@dataclass(frozen=True)
class AreaField:
    """Matrix ``v(t_j, t_k)`` for grid pairs ``j <= k``.

    Stored densely as an ``(N+1, N+1, d, d)`` array; entries with ``j > k``
    are unused and kept at zero.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        n = len(self.grid)
        if vals.ndim != 4 or vals.shape[:2] != (n, n) or vals.shape[2] != vals.shape[3]:
            raise StructuralError(f"area array has shape {vals.shape}, expected ({n}, {n}, d, d)")
        vals = np.array(vals, copy=True)
        idx = np.arange(n)
        vals[idx, idx] = 0.0
        vals[np.tril_indices(n, -1)] = 0.0
        if not np.all(np.isfinite(vals)):
            raise DomainError("area values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return int(self.values.shape[2])

    @classmethod
    def zeros(cls, grid: TimeGrid, d: int) -> "AreaField":
        n = len(grid)
        return cls(grid, np.zeros((n, n, d, d)))

    def __call__(self, j: int, k: int) -> np.ndarray:
        if j > k:
            raise DomainError("area is only defined for j <= k")
        return self.values[j, k]

    def restrict(self, j: int, k: int) -> "AreaField":
        return AreaField(self.grid.sub(j, k), self.values[j : k + 1, j : k + 1])

    def __sub__(self, other: "AreaField") -> "AreaField":
        _check_grid(self.grid, other.grid)
        return AreaField(self.grid, self.values - other.values)


@dataclass(frozen=True)
class PathAreaPair:
    """A path ``u`` together with an area ``v`` on the same grid."""

    u: GridPath
    v: AreaField

    def __post_init__(self) -> None:
        _check_grid(self.u.grid, self.v.grid)
        if self.u.dim != self.v.dim:
            raise StructuralError("path and area dimensions differ")

    @property
    def grid(self) -> TimeGrid:
        return self.u.grid

    def restrict(self, j: int, k: int) -> "PathAreaPair":
        return PathAreaPair(self.u.restrict(j, k), self.v.restrict(j, k))

    def __sub__(self, other: "PathAreaPair") -> "PathAreaPair":
        return PathAreaPair(self.u - other.u, self.v - other.v)


def _check_grid(a: TimeGrid, b: TimeGrid) -> None:
    if not a.same_as(b):
        raise StructuralError(f"grids differ: {a} vs {b}")


def _spectrum(op: SpectralOperator | np.ndarray) -> np.ndarray:
    if isinstance(op, SpectralOperator):
        return op.eigenvalues
    return np.atleast_1d(np.asarray(op, dtype=float))


# ---------------------------------------------------------------- operators


def apply_semigroup(
    op: SpectralOperator, t: float, x: np.ndarray, delta: float = 0.0, gamma: float = 0.0
) -> np.ndarray:
    """Apply ``(-A)^(gamma-delta) S(t)`` to coordinates ``x``.

    With ``x`` read as ``V_delta`` coordinates the result is the
    ``V_gamma``-weighted image; ``t = 0`` and ``gamma = delta`` is the identity.
    """
    if t < 0:
        raise DomainError(f"semigroup time must be nonnegative, got {t}")
    lam = _spectrum(op)
    x = np.asarray(x, dtype=float)
    return lam ** (gamma - delta) * np.exp(-lam * t) * x


def frac_power_norm(op: SpectralOperator, x: np.ndarray, delta: float) -> float:
    """``|x|_{V_delta} = sqrt(sum lambda_i^(2 delta) x_i^2)``."""
    lam = _spectrum(op)
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.sum(lam ** (2.0 * delta) * x**2, axis=-1)))


def smoothing_constant(gamma: float, delta: float) -> float:
    """Sharp constant of ``|(-A)^(gamma-delta) S(t)| <= c t^(delta-gamma)``."""
    e = gamma - delta
    if e <= 0:
        return 1.0
    return max((e / np.e) ** e, 1.0)


# ---------------------------------------------------------------- seminorms


def _pair_ratios(values: np.ndarray, times: np.ndarray, beta: float, weight_from: float | None,
                 block: int = 256) -> float:
    """max over j<k of w_j |x_k - x_j| / (t_k - t_j)^beta, computed in row blocks."""
    n = values.shape[0]
    best = 0.0
    flat = values.reshape(n, -1)
    for start in range(0, n - 1, block):
        stop = min(start + block, n - 1)
        rows = np.arange(start, stop)
        diff = flat[None, :, :] - flat[rows, None, :]
        norm = np.sqrt(np.sum(diff * diff, axis=-1))
        gap = times[None, :] - times[rows, None]
        mask = gap > 0
        ratio = np.zeros_like(norm)
        ratio[mask] = norm[mask] / gap[mask] ** beta
        if weight_from is not None:
            w = np.clip(times[rows] - weight_from, 0.0, None) ** beta
            ratio *= w[:, None]
        best = max(best, float(ratio.max(initial=0.0)))
    return best


def holder_seminorm(u: GridPath, beta: float, weighted: bool = False) -> float:
    """Grid surrogate of the beta-Hoelder seminorm.

    Unweighted: max of |u(t)-u(s)|/(t-s)^beta over grid pairs.  Weighted:
    the same ratio multiplied by (s-t0)^beta, which tolerates a singular
    start.  Both are lower bounds for the continuum quantities.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0,1), got {beta}")
    if len(u.grid) < 2:
        raise DomainError("need at least two grid points")
    return _pair_ratios(u.values, u.times, beta, u.grid.t0 if weighted else None)


def area_seminorm(v: AreaField, exponent: float, weighted: bool = False,
                  beta: float | None = None) -> float:
    """max over grid pairs s<t of |v(s,t)|_F/(t-s)^exponent, optionally times (s-t0)^beta."""
    if not 0.0 < exponent < 2.0:
        raise DomainError(f"exponent must lie in (0,2), got {exponent}")
    if weighted and beta is None:
        raise DomainError("weighted area seminorm needs beta")
    times = v.grid.points
    n = len(times)
    norm = np.sqrt(np.sum(v.values**2, axis=(2, 3)))
    gap = times[None, :] - times[:, None]
    mask = gap > 0
    ratio = np.zeros((n, n))
    ratio[mask] = norm[mask] / gap[mask] ** exponent
    if weighted:
        ratio *= (np.clip(times - v.grid.t0, 0.0, None) ** beta)[:, None]
    return float(ratio.max(initial=0.0))


def x_seminorm(pair: PathAreaPair, beta: float, beta_p: float, weighted: bool = False) -> float:
    """``|||U|||_X = |||u|||_beta + ||v||_{beta+beta'}`` on the grid."""
    return holder_seminorm(pair.u, beta, weighted) + area_seminorm(
        pair.v, beta + beta_p, weighted, beta
    )


def chen_residual(u: GridPath, v: AreaField, omega: GridPath, stride: int = 1) -> float:
    """max over grid triples s<=r<=t of the Chen defect in Frobenius norm.

    ``stride > 1`` restricts s and r to every stride-th point (t runs over
    the full grid); use it to bound the cost on long grids.
    """
    _check_grid(u.grid, v.grid)
    _check_grid(u.grid, omega.grid)
    if u.dim != v.dim or omega.dim != v.dim:
        raise StructuralError("dimension mismatch between u, v and omega")
    x, w, a = u.values, omega.values, v.values
    n = x.shape[0]
    worst = 0.0
    for s in range(0, n, stride):
        rs = np.arange(s, n, stride)
        du = x[rs] - x[s]                                   # (R, d)
        dw = w[None, s:, :] - w[rs, None, :]                # (R, T, d)
        res = (a[s, rs][:, None] + a[rs, s:]
               + du[:, None, :, None] * dw[:, :, None, :] - a[s, s:][None])
        tmask = np.arange(s, n)[None, :] >= rs[:, None]
        nrm = np.sqrt(np.sum(res**2, axis=(2, 3)))
        worst = max(worst, float(np.max(nrm * tmask)))
    return worst


def chen_extend(local: np.ndarray, u: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Build ``v(t_j, t_k)`` for all pairs from one-step areas by the Chen relation.

    ``local[m]`` is the area over ``[t_m, t_{m+1}]``; ``u`` and ``omega`` are
    ``(n, d)`` and ``(n, e)`` samples.  Returns the dense ``(n, n, d, e)`` array.
    """
    n, d = u.shape
    e = omega.shape[1]
    dw = np.diff(omega, axis=0)
    L = np.zeros((n, d, e))
    C = np.zeros((n, d, e))
    L[1:] = np.cumsum(local, axis=0)
    C[1:] = np.cumsum(u[:-1, :, None] * dw[:, None, :], axis=0)
    out = (L[None, :] - L[:, None]) + (C[None, :] - C[:, None])
    out -= u[:, None, :, None] * (omega[None, :, None, :] - omega[:, None, None, :])
    out[np.tril_indices(n, 0)] = 0.0
    return out


# ---------------------------------------------------------------- serialisation


def path_to_csv(path: GridPath, target: str | Path, header: Iterable[str] | None = None,
                with_index: bool = True) -> None:
    d = path.dim
    cols = list(header) if header is not None else [f"x_{i + 1}" for i in range(d)]
    with open(target, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow((["index"] if with_index else []) + ["time"] + cols)
        for k, (t, row) in enumerate(zip(path.times, path.values)):
            wr.writerow(([k] if with_index else []) + [repr(float(t))] + [repr(float(x)) for x in row])


def path_from_csv(source: str | Path) -> GridPath:
    """Read a path written by ``path_to_csv`` (with or without the index column)."""
    with open(source, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise StructuralError(f"{source}: need a header and at least two rows")
    head = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    tcol = head.index("time")
    times = data[:, tcol]
    vals = data[:, tcol + 1 :]
    n = len(times) - 1
    grid = TimeGrid(times[0], times[-1], n)
    if np.max(np.abs(grid.points - times)) > 1e-9 * max(1.0, abs(times[-1])):
        raise StructuralError(f"{source}: times are not a uniform grid")
    return GridPath(grid, vals)


def area_to_csv(v: AreaField, target: str | Path) -> None:
    d = v.dim
    cols = [f"v_{a + 1}_{b + 1}" for a in range(d) for b in range(d)]
    times = v.grid.points
    n = len(times)
    with open(target, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["j", "k", "s", "t"] + cols)
        for j in range(n):
            for k in range(j, n):
                wr.writerow([j, k, repr(float(times[j])), repr(float(times[k]))]
                            + [repr(float(x)) for x in v.values[j, k].ravel()])


def area_from_csv(source: str | Path, grid: TimeGrid) -> AreaField:
    with open(source, newline="") as fh:
        rows = list(csv.reader(fh))
    ncols = len(rows[0]) - 4
    d = int(round(np.sqrt(ncols)))
    if d * d != ncols:
        raise StructuralError(f"{source}: {ncols} value columns is not a square")
    n = len(grid)
    vals = np.zeros((n, n, d, d))
    for r in rows[1:]:
        if r:
            j, k = int(r[0]), int(r[1])
            vals[j, k] = np.array([float(x) for x in r[4:]]).reshape(d, d)
    return AreaField(grid, vals)


def grid_manifest(grid: TimeGrid, d: int, op: SpectralOperator | None = None) -> dict:
    out = {"grid": grid.to_dict(), "d": int(d)}
    if op is not None:
        out["eigenvalues"] = [float(x) for x in op.eigenvalues]
    return out


def write_json(data: dict, target: str | Path) -> None:
    Path(target).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
