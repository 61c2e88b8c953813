"""Fixed-point solver for path-area pairs, step schedule and global solution.

Two evaluations of the operator ``T = (T1, T2)`` are provided.

``segment`` (default): on each grid segment the driving path is linear and
the twisted integrals are closed forms.  With ``y`` the new path,

    y_{m+1} = e^{-lambda h} y_m + phi1 (G(u_m) dw_m) + 2 phi2 (DG(u_m) : v_m)
    l_m     = [ (phi1 - 1) y_m + phi2 (G(u_m) dw_m) + 2 phi3 (DG(u_m) : v_m) ] (x) dw_m

and ``T2`` is the Chen extension of the one-step areas ``l_m`` along
``y``.  Here ``(G dw)_a = sum_c G_ac dw_c`` and
``(DG : v)_a = sum_{c,k} dG_ac/du_k v_kc``.

``fractional``: the compensated fractional integrals evaluated by the
quadratures of ``fracint``; used to validate the segment route.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .area import OperatorArea, Segments, StoredArea, w_direct
from .errors import ContractError, ContractionFailure, DomainError, ScheduleError, StructuralError
from .hilbert import (AreaField, GridPath, PathAreaPair, TimeGrid, _check_grid, chen_extend,
                      chen_residual, frac_power_norm, x_seminorm)
from .noise import as_path

# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class SolverParams:
    """Exponents, schedule constants and iteration controls.

    ``c`` and ``K`` are measured or derived when left as ``None``.
    """

    H: float = 0.45
    beta: float = 0.34
    beta_p: float = 0.43
    beta_pp: float = 0.44
    alpha: float = 0.665
    kappa: float = 0.9
    gamma: float = 0.8
    rho: float = 0.26
    c: float | None = None
    K: int | None = None
    fp_tol: float = 1e-10
    fp_max_iter: int = 200
    safety: float = 2.0
    K_max: int = 10**7
    max_intervals: int = 100000
    max_halvings: int = 6
    chen_tol: float = 1e-6
    method: str = "segment"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        b, bp, bpp, H = self.beta, self.beta_p, self.beta_pp, self.H
        if not (1.0 / 3.0 < b < bp < bpp < H <= 0.5):
            raise ContractError(
                "exponents must satisfy 1/3 < beta < beta' < beta'' < H <= 1/2 "
                f"(beta={b}, beta'={bp}, beta''={bpp}, H={H})")
        a = self.alpha
        if not (max(1.0 - b, 1.0 - bp) < a < 2.0 * b and a < (b + 1.0) / 2.0):
            raise ContractError(
                f"alpha must satisfy 1-beta < alpha < 2 beta and alpha < (beta+1)/2 "
                f"(alpha={a}, beta={b}); admissible interval ({1.0 - b:.4g}, "
                f"{min(2.0 * b, (b + 1.0) / 2.0):.4g})")
        if not (self.kappa + bp > 1.0 and self.kappa <= 1.0 and self.kappa >= b):
            raise ContractError(f"kappa must satisfy kappa + beta' > 1, beta <= kappa <= 1 (kappa={self.kappa})")
        if not a < self.gamma < 1.0:
            raise ContractError(f"gamma must lie in (alpha, 1) (gamma={self.gamma})")
        if not 0.25 < self.rho < 0.5:
            raise ContractError(f"rho must lie in (1/4, 1/2) (rho={self.rho})")
        if self.c is not None and not self.c > 0:
            raise ContractError("c must be positive")
        if self.K is not None and (int(self.K) != self.K or self.K < 1):
            raise ContractError("K must be a positive integer")
        if not self.fp_tol > 0 or self.fp_max_iter < 1:
            raise ContractError("fp_tol must be positive and fp_max_iter >= 1")
        if self.method not in ("segment", "fractional"):
            raise ContractError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverParams":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ContractError(f"unknown parameter fields: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, source: str | Path) -> "SolverParams":
        return cls.from_dict(json.loads(Path(source).read_text()))


# ---------------------------------------------------------------- operator T


@dataclass(frozen=True)
class Window:
    """Everything the operator needs on one interval of the grid."""

    grid: TimeGrid
    omega: np.ndarray        # (n+1, d)
    seg: Segments
    model: object
    area_seg: np.ndarray     # (n, a, c, b) one-step twisted areas

    @classmethod
    def build(cls, omega, model, j0: int = 0, j1: int | None = None, area=None) -> "Window":
        p = as_path(omega)
        j1 = p.grid.N if j1 is None else j1
        sub = p.restrict(j0, j1)
        lam = model.spectrum.eigenvalues
        if lam.size != p.dim:
            raise StructuralError(f"model has {lam.size} modes, noise has {p.dim}")
        seg = Segments.build(sub, lam)
        if area is None:
            aseg = seg.area()
        else:
            aseg = np.stack([area(j0 + m, j0 + m + 1) for m in range(j1 - j0)])
        return cls(sub.grid, sub.values, seg, model, aseg)

    @property
    def n(self) -> int:
        return self.seg.n

    @property
    def lam(self) -> np.ndarray:
        return self.seg.lam


def _one_step_areas(v: np.ndarray) -> np.ndarray:
    n = v.shape[0] - 1
    idx = np.arange(n)
    return v[idx, idx + 1]


def _segment_T(U: PathAreaPair, u0: np.ndarray, win: Window) -> tuple[np.ndarray, np.ndarray]:
    """Segment route: returns the new path values and one-step areas."""
    seg = win.seg
    u = U.u.values
    v1 = _one_step_areas(U.v.values)                                  # (n, k, c)
    G = win.model.derivative_tensor(u[:-1], 0)                         # (n, a, c)
    DG = win.model.derivative_tensor(u[:-1], 1)                        # (n, a, c, k)
    gdw = np.einsum("mac,mc->ma", G, seg.dw)
    gA = np.einsum("mac,macb->mab", G, win.area_seg)
    dgv = np.einsum("mack,mkc->ma", DG, v1)
    drive = seg.p1 * gdw + 2.0 * seg.p2 * dgv
    y = np.empty_like(u)
    y[0] = u0
    for m in range(win.n):
        y[m + 1] = seg.decay * y[m] + drive[m]
    local = (((seg.p1 - 1.0) * y[:-1] + 2.0 * seg.p3 * dgv)[:, :, None] * seg.dw[:, None, :]) + gA
    return y, local


def apply_T(U: PathAreaPair, u0: np.ndarray, win: Window) -> PathAreaPair:
    y, local = _segment_T(U, u0, win)
    return PathAreaPair(GridPath(win.grid, y), AreaField(win.grid, chen_extend(local, y, win.omega)))


def t1_apply(U: PathAreaPair, omega, model, u0: np.ndarray, method: str = "segment",
             alpha: float = 0.665, area=None, j0: int = 0) -> GridPath:
    """First component of the operator on the grid of ``U``.

    ``omega`` must live on a grid containing the grid of ``U`` starting at
    node ``j0``.  ``method="fractional"`` evaluates the compensated fractional
    integrals with the semigroup-twisted integrands at every grid point.
    """
    p = as_path(omega)
    n = U.grid.N
    win = Window.build(p, model, j0, j0 + n, area)
    _check_grid(win.grid, U.grid)
    u0 = np.asarray(u0, dtype=float)
    if method == "segment":
        y, _ = _segment_T(U, u0, win)
        return GridPath(win.grid, y)
    if method != "fractional":
        raise DomainError(f"unknown method {method!r}")
    from .fracint import hn_samples

    u = U.u.values
    G = model.derivative_tensor(u, 0)
    DG = model.derivative_tensor(u, 1)
    lam, h = win.lam, win.grid.dt
    out = np.empty_like(u)
    out[0] = u0
    for k in range(1, n + 1):
        dec = np.exp(-np.outer((k - np.arange(k + 1)) * h, lam))      # (k+1, a)
        Y = dec[:, :, None] * G[: k + 1]
        Yp = dec[:, :, None, None] * DG[: k + 1]
        X = U.v.values[: k + 1, : k + 1]
        out[k] = np.exp(-lam * k * h) * u0 + hn_samples(Y, win.omega[: k + 1], alpha, h,
                                                        [(Yp, u[: k + 1], X)])
    return GridPath(win.grid, out)


def t2_apply(U: PathAreaPair, omega, model, u0: np.ndarray, method: str = "segment",
             alpha: float = 0.665, pairs: list[tuple[int, int]] | None = None, area=None,
             j0: int = 0) -> AreaField | dict:
    """Second component of the operator.

    The segment route returns the full ``AreaField``.  The fractional route
    evaluates the three fractional integrals for the requested index pairs
    (default: a coarse set) and returns ``{(j, k): matrix}``; the
    ``u (x) (omega (x)_S omega)`` element inside it is the segment-exact
    ``w_direct`` field.  Both routes anchor the first integral at the new
    path ``T1(U)(s)``, which equals ``u(s)`` at the fixed point.
    """
    p = as_path(omega)
    n = U.grid.N
    win = Window.build(p, model, j0, j0 + n, area)
    _check_grid(win.grid, U.grid)
    u0 = np.asarray(u0, dtype=float)
    y, local = _segment_T(U, u0, win)
    if method == "segment":
        return AreaField(win.grid, chen_extend(local, y, win.omega))
    if method != "fractional":
        raise DomainError(f"unknown method {method!r}")
    from .fracint import hn_samples, young_samples

    if pairs is None:
        st = max(1, n // 4)
        nodes = list(range(0, n + 1, st))
        pairs = [(a, b) for a in nodes for b in nodes if b > a]
    sub_path = GridPath(win.grid, win.omega)
    oa = OperatorArea.build(sub_path, win.lam) if area is None else None
    lam, h, d = win.lam, win.grid.dt, win.lam.size
    u = U.u.values
    G = model.derivative_tensor(u, 0)
    DG = model.derivative_tensor(u, 1)
    eye = np.eye(d)
    out = {}
    for j, k in pairs:
        m = k - j
        w = win.omega[j : k + 1]
        # first integral: (S(xi - s) - id) y(s) (x) domega(xi)
        f = (np.exp(-np.outer(np.arange(m + 1) * h, lam)) - 1.0) * y[j]
        F = np.einsum("ra,bc->rabc", f, eye).reshape(m + 1, d * d, d)
        term1 = young_samples(F, w, alpha, h).reshape(d, d)
        # remaining integrals: G(u) against r -> -A(r, t) with the w element as area
        Acol = np.stack([(oa(jj, k) if oa is not None else area(j0 + jj, j0 + k))
                         for jj in range(j, k + 1)])                       # (m+1, a, c, b)
        gam = -Acol.reshape(m + 1, d**3)
        Ybig = np.einsum("rac,ax,by->rabxcy", G[j : k + 1], eye, eye).reshape(m + 1, d * d, d**3)
        Ypbig = np.einsum("rack,ax,by->rabxcyk", DG[j : k + 1], eye, eye).reshape(
            m + 1, d * d, d**3, d)
        X = w_direct(U.u, sub_path, lam, win.grid.points[k], j0=j)         # (r, q, a, b, k, c)
        Xhn = np.einsum("rqabkc->rqkacb", X).reshape(m + 1, m + 1, d, d**3)
        rest = hn_samples(Ybig, gam, alpha, h, [(Ypbig, u[j : k + 1], Xhn)]).reshape(d, d)
        out[(j, k)] = term1 + rest
    return out


# ---------------------------------------------------------------- schedule


def minor_root(c: float, dT: float, rho0: float, p: SolverParams) -> float:
    """Smaller root of ``x = c (dT^(k-b) rho0 + dT^(b'-b) + dT^(b'+b) x^2)``."""
    b, bp, k = p.beta, p.beta_p, p.kappa
    A = dT ** (k - b) * rho0 + dT ** (bp - b)
    disc = 1.0 - 4.0 * c * c * dT ** (bp + b) * A
    if disc < 0:
        raise ScheduleError(f"no invariant ball: discriminant {disc:.3e} < 0 (interval too long)")
    return 2.0 * c * A / (1.0 + math.sqrt(disc))


def ex7_terms(K: int, i: int, c: float, rho0: float, p: SolverParams) -> list[tuple[float, float]]:
    """The four step-size inequalities as ``(lhs, rhs)`` with ``lhs < rhs`` required.

    The first one uses the closed bound ``2cK^-b' i^(1-b')/(1-b')`` for the
    sum over previous intervals; ``coni_bound`` evaluates the sum itself.
    """
    b, bp, k = p.beta, p.beta_p, p.kappa
    x = float(K) * i
    first = rho0 + 2.0 * c * K ** (-bp) * i ** (1.0 - bp) / (1.0 - bp)
    sq = 8.0 * c * c * x ** (2 * b - 2 * k) * x ** (2 - 2 * bp) + 8.0 * c * c * x ** (2 * b - 2 * bp)
    return [
        (first, x ** (1.0 - bp)),
        (4.0 * c * c * x ** (-bp - b) * (x ** (b - k) * x ** (1.0 - bp) + x ** (b - bp)), 1.0),
        (c * x ** (b - bp) * (1.0 + 2.0 * x ** (-2 * b) * sq), 0.5),
        (c * x ** (-bp) + c * x ** (-bp - 2 * b) * sq, 2.0 * c * x ** (-bp)),
    ]


def ex7_ok(K: int, i: int, c: float, rho0: float, p: SolverParams) -> bool:
    return all(l < r for l, r in ex7_terms(K, i, c, rho0, p))


def coni_bound(rho0: float, c: float, K: int, i: int, beta_p: float) -> float:
    """``rho0 + sum_{j<=i} 2c (Kj)^(-beta')``."""
    j = np.arange(1, i + 1, dtype=float)
    return float(rho0 + np.sum(2.0 * c * (K * j) ** (-beta_p)))


@dataclass(frozen=True)
class Schedule:
    """Step-size schedule; ``intervals`` is complete unless ``truncated``.

    ``log_i_star`` is the natural log of the interval count, available even
    when the count itself is too large to list.
    """

    K: int
    c: float
    rho0: float
    start: float
    end: float
    intervals: list[tuple[float, float]]
    i_star: int | None
    log_i_star: float
    truncated: bool
    checks: list[bool]

    @property
    def ok(self) -> bool:
        return all(self.checks)

    def to_dict(self) -> dict:
        return {"K": self.K, "c": self.c, "rho0": self.rho0, "start": self.start, "end": self.end,
                "i_star": self.i_star, "log_i_star": self.log_i_star, "truncated": self.truncated,
                "checked": len(self.checks), "all_checks_hold": self.ok,
                "intervals": [list(x) for x in self.intervals]}


def smallest_K(rho0: float, c: float, p: SolverParams) -> int:
    """Smallest ``K`` for which all four inequalities hold at ``i = 1``."""
    if not c > 0 or rho0 < 0:
        raise ContractError("need c > 0 and rho0 >= 0")
    hi = 1
    while not ex7_ok(hi, 1, c, rho0, p):
        hi *= 2
        if hi > p.K_max:
            raise ScheduleError(f"no K <= {p.K_max} satisfies the step-size inequalities (c={c:.4g})")
    lo = hi // 2
    if lo < 1:
        return hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ex7_ok(mid, 1, c, rho0, p):
            hi = mid
        else:
            lo = mid
    return hi


def _log_harmonic_count(x: float) -> float:
    """Natural log of the smallest ``i`` with ``H_i >= x``, from ``H_i ~ ln i + gamma + 1/(2i)``."""
    return x - float(np.euler_gamma)


def step_schedule(rho0: float, c: float, p: SolverParams, start: float = 0.0, end: float = 1.0,
                  K: int | None = None) -> Schedule:
    """Intervals ``[T_{i-1}, T_i]`` of length ``1/(Ki)`` covering ``[start, end]``.

    ``K`` defaults to the smallest admissible value; a configured ``K`` is
    used as given.  The four inequalities are evaluated directly for every
    listed interval.  When more than ``p.max_intervals`` are needed the list
    is truncated and the count is reported through ``log_i_star`` only.
    """
    if K is None:
        K = smallest_K(rho0, c, p)
    span = end - start
    if span <= 0:
        raise DomainError("need start < end")
    i, total = 0, 0.0
    bounds = []
    t = start
    truncated = False
    while total < span - 1e-15:
        if i >= p.max_intervals:
            truncated = True
            break
        i += 1
        total += 1.0 / (K * i)
        nxt = min(start + total, end)
        bounds.append((t, nxt))
        t = nxt
    checks = [ex7_ok(K, j, c, rho0, p) for j in range(1, len(bounds) + 1)]
    if truncated:
        return Schedule(K, c, rho0, start, end, bounds, None, _log_harmonic_count(K * span),
                        True, checks)
    return Schedule(K, c, rho0, start, end, bounds, i, math.log(i), False, checks)


def snap_intervals(bounds: list[tuple[float, float]], grid: TimeGrid, j_start: int,
                   j_end: int) -> list[tuple[int, int]]:
    """Grid index ranges for the schedule intervals; each keeps at least one step."""
    out = []
    j = j_start
    for _, b in bounds:
        if j >= j_end:
            break
        k = int(round((b - grid.t0) / grid.dt))
        k = min(max(k, j + 1), j_end)
        out.append((j, k))
        j = k
    if j < j_end:
        if out:
            out[-1] = (out[-1][0], j_end)
        else:
            out.append((j, j_end))
    return out


# ---------------------------------------------------------------- local solve


@dataclass
class LocalSolution:
    """Fixed point on one interval with its diagnostics."""

    index: int
    j0: int
    j1: int
    pair: PathAreaPair
    radius: float
    iterations: int
    contraction: float
    distances: list[float]
    fixed_point_residual: float
    x_norm: float
    terminal_kappa: float
    chen: float
    uniqueness_gap: float | None = None
    K: int | None = None
    halvings: int = 0

    @property
    def start(self) -> float:
        return self.pair.grid.t0

    @property
    def end(self) -> float:
        return self.pair.grid.T

    @property
    def in_ball(self) -> bool:
        return self.x_norm <= self.radius * (1.0 + 1e-12)

    def to_dict(self) -> dict:
        return {
            "index": self.index, "start": self.start, "end": self.end, "j0": self.j0, "j1": self.j1,
            "dT": self.end - self.start, "K": self.K, "R": self.radius, "x_norm": self.x_norm,
            "in_ball": self.in_ball, "iterations": self.iterations,
            "contraction": self.contraction, "fixed_point_residual": self.fixed_point_residual,
            "terminal_kappa": self.terminal_kappa, "chen": self.chen,
            "uniqueness_gap": self.uniqueness_gap, "halvings": self.halvings,
        }


def _constant_pair(grid: TimeGrid, u0: np.ndarray) -> PathAreaPair:
    n = len(grid)
    d = u0.size
    return PathAreaPair(GridPath(grid, np.tile(u0, (n, 1))), AreaField(grid, np.zeros((n, n, d, d))))


def _alternate_pair(grid: TimeGrid, u0: np.ndarray, omega: np.ndarray, scale: float) -> PathAreaPair:
    """A second starting point: a tilted path with its own area."""
    n = len(grid)
    d = u0.size
    rng = np.random.default_rng(12345)
    tilt = rng.standard_normal(d)
    tilt *= scale / max(np.linalg.norm(tilt), 1e-300)
    s = np.linspace(0.0, 1.0, n)[:, None]
    u = u0[None, :] + s * tilt[None, :]
    local = 0.5 * np.diff(u, axis=0)[:, :, None] * np.diff(omega, axis=0)[:, None, :]
    return PathAreaPair(GridPath(grid, u), AreaField(grid, chen_extend(local, u, omega)))


def _picard(U: PathAreaPair, u0: np.ndarray, win: Window, p: SolverParams, weighted: bool):
    dists = []
    for it in range(1, p.fp_max_iter + 1):
        TU = apply_T(U, u0, win)
        dist = x_seminorm(TU - U, p.beta, p.beta_p, weighted)
        dists.append(dist)
        U = TU
        if dist < p.fp_tol:
            # the last application only confirms that nothing moved
            return U, max(1, it - 1), dists
    ratio = _ratio(dists, p.fp_tol)
    raise ContractionFailure(
        f"fixed-point iteration did not reach {p.fp_tol:g} in {p.fp_max_iter} steps "
        f"(last distance {dists[-1]:.3e}, contraction ratio {ratio:.3f})", ratio=ratio)


def _ratio(dists: list[float], tol: float) -> float:
    """Largest ratio of successive iterate distances above the noise floor."""
    floor = 1e-3 * tol
    best = 0.0
    for a, b in zip(dists, dists[1:]):
        if a > floor and b > floor:
            best = max(best, b / a)
    return best


def local_solve(u0: np.ndarray, omega, model, params: SolverParams, j0: int = 0,
                j1: int | None = None, area=None, weighted: bool = False, rho0: float | None = None,
                c: float | None = None, K: int | None = None, index: int = 0,
                check_uniqueness: bool = True) -> LocalSolution:
    """Solve ``U = T(U)`` on grid nodes ``j0..j1`` of the noise grid by Picard iteration.

    Starts from the ball center ``(u0, 0)``.  ``rho0`` (default ``|u0|_{V_kappa}``)
    and ``c`` enter only the reported radius.  When ``check_uniqueness`` is set
    a second iteration from a tilted starting pair measures the gap between
    the two limits.
    """
    u0 = np.asarray(u0, dtype=float)
    if not np.all(np.isfinite(u0)):
        raise DomainError("initial value must be finite")
    win = Window.build(omega, model, j0, j1, area)
    if u0.size != win.lam.size:
        raise StructuralError(f"initial value has {u0.size} modes, model has {win.lam.size}")
    U0 = _constant_pair(win.grid, u0)
    U, iters, dists = _picard(U0, u0, win, params, weighted)
    TU = apply_T(U, u0, win)
    resid = x_seminorm(TU - U, params.beta, params.beta_p, weighted)
    lam = win.lam
    kappa_norm = frac_power_norm(lam, U.u.values[-1], params.kappa)
    rho = frac_power_norm(lam, u0, params.kappa) if rho0 is None else rho0
    dT = win.grid.T - win.grid.t0
    try:
        R = minor_root(c, dT, rho, params) if c is not None else float("nan")
    except ScheduleError:
        R = float("nan")
    gap = None
    if check_uniqueness:
        scale = max(1e-3, float(np.max(np.abs(U.u.values - u0))))
        Ualt, _, _ = _picard(_alternate_pair(win.grid, u0, win.omega, scale), u0, win, params, weighted)
        gap = x_seminorm(Ualt - U, params.beta, params.beta_p, weighted) + float(
            np.max(np.abs(Ualt.u.values - U.u.values)))
    return LocalSolution(
        index=index, j0=j0, j1=win.n + j0, pair=U, radius=R, iterations=iters,
        contraction=_ratio(dists, params.fp_tol), distances=dists, fixed_point_residual=resid,
        x_norm=x_seminorm(U, params.beta, params.beta_p, weighted), terminal_kappa=kappa_norm,
        chen=chen_residual(U.u, U.v, GridPath(win.grid, win.omega)), uniqueness_gap=gap, K=K)


# ---------------------------------------------------------------- constant c


@dataclass(frozen=True)
class CMeasurement:
    c: float
    ratios: dict

    def to_dict(self) -> dict:
        return {"c": self.c, "ratios": self.ratios}


def measure_c(u0: np.ndarray, omega, model, params: SolverParams, j0: int = 0,
              j1: int | None = None, area=None) -> CMeasurement:
    """Smallest constant making the a-priori bounds hold on probe data, times ``params.safety``.

    Probes: sub-intervals of lengths span/2 .. span/16 starting at the left
    end and at the midpoint, with iterates ``U0, T(U0), T^2(U0)``.  Three
    ratios are taken: the self-map bound, the terminal ``V_kappa`` bound and
    the Lipschitz bound of the operator.
    """
    p = as_path(omega)
    j1 = p.grid.N if j1 is None else j1
    u0 = np.asarray(u0, dtype=float)
    lam = model.spectrum.eigenvalues
    b, bp, k = params.beta, params.beta_p, params.kappa
    h = p.grid.dt
    n = j1 - j0
    r_self = r_term = r_lip = 0.0
    rk0 = frac_power_norm(lam, u0, k)
    for start in (j0, j0 + n // 2):
        for m in range(1, 5):
            length = n // 2**m
            if length < 2 or start + length > j1:
                continue
            win = Window.build(p, model, start, start + length, area)
            ell = length * h
            Us = [_constant_pair(win.grid, u0)]
            for _ in range(3):
                Us.append(apply_T(Us[-1], u0, win))
            norms = [x_seminorm(U, b, bp) for U in Us]
            for i in range(3):
                TU = Us[i + 1]
                nu = norms[i]
                r_self = max(r_self, norms[i + 1] / (ell ** (bp - b) * (1 + ell ** (2 * b) * nu**2)
                                                     + ell ** (k - b) * rk0))
                grow = frac_power_norm(lam, TU.u.values[-1], k) - rk0
                r_term = max(r_term, max(grow, 0.0) / (ell**bp * (1 + ell ** (2 * b) * nu**2)))
            for i in range(2):
                dU = x_seminorm(Us[i + 1] - Us[i], b, bp)
                if dU > 1e-14:
                    dT = x_seminorm(Us[i + 2] - Us[i + 1], b, bp)
                    den = ell ** (bp - b) * (1 + ell ** (2 * b) * (norms[i] ** 2 + norms[i + 1] ** 2)) * dU
                    r_lip = max(r_lip, dT / den)
    ratios = {"self_map": r_self, "terminal": r_term, "lipschitz": r_lip}
    worst = max(ratios.values())
    if worst <= 0:
        worst = 1e-3
    return CMeasurement(params.safety * worst, ratios)


# ---------------------------------------------------------------- concatenation


def concatenate(U1: PathAreaPair | LocalSolution, U2: PathAreaPair | LocalSolution, omega,
                tol: float = 1e-9) -> PathAreaPair:
    """Splice two pairs on adjacent intervals ``[a, b]`` and ``[b, c]``.

    Cross pairs ``s <= b < t`` get ``v1(s,b) + v2(b,t) + (u1(b)-u1(s)) (x) (omega(t)-omega(b))``.
    """
    P1 = U1.pair if isinstance(U1, LocalSolution) else U1
    P2 = U2.pair if isinstance(U2, LocalSolution) else U2
    g1, g2 = P1.grid, P2.grid
    if abs(g1.T - g2.t0) > 1e-9 * max(1.0, abs(g1.T)):
        raise ContractError(f"intervals do not meet: {g1.T} vs {g2.t0}")
    if not np.isclose(g1.dt, g2.dt, rtol=1e-9):
        raise StructuralError("pieces live on grids with different steps")
    u1, u2 = P1.u.values, P2.u.values
    if np.max(np.abs(u1[-1] - u2[0])) > tol * max(1.0, np.max(np.abs(u1[-1]))):
        raise ContractError("path values disagree at the junction")
    p = as_path(omega)
    j = p.grid.index_of(g1.t0)
    n1, n2 = g1.N, g2.N
    w = p.values[j : j + n1 + n2 + 1]
    grid = TimeGrid(g1.t0, g2.T, n1 + n2)
    u = np.concatenate([u1, u2[1:]])
    d = u.shape[1]
    v = np.zeros((n1 + n2 + 1, n1 + n2 + 1, d, d))
    v[: n1 + 1, : n1 + 1] = P1.v.values
    v[n1:, n1:] = P2.v.values
    cross = (P1.v.values[:n1, n1][:, None] + P2.v.values[0, 1:][None, :]
             + (u1[-1] - u1[:n1])[:, None, :, None] * (w[n1 + 1 :] - w[n1])[None, :, None, :])
    v[:n1, n1 + 1 :] = cross
    return PathAreaPair(GridPath(grid, u), AreaField(grid, v))


# ---------------------------------------------------------------- global solve


@dataclass
class GlobalSolution:
    pair: PathAreaPair
    pieces: list[LocalSolution]
    c: float
    c_ratios: dict
    K0: int
    K: int
    rho0: float
    schedule: Schedule | None
    additivity: list[float]
    coni: list[dict]
    ex7: list[dict]
    chen: float
    scale: float

    def to_dict(self) -> dict:
        return {
            "c": self.c, "c_ratios": self.c_ratios, "K0": self.K0, "K": self.K, "rho0": self.rho0,
            "T0": self.pieces[0].end, "i_star": len(self.pieces) - 1,
            "schedule": None if self.schedule is None else {
                "K": self.schedule.K, "i_star_analytic": self.schedule.i_star,
                "checks_hold": self.schedule.ok},
            "intervals": [p.to_dict() for p in self.pieces],
            "additivity": self.additivity, "coni": self.coni, "ex7": self.ex7,
            "chen": self.chen, "scale": self.scale,
        }


def _solve_span(u0, omega, model, params, j0, j1, area, c, K, index, rho, weighted, unique,
                halvings=0):
    """Local solve with interval halving when the iteration does not contract."""
    try:
        sol = local_solve(u0, omega, model, params, j0, j1, area, weighted, rho, c, K, index, unique)
        if sol.contraction < 1.0:
            sol.halvings = halvings
            return [sol]
        failure = ContractionFailure("contraction ratio >= 1", ratio=sol.contraction)
    except ContractionFailure as exc:
        failure = exc
    if halvings >= params.max_halvings or j1 - j0 < 2:
        raise ContractionFailure(str(failure), ratio=failure.ratio, interval=index)
    mid = (j0 + j1) // 2
    left = _solve_span(u0, omega, model, params, j0, mid, area, c, K, index, rho, weighted, unique,
                      halvings + 1)
    u_mid = left[-1].pair.u.values[-1]
    right = _solve_span(u_mid, omega, model, params, mid, j1, area, c, K, index, rho, False, unique,
                       halvings + 1)
    return left + right


def global_solve(u0: np.ndarray, T: float, params: SolverParams, omega, model, area=None,
                 c: float | None = None, check_uniqueness: bool = True,
                 chen_stride: int | None = None) -> GlobalSolution:
    """Solve on ``[t0, T]`` of the noise grid by concatenating local fixed points.

    The first interval ``[t0, T0]`` uses the V norm of ``u0`` as seed and the
    weighted seminorm; its length ``1/K0`` comes from the same step-size
    inequalities.  Afterwards ``rho0 = |u(T0)|_{V_kappa}`` fixes ``K`` and the
    intervals have lengths ``1/(Ki)``, snapped to the grid.  The Chen check
    of the spliced pair scans every ``chen_stride``-th left point (default:
    every point up to 128 nodes, then proportionally sparser); each local
    piece is checked exhaustively.
    """
    p = as_path(omega)
    g = p.grid
    jT = g.index_of(T)
    if jT < 1:
        raise DomainError("T must exceed the grid start")
    u0 = np.asarray(u0, dtype=float)
    lam = model.spectrum.eigenvalues
    cm = None
    if c is None:
        c = params.c
    if c is None:
        cm = measure_c(u0, p, model, params, 0, jT, area)
        c = cm.c
    # first interval with V-data
    rho_v = frac_power_norm(lam, u0, 0.0)
    K0 = smallest_K(rho_v, c, params)
    j_T0 = min(max(1, int(round(1.0 / (K0 * g.dt)))), jT)
    first = _solve_span(u0, p, model, params, 0, j_T0, area, c, K0, 0, rho_v, True, check_uniqueness)
    pieces = list(first)
    rho0 = pieces[-1].terminal_kappa
    schedule = None
    K = params.K if params.K is not None else K0
    ex7 = []
    coni = []
    if j_T0 < jT:
        K = params.K if params.K is not None else smallest_K(rho0, c, params)
        schedule = step_schedule(rho0, c, params, g.points[j_T0], g.points[jT], K)
        if schedule.truncated:
            raise ScheduleError(
                f"schedule needs about exp({schedule.log_i_star:.1f}) intervals (K={K}, c={c:.4g}); "
                "reduce the data size or configure K")
        spans = snap_intervals(schedule.intervals, g, j_T0, jT)
        for i, (a, b) in enumerate(spans, start=1):
            terms = ex7_terms(K, i, c, rho0, params)
            ex7.append({"i": i, "ok": all(l < r for l, r in terms),
                        "terms": [[l, r] for l, r in terms]})
            rho_i = (K * i) ** (1.0 - params.beta_p)
            start_val = pieces[-1].pair.u.values[-1]
            sols = _solve_span(start_val, p, model, params, a, b, area, c, K, i, rho_i, False,
                              check_uniqueness)
            pieces.extend(sols)
            bound = coni_bound(rho0, c, K, i, params.beta_p)
            coni.append({"i": i, "kappa_norm": sols[-1].terminal_kappa, "bound": bound,
                         "ok": sols[-1].terminal_kappa <= bound})
    pair = pieces[0].pair
    for piece in pieces[1:]:
        pair = concatenate(pair, piece, p)
    # additivity: the mild equation over the whole span evaluated on the spliced pair
    win = Window.build(p, model, 0, jT, area)
    y, _ = _segment_T(pair, u0, win)
    additivity = []
    for piece in pieces[1:]:
        seg = slice(piece.j0, piece.j1 + 1)
        additivity.append(float(np.max(np.abs(y[seg] - pair.u.values[seg]))))
    scale = max(1.0, float(np.max(np.abs(pair.u.values))), float(np.max(np.abs(p.values[: jT + 1]))))
    stride = chen_stride if chen_stride is not None else max(1, jT // 128)
    chen = max(chen_residual(pair.u, pair.v, p.restrict(0, jT), stride=stride),
               max(piece.chen for piece in pieces))
    return GlobalSolution(pair, pieces, c, {} if cm is None else cm.ratios, K0, K, rho0, schedule,
                          additivity, coni, ex7, chen, scale)


# ---------------------------------------------------------------- approximation levels


@dataclass(frozen=True)
class LevelStudy:
    levels: list[int]
    distances: list[float]
    path_distances: list[float]
    c: float

    @property
    def ratios(self) -> list[float]:
        d = self.distances
        return [b / a if a > 0 else float("inf") for a, b in zip(d, d[1:])]

    @property
    def path_ratios(self) -> list[float]:
        d = self.path_distances
        return [b / a if a > 0 else float("inf") for a, b in zip(d, d[1:])]

    @property
    def mean_ratio(self) -> float:
        """Geometric mean of the successive ratios, ``(d_last / d_first)^(1/(m-1))``."""
        d = self.distances
        return (d[-1] / d[0]) ** (1.0 / (len(d) - 1))

    def to_dict(self) -> dict:
        return {"levels": self.levels, "distances": self.distances, "ratios": self.ratios,
                "mean_ratio": self.mean_ratio, "path_distances": self.path_distances,
                "path_ratios": self.path_ratios, "c": self.c}


def level_study(u0: np.ndarray, omega, model, params: SolverParams, levels: list[int],
                T: float | None = None, c: float | None = None) -> LevelStudy:
    """Solutions driven by the dyadic interpolants at ``levels``, compared in the X seminorm.

    ``path_distances`` holds the beta-Hoelder distances of the driving paths
    themselves, for comparison.  ``c`` is measured once on the given path
    and shared by all levels.
    """
    from .hilbert import holder_seminorm
    from .noise import dyadic_linearize

    levels = sorted(levels)
    if len(levels) < 3:
        raise DomainError("need at least three levels")
    p = as_path(omega)
    T = p.grid.T if T is None else T
    jT = p.grid.index_of(T)
    if c is None:
        c = params.c if params.c is not None else measure_c(u0, p, model, params, 0, jT).c
    paths = [dyadic_linearize(p, n).path for n in levels]
    sols = [global_solve(u0, T, params, w, model, c=c, check_uniqueness=False).pair for w in paths]
    dist = [x_seminorm(b - a, params.beta, params.beta_p) for a, b in zip(sols, sols[1:])]
    pdist = [holder_seminorm((b - a).restrict(0, jT), params.beta) for a, b in zip(paths, paths[1:])]
    return LevelStudy(levels, dist, pdist, c)
