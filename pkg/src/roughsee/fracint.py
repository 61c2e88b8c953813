"""Fractional derivatives and the pathwise integrals built from them.

All quadratures run on a uniform grid.  Numerators are interpolated
quadratically on every panel and integrated exactly against the singular
kernel, so quadratic data give exact results.  The outer integral in
``r`` uses product integration: the integrand is multiplied by the known
endpoint singularities, the bounded remainder is interpolated linearly and
the weights are incomplete Beta functions.

Sign convention (real valued throughout)::

    D^a_{s+} F[r]  = (F(r)(r-s)^-a + a int_s^r (F(r)-F(q))(r-q)^(-1-a) dq) / Gamma(1-a)
    L_t xi[r]      = ((xi(t)-xi(r))(t-r)^(a-1)
                      + (1-a) int_r^t (xi(q)-xi(r))(q-r)^(a-2) dq) / Gamma(a)
    int F dxi      = int_s^t D^a_{s+}F[r] L_t xi[r] dr

With this convention ``int 1 d(id) = 1`` and ``int q dq = 1/2`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc, gamma

from .errors import ContractError, DomainError, StructuralError
from .hilbert import AreaField, GridPath, TimeGrid, _check_grid, chen_residual


@dataclass(frozen=True)
class FracParams:
    """Order ``alpha`` of the right derivative and panel count for callables."""

    alpha: float
    quad_n: int = 512

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0,1), got {self.alpha}")
        if int(self.quad_n) != self.quad_n or self.quad_n < 2:
            raise DomainError("quad_n must be an integer >= 2")


# ---------------------------------------------------------------- weights


def _panel_moments(p: np.ndarray, shift: np.ndarray, a: float) -> np.ndarray:
    """``int_p^{p+1} (x - shift)^k x^(-1-a) dx`` for k = 0, 1, 2 and panels p >= 1."""
    g, w = np.polynomial.legendre.leggauss(24)
    x = p[:, None] + 0.5 * (g[None, :] + 1.0)
    y = x - shift[:, None]
    base = 0.5 * w[None, :] * x ** (-1.0 - a)
    return np.stack([base.sum(1), (base * y).sum(1), (base * y * y).sum(1)], axis=1)


def _lagrange(m: np.ndarray) -> np.ndarray:
    """Weights on nodes 0, 1, 2 of the quadratic interpolant from moments ``m[..., k]``."""
    m0, m1, m2 = m[..., 0], m[..., 1], m[..., 2]
    return np.stack([(m2 - 3.0 * m1 + 2.0 * m0) / 2.0, 2.0 * m1 - m2, (m2 - m1) / 2.0], axis=-1)


@lru_cache(maxsize=64)
def _distance_weights(n: int, a: float) -> np.ndarray:
    """``C[K, k]`` with ``int_0^K N(x) x^(-1-a) dx ~ sum_k C[K, k] N(k)`` (unit step).

    The numerator must vanish at the singular point x = 0.  Panel ``[p, p+1]``
    interpolates N quadratically on nodes ``p, p+1, p+2`` and the last panel
    on ``K-2, K-1, K``, which makes the rule exact for quadratics.  Moments on
    the first panel are exact; the others use Gauss-Legendre on a smooth
    integrand.
    """
    C = np.zeros((n + 1, n + 1))
    if n >= 1:
        C[1, 1] = 1.0 / (1.0 - a)
    if n < 2:
        C.setflags(write=False)
        return C
    # forward stencils: panel p on nodes p, p+1, p+2
    fwd = np.zeros((n + 1, 3))
    m1, m2 = 1.0 / (1.0 - a), 1.0 / (2.0 - a)
    fwd[0] = [0.0, 2.0 * m1 - m2, (m2 - m1) / 2.0]
    p = np.arange(1, n + 1, dtype=float)
    fwd[1:] = _lagrange(_panel_moments(p, p, a))
    # backward stencils: panel p on nodes p-1, p, p+1
    bwd = np.zeros((n + 1, 3))
    bwd[1:] = _lagrange(_panel_moments(p, p - 1.0, a))
    inner = np.zeros(n + 3)
    for q in range(n + 1):
        inner[q] += fwd[q, 0]
        inner[q + 1] += fwd[q, 1]
        inner[q + 2] += fwd[q, 2]
    for K in range(2, n + 1):
        row = C[K]
        row[: K - 1] = inner[: K - 1]
        row[K - 1] = fwd[K - 2, 1] + (fwd[K - 3, 2] if K >= 3 else 0.0)
        row[K] = fwd[K - 2, 2]
        row[K - 2 : K + 1] += bwd[K - 1]
        row[0] = 0.0
    C.setflags(write=False)
    return C


@lru_cache(maxsize=64)
def _history_matrix(n: int, a: float) -> np.ndarray:
    """``W[m, i]`` with ``int_0^m N(q)(m-q)^(-1-a) dq = sum_i W[m,i] N(i)`` (unit step).

    N is the numerator as a function of q with ``N(m) = 0``; entries with
    ``i >= m`` vanish.
    """
    C = _distance_weights(n, a)
    W = np.zeros((n + 1, n + 1))
    for m in range(1, n + 1):
        k = np.arange(1, m + 1)
        W[m, m - k] = C[m, k]
    W.setflags(write=False)
    return W


def _marchaud(x: np.ndarray, a: float) -> np.ndarray:
    """``J[m] = int_0^m (x(m) - x(q)) (m - q)^(-1-a) dq`` on unit steps, for every m."""
    n = x.shape[0] - 1
    W = _history_matrix(n, a)
    flat = x.reshape(n + 1, -1)
    out = W.sum(axis=1)[:, None] * flat - W @ flat
    return out.reshape(x.shape)


@lru_cache(maxsize=64)
def _outer_weights(n: int, a: float, b: float) -> np.ndarray:
    """Weights of ``int_0^1 Q(y) y^(-a) (1-y)^(-b) dy`` for Q linear between n+1 nodes."""
    y = np.linspace(0.0, 1.0, n + 1)
    p, q = 1.0 - a, 1.0 - b
    m0 = betainc(p, q, y) * beta_fn(p, q)                 # int_0^y y^(p-1)(1-y)^(q-1)
    m1 = betainc(p + 1.0, q, y) * beta_fn(p + 1.0, q)     # same with an extra factor y
    d0, d1 = np.diff(m0), np.diff(m1)
    h = 1.0 / n
    left = (y[1:] * d0 - d1) / h
    right = (d1 - y[:-1] * d0) / h
    w = np.zeros(n + 1)
    w[:-1] += left
    w[1:] += right
    w.setflags(write=False)
    return w


def _outer(Q: np.ndarray, a: float, b: float, span: float) -> np.ndarray:
    """``int_s^t Q(r) (r-s)^-a (t-r)^-b dr`` for Q sampled at the window nodes."""
    n = Q.shape[0] - 1
    w = _outer_weights(n, a, b)
    return span ** (1.0 - a - b) * np.tensordot(w, Q, axes=(0, 0))


# ---------------------------------------------------------------- derivatives on samples


def right_derivative_samples(F: np.ndarray, alpha: float, h: float) -> np.ndarray:
    """``D^alpha_{s+} F`` at every node of a window starting at node 0.

    ``F`` has shape ``(n+1, ...)``.  Node 0 carries the divergent prefactor
    and is returned as ``+inf`` (``nan`` where F(s) = 0).
    """
    F = np.asarray(F, dtype=float)
    n = F.shape[0] - 1
    J = _marchaud(F, alpha)
    x = h * np.arange(n + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pref = np.where(x > 0, x, np.inf) ** (-alpha)
    pref = pref.reshape((-1,) + (1,) * (F.ndim - 1))
    out = (F * pref + alpha * h ** (-alpha) * J) / gamma(1.0 - alpha)
    out[0] = np.inf
    return out


def scaled_right_derivative(F: np.ndarray, alpha: float, h: float) -> np.ndarray:
    """``D^alpha_{s+}F[r] (r-s)^alpha`` at every node, finite at node 0."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0] - 1
    J = _marchaud(F, alpha)
    k = np.arange(n + 1, dtype=float).reshape((-1,) + (1,) * (F.ndim - 1))
    return (F + alpha * k**alpha * J) / gamma(1.0 - alpha)


def left_derivative_samples(xi: np.ndarray, alpha: float, h: float) -> np.ndarray:
    """``L_t xi[r]`` at every node of a window ending at node n (``t``), zero at t."""
    return _left_scaled(xi, alpha, h, scaled=False)


def _left_scaled(xi: np.ndarray, alpha: float, h: float, scaled: bool) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[0] - 1
    y = xi[::-1]                                         # y[k] = xi(t - k h)
    J = _marchaud(y, 1.0 - alpha)                        # int (y_k - y(q)) ...
    k = np.arange(n + 1, dtype=float).reshape((-1,) + (1,) * (xi.ndim - 1))
    inc = y[0] - y
    if scaled:
        # times (t-r)^(1-alpha): finite at r = t
        out = (inc - (1.0 - alpha) * k ** (1.0 - alpha) * J) / gamma(alpha)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            pk = np.where(k > 0, k * h, np.inf) ** (alpha - 1.0)
        out = (inc * pk - (1.0 - alpha) * h ** (alpha - 1.0) * J) / gamma(alpha)
        out[0] = 0.0
    return out[::-1].copy()


def right_marchaud_samples(hv: np.ndarray, alpha: float, h: float, scaled: bool = False) -> np.ndarray:
    """``(h(r)(t-r)^(a-1) + (1-a) int_r^t (h(r)-h(q))(q-r)^(a-2) dq)/Gamma(a)``.

    The outer derivative of order ``1-alpha`` applied to a function of r
    that vanishes at t.  ``scaled`` multiplies by ``(t-r)^(1-alpha)``.
    """
    hv = np.asarray(hv, dtype=float)
    n = hv.shape[0] - 1
    y = hv[::-1]
    J = _marchaud(y, 1.0 - alpha)
    k = np.arange(n + 1, dtype=float).reshape((-1,) + (1,) * (hv.ndim - 1))
    if scaled:
        out = (y + (1.0 - alpha) * k ** (1.0 - alpha) * J) / gamma(alpha)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            pk = np.where(k > 0, k * h, np.inf) ** (alpha - 1.0)
        out = (y * pk + (1.0 - alpha) * h ** (alpha - 1.0) * J) / gamma(alpha)
        out[0] = 0.0
    return out[::-1].copy()


def tensor_derivative_samples(v: np.ndarray, alpha: float, h: float) -> np.ndarray:
    """``(v(r,t)(t-r)^(a-1) + (1-a) int_r^t v(r,q)(q-r)^(a-2) dq)/Gamma(a)`` for all r.

    ``v`` has shape ``(n+1, n+1, ...)`` over a window whose last node is t;
    only the upper triangle is read.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0] - 1
    a = 1.0 - alpha
    C = _distance_weights(n, a)
    out = np.zeros((n + 1,) + v.shape[2:])
    for m in range(n):
        K = n - m
        row = v[m, m + 1 :]                               # v(r, r + k h), k = 1..K
        integral = np.tensordot(C[K, 1 : K + 1], row, axes=(0, 0)) * h ** (-a)
        out[m] = (v[m, n] * (K * h) ** (alpha - 1.0) + a * integral) / gamma(alpha)
    return out


def compensated_samples(Y: np.ndarray, alpha: float, h: float,
                        controllers: Sequence[tuple[np.ndarray, np.ndarray]] = (),
                        scaled: bool = False) -> np.ndarray:
    """Compensated right derivative of the matrix path ``Y``.

    Each controller is ``(Yp, Z)`` with ``Yp[..., k]`` the derivative of Y in
    the direction of ``Z_k``; the numerator becomes
    ``Y(r) - Y(q) - sum_k Yp(q)[..., k] (Z_k(r) - Z_k(q))``.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0] - 1
    W = _history_matrix(n, alpha)
    rs = W.sum(axis=1)
    flat = Y.reshape(n + 1, -1)
    J = (rs[:, None] * flat - W @ flat).reshape(Y.shape)
    for Yp, Z in controllers:
        Yp = np.asarray(Yp, dtype=float)
        Z = np.asarray(Z, dtype=float).reshape(n + 1, -1)
        kz = Z.shape[1]
        P = Yp.reshape(n + 1, -1, kz)                                  # (n+1, m, kz)
        WP = np.einsum("ri,imk->rmk", W, P)
        WPZ = np.einsum("ri,imk,ik->rm", W, P, Z)
        J -= (np.einsum("rmk,rk->rm", WP, Z) - WPZ).reshape(Y.shape)
    k = np.arange(n + 1, dtype=float).reshape((-1,) + (1,) * (Y.ndim - 1))
    if scaled:
        return (Y + alpha * k**alpha * J) / gamma(1.0 - alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        pk = np.where(k > 0, k * h, np.inf) ** (-alpha)
    out = (Y * pk + alpha * h ** (-alpha) * J) / gamma(1.0 - alpha)
    out[0] = np.inf
    return out


# ---------------------------------------------------------------- integrals on samples


def young_samples(F: np.ndarray, xi: np.ndarray, alpha: float, h: float) -> np.ndarray:
    """``int_s^t F dxi`` over the window; ``F`` is ``(n+1, m, k)`` and ``xi`` is ``(n+1, k)``.

    Scalar F (shape ``(n+1,)``) and matrix F are both accepted.
    """
    F = np.asarray(F, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    n = F.shape[0] - 1
    span = n * h
    DF = scaled_right_derivative(F, alpha, h)                 # times (r-s)^alpha
    L = _left_scaled(xi, alpha, h, scaled=True)               # times (t-r)^(1-alpha)
    if F.ndim == 1:
        Q = DF[:, None] * L
    else:
        Q = np.einsum("r...k,rk->r...", DF, L)
    return _outer(Q, alpha, 1.0 - alpha, span)


def hn_samples(Y: np.ndarray, omega: np.ndarray, alpha: float, h: float,
               controllers: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]] = ()) -> np.ndarray:
    """Compensated rough integral ``int_s^t Y domega`` over a window.

    ``Y`` is ``(n+1, m, e)`` and ``omega`` ``(n+1, e)``.  Each controller is
    ``(Yp, Z, X)``: ``Yp`` of shape ``(n+1, m, e, kz)``, the controlling
    path ``Z`` ``(n+1, kz)`` and its area ``X`` ``(n+1, n+1, kz, e)`` with
    ``X(r, q) = int_r^q (Z - Z(r)) (x) domega``.  The result has shape ``(m,)``.
    """
    Y = np.asarray(Y, dtype=float)
    omega = np.asarray(omega, dtype=float)
    n = Y.shape[0] - 1
    span = n * h
    DY = compensated_samples(Y, alpha, h, [(c[0], c[1]) for c in controllers], scaled=True)
    L = _left_scaled(omega, alpha, h, scaled=True)
    out = _outer(np.einsum("rmc,rc->rm", DY, L), alpha, 1.0 - alpha, span)
    a2 = 2.0 * alpha - 1.0
    for Yp, _, X in controllers:
        Yp = np.asarray(Yp, dtype=float)
        D2 = scaled_right_derivative(Yp, a2, h)                        # times (r-s)^(2a-1)
        hv = tensor_derivative_samples(np.asarray(X, dtype=float), alpha, h)   # (n+1, kz, e)
        M = right_marchaud_samples(hv, alpha, h, scaled=True)         # times (t-r)^(1-a)
        Q = np.einsum("rmck,rkc->rm", D2, M)
        out = out + _outer(Q, a2, 1.0 - alpha, span)
    return out


# ---------------------------------------------------------------- public api


def _window(obj: GridPath | AreaField, s: float, t: float) -> tuple[int, int, float]:
    g = obj.grid
    j, k = g.index_of(s), g.index_of(t)
    if k < j:
        raise DomainError(f"need s <= t, got s={s}, t={t}")
    return j, k, g.dt


def _sample(F: Callable | GridPath | np.ndarray, s: float, r: float, quad_n: int,
            grid: TimeGrid | None = None) -> tuple[np.ndarray, float]:
    if isinstance(F, GridPath):
        j, k, h = _window(F, s, r)
        return F.values[j : k + 1], h
    if callable(F):
        q = np.linspace(s, r, quad_n + 1)
        vals = np.stack([np.asarray(F(x), dtype=float) for x in q])
        return vals, (r - s) / quad_n
    if grid is None:
        raise StructuralError("array samples need the grid they live on")
    j, k = grid.index_of(s), grid.index_of(r)
    return np.asarray(F, dtype=float)[j : k + 1], grid.dt


def frac_derivative_right(F, alpha: float, s: float, r: float, quad_n: int = 512,
                          grid: TimeGrid | None = None) -> np.ndarray | float:
    """``D^alpha_{s+}F[r]``.  ``F`` may be a callable, a ``GridPath`` or grid samples.

    ``r == s`` returns ``+inf``: the derivative has a divergent prefactor there.
    """
    FracParams(alpha, max(quad_n, 2))
    if r < s:
        raise DomainError("need s <= r")
    if r == s:
        return np.inf
    vals, h = _sample(F, s, r, quad_n, grid)
    out = right_derivative_samples(vals, alpha, h)[-1]
    return float(out) if np.ndim(out) == 0 else out


def frac_derivative_left(xi, alpha: float, t: float, r: float, quad_n: int = 512,
                         grid: TimeGrid | None = None) -> np.ndarray | float:
    """Left derivative of order ``1-alpha`` of ``xi`` at ``r`` seen from ``t``; zero at ``r == t``."""
    FracParams(alpha, max(quad_n, 2))
    if r > t:
        raise DomainError("need r <= t")
    if r == t:
        sample = xi(t) if callable(xi) else np.zeros(xi.dim if isinstance(xi, GridPath) else 1)
        z = np.zeros_like(np.asarray(sample, dtype=float))
        return float(z) if z.ndim == 0 else z
    vals, h = _sample(xi, r, t, quad_n, grid)
    out = left_derivative_samples(vals, alpha, h)[0]
    return float(out) if np.ndim(out) == 0 else out


def tensor_derivative(v: AreaField, alpha: float, t: float, r: float) -> np.ndarray:
    """Two-parameter left derivative of the area ``v`` at ``r`` seen from ``t``."""
    FracParams(alpha)
    j, k, h = _window(v, r, t)
    if j == k:
        return np.zeros(v.values.shape[2:])
    return tensor_derivative_samples(v.values[j : k + 1, j : k + 1], alpha, h)[0]


def compensated_derivative(Gs: np.ndarray, DGs: np.ndarray, u: GridPath, alpha: float,
                           s: float, r: float) -> np.ndarray:
    """Compensated right derivative of ``G(u(.))`` at ``r``.

    ``Gs`` are the matrices ``G(u(t_k))`` and ``DGs`` the tensors
    ``DG(u(t_k))[a, c, k]`` on the grid of ``u``.
    """
    FracParams(alpha)
    j, k, h = _window(u, s, r)
    if j == k:
        return np.full(np.shape(Gs)[1:], np.inf)
    Y = np.asarray(Gs, dtype=float)[j : k + 1]
    Yp = np.asarray(DGs, dtype=float)[j : k + 1]
    return compensated_samples(Y, alpha, h, [(Yp, u.values[j : k + 1])])[-1]


def check_young_window(alpha: float, beta: float, beta_p: float) -> None:
    if not (alpha < beta and alpha + beta_p > 1.0):
        raise ContractError(
            f"Young integral needs alpha < beta and alpha + beta' > 1 "
            f"(alpha={alpha}, beta={beta}, beta'={beta_p})")


def check_rough_window(alpha: float, beta: float, beta_p: float) -> None:
    lo = max(1.0 - beta, 1.0 - beta_p)
    if not (lo < alpha < 2.0 * beta and alpha < (beta + 1.0) / 2.0):
        raise ContractError(
            f"rough integral needs 1-beta < alpha < 2 beta and alpha < (beta+1)/2 "
            f"(alpha={alpha}, beta={beta})")


def young_integral(F, xi, alpha: float, s: float, t: float, quad_n: int = 512,
                   grid: TimeGrid | None = None,
                   exponents: tuple[float, float] | None = None) -> np.ndarray | float:
    """``int_s^t F dxi`` as a fractional integral.

    ``F`` is scalar or matrix valued, ``xi`` scalar or vector valued; both
    may be callables (sampled on ``quad_n`` panels), ``GridPath`` objects or
    grid samples.  ``exponents=(beta, beta')`` checks the parameter window.
    """
    FracParams(alpha, max(quad_n, 2))
    if exponents is not None:
        check_young_window(alpha, *exponents)
    if t < s:
        raise DomainError("need s <= t")
    if t == s:
        return 0.0
    Fv, h = _sample(F, s, t, quad_n, grid)
    xv, h2 = _sample(xi, s, t, quad_n, grid)
    if Fv.shape[0] != xv.shape[0] or not np.isclose(h, h2):
        raise StructuralError("F and xi must be sampled on the same nodes")
    scalar_xi = xv.ndim == 1
    if Fv.ndim == 1 and not scalar_xi:
        out = np.stack([young_samples(Fv, xv[:, [c]], alpha, h)[0] for c in range(xv.shape[1])])
    else:
        out = young_samples(Fv, xv, alpha, h)
    if np.ndim(out) == 1 and out.shape[0] == 1 and scalar_xi:
        return float(out[0])
    return out


def rough_integral(u: GridPath, v: AreaField, omega: GridPath, model, alpha: float,
                   s: float, t: float, exponents: tuple[float, float] | None = None,
                   chen_tol: float | None = None) -> np.ndarray:
    """``int_s^t G(u) domega`` for a path-area pair ``(u, v)`` Chen-coupled to ``omega``.

    ``model`` is a ``KernelModel`` or any object with ``derivative_tensor``.
    """
    from .noise import as_path

    omega = as_path(omega)
    _check_grid(u.grid, v.grid)
    _check_grid(u.grid, omega.grid)
    if exponents is not None:
        check_rough_window(alpha, *exponents)
    if chen_tol is not None:
        res = chen_residual(u, v, omega)
        if res > chen_tol:
            raise ContractError(f"(u, v) is not Chen-coupled to omega: residual {res:.3e}")
    j, k, h = _window(u, s, t)
    if j == k:
        return np.zeros(u.dim)
    uw = u.values[j : k + 1]
    G = model.derivative_tensor(uw, 0)
    DG = model.derivative_tensor(uw, 1)
    X = v.values[j : k + 1, j : k + 1]
    return hn_samples(G, omega.values[j : k + 1], alpha, h, [(DG, uw, X)])
