"""Kernel nonlinearity on the Dirichlet Laplacian of (0,1).

The noise coefficient acts as ``G(u)(v)[x] = int g(x, u(y)) v(y) dy``.
Coordinates are taken in the orthonormal basis ``phi_i = lambda_i^(-rho) e_i``
of ``V = D((-A)^rho)`` with ``e_i = sqrt(2) sin(i pi x)``, so the matrix of
``G(u)`` is ``G_ij = <G(u) phi_j, phi_i>_V = lambda_i^rho <G(u) phi_j, e_i>``.
Spatial integrals use composite Gauss-Legendre quadrature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError
from .hilbert import SpectralOperator

Fun = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Kernel:
    """Kernel ``g(x, z)`` given by its z-derivatives of order 0..4.

    ``derivs[k](x, z)`` must broadcast.  When ``a`` and ``b`` are supplied the
    kernel is separable, ``g = a(x) b(z)``, and assembly skips the double sum.
    """

    name: str
    derivs: tuple[Callable[[np.ndarray, np.ndarray], np.ndarray], ...]
    a: Fun | None = None
    b: tuple[Fun, ...] | None = None
    x_bound: Fun | None = None
    z_bounds: tuple[float, ...] | None = None

    @classmethod
    def separable(cls, name: str, a: Fun, b: tuple[Fun, ...]) -> "Kernel":
        if len(b) != 5:
            raise DomainError("need b and its first four derivatives")
        derivs = tuple((lambda f: (lambda x, z: a(x) * f(z)))(f) for f in b)
        z = np.linspace(-12.0, 12.0, 240001)
        zb = tuple(1.0001 * float(np.max(np.abs(f(z)))) for f in b)
        return cls(name, derivs, a, b, lambda x: np.abs(a(x)), zb)

    @property
    def is_separable(self) -> bool:
        return self.a is not None and self.b is not None


def _tanh_derivs() -> tuple[Fun, ...]:
    def d0(z): return np.tanh(z)
    def d1(z): return 1.0 - np.tanh(z) ** 2
    def d2(z):
        t = np.tanh(z)
        return -2.0 * t * (1.0 - t * t)
    def d3(z):
        t = np.tanh(z)
        return (1.0 - t * t) * (6.0 * t * t - 2.0)
    def d4(z):
        t = np.tanh(z)
        s = 1.0 - t * t
        return 16.0 * t * s * s - 8.0 * t**3 * s
    return d0, d1, d2, d3, d4


def _sinpi(x: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * x)


KERNELS: dict[str, Kernel] = {
    "sin_tanh": Kernel.separable("sin_tanh", _sinpi, _tanh_derivs()),
    "sin_sin": Kernel.separable(
        "sin_sin", _sinpi,
        (np.sin, np.cos, lambda z: -np.sin(z), lambda z: -np.cos(z), np.sin)),
}


def register_kernel(kernel: Kernel) -> None:
    """Make a custom kernel available to ``KernelModel`` by name."""
    KERNELS[kernel.name] = kernel


def laplacian_spectrum(d: int) -> SpectralOperator:
    """Dirichlet eigenvalues ``(i pi)^2``, i = 1..d."""
    if d < 1:
        raise DomainError("need at least one mode")
    return SpectralOperator((np.pi * np.arange(1, d + 1)) ** 2)


def gauss_legendre_composite(panels: int, per_panel: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of composite Gauss-Legendre quadrature on (0, 1)."""
    xg, wg = np.polynomial.legendre.leggauss(per_panel)
    h = 1.0 / panels
    left = h * np.arange(panels)
    x = (left[:, None] + 0.5 * h * (xg[None, :] + 1.0)).ravel()
    w = np.tile(0.5 * h * wg, panels)
    return x, w


@dataclass(frozen=True)
class KernelModel:
    """Galerkin model of the kernel nonlinearity.

    ``amplitude`` multiplies the kernel.  ``quad_nodes`` defaults to ``8 d``
    and must be a multiple of 8 (panels of 8 Gauss nodes).
    """

    d: int
    kernel: str = "sin_tanh"
    amplitude: float = 1.0
    rho_eps: float = 0.01
    kappa: float = 0.9
    quad_nodes: int | None = None

    def __post_init__(self) -> None:
        if int(self.d) != self.d or self.d < 1:
            raise DomainError("d must be a positive integer")
        if self.kernel not in KERNELS:
            raise DomainError(f"unknown kernel {self.kernel!r}; known: {sorted(KERNELS)}")
        m = self.quad_nodes if self.quad_nodes is not None else 8 * self.d
        if m < 2 * self.d:
            raise DomainError(f"{m} quadrature nodes cannot resolve {self.d} modes (need >= 2d)")
        if m % 8 != 0:
            raise DomainError("quad_nodes must be a multiple of 8")
        object.__setattr__(self, "quad_nodes", int(m))
        if not 0.0 < self.rho_eps < 0.25:
            raise DomainError("rho_eps must lie in (0, 1/4)")
        if not 0.0 < self.kappa <= 1.0:
            raise DomainError("kappa must lie in (0, 1]")

    # ------------------------------------------------------------ setup

    @property
    def rho(self) -> float:
        return 0.25 + self.rho_eps

    @property
    def kern(self) -> Kernel:
        return KERNELS[self.kernel]

    @cached_property
    def spectrum(self) -> SpectralOperator:
        return laplacian_spectrum(self.d)

    @cached_property
    def _nodes(self) -> dict[str, np.ndarray]:
        x, w = gauss_legendre_composite(self.quad_nodes // 8, 8)
        i = np.arange(1, self.d + 1)
        e = np.sqrt(2.0) * np.sin(np.pi * np.outer(x, i))             # (M, d)
        lam = self.spectrum.eigenvalues
        phi = e * lam[None, :] ** (-self.rho)
        return {"x": x, "w": w, "e": e, "phi": phi,
                "xrow": (w[:, None] * e) * lam[None, :] ** self.rho}   # (M, d)

    def _yfactor(self, order: int) -> np.ndarray:
        """w_y phi_c(y) phi_k1(y) ... phi_k_order(y) flattened to (M, d^(order+1))."""
        n = self._nodes
        f = n["w"][:, None] * n["phi"]
        for _ in range(order):
            f = (f[:, :, None] * n["phi"][:, None, :]).reshape(f.shape[0], -1)
        return f

    def field(self, u: np.ndarray) -> np.ndarray:
        """Reconstructed field ``u(y)`` at the quadrature nodes (last axis)."""
        return np.asarray(u, dtype=float) @ self._nodes["phi"].T

    # ------------------------------------------------------------ evaluation

    def derivative_tensor(self, u: np.ndarray, order: int = 0) -> np.ndarray:
        """``D^order G(u)`` as a tensor indexed ``[..., a, c, k1, .., k_order]``.

        ``u`` may carry leading batch axes.  Order 0 is the matrix ``G(u)``.
        """
        if not 0 <= order <= 4:
            raise DomainError("derivative order must lie in 0..4")
        u = np.asarray(u, dtype=float)
        batch = u.shape[:-1]
        z = self.field(u)                                              # (..., M)
        n = self._nodes
        k = self.kern
        amp = self.amplitude
        if k.is_separable:
            row = amp * (n["xrow"] * k.a(n["x"])[:, None]).sum(axis=0)  # (d,)
            col = (k.b[order](z)[..., :, None] * self._yfactor(order)).sum(axis=-2)
            out = row[:, None] * col[..., None, :]
        else:
            gx = k.derivs[order](n["x"][:, None], z[..., None, :])     # (..., M, M)
            p = np.einsum("xa,...xy->...ay", n["xrow"], gx) * amp
            out = p @ self._yfactor(order)
        return out.reshape(batch + (self.d,) * (order + 2))

    # ------------------------------------------------------------ constants

    @cached_property
    def bounds(self) -> dict[str, float]:
        """Global Frobenius bounds of ``D^k G`` on the discretised operator, k = 0..3.

        ``|D^k G(u)_{a c k..}| <= sum_x sum_y |xrow_a(x)| B_k(x) |yfactor(y)|``
        with ``B_k(x) = sup_z |d^k g / dz^k (x, z)|``.
        """
        k = self.kern
        n = self._nodes
        if k.z_bounds is None or k.x_bound is None:
            raise DomainError(f"kernel {k.name!r} does not supply derivative bounds")
        out = {}
        names = ["c_G", "c_DG", "c_D2G", "c_D3G", "c_D4G"]
        xa = np.abs(n["xrow"]) * k.x_bound(n["x"])[:, None]
        for order, name in enumerate(names):
            row = self.amplitude * k.z_bounds[order] * xa.sum(axis=0)
            col = np.abs(self._yfactor(order)).sum(axis=0)
            out[name] = float(np.linalg.norm(row) * np.linalg.norm(col))
        return out

    # ------------------------------------------------------------ io

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "d": self.d, "rho_eps": self.rho_eps,
                "kappa": self.kappa, "quad_nodes": self.quad_nodes, "amplitude": self.amplitude}

    @classmethod
    def from_dict(cls, data: dict) -> "KernelModel":
        known = {"kernel", "d", "rho_eps", "kappa", "quad_nodes", "amplitude"}
        extra = set(data) - known
        if extra:
            raise DomainError(f"unknown model fields: {sorted(extra)}")
        if "d" not in data:
            raise DomainError("model spec needs 'd'")
        return cls(**data)

    @classmethod
    def from_json(cls, source: str | Path) -> "KernelModel":
        return cls.from_dict(json.loads(Path(source).read_text()))


def g_matrix(model: KernelModel, u: np.ndarray) -> np.ndarray:
    """Matrix of ``G(u)`` in V coordinates; batched over leading axes of ``u``."""
    return model.derivative_tensor(u, 0)


def dg_tensor(model: KernelModel, u: np.ndarray) -> np.ndarray:
    """``T[..., a, c, k] = dG_ac / du_k``."""
    return model.derivative_tensor(u, 1)


def dg_apply(model: KernelModel, u: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Matrix ``DG(u) h``: the kernel's z-derivative weighted by the direction field."""
    return np.einsum("...ack,...k->...ac", dg_tensor(model, u), np.asarray(h, dtype=float))


def d2g_apply(model: KernelModel, u: np.ndarray, h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    """Matrix ``D^2 G(u)(h1, h2)``."""
    t = model.derivative_tensor(u, 2)
    return np.einsum("...ackl,...k,...l->...ac", t, np.asarray(h1, float), np.asarray(h2, float))


def d3g_apply(model: KernelModel, u, h1, h2, h3) -> np.ndarray:
    t = model.derivative_tensor(u, 3)
    return np.einsum("...acklm,...k,...l,...m->...ac", t, np.asarray(h1, float),
                     np.asarray(h2, float), np.asarray(h3, float))


@dataclass(frozen=True)
class LipschitzReport:
    """Worst ratio of left side to right side for each of the seven G bounds."""

    constants: dict[str, float]
    ratios: dict[str, float]
    samples: int

    @property
    def ok(self) -> bool:
        return all(r <= 1.0 + 1e-9 for r in self.ratios.values())


def lipschitz_suite(model: KernelModel, samples: int = 1000, radius: float = 2.0,
                    seed: int = 0) -> LipschitzReport:
    """Check the seven standard bounds on ``G`` at random quadruples.

    Quadruples mix independent points of the ball with small perturbations,
    so both the global and the local regime are probed.  Norms of matrices
    and tensors are Frobenius norms; vectors use the V norm.
    """
    rng = np.random.default_rng(seed)
    d = model.d
    c = model.bounds

    def ball(n):
        x = rng.standard_normal((n, d))
        r = radius * rng.random(n) ** (1.0 / d)
        return x / np.linalg.norm(x, axis=1, keepdims=True) * r[:, None]

    u1, v1 = ball(samples), ball(samples)
    scale = 10.0 ** rng.uniform(-3, 0, (samples, 1))
    u2 = u1 + scale * ball(samples)
    v2 = np.where(rng.random((samples, 1)) < 0.5, v1 + scale * ball(samples), ball(samples))

    G = lambda u: g_matrix(model, u)
    D1 = lambda u: dg_tensor(model, u)
    nm = lambda x: np.sqrt(np.sum(x.reshape(samples, -1) ** 2, axis=1))
    vn = lambda x: np.linalg.norm(x, axis=1)
    lin = lambda u, h: np.einsum("nack,nk->nac", D1(u), h)

    Gu1, Gu2, Gv1, Gv2 = G(u1), G(u2), G(v1), G(v2)
    dd = (u1 - v1) - (u2 - v2)
    tiny = 1e-300

    def worst(lhs, rhs):
        ok = rhs > 1e-14
        return float(np.max(lhs[ok] / (rhs[ok] + tiny), initial=0.0))

    ratios = {
        "bounded": worst(nm(Gu1), np.full(samples, c["c_G"])),
        "lipschitz": worst(nm(Gu1 - Gv1), c["c_DG"] * vn(u1 - v1)),
        "derivative_lipschitz": worst(nm(D1(u1) - D1(v1)), c["c_D2G"] * vn(u1 - v1)),
        "taylor": worst(nm(Gu1 - Gu2 - lin(u2, u1 - u2)), c["c_D2G"] * vn(u1 - u2) ** 2),
        "rectangle": worst(
            nm(Gu1 - Gv1 - (Gu2 - Gv2)),
            c["c_DG"] * vn(dd) + c["c_D2G"] * vn(u1 - u2) * (vn(u1 - v1) + vn(u2 - v2))),
        "derivative_rectangle": worst(
            nm(D1(u1) - D1(v1) - (D1(u2) - D1(v2))),
            c["c_D2G"] * vn(dd) + c["c_D3G"] * vn(u1 - u2) * (vn(u1 - v1) + vn(u2 - v2))),
        "taylor_rectangle": worst(
            nm(Gu1 - Gu2 - lin(u2, u1 - u2) - (Gv1 - Gv2 - lin(v2, v1 - v2))),
            c["c_D2G"] * (vn(u1 - u2) + vn(v1 - v2)) * vn(dd)
            + c["c_D3G"] * vn(v1 - v2) * vn(u2 - v2) * (vn(u1 - u2) + vn(dd))),
    }
    return LipschitzReport(constants=c, ratios=ratios, samples=samples)
