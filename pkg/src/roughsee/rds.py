"""Cocycle and shift checks for the solution flow.

The flow ``phi(t, omega, x)`` is the global solution at time ``t``.  The
cocycle identity ``phi(t, omega, x) = phi(t - tau, theta_tau omega, phi(tau, omega, x))``
is compared numerically, with ``theta`` the Wiener shift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .area import OperatorArea
from .errors import DomainError
from .hilbert import GridPath, frac_power_norm
from .noise import NoisePath, as_path, wiener_shift, window
from .solver import SolverParams, global_solve

AreaBuilder = Callable[[GridPath], object] | None


@dataclass(frozen=True)
class CocycleReport:
    tau: float
    t: float
    residual: float
    per_mode: tuple[float, ...]
    scale: float
    direct: tuple[float, ...]
    composed: tuple[float, ...]

    @property
    def relative(self) -> float:
        return self.residual / self.scale

    def to_dict(self) -> dict:
        return {"tau": self.tau, "t": self.t, "residual": self.residual,
                "relative": self.relative, "scale": self.scale,
                "per_mode": list(self.per_mode), "direct": list(self.direct),
                "composed": list(self.composed)}


def _flow(u0, omega: GridPath, span: float, model, params, builder: AreaBuilder, c):
    """Solution values on ``[t0, t0 + span]`` of ``omega``'s grid."""
    g = omega.grid
    area = None if builder is None else builder(omega)
    sol = global_solve(u0, g.t0 + span, params, omega, model, area=area, c=c,
                       check_uniqueness=False)
    return sol.pair.u


def cocycle_residual(omega: NoisePath | GridPath, model, u0: np.ndarray, tau: float, t: float,
                     params: SolverParams, area_builder: AreaBuilder = None,
                     c: float | None = None) -> CocycleReport:
    """Compare one solve over ``[0, t]`` with two solves split at ``tau``.

    ``omega`` may be two-sided; only its part on ``[0, t]`` enters.
    ``area_builder`` maps a noise path to an area object (for example
    ``lambda w: OperatorArea.build(w, lam)``); ``None`` uses the closed-form
    segment areas.  A fixed ``c`` keeps both solves on identical constants;
    by default it is measured once on ``[0, t]`` and reused.
    """
    p = as_path(omega)
    if not 0.0 <= tau <= t:
        raise DomainError(f"need 0 <= tau <= t, got tau={tau}, t={t}")
    g = p.grid
    g.index_of(tau)
    g.index_of(t)
    if g.index_of(0.0) == g.index_of(t):
        raise DomainError("t must be positive")
    u0 = np.asarray(u0, dtype=float)
    base = as_path(window(p, 0.0, t))
    if c is None and params.c is None:
        from .solver import measure_c
        c = measure_c(u0, base, model, params).c
    lam = model.spectrum.eigenvalues
    direct = _flow(u0, base, t, model, params, area_builder, c)
    end = direct.values[-1]
    if tau == 0.0:
        mid, composed = u0, end
    elif tau == t:
        mid = end
        composed = end
    else:
        mid = direct.values[base.grid.index_of(tau)]
        shifted = as_path(window(wiener_shift(p, tau), 0.0, t - tau))
        composed = _flow(mid, shifted, t - tau, model, params, area_builder, c).values[-1]
    diff = end - composed
    scale = max(1.0, float(np.max(np.abs(direct.values))))
    return CocycleReport(float(tau), float(t), frac_power_norm(lam, diff, 0.0),
                         tuple(float(x) for x in np.abs(diff)), scale,
                         tuple(float(x) for x in end), tuple(float(x) for x in composed))


def area_shift_residual(omega: NoisePath | GridPath, op, tau: float,
                        pairs: list[tuple[float, float]] | None = None) -> float:
    """``max |A(omega)(tau+s, tau+t) - A(theta_tau omega)(s, t)|_F`` over pairs ``(s, t)``.

    Pairs are given in shifted time and default to a coarse set covering the
    part of the window after ``tau``.
    """
    p = as_path(omega)
    g = p.grid
    j = g.index_of(tau)
    sh = as_path(wiener_shift(p, tau))
    A = OperatorArea.build(p, op)
    B = OperatorArea.build(sh, op)
    if pairs is None:
        step = max(1, (g.N - j) // 8)
        nodes = list(range(j, g.N + 1, step))
        idx = [(a, b) for a in nodes for b in nodes if b > a]
    else:
        idx = [(sh.grid.index_of(s), sh.grid.index_of(t)) for s, t in pairs]
        if any(a < j or b > g.N for a, b in idx):
            raise DomainError("pairs must lie in the window after tau")
    worst = 0.0
    for a, b in idx:
        worst = max(worst, float(np.linalg.norm(A(a, b) - B(a, b))))
    return worst
