"""Classical solvers for smooth driving paths, used as oracles.

For differentiable ``omega`` the mild equation is the ODE
``u' = -Lambda u + G(u) omega'(t)``; these integrators solve it directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .hilbert import GridPath, TimeGrid


@dataclass(frozen=True)
class TrigNoise:
    """``omega_i(t) = amp_i sin(2 pi freq_i t + phase_i) - amp_i sin(phase_i)``."""

    amp: tuple[float, ...]
    freq: tuple[float, ...]
    phase: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.amp) != len(self.freq):
            raise DomainError("amp and freq need the same length")
        if self.phase is None:
            object.__setattr__(self, "phase", tuple(0.0 for _ in self.amp))

    @property
    def dim(self) -> int:
        return len(self.amp)

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)[..., None]
        a, f, p = (np.asarray(x) for x in (self.amp, self.freq, self.phase))
        return a * (np.sin(2 * np.pi * f * t + p) - np.sin(p))

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)[..., None]
        a, f, p = (np.asarray(x) for x in (self.amp, self.freq, self.phase))
        return 2 * np.pi * f * a * np.cos(2 * np.pi * f * t + p)

    def on(self, grid: TimeGrid) -> GridPath:
        return GridPath(grid, self.value(grid.points))


def lawson_rk4(model, u0: np.ndarray, noise: TrigNoise, T: float, steps: int,
               t0: float = 0.0) -> np.ndarray:
    """Lawson (integrating-factor) RK4; returns the states at the ``steps + 1`` nodes."""
    lam = model.spectrum.eigenvalues
    h = (T - t0) / steps
    E = np.exp(-lam * h / 2)

    def f(t, u):
        return model.derivative_tensor(u, 0) @ noise.derivative(t)

    out = np.empty((steps + 1, lam.size))
    u = np.asarray(u0, dtype=float)
    out[0] = u
    for n in range(steps):
        t = t0 + n * h
        k1 = f(t, u)
        k2 = f(t + h / 2, E * (u + h / 2 * k1))
        k3 = f(t + h / 2, E * u + h / 2 * k2)
        k4 = f(t + h, E * E * u + h * E * k3)
        u = E * E * u + h / 6 * (E * E * k1 + 2 * E * (k2 + k3) + k4)
        out[n + 1] = u
    return out


def rk4(model, u0: np.ndarray, noise: TrigNoise, T: float, steps: int, t0: float = 0.0) -> np.ndarray:
    """Classical RK4 on the full right-hand side."""
    lam = model.spectrum.eigenvalues
    h = (T - t0) / steps

    def f(t, u):
        return -lam * u + model.derivative_tensor(u, 0) @ noise.derivative(t)

    out = np.empty((steps + 1, lam.size))
    u = np.asarray(u0, dtype=float)
    out[0] = u
    for n in range(steps):
        t = t0 + n * h
        k1 = f(t, u)
        k2 = f(t + h / 2, u + h / 2 * k1)
        k3 = f(t + h / 2, u + h / 2 * k2)
        k4 = f(t + h, u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[n + 1] = u
    return out
