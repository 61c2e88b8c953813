"""
Smooth noise against a classical integrator
===========================================

With a trigonometric driving path the equation is an ODE, so an
integrating-factor Runge-Kutta method gives an independent answer.
"""

import numpy as np

from roughsee import KernelModel, SolverParams, TimeGrid, global_solve
from roughsee.reference import TrigNoise, lawson_rk4

d = 4
model = KernelModel(d, amplitude=0.5)
noise = TrigNoise(tuple(0.2 / (i + 1) for i in range(d)), tuple(1.0 + i for i in range(d)))
u0 = np.array([0.1, 0.05, 0.02, 0.01])

for n in (32, 64, 128, 256):
    sol = global_solve(u0, 1.0, SolverParams(), noise.on(TimeGrid(0.0, 1.0, n)), model)
    ref = lawson_rk4(model, u0, noise, 1.0, 16 * n)[::16]
    err = np.max(np.abs(sol.pair.u.values - ref)) / np.max(np.abs(ref))
    print(f"N={n:>4}: relative error {err:.2e}, {len(sol.pieces)} local solves")
