"""
Cocycle property
================

Solving to time t equals solving to tau and restarting on the shifted
noise.  On piecewise-linear noise the two routes agree to the fixed-point
tolerance.
"""

import numpy as np

from roughsee import (FbmSpec, KernelModel, SolverParams, TimeGrid, cocycle_residual, dyadic_linearize,
                      sample_fbm)

model = KernelModel(4, amplitude=0.5)
u0 = np.array([0.05, 0.0, 0.0, 0.0])
params = SolverParams(c=0.25)

# two-sided noise so that the Wiener shift stays inside the window
omega = sample_fbm(FbmSpec.power_law(0.45, 4, scale=0.3, seed=5), TimeGrid(-1.0, 1.0, 128))
for name, w in [("linearised", dyadic_linearize(omega, 4)), ("raw", omega)]:
    for tau in (0.25, 0.5, 0.75):
        rep = cocycle_residual(w, model, u0, tau, 1.0, params)
        print(f"{name:>10} tau={tau:<5} residual {rep.residual:.1e}  (scale {rep.scale:.2f})")
