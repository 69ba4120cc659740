"""Denoise a 1D step and look at how the jump shrinks.

Run with ``python3 demos/step_1d.py``.
"""

import numpy as np

from tvjump.fidelity import Fidelity
from tvjump.grid import VectorField
from tvjump.jump import detect_jump_set, edge_profile, midpoint_check_1d
from tvjump.solver import SolverConfig, rof_solve, taut_string_1d
from tvjump.specnorm import SpectralRegularizer

N = 256
f = VectorField.from_array(np.where(np.arange(N) < N // 2, 0.0, 1.0), spacing=1.0 / N)

for alpha in (0.05, 0.1, 0.2):
    u, rep = rof_solve(f, SpectralRegularizer("frobenius", alpha), Fidelity(), SolverConfig(tol_gap=1e-10, max_iters=200000))
    exact = taut_string_1d(f, alpha)
    (est,) = detect_jump_set(u, 0.1)
    p = edge_profile(u, f, est.x0, est.nu_best)
    (mid,) = midpoint_check_1d(exact, f, [est.index[0]])
    print(
        f"alpha={alpha:4.2f}  u-={p.u_minus[0]:.4f} (2a={2 * alpha:.2f})  u+={p.u_plus[0]:.4f}  "
        f"jump={p.u_plus[0] - p.u_minus[0]:.4f}  |u - taut|={np.max(np.abs(u.data - exact.data)):.1e}  "
        f"midpoint margin={mid.margin:.3f}  iters={rep.iterations}"
    )
