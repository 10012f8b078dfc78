"""
Cylinder friction identification
================================

Simulate one hydraulic cylinder under a slow sine, then recover the
linearised Stribeck parameters by batch least squares and by RLS.
"""

# %%
import numpy as np

from hydrarm import testbed
from hydrarm.friction import identify_cylinder, stribeck_curve
from hydrarm.hydraulics import Excitation, force_balance_residual, simulate_cylinder

p = testbed.cylinder_params(1)
clean = simulate_cylinder(p, noise={})
print(len(clean), "samples; force-balance residual",
      np.abs(force_balance_residual(p, clean)).max())

# %%
run = simulate_cylinder(p, seed=1)
for est in ("batch", "rls"):
    res = identify_cylinder(run, p.c, p.A1, p.A2, fix_mass=p.m, estimator=est)
    print(est, res.fit.friction, "residual rms", res.residual_rms)
print("planted", p.friction)

# %%
# A single tone makes acceleration proportional to displacement, so mass and
# stiffness cannot be separated. A second tone fixes that.
two_tone = Excitation((0.06, 0.01), (0.05, 0.5))
res = identify_cylinder(simulate_cylinder(p, two_tone, seed=1), p.c, p.A1, p.A2)
print("mass estimate", res.fit.m, "planted", p.m)

# %%
for v, F in stribeck_curve(res.fit.friction, np.linspace(-0.003, 0.003, 7)):
    print(f"v={v:+.4f} m/s  F_d={F:+8.3f} N")
