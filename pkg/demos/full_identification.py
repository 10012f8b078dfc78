"""
End-to-end identification
=========================

Friction first, then the base parameters from simulated joint torques,
then the torque residuals.
"""

# %%
import numpy as np

from hydrarm.pipeline import PipelineConfig, run_pipeline

rep = run_pipeline(PipelineConfig(torque_noise=0.1, seed=1))
for lab, est, true in zip(rep.labels, rep.beta_hat, rep.beta_true):
    print(f"{lab:55s} {est:+10.4f} {true:+10.4f}")

# %%
print("rsd per joint:      ", np.round(rep.rsd, 4))
print("residual RMS [N m]: ", np.round(rep.rsd_abs, 4))
print("stage timings [s]:  ", {k: round(v, 3) for k, v in rep.timings.items()})

# %%
# Without the friction stage the inertial fit has to absorb friction torque.
ablated = run_pipeline(PipelineConfig(torque_noise=0.1, seed=1, friction_stage=False,
                                      trajectory=rep.trajectory))
print("residual RMS without friction:", np.round(ablated.rsd_abs, 3))
