"""Planted ground truth for the synthetic experiments."""

from __future__ import annotations

import numpy as np

from hydrarm.hydraulics import CylinderParams, LinearStribeck
from hydrarm.model import LinkInertialSet, RobotModel, default_model

PISTON_MASSES = (4.595, 4.914, 2.324, 1.937, 1.729, 1.705)
STRIBECK_TABLE = (
    (20.77, 7.83, -15.15),
    (12.62, 4.51, -11.53),
    (12.41, 7.03, -11.99),
    (8.73, 2.23, -5.18),
    (9.23, 4.41, -5.60),
    (6.62, 3.99, -3.01),
)
DAMPING = 2.0
# stiffness chosen so K x is comparable to the friction terms
STIFFNESS = (250.0, 220.0, 180.0, 120.0, 110.0, 100.0)

LINK_MASSES = (14.0, 11.0, 5.0, 4.0, 3.5, 3.0)
# COM offsets from each distal frame origin, as a fraction of -a_i along x
COM_FRACTION = (0.45, 0.5, 0.5, 0.5, 0.5, 0.45)
COM_YZ = ((0.02, 0.03), (-0.015, 0.04), (0.01, 0.035), (0.0, 0.02), (0.005, 0.02), (0.0, 0.015))


def cylinder_params(joint: int, friction=None, **overrides) -> CylinderParams:
    """Planted cylinder for ``joint`` (1-based)."""
    i = joint - 1
    fr = LinearStribeck(*STRIBECK_TABLE[i]) if friction is None else friction
    kw = dict(m=PISTON_MASSES[i], c=DAMPING, K=STIFFNESS[i], friction=fr)
    kw.update(overrides)
    return CylinderParams(**kw)


def all_cylinders() -> list[CylinderParams]:
    return [cylinder_params(j) for j in range(1, 7)]


def ground_truth_links(model: RobotModel | None = None, friction: bool = True) -> LinkInertialSet:
    """Slender-link inertial set for the arm, with planted joint friction.

    Links are modelled as solid bars along their D-H length with a small
    square cross-section; inertias are given about the COM and shifted to
    the frame origin.
    """
    model = default_model() if model is None else model
    masses, coms, inertias = [], [], []
    for i, row in enumerate(model.dh_rows[1:]):
        m = LINK_MASSES[i]
        L = max(row.a, 0.1)
        w = 0.08
        c = np.array([-COM_FRACTION[i] * row.a, *COM_YZ[i]])
        I = np.diag([m * (2 * w * w) / 12, m * (L * L + w * w) / 12, m * (L * L + w * w) / 12])
        I[0, 1] = I[1, 0] = 0.002 * m
        I[0, 2] = I[2, 0] = -0.001 * m
        masses.append(m)
        coms.append(c)
        inertias.append(I)
    fr = np.array(STRIBECK_TABLE) if friction else None
    return LinkInertialSet.from_com(masses, coms, inertias, fr)
