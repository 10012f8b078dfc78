"""Kinematic description of the arm and the shared domain types.

Config files use millimetres and degrees for the D-H table and radians for
joint limits; everything in memory is SI.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

N_LINK_PARAMS = 13
PARAM_NAMES = (
    "m", "mrx", "mry", "mrz",
    "Ixx", "Iyy", "Izz", "Ixy", "Ixz", "Iyz",
    "fc", "fv", "fs",
)
INERTIAL_SLICE = slice(0, 10)
FRICTION_SLICE = slice(10, 13)


class ModelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DHRow:
    d: float
    alpha: float
    a: float
    theta_offset: float = 0.0

    def __post_init__(self):
        vals = (self.d, self.alpha, self.a, self.theta_offset)
        if not all(math.isfinite(v) for v in vals):
            raise ModelConfigError(f"non-finite D-H entry in {vals}")
        if self.a < 0:
            raise ModelConfigError(f"link length must be >= 0, got {self.a}")


@dataclass(frozen=True)
class JointLimits:
    q_min: float
    q_max: float
    dq_max: float
    ddq_max: float

    def __post_init__(self):
        if not self.q_min < self.q_max:
            raise ModelConfigError(
                f"q_min must be below q_max, got [{self.q_min}, {self.q_max}]")
        if not (self.dq_max > 0 and self.ddq_max > 0):
            raise ModelConfigError("velocity and acceleration bounds must be positive")


@dataclass(frozen=True)
class RobotModel:
    """Serial chain: ``dh_rows[0]`` is the fixed base row, the rest are actuated."""

    dh_rows: tuple[DHRow, ...]
    limits: tuple[JointLimits, ...]
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)
    name: str = "arm"

    def __post_init__(self):
        object.__setattr__(self, "dh_rows", tuple(self.dh_rows))
        object.__setattr__(self, "limits", tuple(self.limits))
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))
        if len(self.dh_rows) - 1 != len(self.limits):
            raise ModelConfigError(
                f"{len(self.dh_rows) - 1} actuated D-H rows but "
                f"{len(self.limits)} limit entries")
        if not all(math.isfinite(g) for g in self.gravity):
            raise ModelConfigError("gravity must be finite")

    @property
    def n_joints(self) -> int:
        return len(self.limits)

    @property
    def n_params(self) -> int:
        return N_LINK_PARAMS * self.n_joints

    def limit_arrays(self):
        """(q_min, q_max, dq_max, ddq_max) as arrays over the actuated joints."""
        arr = np.array([[lim.q_min, lim.q_max, lim.dq_max, lim.ddq_max]
                        for lim in self.limits])
        return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]

    def base_rotation(self) -> np.ndarray:
        return link_transform(self.dh_rows[0], 0.0)[:3, :3]

    def gravity_in_frame0(self) -> np.ndarray:
        """Gravity expressed in the frame following the fixed base row."""
        return self.base_rotation().T @ np.asarray(self.gravity)


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    dq: np.ndarray
    ddq: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("q", "dq", "ddq"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite entries in {name}")
            object.__setattr__(self, name, v)


@dataclass
class LinkInertialSet:
    """Per-link dynamic parameters as an ``(n_links, 13)`` array.

    Columns follow ``PARAM_NAMES``: mass, first moments ``m*r`` in the link
    frame, inertia tensor entries about the link frame origin, and the
    linearised friction triple. ``vec()`` flattens link-major, which is the
    column order of the full regressor.
    """

    values: np.ndarray = field(default_factory=lambda: np.zeros((6, N_LINK_PARAMS)))

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).reshape(-1, N_LINK_PARAMS)

    @classmethod
    def from_vec(cls, vec) -> LinkInertialSet:
        return cls(np.asarray(vec, dtype=float).reshape(-1, N_LINK_PARAMS))

    @classmethod
    def from_com(cls, masses, coms, inertias_com, friction=None) -> LinkInertialSet:
        """Build from CAD-style data: COM positions and inertia about the COM."""
        from hydrarm.dynamics import parallel_axis

        masses = np.asarray(masses, dtype=float)
        n = len(masses)
        vals = np.zeros((n, N_LINK_PARAMS))
        for i in range(n):
            p = np.asarray(coms[i], dtype=float)
            I_o = parallel_axis(np.asarray(inertias_com[i], dtype=float), masses[i], p)
            vals[i, 0] = masses[i]
            vals[i, 1:4] = masses[i] * p
            vals[i, 4:10] = [I_o[0, 0], I_o[1, 1], I_o[2, 2], I_o[0, 1], I_o[0, 2], I_o[1, 2]]
        if friction is not None:
            vals[:, FRICTION_SLICE] = np.asarray(friction, dtype=float)
        return cls(vals)

    @property
    def n_links(self) -> int:
        return self.values.shape[0]

    @property
    def masses(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def friction(self) -> np.ndarray:
        return self.values[:, FRICTION_SLICE]

    def vec(self) -> np.ndarray:
        return self.values.reshape(-1).copy()

    def inertia_tensor(self, i: int) -> np.ndarray:
        xx, yy, zz, xy, xz, yz = self.values[i, 4:10]
        return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])

    def without_friction(self) -> LinkInertialSet:
        vals = self.values.copy()
        vals[:, FRICTION_SLICE] = 0.0
        return LinkInertialSet(vals)

    def is_physical(self) -> bool:
        return bool(np.all(self.masses > 0))


def param_labels(n_links: int = 6) -> list[str]:
    """Column labels of the full regressor, e.g. ``m_1``, ``Izz_3``, ``fc_6``."""
    return [f"{name}_{i + 1}" for i in range(n_links) for name in PARAM_NAMES]


def link_transform(row: DHRow, q_i: float) -> np.ndarray:
    """Standard D-H transform Rz(q + theta) Tz(d) Tx(a) Rx(alpha)."""
    th = q_i + row.theta_offset
    ct, st = math.cos(th), math.sin(th)
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    return np.array([
        [ct, -st * ca, st * sa, row.a * ct],
        [st, ct * ca, -ct * sa, row.a * st],
        [0.0, sa, ca, row.d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def forward_kinematics(model: RobotModel, q) -> list[np.ndarray]:
    """Base-to-link transforms; entry 0 is the fixed base row, entry i is link i."""
    q = np.asarray(q, dtype=float)
    frames = [link_transform(model.dh_rows[0], 0.0)]
    for row, qi in zip(model.dh_rows[1:], q):
        frames.append(frames[-1] @ link_transform(row, qi))
    return frames


@dataclass(frozen=True)
class Violation:
    joint: int
    quantity: str
    value: float
    bound: float


def validate_state(model: RobotModel, s: JointState) -> list[Violation]:
    """Every limit exceeded by the state; bounds are closed. Joints are 1-based."""
    out = []
    for j, lim in enumerate(model.limits):
        q, dq, ddq = s.q[j], s.dq[j], s.ddq[j]
        if q < lim.q_min:
            out.append(Violation(j + 1, "q", float(q), lim.q_min))
        elif q > lim.q_max:
            out.append(Violation(j + 1, "q", float(q), lim.q_max))
        if abs(dq) > lim.dq_max:
            out.append(Violation(j + 1, "dq", float(dq), lim.dq_max))
        if abs(ddq) > lim.ddq_max:
            out.append(Violation(j + 1, "ddq", float(ddq), lim.ddq_max))
    return out


def model_from_dict(doc: dict) -> RobotModel:
    try:
        dh = doc["dh"]
        limits = doc["limits"]
    except (KeyError, TypeError) as exc:
        raise ModelConfigError(f"model config needs 'dh' and 'limits': {exc}") from None
    units = doc.get("units", {})
    if units.get("length", "mm") not in ("mm", "m"):
        raise ModelConfigError(f"unknown length unit {units.get('length')!r}")
    if units.get("angle", "deg") not in ("deg", "rad"):
        raise ModelConfigError(f"unknown angle unit {units.get('angle')!r}")
    length_scale = 1e-3 if units.get("length", "mm") == "mm" else 1.0
    to_rad = math.radians if units.get("angle", "deg") == "deg" else float
    if len(dh) != len(limits) + 1:
        raise ModelConfigError(
            f"expected one more D-H row than limit entries, got {len(dh)} and {len(limits)}")
    try:
        rows = [DHRow(d=float(r["d"]) * length_scale,
                      alpha=to_rad(float(r["alpha"])),
                      a=float(r["a"]) * length_scale,
                      theta_offset=to_rad(float(r.get("theta", 0.0))))
                for r in dh]
        lims = [JointLimits(float(r["q_min"]), float(r["q_max"]),
                            float(r["dq_max"]), float(r["ddq_max"]))
                for r in limits]
    except (KeyError, TypeError) as exc:
        raise ModelConfigError(f"malformed model config entry: {exc}") from None
    gravity = doc.get("gravity", (0.0, 0.0, -9.81))
    if len(gravity) != 3:
        raise ModelConfigError("gravity must have three components")
    return RobotModel(rows, lims, tuple(gravity), name=doc.get("name", "arm"))


def model_to_dict(model: RobotModel) -> dict:
    """Inverse of :func:`model_from_dict`, written in mm / deg."""
    return {
        "name": model.name,
        "units": {"length": "mm", "angle": "deg", "limits": "rad"},
        "dh": [{"joint": i, "d": r.d * 1e3, "alpha": math.degrees(r.alpha),
                "a": r.a * 1e3, "theta": math.degrees(r.theta_offset)}
               for i, r in enumerate(model.dh_rows)],
        "limits": [{"joint": i + 1, "q_min": lim.q_min, "q_max": lim.q_max,
                    "dq_max": lim.dq_max, "ddq_max": lim.ddq_max}
                   for i, lim in enumerate(model.limits)],
        "gravity": list(model.gravity),
    }


def load_model(source=None) -> RobotModel:
    """Load a model from JSON text, a path, a dict, or the shipped default."""
    if source is None:
        text = resources.files("hydrarm.data").joinpath("default_model.json").read_text()
        return model_from_dict(json.loads(text))
    if isinstance(source, dict):
        return model_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        source = Path(source).read_text()
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ModelConfigError(f"model config is not valid JSON: {exc}") from None
    return model_from_dict(doc)


def default_model() -> RobotModel:
    return load_model()
