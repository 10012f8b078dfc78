"""Finite Fourier-series excitation trajectories and their optimisation.

Joint ``i`` follows

    q_i(t)   = sum_l  a_il/(w l) sin(w l t) - b_il/(w l) cos(w l t) + q_i0
    dq_i(t)  = sum_l  a_il cos(w l t) + b_il sin(w l t)
    ddq_i(t) = sum_l -a_il w l sin(w l t) + b_il w l cos(w l t)

so the coefficients are velocity amplitudes. Start/end conditions are
linear in the coefficients and are removed from the search by working in
the null space of the boundary equations.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg

from hydrarm.model import JointLimits, JointState, RobotModel
from hydrarm.reduction import BaseParamMapping, base_regressor_batch

log = logging.getLogger(__name__)

OMEGA_SLOW = 0.1 * math.pi  # 20 s period
OMEGA_FAST = 0.2 * math.pi  # 10 s period
DEFAULT_HARMONICS = 3
KAPPA_SAMPLES = 100
BOUNDARY_TOL = 1e-6
# grid used while searching; final checks use a 1 ms grid
SEARCH_GRID = 400
SAFETY = 0.98


@dataclass
class FourierTrajectory:
    a: np.ndarray
    b: np.ndarray
    q0: np.ndarray
    omega_f: float = OMEGA_SLOW

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        self.q0 = np.atleast_1d(np.asarray(self.q0, dtype=float))
        if self.a.shape != self.b.shape or self.a.shape[0] != self.q0.shape[0]:
            raise ValueError(f"coefficient shapes disagree: a{self.a.shape} b{self.b.shape} "
                             f"q0{self.q0.shape}")
        if self.a.shape[1] < 1:
            raise ValueError("need at least one harmonic")
        if not self.omega_f > 0:
            raise ValueError("omega_f must be positive")

    @property
    def n_joints(self) -> int:
        return self.a.shape[0]

    @property
    def n_harmonics(self) -> int:
        return self.a.shape[1]

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega_f

    @property
    def n_free_params(self) -> int:
        """Coefficients plus offset per joint, before boundary elimination."""
        return self.n_joints * (2 * self.n_harmonics + 1)

    def evaluate(self, t):
        """``(q, dq, ddq)`` arrays of shape ``(len(t), n_joints)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        wl = self.omega_f * np.arange(1, self.n_harmonics + 1)
        ph = np.outer(t, wl)
        s, c = np.sin(ph), np.cos(ph)
        q = s @ (self.a / wl).T - c @ (self.b / wl).T + self.q0
        dq = c @ self.a.T + s @ self.b.T
        ddq = -s @ (self.a * wl).T + c @ (self.b * wl).T
        return q, dq, ddq

    def sample(self, n: int, phase: float = 0.0):
        """``n`` uniformly spaced samples over one period, starting at ``phase`` seconds."""
        t = phase + np.arange(n) * self.period / n
        return (t, *self.evaluate(t))

    def to_dict(self, units: str = "rad") -> dict:
        k = 180.0 / math.pi if units == "deg" else 1.0
        return {
            "omega_f": self.omega_f,
            "n_harmonics": self.n_harmonics,
            "units": units,
            "joints": [{"a": (self.a[j] * k).tolist(), "b": (self.b[j] * k).tolist(),
                        "q0": float(self.q0[j] * k)} for j in range(self.n_joints)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> FourierTrajectory:
        k = math.pi / 180.0 if doc.get("units", "rad") == "deg" else 1.0
        joints = doc["joints"]
        return cls(a=np.array([j["a"] for j in joints]) * k,
                   b=np.array([j["b"] for j in joints]) * k,
                   q0=np.array([j["q0"] for j in joints]) * k,
                   omega_f=float(doc["omega_f"]))

    def to_json(self, units: str = "rad") -> str:
        return json.dumps(self.to_dict(units), indent=2)

    @classmethod
    def load(cls, source) -> FourierTrajectory:
        if isinstance(source, dict):
            return cls.from_dict(source)
        return cls.from_dict(json.loads(Path(source).read_text()))


def table3_trajectory() -> FourierTrajectory:
    """Stored reference coefficient set (degrees-based, converted to radians)."""
    text = resources.files("hydrarm.data").joinpath("table3_trajectory.json").read_text()
    return FourierTrajectory.from_dict(json.loads(text))


def eval_trajectory(traj: FourierTrajectory, t: float) -> JointState:
    q, dq, ddq = traj.evaluate([t])
    return JointState(q[0], dq[0], ddq[0], float(t))


@dataclass(frozen=True)
class ConstraintViolation:
    joint: int
    kind: str
    value: float
    bound: float


@dataclass
class ConstraintReport:
    violations: list[ConstraintViolation] = field(default_factory=list)
    conservative_ok: list[bool] = field(default_factory=list)
    max_ratio: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"feasible": self.feasible,
                "violations": [vars(v) for v in self.violations],
                "conservative_bound_ok": list(self.conservative_ok),
                "max_ratio": self.max_ratio}


def conservative_amplitude(traj: FourierTrajectory) -> np.ndarray:
    """Per-joint bound ``sum_l sqrt(a^2 + b^2)/(w l)`` on ``|q - q0|``."""
    wl = traj.omega_f * np.arange(1, traj.n_harmonics + 1)
    return (np.hypot(traj.a, traj.b) / wl).sum(axis=1)


def check_constraints(traj: FourierTrajectory, limits, grid_dt: float = 1e-3,
                      boundary: str = "offset", tol: float = BOUNDARY_TOL) -> ConstraintReport:
    """Check limits on a dense grid over one period plus the start/end conditions.

    ``boundary="offset"`` expects the trajectory to start at its offset pose;
    ``"zero"`` expects it to start at q = 0. Velocity and acceleration must
    vanish at both ends either way.
    """
    if grid_dt <= 0:
        raise ValueError("grid_dt must be positive")
    if isinstance(limits, RobotModel):
        limits = limits.limits
    limits = list(limits)
    T = traj.period
    t = np.append(np.arange(0.0, T, grid_dt), T)
    q, dq, ddq = traj.evaluate(t)
    rep = ConstraintReport()
    amp = conservative_amplitude(traj)
    ratios = {"pos": 0.0, "vel": 0.0, "acc": 0.0}
    for j, lim in enumerate(limits):
        J = j + 1
        lo, hi = q[:, j].min(), q[:, j].max()
        if lo < lim.q_min:
            rep.violations.append(ConstraintViolation(J, "pos", float(lo), lim.q_min))
        if hi > lim.q_max:
            rep.violations.append(ConstraintViolation(J, "pos", float(hi), lim.q_max))
        v = np.abs(dq[:, j]).max()
        if v > lim.dq_max:
            rep.violations.append(ConstraintViolation(J, "vel", float(v), lim.dq_max))
        acc = np.abs(ddq[:, j]).max()
        if acc > lim.ddq_max:
            rep.violations.append(ConstraintViolation(J, "acc", float(acc), lim.ddq_max))
        rep.conservative_ok.append(bool(traj.q0[j] - amp[j] >= lim.q_min
                                        and traj.q0[j] + amp[j] <= lim.q_max))
        half = 0.5 * (lim.q_max - lim.q_min)
        mid = 0.5 * (lim.q_max + lim.q_min)
        ratios["pos"] = max(ratios["pos"], float(np.abs(q[:, j] - mid).max() / half))
        ratios["vel"] = max(ratios["vel"], float(v / lim.dq_max))
        ratios["acc"] = max(ratios["acc"], float(acc / lim.ddq_max))
    rep.max_ratio = ratios

    ends = traj.evaluate([0.0, T])
    target = traj.q0 if boundary == "offset" else np.zeros(traj.n_joints)
    for kind, vals, ref in (("boundary_pos", ends[0], target),
                            ("boundary_vel", ends[1], 0.0),
                            ("boundary_acc", ends[2], 0.0)):
        dev = np.abs(vals - ref).max(axis=0)
        for j in np.flatnonzero(dev > tol):
            rep.violations.append(ConstraintViolation(int(j) + 1, kind, float(dev[j]), tol))
    return rep


def condition_number(model: RobotModel, mapping: BaseParamMapping, traj: FourierTrajectory,
                     n_samples: int = KAPPA_SAMPLES, phase: float = 0.0) -> float:
    """sigma_max / sigma_min of the stacked base regressor over one period.

    Returns ``inf`` when the stack is numerically rank deficient.
    """
    if n_samples * model.n_joints < mapping.rank:
        raise ValueError("too few samples for the number of base parameters")
    _, q, dq, ddq = traj.sample(n_samples, phase)
    H = base_regressor_batch(model, mapping, q, dq, ddq).reshape(-1, mapping.rank)
    return stacked_condition(H)


def stacked_condition(H: np.ndarray) -> float:
    s = np.linalg.svd(H, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        log.info("stacked regressor is rank deficient (sigma_min/sigma_max=%.2e)",
                 s[-1] / s[0] if s[0] > 0 else 0.0)
        return math.inf
    return float(s[0] / s[-1])


class BoundaryParametrization:
    """Maps free search coordinates to coefficients that meet the start conditions.

    Per joint the harmonic coefficients ``[a_1..a_n, b_1..b_n]`` live in the
    null space of ``sum a_l = 0`` (zero start velocity) and
    ``sum l b_l = 0`` (zero start acceleration). In ``offset`` mode the
    start position equals the offset, adding ``sum b_l / l = 0`` and leaving
    ``q0`` free; in ``zero`` mode ``q0`` is fixed by the b coefficients.
    """

    def __init__(self, n_joints: int, n_harmonics: int, omega_f: float, boundary: str = "offset"):
        if boundary not in ("offset", "zero"):
            raise ValueError("boundary must be 'offset' or 'zero'")
        self.n_joints = n_joints
        self.n_harmonics = n_harmonics
        self.omega_f = omega_f
        self.boundary = boundary
        nh = n_harmonics
        wl = omega_f * np.arange(1, nh + 1)
        rows = [np.r_[np.ones(nh), np.zeros(nh)], np.r_[np.zeros(nh), wl]]
        if boundary == "offset":
            rows.append(np.r_[np.zeros(nh), 1.0 / wl])
        self.C = np.array(rows)
        self.N = scipy.linalg.null_space(self.C)
        self.wl = wl
        self.n_harm_free = self.N.shape[1]
        self.per_joint = self.n_harm_free + (1 if boundary == "offset" else 0)

    @property
    def n_free(self) -> int:
        return self.n_joints * self.per_joint

    @property
    def n_eliminated(self) -> int:
        return self.n_joints * (2 * self.n_harmonics + 1) - self.n_free

    def split(self, z):
        z = np.asarray(z, dtype=float).reshape(self.n_joints, self.per_joint)
        return z[:, :self.n_harm_free], z[:, self.n_harm_free:]

    def to_trajectory(self, z) -> FourierTrajectory:
        zh, zq = self.split(z)
        h = zh @ self.N.T
        a, b = h[:, :self.n_harmonics], h[:, self.n_harmonics:]
        if self.boundary == "offset":
            q0 = zq[:, 0]
        else:
            q0 = (b / self.wl).sum(axis=1)
        return FourierTrajectory(a, b, q0, self.omega_f)

    def join(self, zh, zq) -> np.ndarray:
        if self.boundary == "offset":
            return np.column_stack([zh, zq]).ravel()
        return np.asarray(zh).ravel()


def _scale_to_limits(traj: FourierTrajectory, limits, n_grid: int = SEARCH_GRID,
                     safety: float = SAFETY) -> tuple[FourierTrajectory, float]:
    """Shrink each joint's harmonics so the trajectory fits the limits.

    Velocity, acceleration and the motion about ``q0`` all scale linearly
    with the harmonic amplitudes. Returns the projected trajectory and the
    total relative violation that scaling cannot fix (offset outside range).
    """
    t = np.arange(n_grid) * traj.period / n_grid
    q, dq, ddq = traj.evaluate(t)
    dev = q - traj.q0
    a = traj.a.copy()
    b = traj.b.copy()
    q0 = traj.q0.copy()
    penalty = 0.0
    for j, lim in enumerate(limits):
        span = lim.q_max - lim.q_min
        room_hi = lim.q_max - q0[j]
        room_lo = q0[j] - lim.q_min
        if room_hi <= 0 or room_lo <= 0:
            penalty += max(-room_hi, -room_lo, 0.0) / span + 1.0
            a[j] = 0.0
            b[j] = 0.0
            continue
        ratios = [np.abs(dq[:, j]).max() / lim.dq_max,
                  np.abs(ddq[:, j]).max() / lim.ddq_max,
                  max(dev[:, j].max(), 0.0) / room_hi,
                  max(-dev[:, j].min(), 0.0) / room_lo]
        worst = max(ratios) / safety
        if worst > 1.0:
            a[j] /= worst
            b[j] /= worst
    # the zero-start variant ties q0 to b; shrinking b moves q0, so recheck via penalty
    return FourierTrajectory(a, b, q0, traj.omega_f), penalty


@dataclass
class OptimizationResult:
    """``history`` holds the best-so-far objective (log10 kappa + penalty) per evaluation."""

    trajectory: FourierTrajectory
    kappa: float
    report: ConstraintReport
    history: list[float]
    evaluations: int
    n_params_full: int
    n_params_free: int
    seed: int


class _Objective:
    def __init__(self, model, mapping, param: BoundaryParametrization, n_samples, budget):
        self.model = model
        self.mapping = mapping
        self.param = param
        self.n_samples = n_samples
        self.budget = budget
        self.evals = 0
        self.best = math.inf
        self.best_z = None
        self.best_traj = None
        self.best_kappa = math.inf
        self.history: list[float] = []

    def exhausted(self) -> bool:
        return self.evals >= self.budget

    def project(self, z):
        traj = self.param.to_trajectory(z)
        proj, penalty = _scale_to_limits(traj, self.model.limits)
        if self.param.boundary == "zero":
            proj = self.param.to_trajectory(_coords_of(self.param, proj))
        return proj, penalty

    def __call__(self, z) -> float:
        if self.exhausted():
            return math.inf
        self.evals += 1
        traj, penalty = self.project(z)
        kappa = condition_number(self.model, self.mapping, traj, self.n_samples)
        val = (math.log10(kappa) if math.isfinite(kappa) else 1e3) + 10.0 * penalty
        if val < self.best:
            self.best = val
            self.best_z = np.array(z, dtype=float)
            self.best_traj = traj
            self.best_kappa = kappa
        self.history.append(self.best)
        return val


def _coords_of(param: BoundaryParametrization, traj: FourierTrajectory) -> np.ndarray:
    h = np.column_stack([traj.a, traj.b])
    zh = h @ param.N
    return param.join(zh, traj.q0[:, None])


def random_coordinates(param: BoundaryParametrization, model: RobotModel,
                       rng: np.random.Generator) -> np.ndarray:
    """Random search point: velocity-scale harmonics, offsets inside the middle of the range."""
    q_min, q_max, dq_max, _ = model.limit_arrays()
    zh = rng.normal(size=(param.n_joints, param.n_harm_free)) * dq_max[:, None]
    mid, half = 0.5 * (q_min + q_max), 0.5 * (q_max - q_min)
    zq = (mid + rng.uniform(-0.5, 0.5, size=param.n_joints) * half)[:, None]
    return param.join(zh, zq)


def random_feasible_trajectory(model: RobotModel, rng: np.random.Generator,
                               omega_f: float = OMEGA_SLOW,
                               n_harmonics: int = DEFAULT_HARMONICS,
                               boundary: str = "offset") -> FourierTrajectory:
    """Random trajectory shrunk to satisfy the limits; used as a baseline."""
    param = BoundaryParametrization(model.n_joints, n_harmonics, omega_f, boundary)
    for _ in range(100):
        z = random_coordinates(param, model, rng)
        traj, penalty = _scale_to_limits(param.to_trajectory(z), model.limits)
        if boundary == "zero":
            traj = param.to_trajectory(_coords_of(param, traj))
        if penalty == 0 and check_constraints(traj, model.limits, grid_dt=1e-2,
                                              boundary=boundary).feasible:
            return traj
    raise RuntimeError("could not draw a feasible random trajectory")


def _pattern_search(f, z0, f0, step0, min_step, obj: _Objective):
    """Compass search with step halving; stops on budget or step floor."""
    z = np.array(z0, dtype=float)
    fz = f0
    step = np.array(step0, dtype=float)
    n = len(z)
    while not obj.exhausted() and np.max(step) > min_step:
        improved = False
        for i in range(n):
            for sgn in (1.0, -1.0):
                if obj.exhausted():
                    return z, fz
                trial = z.copy()
                trial[i] += sgn * step[i]
                ft = f(trial)
                if ft < fz:
                    z, fz = trial, ft
                    improved = True
                    break
        if not improved:
            step *= 0.5
    return z, fz


def optimize_trajectory(model: RobotModel, mapping: BaseParamMapping, limits=None,
                        omega_f: float = OMEGA_SLOW, n_harmonics: int = DEFAULT_HARMONICS,
                        seed: int = 0, budget: int = 1500, n_starts: int | None = None,
                        n_samples: int = KAPPA_SAMPLES, boundary: str = "offset",
                        grid_dt: float = 1e-3) -> OptimizationResult:
    """Minimise the condition number of the stacked base regressor.

    Random multistart followed by compass search from the best start. Every
    candidate is first shrunk onto the joint limits; offsets outside the
    joint range are penalised. ``budget`` counts objective evaluations and
    the result is deterministic for a fixed ``seed``.
    """
    if budget < 1:
        raise ValueError("budget must allow at least one evaluation")
    if limits is not None:
        model = RobotModel(model.dh_rows, limits, model.gravity, model.name)
    param = BoundaryParametrization(model.n_joints, n_harmonics, omega_f, boundary)
    obj = _Objective(model, mapping, param, n_samples, budget)
    rng = np.random.default_rng(seed)
    if n_starts is None:
        n_starts = max(1, min(40, budget // 10))

    starts = []
    for _ in range(n_starts):
        if obj.exhausted():
            break
        z = random_coordinates(param, model, rng)
        starts.append((obj(z), z))
    best_f, best_z = min(starts, key=lambda s: s[0])

    if not obj.exhausted():
        # restart from the projected point so steps act on live amplitudes
        traj, _ = obj.project(best_z)
        z0 = _coords_of(param, traj)
        f0 = obj(z0)
        if f0 > best_f:
            z0, f0 = best_z, best_f
        q_min, q_max, dq_max, _ = model.limit_arrays()
        zh_step = np.tile(0.25 * dq_max[:, None], (1, param.n_harm_free))
        zq_step = (0.1 * (q_max - q_min))[:, None]
        step = param.join(zh_step, zq_step)
        _pattern_search(obj, z0, f0, step, 1e-4 * float(np.min(dq_max)), obj)

    if obj.best_traj is None or not math.isfinite(obj.best_kappa):
        raise RuntimeError("no feasible, well-conditioned trajectory found within budget")
    report = check_constraints(obj.best_traj, model.limits, grid_dt, boundary)
    if not report.feasible:
        raise RuntimeError(f"best trajectory violates constraints: {report.violations[:3]}")
    return OptimizationResult(obj.best_traj, obj.best_kappa, report, obj.history, obj.evals,
                              model.n_joints * (2 * n_harmonics + 1), param.n_free, seed)
