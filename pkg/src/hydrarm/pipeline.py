"""End-to-end identification: friction, reduction, assembly, solve, validation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from hydrarm import testbed
from hydrarm.dynamics import friction_torque, rnea_batch
from hydrarm.excitation import (OMEGA_SLOW, FourierTrajectory, check_constraints,
                                optimize_trajectory)
from hydrarm.friction import identify_cylinder
from hydrarm.hydraulics import DEFAULT_NOISE, simulate_cylinder
from hydrarm.model import LinkInertialSet, RobotModel, default_model
from hydrarm.reduction import (BaseParamMapping, base_regressor_batch, project_params,
                               reduce_model)

log = logging.getLogger(__name__)

DEFAULT_TORQUE_NOISE = 0.1
DEFAULT_RATE = 50.0


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class IdentificationDataset:
    t: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    ddq: np.ndarray
    tau: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        for name in ("q", "dq", "ddq", "tau"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = len(self.t)
        if n < 1:
            raise ValueError("dataset needs at least one sample")
        shapes = {getattr(self, k).shape for k in ("q", "dq", "ddq", "tau")}
        if len(shapes) != 1 or next(iter(shapes))[0] != n:
            raise ValueError(f"inconsistent dataset shapes: {shapes} for {n} samples")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_joints(self) -> int:
        return self.q.shape[1]

    def subset(self, idx) -> IdentificationDataset:
        return IdentificationDataset(self.t[idx], self.q[idx], self.dq[idx], self.ddq[idx],
                                     self.tau[idx], dict(self.meta))


def simulate_arm_run(model: RobotModel, ground_truth: LinkInertialSet, traj: FourierTrajectory,
                     rate: float = DEFAULT_RATE, noise: float = DEFAULT_TORQUE_NOISE,
                     seed: int = 0, check: bool = True) -> IdentificationDataset:
    """Sample one trajectory period and add Gaussian torque noise."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    if check:
        rep = check_constraints(traj, model.limits)
        if not rep.feasible:
            raise ValueError(f"trajectory is infeasible: {rep.violations[:3]}")
    n = int(round(traj.period * rate))
    t = np.arange(n) / rate
    q, dq, ddq = traj.evaluate(t)
    tau = rnea_batch(model, ground_truth.values, q, dq, ddq)
    rng = np.random.default_rng(seed)
    if noise > 0:
        tau = tau + rng.normal(0.0, noise, tau.shape)
    meta = {"rate_hz": rate, "torque_noise": noise, "seed": seed,
            "period_s": traj.period, "omega_f": traj.omega_f}
    return IdentificationDataset(t, q, dq, ddq, tau, meta)


def joint_friction(friction, dq) -> np.ndarray:
    """Friction torques ``(N, n)`` for a ``(n, 3)`` table of (fc, fv, fs)."""
    fr = np.asarray(friction, dtype=float)
    return friction_torque(fr[:, 0], fr[:, 1], fr[:, 2], np.atleast_2d(dq))


def assemble_system(mapping: BaseParamMapping, model: RobotModel, ds: IdentificationDataset,
                    friction=None):
    """Stack the base regressor and torques joint by joint.

    Rows ``i*K .. (i+1)*K`` hold joint ``i`` at all ``K`` samples. Known
    friction torques are subtracted from the measurements first.
    """
    Y = base_regressor_batch(model, mapping, ds.q, ds.dq, ds.ddq)  # (K, n, r)
    tau = ds.tau
    if friction is not None:
        tau = tau - joint_friction(friction, ds.dq)
    H = np.swapaxes(Y, 0, 1).reshape(-1, mapping.rank)
    G = tau.T.reshape(-1)
    return H, G


@dataclass
class LSResult:
    beta: np.ndarray
    condition: float
    residual_rms: float
    n_rows: int


def solve_ls(H, G, labels=None, rtol: float = 1e-10) -> LSResult:
    """Least squares via pivoted QR; rank-deficient systems are rejected."""
    H = np.asarray(H, dtype=float)
    G = np.asarray(G, dtype=float)
    if H.shape[0] < H.shape[1]:
        raise np.linalg.LinAlgError(f"{H.shape[0]} rows for {H.shape[1]} parameters")
    s = np.linalg.svd(H, compute_uv=False)
    if s[-1] <= rtol * s[0]:
        _, _, Vt = np.linalg.svd(H, full_matrices=False)
        names = labels or [f"beta_{k + 1}" for k in range(H.shape[1])]
        dirs = []
        for v in Vt[s <= rtol * s[0]]:
            top = np.argsort(-np.abs(v))[:3]
            dirs.append(" ".join(f"{v[k]:+.2f}*[{names[k]}]" for k in top))
        raise np.linalg.LinAlgError("observation matrix is rank deficient; near-null "
                                    "directions: " + "; ".join(dirs))
    Q, R, piv = scipy.linalg.qr(H, mode="economic", pivoting=True)
    z = scipy.linalg.solve_triangular(R, Q.T @ G)
    beta = np.empty_like(z)
    beta[piv] = z
    resid = G - H @ beta
    return LSResult(beta, float(s[0] / s[-1]), float(np.sqrt(np.mean(resid ** 2))), H.shape[0])


def predict_torques(mapping: BaseParamMapping, model: RobotModel, beta, q, dq, ddq,
                    friction=None) -> np.ndarray:
    """``(N, n)`` torques from base parameters (plus friction when given)."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (mapping.rank,):
        raise ValueError(f"beta must have length {mapping.rank}")
    tau = base_regressor_batch(model, mapping, q, dq, ddq) @ beta
    if friction is not None:
        tau = tau + joint_friction(friction, dq)
    return tau


def rsd(predicted, measured) -> float:
    """sqrt(sum (pred - meas)^2 / sum pred^2) for one joint's series."""
    p = np.asarray(predicted, dtype=float)
    m = np.asarray(measured, dtype=float)
    if p.shape != m.shape or p.size < 1:
        raise ValueError("series must be non-empty and aligned")
    den = float(np.sum(p * p))
    if den == 0:
        raise ZeroDivisionError("predicted torque series is identically zero")
    return math.sqrt(float(np.sum((p - m) ** 2)) / den)


def residual_rms(predicted, measured) -> float:
    p = np.asarray(predicted, dtype=float)
    m = np.asarray(measured, dtype=float)
    return float(np.sqrt(np.mean((p - m) ** 2)))


@dataclass
class PipelineConfig:
    model: RobotModel | None = None
    ground_truth: LinkInertialSet | None = None
    trajectory: FourierTrajectory | None = None
    dataset: IdentificationDataset | None = None
    rate: float = DEFAULT_RATE
    torque_noise: float = DEFAULT_TORQUE_NOISE
    seed: int = 1
    friction_stage: bool = True
    friction: np.ndarray | None = None
    cylinder_noise: dict | None = None
    cylinder_periods: float = 3.0
    friction_estimator: str = "batch"
    design_budget: int = 400
    design_seed: int = 0
    omega_f: float = OMEGA_SLOW
    n_harmonics: int = 3
    mapping: BaseParamMapping | None = None


@dataclass
class IdentificationReport:
    beta_hat: np.ndarray
    labels: list[str]
    rsd: np.ndarray
    rsd_abs: np.ndarray
    condition: float
    n_samples: int
    residual_rms: float
    friction: np.ndarray
    friction_source: str
    beta_true: np.ndarray | None = None
    t: np.ndarray | None = None
    measured: np.ndarray | None = None
    predicted: np.ndarray | None = None
    timings: dict = field(default_factory=dict)
    trajectory: FourierTrajectory | None = None
    mapping: BaseParamMapping | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        params = []
        for k, (lab, b) in enumerate(zip(self.labels, self.beta_hat)):
            row = {"index": k + 1, "label": lab, "estimate": float(b)}
            if self.beta_true is not None:
                row["planted"] = float(self.beta_true[k])
            params.append(row)
        out = {
            "n_base_params": len(self.beta_hat),
            "base_parameters": params,
            "rsd": {f"joint{j + 1}": float(v) for j, v in enumerate(self.rsd)},
            "rsd_abs_nm": {f"joint{j + 1}": float(v) for j, v in enumerate(self.rsd_abs)},
            "rsd_note": ("rsd is the ratio sqrt(sum (pred-meas)^2 / sum pred^2); "
                         "rsd_abs_nm is the residual RMS in N m"),
            "condition_number_H": self.condition,
            "n_samples": self.n_samples,
            "residual_rms": self.residual_rms,
            "friction_source": self.friction_source,
            "friction": [{"joint": j + 1, "fc": float(r[0]), "fv": float(r[1]), "fs": float(r[2])}
                         for j, r in enumerate(self.friction)],
            "meta": self.meta,
        }
        if include_timings:
            out["stage_timings_s"] = dict(self.timings)
        return out


def identify_friction_stage(noise: dict | None = None, periods: float = 3.0,
                            estimator: str = "batch", seed: int = 0):
    """Simulate and identify the six planted cylinders; returns the (6, 3) table."""
    fits = []
    for j in range(1, 7):
        p = testbed.cylinder_params(j)
        run = simulate_cylinder(p, noise=DEFAULT_NOISE if noise is None else noise,
                                seed=seed + j, periods=periods)
        res = identify_cylinder(run, p.c, p.A1, p.A2, fix_mass=p.m, estimator=estimator)
        fits.append(res)
    table = np.array([[f.fit.friction.fc, f.fit.friction.fv, f.fit.friction.fs] for f in fits])
    return table, fits


def run_pipeline(cfg: PipelineConfig | None = None) -> IdentificationReport:
    """Friction -> reduction -> excitation -> assembly -> LS -> prediction -> RSD."""
    cfg = PipelineConfig() if cfg is None else cfg
    timings = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            timings[name] = time.perf_counter() - t0

    model = cfg.model or default_model()
    truth = cfg.ground_truth
    if truth is None and cfg.dataset is None:
        truth = testbed.ground_truth_links(model)

    if cfg.friction is not None:
        fric, source = np.asarray(cfg.friction, dtype=float), "given"
    elif cfg.friction_stage:
        fric = stage("friction", lambda: identify_friction_stage(
            cfg.cylinder_noise, cfg.cylinder_periods, cfg.friction_estimator, cfg.seed)[0])
        source = f"identified ({cfg.friction_estimator})"
    else:
        fric, source = np.zeros((model.n_joints, 3)), "skipped"

    mapping = cfg.mapping or stage("reduction", lambda: reduce_model(model))

    traj = cfg.trajectory
    if traj is None and cfg.dataset is None:
        traj = stage("design", lambda: optimize_trajectory(
            model, mapping, omega_f=cfg.omega_f, n_harmonics=cfg.n_harmonics,
            seed=cfg.design_seed, budget=cfg.design_budget).trajectory)

    ds = cfg.dataset
    if ds is None:
        ds = stage("simulate", lambda: simulate_arm_run(
            model, truth, traj, cfg.rate, cfg.torque_noise, cfg.seed))

    H, G = stage("assemble", lambda: assemble_system(mapping, model, ds, fric))
    sol = stage("solve", lambda: solve_ls(H, G, mapping.labels))
    pred = stage("predict", lambda: predict_torques(mapping, model, sol.beta, ds.q, ds.dq,
                                                    ds.ddq, fric))
    ratios = np.array([rsd(pred[:, j], ds.tau[:, j]) for j in range(model.n_joints)])
    absolute = np.array([residual_rms(pred[:, j], ds.tau[:, j]) for j in range(model.n_joints)])
    beta_true = project_params(mapping, truth) if truth is not None else None
    meta = {"rate_hz": cfg.rate, "torque_noise": cfg.torque_noise, "seed": cfg.seed,
            "rank": mapping.rank}
    meta.update(ds.meta)
    return IdentificationReport(sol.beta, list(mapping.labels), ratios, absolute, sol.condition,
                                len(ds), sol.residual_rms, fric, source, beta_true, ds.t, ds.tau,
                                pred, timings, traj, mapping, meta)
