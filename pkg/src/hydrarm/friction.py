"""Friction and stiffness identification for the hydraulic cylinders.

Regression model per sample:

    y = p1 A1 - p2 A2 - F - c dx = [ddx, x, sgn(dx), dx, cbrt(dx)] . [m, K, fc, fv, fs]

When the piston mass is known its term moves to the output side and the
four remaining parameters are estimated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg

from hydrarm.hydraulics import CylinderRecord, CylinderRun, LinearStribeck, linearized_stribeck

THETA_NAMES = ("m", "K", "fc", "fv", "fs")
DEFAULT_P0 = 1e10
# column-scaled condition above which estimates are noise (well-posed runs sit near 30)
MAX_CONDITION = 1e4


class RankDeficientError(ValueError):
    pass


class CovarianceError(FloatingPointError):
    pass


class IdentifiabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RegressionSample:
    y: float
    lam: np.ndarray


def regressor_row(x, dx, ddx) -> np.ndarray:
    """Regressor entries ``[ddx, x, sgn(dx), dx, cbrt(dx)]`` (vectorised)."""
    dx = np.asarray(dx, dtype=float)
    return np.stack(np.broadcast_arrays(np.asarray(ddx, dtype=float), np.asarray(x, dtype=float),
                                        np.sign(dx), dx, np.cbrt(dx)), axis=-1)


def build_sample(rec: CylinderRecord, c: float, A1: float, A2: float) -> RegressionSample:
    y = rec.p1 * A1 - rec.p2 * A2 - rec.F - c * rec.dx
    return RegressionSample(float(y), regressor_row(rec.x, rec.dx, rec.ddx))


def build_regression(run: CylinderRun, c: float, A1: float, A2: float,
                     fix_mass: float | None = None):
    """Output vector and regressor matrix for a whole run.

    With ``fix_mass`` the mass column is removed and ``m ddx`` subtracted
    from the output.
    """
    y = run.p1 * A1 - run.p2 * A2 - run.F - c * run.dx
    Lam = regressor_row(run.x, run.dx, run.ddx)
    if fix_mass is not None:
        y = y - fix_mass * run.ddx
        Lam = Lam[:, 1:]
    return y, Lam


def param_names(fix_mass: float | None = None) -> tuple[str, ...]:
    return THETA_NAMES[1:] if fix_mass is not None else THETA_NAMES


@dataclass(frozen=True)
class RLSState:
    alpha_hat: np.ndarray
    P: np.ndarray
    k: int = 0

    @classmethod
    def initial(cls, n: int = 5, p0: float = DEFAULT_P0) -> RLSState:
        return cls(np.zeros(n), p0 * np.eye(n), 0)


def rls_update(state: RLSState, sample: RegressionSample, forgetting: float = 1.0) -> RLSState:
    """One recursive least-squares step.

    Gain ``g = P lam / (f + lam' P lam)``, ``alpha += g (y - lam' alpha)``,
    ``P = (I - g lam') P / f`` followed by symmetrisation.
    """
    if not 0.95 < forgetting <= 1.0:
        raise ValueError("forgetting factor must lie in (0.95, 1]")
    lam = np.asarray(sample.lam, dtype=float)
    P = state.P
    Pl = P @ lam
    g = Pl / (forgetting + lam @ Pl)
    alpha = state.alpha_hat + g * (sample.y - lam @ state.alpha_hat)
    P_new = (P - np.outer(g, Pl)) / forgetting
    P_new = 0.5 * (P_new + P_new.T)
    try:
        np.linalg.cholesky(P_new)
    except np.linalg.LinAlgError:
        raise CovarianceError(
            f"RLS covariance lost positive definiteness at sample {state.k + 1}; "
            f"min eigenvalue {np.linalg.eigvalsh(P_new).min():.3e}") from None
    return RLSState(alpha, P_new, state.k + 1)


@numba.njit(cache=True)
def _rls_loop(y, Lam, alpha, P, forgetting, traces, min_pivots):
    n = Lam.shape[1]
    Pl = np.empty(n)
    L = np.empty((n, n))
    for k in range(Lam.shape[0]):
        lam = Lam[k]
        denom = forgetting
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += P[i, j] * lam[j]
            Pl[i] = s
            denom += lam[i] * s
        err = y[k]
        for i in range(n):
            err -= lam[i] * alpha[i]
        for i in range(n):
            alpha[i] += Pl[i] / denom * err
        for i in range(n):
            for j in range(i, n):
                v = (P[i, j] - Pl[i] * Pl[j] / denom) / forgetting
                P[i, j] = v
                P[j, i] = v
        tr = 0.0
        for i in range(n):
            tr += P[i, i]
        traces[k] = tr
        # Cholesky pivots as the positive-definiteness check
        min_piv = np.inf
        for i in range(n):
            for j in range(i + 1):
                s = P[i, j]
                for m in range(j):
                    s -= L[i, m] * L[j, m]
                if i == j:
                    if s <= 0.0:
                        min_pivots[k] = s
                        return k
                    if s < min_piv:
                        min_piv = s
                    L[i, i] = np.sqrt(s)
                else:
                    L[i, j] = s / L[j, j]
        min_pivots[k] = min_piv
    return -1


@dataclass
class RLSResult:
    state: RLSState
    traces: np.ndarray
    min_pivots: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return self.state.alpha_hat


def rls_run(y, Lam, state: RLSState | None = None, forgetting: float = 1.0) -> RLSResult:
    """Run the RLS recursion over a whole sample stream.

    Identical arithmetic to repeated :func:`rls_update`; the trace of ``P``
    and the smallest Cholesky pivot are recorded after every step.
    """
    if not 0.95 < forgetting <= 1.0:
        raise ValueError("forgetting factor must lie in (0.95, 1]")
    y = np.ascontiguousarray(y, dtype=float)
    Lam = np.ascontiguousarray(Lam, dtype=float)
    if state is None:
        state = RLSState.initial(Lam.shape[1])
    alpha = state.alpha_hat.astype(float).copy()
    P = state.P.astype(float).copy()
    traces = np.empty(len(y))
    pivots = np.empty(len(y))
    fail = _rls_loop(y, Lam, alpha, P, float(forgetting), traces, pivots)
    if fail >= 0:
        raise CovarianceError(f"RLS covariance lost positive definiteness at sample "
                              f"{state.k + fail + 1} (pivot {pivots[fail]:.3e})")
    return RLSResult(RLSState(alpha, P, state.k + len(y)), traces, pivots)


@dataclass
class BatchResult:
    theta: np.ndarray
    residual_rms: float
    singular_values: np.ndarray
    n_samples: int
    names: tuple[str, ...] = THETA_NAMES

    @property
    def condition(self) -> float:
        s = self.singular_values
        return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def batch_ls(y, Lam, names=None, rcond: float = 1e-10,
             max_condition: float = MAX_CONDITION) -> BatchResult:
    """Least squares through a thin QR; refuses rank-deficient regressors.

    Column scaling is applied before the rank test so that a small but
    genuinely informative column (viscous term at low speed) is not mistaken
    for a missing one.
    """
    y = np.asarray(y, dtype=float)
    Lam = np.atleast_2d(np.asarray(Lam, dtype=float))
    names = tuple(names) if names is not None else THETA_NAMES[-Lam.shape[1]:]
    if Lam.shape[0] < Lam.shape[1]:
        raise RankDeficientError(f"{Lam.shape[0]} samples for {Lam.shape[1]} parameters")
    scale = np.linalg.norm(Lam, axis=0)
    if np.any(scale == 0):
        dead = [names[i] for i in np.flatnonzero(scale == 0)]
        raise RankDeficientError(f"regressor columns never excited: {dead}")
    As = Lam / scale
    _, s, Vt = np.linalg.svd(As, full_matrices=False)
    if s[-1] <= rcond * s[0] or s[0] > max_condition * s[-1]:
        v = Vt[-1]
        combo = " ".join(f"{c:+.3g}*{n}" for c, n in zip(v, names) if abs(c) > 1e-3)
        raise RankDeficientError(
            f"regressor is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.2e}); "
            f"unidentifiable direction: {combo}")
    if "fc" in names:
        sg = Lam[:, names.index("fc")]
        if np.all(sg > 0) or np.all(sg < 0):
            warnings.warn("motion never reverses: the Coulomb term is a constant column and "
                          "cannot be told apart from static offsets", IdentifiabilityWarning,
                          stacklevel=2)
    Q, R = scipy.linalg.qr(As, mode="economic")
    theta = scipy.linalg.solve_triangular(R, Q.T @ y) / scale
    resid = y - Lam @ theta
    return BatchResult(theta, float(np.sqrt(np.mean(resid ** 2))), s, len(y), names)


def batch_ls_samples(samples: list[RegressionSample], names=None) -> BatchResult:
    y = np.array([s.y for s in samples])
    Lam = np.array([s.lam for s in samples])
    return batch_ls(y, Lam, names)


@dataclass(frozen=True)
class FrictionFit:
    m: float
    K: float
    friction: LinearStribeck
    mass_fixed: bool

    def to_dict(self) -> dict:
        return {"m": self.m, "K": self.K, "fc": self.friction.fc, "fv": self.friction.fv,
                "fs": self.friction.fs, "mass_fixed": self.mass_fixed}


def extract_friction(theta_hat, fix_mass: float | None = None) -> FrictionFit:
    """Name the entries of an estimate; 4 entries when the mass was fixed."""
    th = np.asarray(theta_hat, dtype=float)
    if fix_mass is not None:
        if th.size != 4:
            raise ValueError("fixed-mass estimates have 4 entries (K, fc, fv, fs)")
        m, (K, fc, fv, fs) = float(fix_mass), th
    else:
        if th.size != 5:
            raise ValueError("free-mass estimates have 5 entries (m, K, fc, fv, fs)")
        m, K, fc, fv, fs = th
    return FrictionFit(float(m), float(K), LinearStribeck(float(fc), float(fv), float(fs)),
                       fix_mass is not None)


@dataclass
class CylinderIdentification:
    fit: FrictionFit
    theta: np.ndarray
    residual_rms: float
    n_samples: int
    estimator: str
    condition: float
    rls: RLSResult | None = None

    def to_dict(self) -> dict:
        out = {"estimator": self.estimator, "theta_hat": self.theta.tolist(),
               "names": list(param_names(self.fit.m if self.fit.mass_fixed else None)),
               "residual_rms": self.residual_rms, "samples_used": self.n_samples,
               "regressor_condition": self.condition}
        out.update(self.fit.to_dict())
        if self.rls is not None:
            out["covariance_trace"] = float(np.trace(self.rls.state.P))
            out["min_cholesky_pivot"] = float(self.rls.min_pivots.min())
        return out


def identify_cylinder(run: CylinderRun, c: float, A1: float, A2: float,
                      fix_mass: float | None = None, estimator: str = "batch",
                      p0: float = DEFAULT_P0, forgetting: float = 1.0) -> CylinderIdentification:
    """Estimate stiffness and friction (and mass, unless fixed) from one run."""
    y, Lam = build_regression(run, c, A1, A2, fix_mass)
    names = param_names(fix_mass)
    batch = batch_ls(y, Lam, names)
    if estimator == "batch":
        theta, rls = batch.theta, None
        rms = batch.residual_rms
    elif estimator == "rls":
        rls = rls_run(y, Lam, RLSState.initial(Lam.shape[1], p0), forgetting)
        theta = rls.theta
        rms = float(np.sqrt(np.mean((y - Lam @ theta) ** 2)))
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return CylinderIdentification(extract_friction(theta, fix_mass), theta, rms, len(y),
                                  estimator, batch.condition, rls)


def stribeck_curve(params: LinearStribeck, v_grid) -> list[tuple[float, float]]:
    v = np.asarray(v_grid, dtype=float)
    return list(zip(v.tolist(), np.asarray(linearized_stribeck(params, v)).tolist()))


def differentiate(t, x, window: int = 5):
    """Velocity and acceleration of ``x`` by central differences.

    A centred moving average of length ``window`` (zero phase) is applied
    before each differentiation; ``window=1`` disables smoothing.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd length")

    def smooth(v):
        if window == 1:
            return v
        pad = window // 2
        vp = np.pad(v, pad, mode="reflect", reflect_type="odd")
        return np.convolve(vp, np.ones(window) / window, mode="valid")

    dx = np.gradient(smooth(x), t)
    ddx = np.gradient(smooth(dx), t)
    return dx, ddx
