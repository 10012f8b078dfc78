"""Numerical base-parameter reduction of the full regressor.

The full 78-column regressor is sampled at random in-limit states and
factorised with column-pivoted QR. Columns past the numerical rank are
written as linear combinations of the kept ones; the combination
coefficients give the recombination matrix ``B`` with ``beta = B @ X.vec()``.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from hydrarm.dynamics import regressor_batch
from hydrarm.model import (FRICTION_SLICE, INERTIAL_SLICE, N_LINK_PARAMS, JointState,
                           LinkInertialSet, RobotModel, param_labels)

DEFAULT_TOL = 1e-9
DEFAULT_SAMPLES = 200
DEFAULT_SEED = 42


class RankWarning(UserWarning):
    pass


@dataclass
class BaseParamMapping:
    rank: int
    independent_cols: list[int]
    recombination: np.ndarray
    labels: list[str]
    columns: list[int] = field(default_factory=list)
    tol: float = DEFAULT_TOL
    rank_stable: bool = True
    n_total: int = 78

    def __post_init__(self):
        self.recombination = np.asarray(self.recombination, dtype=float)
        if self.rank != len(self.independent_cols):
            raise ValueError("rank must equal the number of independent columns")
        if self.recombination.shape != (self.rank, self.n_total):
            raise ValueError(f"recombination must be ({self.rank}, {self.n_total})")

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "independent_cols": [int(c) for c in self.independent_cols],
            "columns": [int(c) for c in self.columns],
            "tol": self.tol,
            "rank_stable": self.rank_stable,
            "n_total": self.n_total,
            "labels": list(self.labels),
            # repr of a float round-trips exactly through json
            "recombination": self.recombination.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> BaseParamMapping:
        return cls(rank=doc["rank"], independent_cols=list(doc["independent_cols"]),
                   recombination=np.array(doc["recombination"], dtype=float),
                   labels=list(doc["labels"]), columns=list(doc.get("columns", [])),
                   tol=doc.get("tol", DEFAULT_TOL), rank_stable=doc.get("rank_stable", True),
                   n_total=doc.get("n_total", 78))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> BaseParamMapping:
        return cls.from_dict(json.loads(text))


def inertial_columns(n_links: int = 6) -> list[int]:
    return [i * N_LINK_PARAMS + k for i in range(n_links)
            for k in range(INERTIAL_SLICE.start, INERTIAL_SLICE.stop)]


def friction_columns(n_links: int = 6) -> list[int]:
    return [i * N_LINK_PARAMS + k for i in range(n_links)
            for k in range(FRICTION_SLICE.start, FRICTION_SLICE.stop)]


def sample_states(model: RobotModel, n: int, rng: np.random.Generator):
    """Uniform random (q, dq, ddq) arrays within the joint limits."""
    q_min, q_max, dq_max, ddq_max = model.limit_arrays()
    nj = model.n_joints
    q = rng.uniform(q_min, q_max, size=(n, nj))
    dq = rng.uniform(-dq_max, dq_max, size=(n, nj))
    ddq = rng.uniform(-ddq_max, ddq_max, size=(n, nj))
    return q, dq, ddq


def sample_regressors(model: RobotModel, n: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                      strict: bool = True) -> np.ndarray:
    """Stack full regressor blocks of ``n`` random states into a (6n, 78) matrix.

    With ``strict`` the stack must have at least as many rows as columns.
    """
    if n < 1:
        raise ValueError("need at least one state")
    min_n = math.ceil(model.n_params / model.n_joints)
    if strict and n < min_n:
        raise ValueError(f"n={n} states cannot reach full numerical rank; need n >= {min_n}")
    rng = np.random.default_rng(seed)
    q, dq, ddq = sample_states(model, n, rng)
    return regressor_batch(model, q, dq, ddq).reshape(n * model.n_joints, model.n_params)


def numerical_rank(W: np.ndarray, tol: float = DEFAULT_TOL) -> int:
    """Rank from the pivoted-QR diagonal, relative to its largest entry."""
    if W.size == 0:
        return 0
    R = scipy.linalg.qr(W, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    if diag[0] == 0:
        return 0
    return int(np.sum(diag > tol * diag[0]))


def _snap(c: float) -> str:
    r = round(c, 3)
    if abs(c - r) < 1e-6:
        return f"{r:.3f}"
    return f"{c:.4g}"


def make_label(lead: str, terms: list[tuple[str, float]]) -> str:
    """Readable expression such as ``Izz_1 + 0.261(m_2 + m_3)``.

    Coefficients are snapped to three decimals for display when they sit
    within 1e-6 of one; the numeric mapping is never rounded.
    """
    groups: dict[str, list[str]] = defaultdict(list)
    order = []
    for name, c in terms:
        if abs(c) < 1e-9:
            continue
        key = _snap(abs(c)) + ("-" if c < 0 else "+")
        if key not in groups:
            order.append(key)
        groups[key].append(name)
    parts = [lead]
    for key in order:
        sign = " - " if key.endswith("-") else " + "
        coef = key[:-1]
        names = groups[key]
        body = names[0] if len(names) == 1 else "(" + " + ".join(names) + ")"
        parts.append(sign + (body if coef == "1.000" else f"{coef}{body}"))
    return "".join(parts)


def _priority(col: int) -> tuple[int, int]:
    # masses last so they get folded into inertia / first-moment terms
    k = col % N_LINK_PARAMS
    return (1 if k == 0 else 0, col)


def _select_independent(W, cols, rank, abs_tol):
    """Greedy column choice in priority order via unpivoted QR.

    Returns local indices into ``cols``, or None when the greedy pass does not
    land on the pivoted rank (then the pivoted choice is used instead).
    """
    order = sorted(range(len(cols)), key=lambda k: _priority(cols[k]))
    kept: list[int] = []
    Q = np.zeros((W.shape[0], 0))
    for k in order:
        v = W[:, k] - Q @ (Q.T @ W[:, k])
        v = v - Q @ (Q.T @ v)
        nv = np.linalg.norm(v)
        if nv > abs_tol:
            kept.append(k)
            Q = np.column_stack([Q, v / nv])
    return sorted(kept) if len(kept) == rank else None


def compute_base_mapping(stacked: np.ndarray, tol: float = DEFAULT_TOL, columns=None,
                         names=None) -> BaseParamMapping:
    """Regroup the columns of a stacked regressor into a base parameter set.

    ``columns`` restricts the reduction to a subset of the full basis (by
    default the inertial columns only; friction is identified separately).
    """
    stacked = np.asarray(stacked, dtype=float)
    n_total = stacked.shape[1]
    n_links = n_total // N_LINK_PARAMS
    if columns is None:
        columns = inertial_columns(n_links)
    columns = list(columns)
    names = param_labels(n_links) if names is None else list(names)
    W = stacked[:, columns]
    if W.shape[0] < W.shape[1]:
        raise ValueError(f"stacked regressor has {W.shape[0]} rows for {W.shape[1]} columns")

    R, piv = scipy.linalg.qr(W, mode="r", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * diag[0]))
    rank_loose = int(np.sum(diag > 10 * tol * diag[0]))
    stable = rank == rank_loose
    if not stable:
        warnings.warn(f"numerical rank changes between tol={tol:g} ({rank}) and "
                      f"{10 * tol:g} ({rank_loose})", RankWarning, stacklevel=2)

    indep = _select_independent(W, [columns[k] for k in range(len(columns))], rank,
                                tol * diag[0])
    if indep is None:
        indep = sorted(int(p) for p in piv[:rank])
    dep = sorted(set(range(len(columns))) - set(indep))
    W1 = W[:, indep]
    K = (np.linalg.lstsq(W1, W[:, dep], rcond=None)[0] if dep
         else np.zeros((rank, 0)))

    B = np.zeros((rank, n_total))
    indep_global = [columns[k] for k in indep]
    dep_global = [columns[k] for k in dep]
    B[np.arange(rank), indep_global] = 1.0
    if dep:
        B[:, dep_global] = K
    labels = [make_label(names[g], [(names[d], K[r, j]) for j, d in enumerate(dep_global)])
              for r, g in enumerate(indep_global)]
    return BaseParamMapping(rank=rank, independent_cols=indep_global, recombination=B,
                            labels=labels, columns=columns, tol=tol, rank_stable=stable,
                            n_total=n_total)


def reduce_model(model: RobotModel, include_friction: bool = False, n: int = DEFAULT_SAMPLES,
                 seed: int = DEFAULT_SEED, tol: float = DEFAULT_TOL) -> BaseParamMapping:
    """Sample the model's regressor and compute its base mapping."""
    stacked = sample_regressors(model, n, seed)
    cols = inertial_columns(model.n_joints)
    if include_friction:
        cols = sorted(cols + friction_columns(model.n_joints))
    return compute_base_mapping(stacked, tol=tol, columns=cols)


def project_params(mapping: BaseParamMapping, X: LinkInertialSet) -> np.ndarray:
    return mapping.recombination @ X.vec()


def base_regressor_batch(model: RobotModel, mapping: BaseParamMapping, q, dq, ddq) -> np.ndarray:
    """``(N, n, rank)`` base regressor blocks; only the kept columns are evaluated."""
    return regressor_batch(model, q, dq, ddq, columns=mapping.independent_cols)


def base_regressor(model: RobotModel, mapping: BaseParamMapping, s: JointState) -> np.ndarray:
    return base_regressor_batch(model, mapping, s.q, s.dq, s.ddq)[0]


def rank_report(model: RobotModel, seeds=(0, 1, 2, 3, 4), tols=(1e-8, 1e-10),
                include_friction: bool = False, n: int = DEFAULT_SAMPLES) -> dict:
    """Numerical rank for every (seed, tol) pair."""
    cols = inertial_columns(model.n_joints)
    if include_friction:
        cols = sorted(cols + friction_columns(model.n_joints))
    out = {}
    for seed in seeds:
        W = sample_regressors(model, n, seed)[:, cols]
        for tol in tols:
            out[(seed, tol)] = numerical_rank(W, tol)
    return out
