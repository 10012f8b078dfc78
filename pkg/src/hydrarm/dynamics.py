"""Recursive Newton-Euler inverse dynamics and the linear parameter regressor.

Link parameters are taken about the link frame origin (standard D-H, frame
``i`` sits at the distal end of link ``i``), which makes the joint torques
linear in the 13 per-link entries. The RNEA below is vectorised over states
and over parameter sets, so the regressor is just the RNEA evaluated on the
unit parameter sets.
"""

from __future__ import annotations

import numpy as np

from hydrarm.model import N_LINK_PARAMS, JointState, LinkInertialSet, RobotModel

_EZ = np.array([0.0, 0.0, 1.0])


def parallel_axis(I_com, m, p) -> np.ndarray:
    """Shift an inertia tensor from the COM to a parallel frame offset by ``p``."""
    p = np.asarray(p, dtype=float)
    return np.asarray(I_com, dtype=float) + m * (p @ p * np.eye(3) - np.outer(p, p))


def friction_torque(fc, fv, fs, dq):
    """Linearised Stribeck torque ``fc sgn(v) + fv v + fs cbrt(v)``.

    ``np.cbrt`` is the signed cube root, so the result is odd in ``dq``.
    """
    dq = np.asarray(dq, dtype=float)
    return fc * np.sign(dq) + fv * dq + fs * np.cbrt(dq)


def _as_batch(q, dq, ddq, n):
    q = np.atleast_2d(np.asarray(q, dtype=float))
    dq = np.atleast_2d(np.asarray(dq, dtype=float))
    ddq = np.atleast_2d(np.asarray(ddq, dtype=float))
    if not (q.shape == dq.shape == ddq.shape and q.shape[1] == n):
        raise ValueError(f"state arrays must be (N, {n}), got {q.shape}, {dq.shape}, {ddq.shape}")
    return q, dq, ddq


def link_kinematics(model: RobotModel, q, dq, ddq, gravity=None):
    """Outward recursion over ``N`` states.

    Returns per-link lists of rotations ``R`` (frame i in frame i-1), angular
    velocity ``w``, angular acceleration ``dw`` and origin acceleration ``a``
    (gravity folded in as a base acceleration), all expressed in frame i.
    """
    n = model.n_joints
    q, dq, ddq = _as_batch(q, dq, ddq, n)
    N = q.shape[0]
    g0 = model.gravity_in_frame0() if gravity is None else np.asarray(gravity, dtype=float)

    w = np.zeros((N, 3))
    dw = np.zeros((N, 3))
    a = np.broadcast_to(-g0, (N, 3)).copy()
    Rs, ws, dws, accs, offsets, axes = [], [], [], [], [], []
    for i, row in enumerate(model.dh_rows[1:]):
        th = q[:, i] + row.theta_offset
        ct, st = np.cos(th), np.sin(th)
        ca, sa = np.cos(row.alpha), np.sin(row.alpha)
        R = np.empty((N, 3, 3))
        R[:, 0, 0], R[:, 0, 1], R[:, 0, 2] = ct, -st * ca, st * sa
        R[:, 1, 0], R[:, 1, 1], R[:, 1, 2] = st, ct * ca, -ct * sa
        R[:, 2, 0], R[:, 2, 1], R[:, 2, 2] = 0.0, sa, ca
        r = np.array([row.a, row.d * sa, row.d * ca])
        axis = np.array([0.0, sa, ca])  # joint axis z_{i-1} seen from frame i

        w_prev = w
        w_in = w_prev + np.outer(dq[:, i], _EZ)
        dw_in = dw + np.outer(ddq[:, i], _EZ) + np.cross(w_prev, np.outer(dq[:, i], _EZ))
        w = np.einsum("nji,nj->ni", R, w_in)
        dw = np.einsum("nji,nj->ni", R, dw_in)
        a = (np.einsum("nji,nj->ni", R, a) + np.cross(dw, r)
             + np.cross(w, np.cross(w, r)))
        Rs.append(R)
        ws.append(w)
        dws.append(dw)
        accs.append(a)
        offsets.append(r)
        axes.append(axis)
    return Rs, ws, dws, accs, offsets, axes, dq


def rnea_batch(model: RobotModel, params, q, dq, ddq, gravity=None) -> np.ndarray:
    """Joint torques for ``N`` states and ``P`` parameter sets.

    ``params`` is ``(P, n_links, 13)`` (or a single ``(n_links, 13)`` set).
    Returns ``(N, P, n)``, or ``(N, n)`` when a single set was given.
    """
    phi = np.asarray(params, dtype=float)
    single = phi.ndim == 2
    if single:
        phi = phi[None]
    n = model.n_joints
    if phi.shape[1:] != (n, N_LINK_PARAMS):
        raise ValueError(f"params must be (P, {n}, {N_LINK_PARAMS}), got {phi.shape}")

    Rs, ws, dws, accs, offsets, axes, dq = link_kinematics(model, q, dq, ddq, gravity)
    N = dq.shape[0]
    P = phi.shape[0]

    F_links, N_links = [], []
    for i in range(n):
        m = phi[:, i, 0]
        h = phi[:, i, 1:4]
        xx, yy, zz, xy, xz, yz = (phi[:, i, k] for k in range(4, 10))
        I = np.stack([np.stack([xx, xy, xz], -1),
                      np.stack([xy, yy, yz], -1),
                      np.stack([xz, yz, zz], -1)], -2)
        w = ws[i][:, None, :]
        dw = dws[i][:, None, :]
        a = accs[i][:, None, :]
        hb = h[None, :, :]
        F = (m[None, :, None] * a + np.cross(dw, hb) + np.cross(w, np.cross(w, hb)))
        Iw = np.einsum("pij,nj->npi", I, ws[i])
        Idw = np.einsum("pij,nj->npi", I, dws[i])
        Nm = Idw + np.cross(w, Iw) + np.cross(hb, a)
        F_links.append(F)
        N_links.append(Nm)

    tau = np.empty((N, P, n))
    f = np.zeros((N, P, 3))
    nm = np.zeros((N, P, 3))
    for i in reversed(range(n)):
        if i + 1 < n:
            R_next = Rs[i + 1]
            f = np.einsum("nij,npj->npi", R_next, f)
            nm = np.einsum("nij,npj->npi", R_next, nm)
        f = f + F_links[i]
        nm = nm + N_links[i] + np.cross(offsets[i], f)
        tau[:, :, i] = nm @ axes[i]

    fr = phi[:, :, 10:13]
    tau += friction_torque(fr[None, :, :, 0], fr[None, :, :, 1], fr[None, :, :, 2],
                           dq[:, None, :])
    return tau[:, 0, :] if single else tau


def inverse_dynamics(model: RobotModel, params: LinkInertialSet, s: JointState,
                     gravity=None) -> np.ndarray:
    """Joint torque vector (N m) for one state."""
    return rnea_batch(model, params.values, s.q, s.dq, s.ddq, gravity)[0]


def unit_parameter_sets(n_links: int, columns=None) -> np.ndarray:
    """One parameter set per selected column with that entry set to 1."""
    total = n_links * N_LINK_PARAMS
    cols = np.arange(total) if columns is None else np.asarray(columns, dtype=int)
    eye = np.zeros((len(cols), total))
    eye[np.arange(len(cols)), cols] = 1.0
    return eye.reshape(len(cols), n_links, N_LINK_PARAMS)


def regressor_batch(model: RobotModel, q, dq, ddq, columns=None, gravity=None) -> np.ndarray:
    """Regressor blocks ``(N, n, C)`` for ``N`` states (all 78 columns by default)."""
    units = unit_parameter_sets(model.n_joints, columns)
    return np.swapaxes(rnea_batch(model, units, q, dq, ddq, gravity), 1, 2)


def regressor(model: RobotModel, s: JointState, gravity=None) -> np.ndarray:
    """6 x 78 block with ``regressor(s) @ X.vec() == inverse_dynamics(X, s)``."""
    return regressor_batch(model, s.q, s.dq, s.ddq, gravity=gravity)[0]


def mass_matrix(model: RobotModel, params: LinkInertialSet, q) -> np.ndarray:
    """Joint-space inertia matrix from unit accelerations with gravity and velocity off."""
    n = model.n_joints
    q = np.asarray(q, dtype=float)
    Q = np.tile(q, (n, 1))
    Z = np.zeros((n, n))
    M = rnea_batch(model, params.without_friction().values, Q, Z, np.eye(n),
                   gravity=np.zeros(3))
    return M.T
