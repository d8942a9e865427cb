"""Rigid-body dynamics of a fixed-base serial chain of revolute joints.

Parameters are stacked per link as::

    [m, m*cx, m*cy, m*cz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz, fc, fv]

with the inertia taken about the link frame origin, ``fc`` the Coulomb and
``fv`` the viscous friction coefficient of the joint driving the link.
Torque is linear in every entry, which is what the regressor exploits.

The recursions below use the two-velocity (Slotine-Li) form: body rates are
propagated from ``dq`` while the velocity multiplied by the Coriolis map is
``dq_r``.  With ``dq_r == dq`` and ``ddq_r == ddq`` it is plain Newton-Euler.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from numba import njit
from scipy.spatial.transform import Rotation

from .errors import ContractError, DerivativeError, SingularInertiaError

PARAMS_PER_LINK = 12
# tanh(dq / FRICTION_SMOOTHING) stands in for sign(dq); shared by plant and regressor.
FRICTION_SMOOTHING = 0.01
MAX_MASS_MATRIX_COND = 1e12


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Fixed-base serial chain geometry.

    ``rotations[i]`` and ``translations[i]`` place joint frame ``i`` in its
    parent's frame at ``q_i = 0``; the joint then rotates about ``axes[i]``
    (expressed in its own frame).
    """

    axes: np.ndarray
    rotations: np.ndarray
    translations: np.ndarray
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    pi_reference: np.ndarray | None = None
    name: str = "chain"

    def __post_init__(self):
        axes = np.ascontiguousarray(self.axes, dtype=float).reshape(-1, 3)
        n = axes.shape[0]
        rots = np.ascontiguousarray(self.rotations, dtype=float).reshape(n, 3, 3)
        trans = np.ascontiguousarray(self.translations, dtype=float).reshape(n, 3)
        grav = np.ascontiguousarray(self.gravity, dtype=float).reshape(3)
        if n < 1:
            raise ContractError("chain needs at least one joint")
        if np.any(np.abs(np.linalg.norm(axes, axis=1) - 1.0) > 1e-12):
            raise ContractError("joint axes must be unit vectors")
        eye = np.eye(3)
        for R in rots:
            if np.max(np.abs(R.T @ R - eye)) > 1e-12:
                raise ContractError("frame rotations must be orthonormal")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "rotations", rots)
        object.__setattr__(self, "translations", trans)
        object.__setattr__(self, "gravity", grav)
        if self.pi_reference is not None:
            pi = np.ascontiguousarray(self.pi_reference, dtype=float).reshape(-1)
            if pi.size != PARAMS_PER_LINK * n:
                raise ContractError(f"pi_reference must have {PARAMS_PER_LINK * n} entries")
            object.__setattr__(self, "pi_reference", pi)
        for arr in (self.axes, self.rotations, self.translations, self.gravity):
            arr.setflags(write=False)

    @property
    def n_dof(self) -> int:
        return self.axes.shape[0]

    @property
    def n_params(self) -> int:
        return PARAMS_PER_LINK * self.n_dof

    def without_gravity(self) -> "KinematicChain":
        return KinematicChain(self.axes, self.rotations, self.translations,
                              np.zeros(3), self.pi_reference, self.name)


def load_chain(path: str | Path) -> KinematicChain:
    """Load a chain model file (YAML).

    Schema::

        name: str
        gravity: [gx, gy, gz]
        joints:
          - axis: [x, y, z]
            origin_rotation_rpy: [roll, pitch, yaw]
            origin_translation: [x, y, z]
            pi_reference: [12 numbers]
    """
    doc = yaml.safe_load(Path(path).read_text())
    return chain_from_dict(doc)


def chain_from_dict(doc: dict) -> KinematicChain:
    joints = doc["joints"]
    axes, rots, trans, pis = [], [], [], []
    for j in joints:
        ax = np.asarray(j["axis"], dtype=float)
        axes.append(ax / np.linalg.norm(ax))
        rpy = j.get("origin_rotation_rpy", [0.0, 0.0, 0.0])
        rots.append(Rotation.from_euler("xyz", rpy).as_matrix())
        trans.append(j.get("origin_translation", [0.0, 0.0, 0.0]))
        if "pi_reference" in j:
            pis.append(j["pi_reference"])
    pi_ref = np.concatenate(pis) if len(pis) == len(joints) else None
    return KinematicChain(
        axes=np.array(axes),
        rotations=np.array(rots),
        translations=np.array(trans, dtype=float),
        gravity=np.asarray(doc.get("gravity", [0.0, 0.0, -9.81]), dtype=float),
        pi_reference=pi_ref,
        name=doc.get("name", "chain"),
    )


def chain_to_dict(chain: KinematicChain) -> dict:
    joints = []
    for i in range(chain.n_dof):
        rpy = Rotation.from_matrix(chain.rotations[i]).as_euler("xyz")
        j = {
            "axis": chain.axes[i].tolist(),
            "origin_rotation_rpy": rpy.tolist(),
            "origin_translation": chain.translations[i].tolist(),
        }
        if chain.pi_reference is not None:
            j["pi_reference"] = chain.pi_reference[12 * i:12 * i + 12].tolist()
        joints.append(j)
    return {"name": chain.name, "gravity": chain.gravity.tolist(), "joints": joints}


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True, inline="always")
def _vadd(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


@njit(cache=True, inline="always")
def _vscale(s, a):
    return (s * a[0], s * a[1], s * a[2])


@njit(cache=True, inline="always")
def _vcross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


@njit(cache=True, inline="always")
def _mv(R, v):
    return (R[0, 0] * v[0] + R[0, 1] * v[1] + R[0, 2] * v[2],
            R[1, 0] * v[0] + R[1, 1] * v[1] + R[1, 2] * v[2],
            R[2, 0] * v[0] + R[2, 1] * v[1] + R[2, 2] * v[2])


@njit(cache=True, inline="always")
def _mtv(R, v):
    return (R[0, 0] * v[0] + R[1, 0] * v[1] + R[2, 0] * v[2],
            R[0, 1] * v[0] + R[1, 1] * v[1] + R[2, 1] * v[2],
            R[0, 2] * v[0] + R[1, 2] * v[1] + R[2, 2] * v[2])


@njit(cache=True, inline="always")
def _inertia_column(c, v):
    """Column c of ``L(v)``: ``I v`` for the inertia with only entry c of
    ``[Ixx, Ixy, Ixz, Iyy, Iyz, Izz]`` set to one."""
    if c == 0:
        return (v[0], 0.0, 0.0)
    if c == 1:
        return (v[1], v[0], 0.0)
    if c == 2:
        return (v[2], 0.0, v[0])
    if c == 3:
        return (0.0, v[1], 0.0)
    if c == 4:
        return (0.0, v[2], v[1])
    return (0.0, 0.0, v[2])


@njit(cache=True)
def _forward_pass(axes, rots, trans, gravity, q, dq, dq_r, ddq_r):
    """Propagate body rates and reference accelerations, each in its link frame."""
    n = q.shape[0]
    W = np.empty((n, 3))
    WR = np.empty((n, 3))
    AL = np.empty((n, 3))
    A = np.empty((n, 3))
    Rp = np.empty((n, 3, 3))
    _joint_rotations(axes, rots, q, Rp)
    w_p = (0.0, 0.0, 0.0)
    wr_p = (0.0, 0.0, 0.0)
    al_p = (0.0, 0.0, 0.0)
    a_p = (-gravity[0], -gravity[1], -gravity[2])
    for i in range(n):
        z = (axes[i, 0], axes[i, 1], axes[i, 2])
        t = (trans[i, 0], trans[i, 1], trans[i, 2])
        R = Rp[i]
        a_o = _vadd(_vadd(a_p, _vcross(al_p, t)), _vcross(w_p, _vcross(wr_p, t)))
        w = _vadd(_mtv(R, w_p), _vscale(dq[i], z))
        wr = _vadd(_mtv(R, wr_p), _vscale(dq_r[i], z))
        al = _vadd(_vadd(_mtv(R, al_p), _vscale(ddq_r[i], z)), _vcross(w, _vscale(dq_r[i], z)))
        a = _mtv(R, a_o)
        W[i, 0], W[i, 1], W[i, 2] = w
        WR[i, 0], WR[i, 1], WR[i, 2] = wr
        AL[i, 0], AL[i, 1], AL[i, 2] = al
        A[i, 0], A[i, 1], A[i, 2] = a
        w_p, wr_p, al_p, a_p = w, wr, al, a
    return W, WR, AL, A, Rp


@njit(cache=True)
def _joint_rotations(axes, rots, q, out):
    for i in range(q.shape[0]):
        k = axes[i]
        c = np.cos(q[i])
        s = np.sin(q[i])
        v = 1.0 - c
        # Rodrigues
        Q00 = c + k[0] * k[0] * v
        Q01 = k[0] * k[1] * v - k[2] * s
        Q02 = k[0] * k[2] * v + k[1] * s
        Q10 = k[1] * k[0] * v + k[2] * s
        Q11 = c + k[1] * k[1] * v
        Q12 = k[1] * k[2] * v - k[0] * s
        Q20 = k[2] * k[0] * v - k[1] * s
        Q21 = k[2] * k[1] * v + k[0] * s
        Q22 = c + k[2] * k[2] * v
        B = rots[i]
        for r in range(3):
            out[i, r, 0] = B[r, 0] * Q00 + B[r, 1] * Q10 + B[r, 2] * Q20
            out[i, r, 1] = B[r, 0] * Q01 + B[r, 1] * Q11 + B[r, 2] * Q21
            out[i, r, 2] = B[r, 0] * Q02 + B[r, 1] * Q12 + B[r, 2] * Q22


@njit(cache=True)
def _rnea(axes, rots, trans, gravity, pi, q, dq, dq_r, ddq_r, eps):
    n = q.shape[0]
    Rp = np.empty((n, 3, 3))
    _joint_rotations(axes, rots, q, Rp)
    F = np.empty((n, 3))
    N = np.empty((n, 3))
    w_p = (0.0, 0.0, 0.0)
    wr_p = (0.0, 0.0, 0.0)
    al_p = (0.0, 0.0, 0.0)
    a_p = (-gravity[0], -gravity[1], -gravity[2])
    for i in range(n):
        z = (axes[i, 0], axes[i, 1], axes[i, 2])
        t = (trans[i, 0], trans[i, 1], trans[i, 2])
        R = Rp[i]
        a_o = _vadd(_vadd(a_p, _vcross(al_p, t)), _vcross(w_p, _vcross(wr_p, t)))
        w = _vadd(_mtv(R, w_p), _vscale(dq[i], z))
        wr = _vadd(_mtv(R, wr_p), _vscale(dq_r[i], z))
        al = _vadd(_vadd(_mtv(R, al_p), _vscale(ddq_r[i], z)), _vcross(w, _vscale(dq_r[i], z)))
        a = _mtv(R, a_o)
        k = 12 * i
        m = pi[k]
        h = (pi[k + 1], pi[k + 2], pi[k + 3])
        Ixx, Ixy, Ixz, Iyy, Iyz, Izz = pi[k + 4], pi[k + 5], pi[k + 6], pi[k + 7], pi[k + 8], pi[k + 9]
        Ial = (Ixx * al[0] + Ixy * al[1] + Ixz * al[2],
               Ixy * al[0] + Iyy * al[1] + Iyz * al[2],
               Ixz * al[0] + Iyz * al[1] + Izz * al[2])
        Iwr = (Ixx * wr[0] + Ixy * wr[1] + Ixz * wr[2],
               Ixy * wr[0] + Iyy * wr[1] + Iyz * wr[2],
               Ixz * wr[0] + Iyz * wr[1] + Izz * wr[2])
        f = _vadd(_vadd(_vscale(m, a), _vcross(al, h)), _vcross(w, _vcross(wr, h)))
        nn = _vadd(_vadd(Ial, _vcross(w, Iwr)), _vcross(h, a))
        F[i, 0], F[i, 1], F[i, 2] = f
        N[i, 0], N[i, 1], N[i, 2] = nn
        w_p = w
        wr_p = wr
        al_p = al
        a_p = a
    tau = np.empty(n)
    f_c = (0.0, 0.0, 0.0)
    n_c = (0.0, 0.0, 0.0)
    for i in range(n - 1, -1, -1):
        k = 12 * i
        f = _vadd((F[i, 0], F[i, 1], F[i, 2]), f_c)
        nn = _vadd((N[i, 0], N[i, 1], N[i, 2]), n_c)
        tau[i] = (axes[i, 0] * nn[0] + axes[i, 1] * nn[1] + axes[i, 2] * nn[2]
                  + pi[k + 10] * np.tanh(dq_r[i] / eps) + pi[k + 11] * dq_r[i])
        R = Rp[i]
        f_c = _mv(R, f)
        n_c = _vadd(_mv(R, nn), _vcross((trans[i, 0], trans[i, 1], trans[i, 2]), f_c))
    return tau


@njit(cache=True)
def _regressor(axes, rots, trans, gravity, q, dq, dq_r, ddq_r, eps):
    n = q.shape[0]
    p = 12 * n
    W, WR, AL, A, Rp = _forward_pass(axes, rots, trans, gravity, q, dq, dq_r, ddq_r)
    Y = np.zeros((n, p))
    # force and moment images of every parameter column; links >= i are nonzero
    fF = np.zeros((3, p))
    fN = np.zeros((3, p))
    for i in range(n - 1, -1, -1):
        k = 12 * i
        w, wr, al, a = W[i], WR[i], AL[i], A[i]
        # force: m a + (skew(al) + skew(w) skew(wr)) h, with skew(w) skew(wr) = wr w^T - (w.wr) I
        wwr = w[0] * wr[0] + w[1] * wr[1] + w[2] * wr[2]
        for r in range(3):
            fF[r, k] = a[r]
            for c in range(3):
                fF[r, k + 1 + c] = wr[r] * w[c] - (wwr if r == c else 0.0)
        fF[0, k + 2] -= al[2]
        fF[0, k + 3] += al[1]
        fF[1, k + 1] += al[2]
        fF[1, k + 3] -= al[0]
        fF[2, k + 1] -= al[1]
        fF[2, k + 2] += al[0]
        # moment: -skew(a) h + (L(al) + skew(w) L(wr)) Ivec, where L(v) Ivec = I v
        fN[0, k + 1], fN[0, k + 2], fN[0, k + 3] = 0.0, a[2], -a[1]
        fN[1, k + 1], fN[1, k + 2], fN[1, k + 3] = -a[2], 0.0, a[0]
        fN[2, k + 1], fN[2, k + 2], fN[2, k + 3] = a[1], -a[0], 0.0
        # columns of I v for v = al (direct) and w x (I wr)
        for c in range(6):
            # e_c picks one inertia entry; I_c v and w x (I_c wr)
            u0, u1, u2 = _inertia_column(c, al)
            v0, v1, v2 = _inertia_column(c, wr)
            fN[0, k + 4 + c] = u0 + w[1] * v2 - w[2] * v1
            fN[1, k + 4 + c] = u1 + w[2] * v0 - w[0] * v2
            fN[2, k + 4 + c] = u2 + w[0] * v1 - w[1] * v0
        z = axes[i]
        for c in range(k, p):
            Y[i, c] = z[0] * fN[0, c] + z[1] * fN[1, c] + z[2] * fN[2, c]
        Y[i, k + 10] = np.tanh(dq_r[i] / eps)
        Y[i, k + 11] = dq_r[i]
        R = Rp[i]
        t = trans[i]
        for c in range(k, p):
            f0, f1, f2 = fF[0, c], fF[1, c], fF[2, c]
            g0 = R[0, 0] * f0 + R[0, 1] * f1 + R[0, 2] * f2
            g1 = R[1, 0] * f0 + R[1, 1] * f1 + R[1, 2] * f2
            g2 = R[2, 0] * f0 + R[2, 1] * f1 + R[2, 2] * f2
            m0, m1, m2 = fN[0, c], fN[1, c], fN[2, c]
            fN[0, c] = R[0, 0] * m0 + R[0, 1] * m1 + R[0, 2] * m2 + t[1] * g2 - t[2] * g1
            fN[1, c] = R[1, 0] * m0 + R[1, 1] * m1 + R[1, 2] * m2 + t[2] * g0 - t[0] * g2
            fN[2, c] = R[2, 0] * m0 + R[2, 1] * m1 + R[2, 2] * m2 + t[0] * g1 - t[1] * g0
            fF[0, c], fF[1, c], fF[2, c] = g0, g1, g2
    return Y


@njit(cache=True)
def _acc_cross(out, a, M, s, nc):
    """``out += s * (a x M[:, c])`` for the first ``nc`` columns."""
    for c in range(nc):
        m0, m1, m2 = M[0, c], M[1, c], M[2, c]
        out[0, c] += s * (a[1] * m2 - a[2] * m1)
        out[1, c] += s * (a[2] * m0 - a[0] * m2)
        out[2, c] += s * (a[0] * m1 - a[1] * m0)


@njit(cache=True)
def _acc_mat(out, A, M, s, nc):
    """``out += s * A @ M`` over the first ``nc`` columns, ``A`` 3x3."""
    for c in range(nc):
        m0, m1, m2 = M[0, c], M[1, c], M[2, c]
        for r in range(3):
            out[r, c] += s * (A[r, 0] * m0 + A[r, 1] * m1 + A[r, 2] * m2)


@njit(cache=True)
def _acc_col(out, col, v, s):
    out[0, col] += s * v[0]
    out[1, col] += s * v[1]
    out[2, col] += s * v[2]


@njit(cache=True)
def _rnea_jacobian(axes, rots, trans, gravity, pi, q, dq, ddq, eps, ws, J):
    """Exact Jacobian of ``ID(q, dq, ddq; pi)`` w.r.t. ``x = [q, dq, ddq]``, into ``J``.

    Forward-mode differentiation of the recursion: every link quantity
    carries a 3 x 3n tangent.  Tangent columns are interleaved per joint
    ``(q_j, dq_j, ddq_j)`` so the outward pass at link i only touches the
    first ``3 (i + 1)`` of them.  A joint rotation about its local axis ``z``
    contributes ``d(R^T v)/dq_i = -z x R^T v`` and ``d(R v)/dq_i = R (z x v)``.
    ``ws`` is scratch space of shape ``(5 n + 7, 3, 3 n)``.
    """
    n = q.shape[0]
    D = 3 * n
    ws[:] = 0.0
    dW, dAL, dA, dF, dN = ws[0:n], ws[n:2 * n], ws[2 * n:3 * n], ws[3 * n:4 * n], ws[4 * n:5 * n]
    zero, da_o, tmp = ws[5 * n], ws[5 * n + 1], ws[5 * n + 2]
    dft, dnt, df_c, dn_c = ws[5 * n + 3], ws[5 * n + 4], ws[5 * n + 5], ws[5 * n + 6]
    Rp = np.empty((n, 3, 3))
    _joint_rotations(axes, rots, q, Rp)
    F = np.empty((n, 3))
    N = np.empty((n, 3))
    w_p = (0.0, 0.0, 0.0)
    al_p = (0.0, 0.0, 0.0)
    a_p = (-gravity[0], -gravity[1], -gravity[2])
    for i in range(n):
        z = (axes[i, 0], axes[i, 1], axes[i, 2])
        t = (trans[i, 0], trans[i, 1], trans[i, 2])
        R = Rp[i]
        Rt = R.T
        nc = 3 * (i + 1)
        if i == 0:
            dw_p, dal_p, da_p = zero, zero, zero
        else:
            dw_p, dal_p, da_p = dW[i - 1], dAL[i - 1], dA[i - 1]
        # origin acceleration a_p + al_p x t + w_p x (w_p x t)
        wt = _vcross(w_p, t)
        a_o = _vadd(_vadd(a_p, _vcross(al_p, t)), _vcross(w_p, wt))
        for r in range(3):
            for c in range(nc):
                da_o[r, c] = da_p[r, c]
                tmp[r, c] = 0.0
        _acc_cross(da_o, t, dal_p, -1.0, nc)
        _acc_cross(da_o, wt, dw_p, -1.0, nc)
        _acc_cross(tmp, t, dw_p, -1.0, nc)
        _acc_cross(da_o, w_p, tmp, 1.0, nc)
        # body rate
        Ew = _mtv(R, w_p)
        w = _vadd(Ew, _vscale(dq[i], z))
        dw = dW[i]
        _acc_mat(dw, Rt, dw_p, 1.0, nc)
        _acc_col(dw, 3 * i, _vcross(z, Ew), -1.0)
        _acc_col(dw, 3 * i + 1, z, 1.0)
        # angular acceleration
        Eal = _mtv(R, al_p)
        wz = _vcross(w, z)
        al = _vadd(_vadd(Eal, _vscale(ddq[i], z)), _vscale(dq[i], wz))
        dal = dAL[i]
        _acc_mat(dal, Rt, dal_p, 1.0, nc)
        _acc_col(dal, 3 * i, _vcross(z, Eal), -1.0)
        _acc_cross(dal, z, dw, -dq[i], nc)
        _acc_col(dal, 3 * i + 1, wz, 1.0)
        _acc_col(dal, 3 * i + 2, z, 1.0)
        # linear acceleration of the origin in this frame
        a = _mtv(R, a_o)
        da = dA[i]
        _acc_mat(da, Rt, da_o, 1.0, nc)
        _acc_col(da, 3 * i, _vcross(z, a), -1.0)
        # link force and moment
        k = 12 * i
        m = pi[k]
        h = (pi[k + 1], pi[k + 2], pi[k + 3])
        I = np.array([[pi[k + 4], pi[k + 5], pi[k + 6]],
                      [pi[k + 5], pi[k + 7], pi[k + 8]],
                      [pi[k + 6], pi[k + 8], pi[k + 9]]])
        wh = _vcross(w, h)
        f = _vadd(_vadd(_vscale(m, a), _vcross(al, h)), _vcross(w, wh))
        df = dF[i]
        for r in range(3):
            for c in range(nc):
                df[r, c] = m * da[r, c]
                tmp[r, c] = 0.0
        _acc_cross(df, h, dal, -1.0, nc)
        _acc_cross(df, wh, dw, -1.0, nc)
        _acc_cross(tmp, h, dw, -1.0, nc)
        _acc_cross(df, w, tmp, 1.0, nc)
        Iw = _mv(I, w)
        nn = _vadd(_vadd(_mv(I, al), _vcross(w, Iw)), _vcross(h, a))
        dn = dN[i]
        for r in range(3):
            for c in range(nc):
                tmp[r, c] = 0.0
        _acc_mat(dn, I, dal, 1.0, nc)
        _acc_cross(dn, Iw, dw, -1.0, nc)
        _acc_mat(tmp, I, dw, 1.0, nc)
        _acc_cross(dn, w, tmp, 1.0, nc)
        _acc_cross(dn, h, da, 1.0, nc)
        F[i, 0], F[i, 1], F[i, 2] = f
        N[i, 0], N[i, 1], N[i, 2] = nn
        w_p, al_p, a_p = w, al, a
    f_c = (0.0, 0.0, 0.0)
    n_c = (0.0, 0.0, 0.0)
    for i in range(n - 1, -1, -1):
        k = 12 * i
        z = (axes[i, 0], axes[i, 1], axes[i, 2])
        ft = _vadd((F[i, 0], F[i, 1], F[i, 2]), f_c)
        nt = _vadd((N[i, 0], N[i, 1], N[i, 2]), n_c)
        for r in range(3):
            for c in range(D):
                dft[r, c] = dF[i, r, c] + df_c[r, c]
                dnt[r, c] = dN[i, r, c] + dn_c[r, c]
                df_c[r, c] = 0.0
                dn_c[r, c] = 0.0
        for j in range(n):
            for b in range(3):
                c = 3 * j + b
                J[i, b * n + j] = z[0] * dnt[0, c] + z[1] * dnt[1, c] + z[2] * dnt[2, c]
        th = np.tanh(dq[i] / eps)
        J[i, n + i] += pi[k + 10] * (1.0 - th * th) / eps + pi[k + 11]
        R = Rp[i]
        t = (trans[i, 0], trans[i, 1], trans[i, 2])
        f_c = _mv(R, ft)
        _acc_mat(df_c, R, dft, 1.0, D)
        _acc_col(df_c, 3 * i, _mv(R, _vcross(z, ft)), 1.0)
        n_c = _vadd(_mv(R, nt), _vcross(t, f_c))
        _acc_mat(dn_c, R, dnt, 1.0, D)
        _acc_col(dn_c, 3 * i, _mv(R, _vcross(z, nt)), 1.0)
        _acc_cross(dn_c, t, df_c, 1.0, D)


@njit(cache=True)
def _batch_product(axes, rots, trans, gravity, dpi, X, eps):
    K = X.shape[0]
    n = X.shape[1] // 3
    out = np.zeros((K, n))
    for j in range(K):
        x = X[j]
        out[j] = _rnea(axes, rots, trans, gravity, dpi, x[:n], x[n:2 * n], x[n:2 * n], x[2 * n:], eps)
    return out


@njit(cache=True)
def _batch_partials(axes, rots, trans, gravity, dpi, X, eps):
    K = X.shape[0]
    n = X.shape[1] // 3
    out = np.zeros((K, n, 3 * n))
    ws = np.empty((5 * n + 7, 3, 3 * n))
    for j in range(K):
        x = X[j]
        _rnea_jacobian(axes, rots, trans, gravity, dpi, x[:n], x[n:2 * n], x[2 * n:], eps, ws, out[j])
    return out


@njit(cache=True)
def _mass_matrix(axes, rots, trans, pi, q, eps):
    n = q.shape[0]
    M = np.zeros((n, n))
    zero = np.zeros(n)
    g0 = np.zeros(3)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        M[:, j] = _rnea(axes, rots, trans, g0, pi, q, zero, zero, e, eps)
    return M


@njit(cache=True)
def _forward_dynamics(axes, rots, trans, gravity, pi, q, dq, tau, eps, max_cond):
    n = q.shape[0]
    M = _mass_matrix(axes, rots, trans, pi, q, eps)
    M = 0.5 * (M + M.T)
    ev = np.abs(np.linalg.eigvalsh(M))
    if ev.min() * max_cond < ev.max() or not np.isfinite(ev.max()):
        return np.full(n, np.nan)
    bias = _rnea(axes, rots, trans, gravity, pi, q, dq, dq, np.zeros(n), eps)
    return np.linalg.solve(M, tau - bias)


# ---------------------------------------------------------------------------
# public API


def _vec(x, n, name):
    arr = np.ascontiguousarray(x, dtype=float).reshape(-1)
    if arr.shape[0] != n:
        raise ContractError(f"{name} must have length {n}, got {arr.shape[0]}")
    return arr


def _params(chain, pi):
    return _vec(pi, chain.n_params, "pi")


def _args(chain):
    return chain.axes, chain.rotations, chain.translations, chain.gravity


def inverse_dynamics(chain: KinematicChain, pi, q, dq, ddq) -> np.ndarray:
    """Joint torques ``M ddq + C dq + G + friction`` by recursive Newton-Euler."""
    n = chain.n_dof
    q, dq, ddq = _vec(q, n, "q"), _vec(dq, n, "dq"), _vec(ddq, n, "ddq")
    return _rnea(*_args(chain), _params(chain, pi), q, dq, dq, ddq, FRICTION_SMOOTHING)


def reference_torque(chain: KinematicChain, pi, q, dq, dq_r, ddq_r) -> np.ndarray:
    """``Y(q, dq, dq_r, ddq_r) @ pi`` without forming the regressor."""
    n = chain.n_dof
    return _rnea(*_args(chain), _params(chain, pi), _vec(q, n, "q"), _vec(dq, n, "dq"),
                 _vec(dq_r, n, "dq_r"), _vec(ddq_r, n, "ddq_r"), FRICTION_SMOOTHING)


def regressor(chain: KinematicChain, q, dq, dq_r, ddq_r) -> np.ndarray:
    """Direct regressor ``Y`` with ``Y @ pi == M ddq_r + C(q, dq) dq_r + G + F(dq_r)``.

    Built as the parameter-basis images of the two-velocity recursion, all
    ``12 n`` columns in one backward sweep.
    """
    n = chain.n_dof
    return _regressor(*_args(chain), _vec(q, n, "q"), _vec(dq, n, "dq"),
                      _vec(dq_r, n, "dq_r"), _vec(ddq_r, n, "ddq_r"), FRICTION_SMOOTHING)


def mass_matrix(chain: KinematicChain, pi, q) -> np.ndarray:
    n = chain.n_dof
    M = _mass_matrix(chain.axes, chain.rotations, chain.translations, _params(chain, pi),
                     _vec(q, n, "q"), FRICTION_SMOOTHING)
    return 0.5 * (M + M.T)


def forward_dynamics(chain: KinematicChain, pi, q, dq, tau) -> np.ndarray:
    """Joint accelerations produced by ``tau`` at state ``(q, dq)``."""
    n = chain.n_dof
    pi = _params(chain, pi)
    q, dq, tau = _vec(q, n, "q"), _vec(dq, n, "dq"), _vec(tau, n, "tau")
    try:
        ddq = _forward_dynamics(*_args(chain), pi, q, dq, tau, FRICTION_SMOOTHING,
                                MAX_MASS_MATRIX_COND)
    except np.linalg.LinAlgError as exc:
        raise SingularInertiaError("mass matrix could not be factored") from exc
    if np.isnan(ddq[0]):
        raise SingularInertiaError("mass matrix is singular for this parameter vector")
    return ddq


def regressor_param_product_partials(chain: KinematicChain, q, dq, ddq, dpi):
    """Jacobians of ``Y(q, dq, ddq) @ dpi`` w.r.t. q, dq and ddq (each n x n).

    Exact: the Newton-Euler recursion is differentiated in forward mode.
    """
    n = chain.n_dof
    x = np.concatenate([_vec(q, n, "q"), _vec(dq, n, "dq"), _vec(ddq, n, "ddq")])
    J = batch_param_product_partials(chain, x, dpi)[0]
    if not np.all(np.isfinite(J)):
        raise DerivativeError("non-finite regressor derivative")
    return J[:, :n], J[:, n:2 * n], J[:, 2 * n:]


def batch_param_product(chain: KinematicChain, X: np.ndarray, dpi) -> np.ndarray:
    """Rows ``Y(x_j) @ dpi`` for each row ``x_j = [q, dq, ddq]`` of X."""
    X = np.ascontiguousarray(X, dtype=float).reshape(-1, 3 * chain.n_dof)
    return _batch_product(*_args(chain), _params(chain, dpi), X, FRICTION_SMOOTHING)


def batch_param_product_partials(chain: KinematicChain, X: np.ndarray, dpi) -> np.ndarray:
    """Stacked ``[dq | ddq_dot | dddq]`` Jacobians, shape (K, n, 3n), one per row of X."""
    X = np.ascontiguousarray(X, dtype=float).reshape(-1, 3 * chain.n_dof)
    return _batch_partials(*_args(chain), _params(chain, dpi), X, FRICTION_SMOOTHING)


def link_frames(chain: KinematicChain, q) -> tuple[np.ndarray, np.ndarray]:
    """World rotations (n,3,3) and origins (n,3) of every link frame."""
    q = _vec(q, chain.n_dof, "q")
    R = np.eye(3)
    p = np.zeros(3)
    rots, origins = [], []
    for i in range(chain.n_dof):
        p = p + R @ chain.translations[i]
        R = R @ chain.rotations[i] @ Rotation.from_rotvec(chain.axes[i] * q[i]).as_matrix()
        rots.append(R)
        origins.append(p)
    return np.array(rots), np.array(origins)


def mechanical_energy(chain: KinematicChain, pi, q, dq) -> float:
    """Kinetic plus gravitational potential energy (friction entries ignored)."""
    pi = _params(chain, pi)
    dq = _vec(dq, chain.n_dof, "dq")
    kinetic = 0.5 * dq @ mass_matrix(chain, pi, q) @ dq
    rots, origins = link_frames(chain, q)
    potential = 0.0
    for i in range(chain.n_dof):
        m = pi[12 * i]
        h = pi[12 * i + 1:12 * i + 4]
        # m * (p + R c) == m p + R h
        potential -= chain.gravity @ (m * origins[i] + rots[i] @ h)
    return float(kinetic + potential)


def plausible_link_params(mass, com, inertia_com, fc=0.0, fv=0.0) -> np.ndarray:
    """12-entry link block from mass, centre of mass and inertia about the COM."""
    c = np.asarray(com, dtype=float)
    Ic = np.asarray(inertia_com, dtype=float)
    Io = Ic + mass * (c @ c * np.eye(3) - np.outer(c, c))
    h = mass * c
    return np.array([mass, *h, Io[0, 0], Io[0, 1], Io[0, 2], Io[1, 1], Io[1, 2], Io[2, 2], fc, fv])
