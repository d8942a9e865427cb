"""Reference dynamics written without any of the package's recursions.

The mass matrix comes from link Jacobians and the kinetic energy of each
link, Coriolis terms from Christoffel symbols of that matrix (central
differences) and gravity from the gradient of the potential.  Parameters
use the package layout ``[m, h (3), Ixx, Ixy, Ixz, Iyy, Iyz, Izz, fc, fv]``
with ``h = m c`` and the inertia about the link origin.
"""
from __future__ import annotations

import numpy as np

SMOOTHING = 0.01


def rodrigues(axis, angle):
    k = np.asarray(axis, dtype=float)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * K @ K


def skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def unpack(pi, i):
    b = pi[12 * i:12 * i + 12]
    I = np.array([[b[4], b[5], b[6]], [b[5], b[7], b[8]], [b[6], b[8], b[9]]])
    return b[0], b[1:4], I, b[10], b[11]


def frames(chain, q):
    """World rotation, origin and joint axis of every link."""
    R = np.eye(3)
    p = np.zeros(3)
    out = []
    for i in range(chain.n_dof):
        p = p + R @ chain.translations[i]
        R = R @ chain.rotations[i] @ rodrigues(chain.axes[i], q[i])
        out.append((R, p, R @ chain.axes[i]))
    return out


def mass_matrix(chain, pi, q):
    n = chain.n_dof
    fr = frames(chain, q)
    M = np.zeros((n, n))
    for i in range(n):
        m, h, I, _, _ = unpack(pi, i)
        R, p, _ = fr[i]
        Jv = np.zeros((3, n))
        Jw = np.zeros((3, n))
        for j in range(i + 1):
            _, pj, zj = fr[j]
            Jw[:, j] = zj
            Jv[:, j] = np.cross(zj, p - pj)
        Rh = R @ h
        cross = Jv.T @ skew(Rh) @ Jw
        M += m * Jv.T @ Jv - cross - cross.T + Jw.T @ R @ I @ R.T @ Jw
    return M


def potential(chain, pi, q):
    V = 0.0
    for i, (R, p, _) in enumerate(frames(chain, q)):
        m, h, _, _, _ = unpack(pi, i)
        V -= chain.gravity @ (m * p + R @ h)
    return V


def mass_matrix_derivatives(chain, pi, q, h=1e-6):
    n = chain.n_dof
    dM = np.zeros((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dM[k] = (mass_matrix(chain, pi, q + e) - mass_matrix(chain, pi, q - e)) / (2 * h)
    return dM


def gravity_torque(chain, pi, q, h=1e-6):
    n = chain.n_dof
    g = np.zeros(n)
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        g[k] = (potential(chain, pi, q + e) - potential(chain, pi, q - e)) / (2 * h)
    return g


def coriolis_vector(chain, pi, q, dq):
    """``c_k = sum_ij (dM_kj/dq_i - 0.5 dM_ij/dq_k) dq_i dq_j``."""
    dM = mass_matrix_derivatives(chain, pi, q)
    n = chain.n_dof
    c = np.zeros(n)
    for k in range(n):
        c[k] = dq @ (dM[:, k, :] - 0.5 * dM[k]) @ dq
    return c


def friction(chain, pi, dq):
    n = chain.n_dof
    fc = np.array([unpack(pi, i)[3] for i in range(n)])
    fv = np.array([unpack(pi, i)[4] for i in range(n)])
    return fc * np.tanh(dq / SMOOTHING) + fv * dq


def inverse_dynamics(chain, pi, q, dq, ddq):
    return (mass_matrix(chain, pi, q) @ ddq + coriolis_vector(chain, pi, q, dq)
            + gravity_torque(chain, pi, q) + friction(chain, pi, dq))


def mass_matrix_rate(chain, pi, q, dq):
    return np.einsum("kij,k->ij", mass_matrix_derivatives(chain, pi, q), dq)


# -- single joint about z with gravity along -y ---------------------------------


def pendulum_torque(pi, q, dq, ddq, g=9.81):
    m, hx, hy, izz, fc, fv = pi[0], pi[1], pi[2], pi[9], pi[10], pi[11]
    return izz * ddq + g * (hx * np.cos(q) - hy * np.sin(q)) + fc * np.tanh(dq / SMOOTHING) + fv * dq


def pendulum_partials(pi, q, dq, g=9.81):
    """(d/dq, d/ddq, d/dddq) of the single-joint torque."""
    hx, hy, izz, fc, fv = pi[1], pi[2], pi[9], pi[10], pi[11]
    d_q = -g * (hx * np.sin(q) + hy * np.cos(q))
    d_dq = fc * (1.0 - np.tanh(dq / SMOOTHING) ** 2) / SMOOTHING + fv
    return d_q, d_dq, izz


# -- mixtures --------------------------------------------------------------------


def gmr(priors, means, covs, d_in, x):
    """Conditional mean of a Gaussian mixture, straight from the textbook formulas."""
    weights = []
    conds = []
    for p, mu, S in zip(priors, means, covs):
        Sii = S[:d_in, :d_in]
        Soi = S[d_in:, :d_in]
        diff = x - mu[:d_in]
        sol = np.linalg.solve(Sii, diff)
        dens = np.exp(-0.5 * diff @ sol) / np.sqrt(np.linalg.det(2 * np.pi * Sii))
        weights.append(p * dens)
        conds.append(mu[d_in:] + Soi @ sol)
    w = np.array(weights)
    return (w / w.sum()) @ np.array(conds)


def transform_covariance(S, J):
    d_out, d_in = J.shape
    T = np.eye(d_in + d_out)
    T[d_in:, :d_in] = -J
    return T @ S @ T.T
