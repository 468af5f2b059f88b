"""Rotation-group utilities: hat/vee maps, Rodrigues exponential and logarithm."""

import numpy as np


def cross3(a, b):
    """Cross product of 3-vectors without the ufunc dispatch overhead."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def det3(R):
    """Determinant of a 3x3 matrix by cofactors."""
    return (R[0, 0] * (R[1, 1] * R[2, 2] - R[1, 2] * R[2, 1])
            - R[0, 1] * (R[1, 0] * R[2, 2] - R[1, 2] * R[2, 0])
            + R[0, 2] * (R[1, 0] * R[2, 1] - R[1, 1] * R[2, 0]))


def hat(w):
    """Skew-symmetric matrix of a 3-vector, so that hat(w) @ v == cross(w, v)."""
    w = np.asarray(w, dtype=float)
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def vee(W):
    """Inverse of hat; symmetric parts are averaged away."""
    return np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]]) / 2.0


def exp_so3(w):
    """Rodrigues rotation for a rotation vector w."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    W = hat(w)
    if theta < 1e-10:
        # second-order series, exact to machine precision at this magnitude
        return np.eye(3) + W + 0.5 * (W @ W)
    return np.eye(3) + (np.sin(theta) / theta) * W \
        + ((1.0 - np.cos(theta)) / theta**2) * (W @ W)


def log_so3(R):
    """Rotation vector of R in SO(3); the angle is returned in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-10:
        return vee(R)
    if np.pi - theta < 1e-6:
        # near-pi axis from the symmetric part
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        k = int(np.argmax(axis))
        axis = A[:, k] / (axis[k] if axis[k] > 0 else 1.0)
        axis = axis / np.linalg.norm(axis)
        # fix sign against the skew part
        w = vee(R)
        if np.dot(w, axis) < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * np.array(
        [R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])


def rot_z(angle):
    """Rotation by `angle` about e3."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def project_so3(R):
    """Nearest rotation matrix in the Frobenius sense (polar projection)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def dexpinv(theta, omega):
    """Inverse right-trivialized differential of exp on so(3).

    Maps a body angular velocity to the rate of the exponential coordinate
    theta; series through the 1/720 Bernoulli term, ample for step sizes
    below ~0.1 rad.
    """
    c1 = cross3(theta, omega)
    c2 = cross3(theta, c1)
    c4 = cross3(theta, cross3(theta, c2))
    return omega - 0.5 * c1 + c2 / 12.0 - c4 / 720.0


def orthonormality_defect(R):
    """Max-abs entry of R^T R - I, a cheap drift diagnostic."""
    return float(np.abs(R.T @ R - np.eye(3)).max())
