"""Riemannian primitives: musical isomorphisms, Christoffel symbols, covariant
derivatives, and the left side of the forced geodesic equation.

Coordinate charts get the textbook Christoffel machinery; the body-frame
chart for a rigid body uses the closed-form connection of a left-invariant
metric, which avoids attitude-chart singularities entirely.
"""

import numpy as np

from .model import (FRAME_BODY, FRAME_COORDINATE, ConfigPoint, CotangentVec,
                    ModelError, SystemModel, TangentVec)
from .so3 import exp_so3, hat

SPD_REL_TOL = 1e-12


def metric_at(system: SystemModel, q: ConfigPoint, check: bool = False) -> np.ndarray:
    """Metric matrix at q; with check=True rejects non-SPD values."""
    M = np.asarray(system.metric.eval(q), dtype=float)
    if check:
        M = 0.5 * (M + M.T)
        vals = np.linalg.eigvalsh(M)
        if vals[0] <= SPD_REL_TOL * max(abs(vals[-1]), 1.0):
            raise ModelError(
                f"metric is not positive definite at q (min eig {vals[0]:.3e})")
    return M


def sharp(system: SystemModel, f: CotangentVec) -> TangentVec:
    """Raise an index: v = M(q)^-1 f."""
    M = metric_at(system, f.at)
    try:
        c = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise ModelError("metric is not positive definite; cannot raise index") from exc
    y = np.linalg.solve(c, f.comps)
    return TangentVec(f.at, np.linalg.solve(c.T, y))


def flat_iso(system: SystemModel, v: TangentVec) -> CotangentVec:
    """Lower an index: f = M(q) v."""
    return CotangentVec(v.at, metric_at(system, v.at) @ v.comps)


def kinetic_energy(system: SystemModel, q: ConfigPoint, qdot) -> float:
    qdot = np.asarray(qdot, dtype=float)
    return 0.5 * float(qdot @ metric_at(system, q) @ qdot)


def total_energy(system: SystemModel, q: ConfigPoint, qdot) -> float:
    return kinetic_energy(system, q, qdot) + float(system.potential(q))


def flow_point(system: SystemModel, q: ConfigPoint, comps, eps: float) -> ConfigPoint:
    """Move q a parameter distance eps along constant chart components.

    On coordinate charts this is a straight coordinate shift; on the
    body-frame chart the position moves along the rotated linear component
    and the attitude by the exponential of the angular component.
    """
    comps = np.asarray(comps, dtype=float)
    if system.chart.frame_kind == FRAME_COORDINATE:
        return ConfigPoint(system.chart, q.coords + eps * comps)
    x = q.position + eps * (q.rotation @ comps[0:3])
    R = q.rotation @ exp_so3(eps * comps[3:6])
    return ConfigPoint(system.chart, np.concatenate([x, R.reshape(-1)]))


def potential_differential(system: SystemModel, q: ConfigPoint,
                           step: float = 1e-6) -> np.ndarray:
    """Covector components of dP at q (body frame first on body charts)."""
    if system.potential_differential is not None:
        return np.asarray(system.potential_differential(q), dtype=float)
    n = system.vel_dim
    out = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        out[i] = (system.potential(flow_point(system, q, e, step))
                  - system.potential(flow_point(system, q, e, -step))) / (2.0 * step)
    return out


def grad_potential(system: SystemModel, q: ConfigPoint) -> TangentVec:
    """(dP)^sharp at q."""
    return sharp(system, CotangentVec(q, potential_differential(system, q)))


def fd_step(q: ConfigPoint) -> float:
    return 1e-6 * max(1.0, float(np.abs(q.coords).max()))


def metric_partials(system: SystemModel, q: ConfigPoint,
                    step: float = None) -> np.ndarray:
    """dM/dq^k stacked as (n, n, n) [i, j, k]; analytic when supplied."""
    if system.chart.frame_kind != FRAME_COORDINATE:
        raise ModelError("metric partials are only defined on coordinate charts")
    if system.metric.partials is not None:
        return np.asarray(system.metric.partials(q), dtype=float)
    n = system.chart.dim
    h = fd_step(q) if step is None else step
    dM = np.empty((n, n, n))
    for k in range(n):
        dq = np.zeros(n)
        dq[k] = h
        Mp = metric_at(system, ConfigPoint(system.chart, q.coords + dq))
        Mm = metric_at(system, ConfigPoint(system.chart, q.coords - dq))
        dM[:, :, k] = (Mp - Mm) / (2.0 * h)
    return dM


def christoffel_at(system: SystemModel, q: ConfigPoint,
                   step: float = None) -> np.ndarray:
    """Levi-Civita symbols Gamma[k, i, j] of the kinetic-energy metric.

    Only valid on coordinate charts; body-frame systems carry a closed-form
    connection instead (see `body_connection_tensor`).
    """
    if system.chart.frame_kind != FRAME_COORDINATE:
        raise ModelError("Christoffel symbols require a coordinate chart; "
                         "body-frame systems use the closed-form connection")
    if system.constant_metric:
        n = system.chart.dim
        return np.zeros((n, n, n))
    dM = metric_partials(system, q, step=step)
    Minv = np.linalg.inv(metric_at(system, q))
    # Gamma^k_ij = 1/2 M^kl (d_i M_lj + d_j M_li - d_l M_ij)
    grad = dM.transpose(0, 2, 1) + dM - dM.transpose(2, 0, 1)
    return 0.5 * np.einsum("kl,lij->kij", Minv, grad)


def body_connection_tensor(M6: np.ndarray) -> np.ndarray:
    """Connection bilinear form of a left-invariant metric on the rigid-body
    group, as a tensor B[k, i, j] with nabla_X Y = D_X Y + B(X, Y) for fields
    in body components (v, omega).
    """
    M6 = np.asarray(M6, dtype=float)

    def bracket(a, b):
        va, wa = a[0:3], a[3:6]
        vb, wb = b[0:3], b[3:6]
        return np.concatenate([np.cross(wa, vb) - np.cross(wb, va),
                               np.cross(wa, wb)])

    E = np.eye(6)
    br = np.empty((6, 6, 6))
    for i in range(6):
        for j in range(6):
            br[:, i, j] = bracket(E[i], E[j])

    def ip(a, b):
        return a @ M6 @ b

    B = np.empty((6, 6, 6))
    for i in range(6):
        for j in range(6):
            rhs = np.empty(6)
            for k in range(6):
                rhs[k] = 0.5 * (ip(br[:, i, j], E[k])
                                - ip(br[:, j, k], E[i])
                                + ip(br[:, k, i], E[j]))
            B[:, i, j] = np.linalg.solve(M6, rhs)
    return B


def body_quadratic(system: SystemModel, comps: np.ndarray) -> np.ndarray:
    """B(v, v) for the body-frame connection (the Coriolis/gyroscopic term)."""
    B = system.body_connection
    if B is None:
        raise ModelError(f"system {system.name!r} has no body-frame connection")
    return np.einsum("kij,i,j->k", B, comps, comps)


def dynamics_residual(system: SystemModel, q: ConfigPoint, qdot: TangentVec,
                      qddot: TangentVec) -> TangentVec:
    """Left side of the forced geodesic equation: cov accel + grad P.

    A trajectory sample is dynamically feasible exactly when this value lies
    in the span of the raised control columns.
    """
    if not (qdot.at.chart is q.chart and qddot.at.chart is q.chart):
        raise ModelError("q, qdot, qddot must live on the same chart")
    if system.chart.frame_kind == FRAME_COORDINATE:
        G = christoffel_at(system, q)
        acc = qddot.comps + np.einsum("kij,i,j->k", G, qdot.comps, qdot.comps)
    else:
        acc = qddot.comps + body_quadratic(system, qdot.comps)
    return TangentVec(q, acc + grad_potential(system, q).comps)


def covariant_field_derivative(system: SystemModel, field, y_comps,
                               q: ConfigPoint, step: float = 1e-6) -> np.ndarray:
    """nabla_Y X at q for a vector field X given as `field(q) -> comps`.

    Coordinate charts: directional derivative of components plus the
    Christoffel correction.  Body charts: derivative of components along the
    group flow of Y plus the left-invariant connection bilinear term.
    """
    y = np.asarray(y_comps, dtype=float)
    Xq = np.asarray(field(q), dtype=float)
    if system.chart.frame_kind == FRAME_COORDINATE:
        n = system.chart.dim
        dX = np.zeros(n)
        for j in range(n):
            if y[j] == 0.0:
                continue
            dq = np.zeros(n)
            dq[j] = step
            xp = np.asarray(field(ConfigPoint(system.chart, q.coords + dq)), float)
            xm = np.asarray(field(ConfigPoint(system.chart, q.coords - dq)), float)
            dX += y[j] * (xp - xm) / (2.0 * step)
        G = christoffel_at(system, q)
        return dX + np.einsum("kij,i,j->k", G, y, Xq)
    xp = np.asarray(field(flow_point(system, q, y, step)), dtype=float)
    xm = np.asarray(field(flow_point(system, q, y, -step)), dtype=float)
    dX = (xp - xm) / (2.0 * step)
    B = system.body_connection
    return dX + np.einsum("kij,i,j->k", B, y, Xq)


def forward_acceleration(system: SystemModel, q: ConfigPoint, qdot_comps,
                         force_coeffs, christoffels=None) -> np.ndarray:
    """Chart acceleration solving the forced geodesic equation for qddot."""
    qdot_comps = np.asarray(qdot_comps, dtype=float)
    F = np.asarray(system.control_codistribution(q), dtype=float)
    f = F @ np.asarray(force_coeffs, dtype=float)
    M = metric_at(system, q)
    raised = np.linalg.solve(M, f - potential_differential(system, q))
    if system.chart.frame_kind == FRAME_COORDINATE:
        G = christoffels if christoffels is not None else christoffel_at(system, q)
        quad = np.einsum("kij,i,j->k", G, qdot_comps, qdot_comps)
    else:
        quad = body_quadratic(system, qdot_comps)
    return raised - quad
