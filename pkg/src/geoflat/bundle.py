"""Group actions, bundle projections, trivializations, and the split of a
velocity into group and shape parts.

Only the three group kinds needed by the built-in systems are implemented,
each with closed-form composition, exponential, and spatial velocity.
"""

import numpy as np

from .model import (GROUP_DIM, R2, R3XS1, SE2, ConfigPoint, GroupElement,
                    LieAlgebraVec, ModelError, ShapePoint, SystemModel,
                    TangentVec, Trivialization, wrap_angle)

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])  # 90-degree rotation in the plane


def rot2(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s], [s, c]])


def identity(kind: str) -> GroupElement:
    return GroupElement(kind, np.zeros(GROUP_DIM[kind]))


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    """Group product a * b, matching left composition of the actions."""
    if a.kind != b.kind:
        raise ModelError("cannot compose elements of different groups")
    if a.kind == R2:
        return GroupElement(R2, a.data + b.data)
    if a.kind == SE2:
        xy = rot2(a.data[2]) @ b.data[0:2] + a.data[0:2]
        return GroupElement(SE2, np.array([xy[0], xy[1], a.data[2] + b.data[2]]))
    return GroupElement(R3XS1, np.concatenate([a.data[0:3] + b.data[0:3],
                                               [a.data[3] + b.data[3]]]))


def inverse(a: GroupElement) -> GroupElement:
    if a.kind == R2:
        return GroupElement(R2, -a.data)
    if a.kind == SE2:
        xy = -(rot2(-a.data[2]) @ a.data[0:2])
        return GroupElement(SE2, np.array([xy[0], xy[1], -a.data[2]]))
    return GroupElement(R3XS1, -a.data)


def group_exp(kind: str, xi, t: float = 1.0) -> GroupElement:
    """Exponential of t * xi."""
    xi = np.asarray(xi, dtype=float)
    if kind == R2 or kind == R3XS1:
        return GroupElement(kind, t * xi)
    v, w = xi[0:2], xi[2]
    a = t * w
    if abs(a) < 1e-12:
        xy = t * v + 0.5 * t * a * (J2 @ v)
    else:
        V = (np.sin(a) * np.eye(2) + (1.0 - np.cos(a)) * J2) / w
        xy = V @ v
    return GroupElement(SE2, np.array([xy[0], xy[1], a]))


def spatial_velocity(kind: str, g: GroupElement, gdot) -> np.ndarray:
    """xi = gdot * g^-1 in coordinates."""
    gdot = np.asarray(gdot, dtype=float)
    if kind in (R2, R3XS1):
        return gdot.copy()
    xi12 = gdot[0:2] - gdot[2] * (J2 @ g.data[0:2])
    return np.array([xi12[0], xi12[1], gdot[2]])


def coordinate_velocity(kind: str, g: GroupElement, xi) -> np.ndarray:
    """gdot from the spatial velocity xi."""
    xi = np.asarray(xi, dtype=float)
    if kind in (R2, R3XS1):
        return xi.copy()
    g12 = xi[0:2] + xi[2] * (J2 @ g.data[0:2])
    return np.array([g12[0], g12[1], xi[2]])


def spatial_velocity_rate(kind: str, g: GroupElement, gdot, gddot) -> np.ndarray:
    """xidot from coordinate first and second derivatives."""
    gdot = np.asarray(gdot, dtype=float)
    gddot = np.asarray(gddot, dtype=float)
    if kind in (R2, R3XS1):
        return gddot.copy()
    xd12 = gddot[0:2] - gddot[2] * (J2 @ g.data[0:2]) - gdot[2] * (J2 @ gdot[0:2])
    return np.array([xd12[0], xd12[1], gddot[2]])


def coordinate_acceleration(kind: str, g: GroupElement, xi, xidot) -> np.ndarray:
    """gddot from (g, xi, xidot)."""
    xi = np.asarray(xi, dtype=float)
    xidot = np.asarray(xidot, dtype=float)
    if kind in (R2, R3XS1):
        return xidot.copy()
    g12 = g.data[0:2]
    gd12 = xi[0:2] + xi[2] * (J2 @ g12)
    gdd12 = xidot[0:2] + xidot[2] * (J2 @ g12) + xi[2] * (J2 @ gd12)
    return np.array([gdd12[0], gdd12[1], xidot[2]])


def act(system: SystemModel, g: GroupElement, q: ConfigPoint) -> ConfigPoint:
    """Apply the symmetry action Phi_g."""
    if g.kind != system.group_kind:
        raise ModelError(f"system {system.name!r} expects a {system.group_kind} element")
    return system.action(g, q)


def act_tangent(system: SystemModel, g: GroupElement, comps) -> np.ndarray:
    """Pushforward of Phi_g applied to tangent components."""
    return np.asarray(system.action_tangent(g, np.asarray(comps, dtype=float)))


def project(system: SystemModel, q: ConfigPoint) -> ShapePoint:
    return system.projection(q)


def infinitesimal_generator(system: SystemModel, xi: LieAlgebraVec,
                            q: ConfigPoint) -> TangentVec:
    """Generator vector field of xi evaluated at q."""
    return TangentVec(q, system.generator(xi.comps, q))


def trivialize(system: SystemModel, triv: Trivialization,
               q: ConfigPoint) -> tuple:
    """Split q into (shape, group element); requires the shape to lie in the
    section's domain."""
    s = system.projection(q)
    triv.section.require_contains(s)
    return s, triv.group_part(q)


def untrivialize(system: SystemModel, triv: Trivialization, s: ShapePoint,
                 g: GroupElement) -> ConfigPoint:
    """Inverse trivialization: q = Phi_g(sigma(s))."""
    triv.section.require_contains(s)
    return system.action(g, triv.section.eval(s))


def group_part_velocity(system: SystemModel, triv: Trivialization,
                        q: ConfigPoint, qdot_comps, step: float = 1e-6) -> np.ndarray:
    """Coordinate rate of the group part along a tangent vector."""
    qdot_comps = np.asarray(qdot_comps, dtype=float)
    if triv.group_part_velocity is not None:
        return np.asarray(triv.group_part_velocity(q, qdot_comps), dtype=float)
    from .geometry import flow_point
    gp = triv.group_part(flow_point(system, q, qdot_comps, step)).data
    gm = triv.group_part(flow_point(system, q, qdot_comps, -step)).data
    diff = gp - gm
    for i, wrapit in enumerate(_angle_mask(system.group_kind)):
        if wrapit:
            diff[i] = wrap_angle(diff[i])
    return diff / (2.0 * step)


def _angle_mask(kind):
    from .model import GROUP_ANGLE_IDX
    mask = [False] * GROUP_DIM[kind]
    for i in GROUP_ANGLE_IDX[kind]:
        mask[i] = True
    return mask


def velocity_split(system: SystemModel, triv: Trivialization, q: ConfigPoint,
                   qdot: TangentVec) -> tuple:
    """Split qdot into the spatial group velocity and the shape velocity,
    q̇ = xi^a V_a + ṡ^α H_α for the canonical flat connection of `triv`."""
    s = system.projection(q)
    triv.section.require_contains(s)
    g = triv.group_part(q)
    gdot = group_part_velocity(system, triv, q, qdot.comps)
    xi = spatial_velocity(system.group_kind, g, gdot)
    sdot = np.asarray(system.projection_tangent(q, qdot.comps), dtype=float)
    return LieAlgebraVec(system.group_kind, xi), sdot


def horizontal_lift(system: SystemModel, triv: Trivialization, q: ConfigPoint,
                    sdot) -> TangentVec:
    """Horizontal lift of a shape velocity through the canonical flat
    connection: the pushforward by Phi_{group_part(q)} of the section tangent."""
    s = system.projection(q)
    triv.section.require_contains(s)
    g = triv.group_part(q)
    tsig = triv.section.tangent(s, np.asarray(sdot, dtype=float))
    return TangentVec(q, act_tangent(system, g, tsig))


def shape_tangent_basis(system: SystemModel, s: ShapePoint) -> np.ndarray:
    """Deterministic orthonormal basis of the shape tangent space.

    Circle shapes: the unit rate (a (1,1) matrix).  Sphere shapes: two
    orthonormal ambient vectors perpendicular to s, columns of a (3,2) array.
    """
    if system.shape_dim == 1 and s.coords.shape[0] == 1:
        return np.array([[1.0]])
    sv = s.coords
    k = int(np.argmin(np.abs(sv)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = np.cross(sv, e)
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(sv, t1)
    return np.stack([t1, t2], axis=1)


def group_distance(a: GroupElement, b: GroupElement) -> float:
    """Componentwise distance: Euclidean on translation parts, angular
    distance on circle parts."""
    if a.kind != b.kind:
        raise ModelError("cannot compare elements of different groups")
    diff = a.data - b.data
    for i, wrapit in enumerate(_angle_mask(a.kind)):
        if wrapit:
            diff[i] = wrap_angle(diff[i])
    return float(np.linalg.norm(diff))
