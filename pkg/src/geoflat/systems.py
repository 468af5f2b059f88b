"""Built-in system models: planar rocket, planar aerial manipulator, and
quadrotor, each with its symmetry action, bundle projection, orthogonal
section(s), closed-form flat-output map, and reduced feasibility constraint.

Model files are JSON: {"system": "rocket"|"manipulator"|"quadrotor",
"params": {...}} with an optional "section_scale" knob that scales the
rocket section offset (useful for demonstrating orthogonality failure).
"""

import json
import math

import numpy as np

from .bundle import rot2
from .geometry import body_connection_tensor
from .model import (FRAME_BODY, FRAME_COORDINATE, R2, R3XS1, SE2, Atlas,
                    Chart, ConfigPoint, GroupElement, MetricField, ModelError,
                    SectionMap, ShapePoint, SystemModel, Trivialization,
                    SHAPE_CIRCLE, SHAPE_SPHERE)
from .so3 import cross3, rot_z, vee

GRAVITY_DEFAULT = 9.81


def _require_positive(**params):
    for name, value in params.items():
        if not np.isfinite(value) or value <= 0:
            raise ModelError(f"parameter {name} must be positive, got {value!r}")


def _unit2(a):
    return np.array([np.cos(a), np.sin(a)])


def _unit2_perp(a):
    return np.array([-np.sin(a), np.cos(a)])


# ---------------------------------------------------------------------------
# planar rocket
# ---------------------------------------------------------------------------

def make_rocket(m=1.0, J=0.2, r=0.5, g_grav=GRAVITY_DEFAULT,
                section_scale=1.0) -> SystemModel:
    """Planar rocket (ducted fan) on SE(2) with translational symmetry.

    Coordinates (x1, x2, theta): center-of-mass position and body angle.
    Controls: a force along the body axis with moment arm r, and a force
    perpendicular to it.  The orthogonal section places the center of
    oscillation at the origin, so the group variables of its trivialization
    are the center-of-oscillation coordinates.
    """
    _require_positive(m=m, J=J, r=r, g_grav=g_grav)
    chart = Chart("rocket_xytheta", 3, FRAME_COORDINATE, (False, False, True))
    M = np.diag([m, m, J])
    dM = np.zeros((3, 3, 3))
    offset = section_scale * J / (m * r)

    def metric(q):
        return M

    def potential(q):
        return m * g_grav * q.coords[1]

    def potential_diff(q):
        return np.array([0.0, m * g_grav, 0.0])

    def control(q):
        th = q.coords[2]
        return np.array([[np.cos(th), -np.sin(th)],
                         [np.sin(th), np.cos(th)],
                         [r, 0.0]])

    def action(g, q):
        return ConfigPoint(chart, np.array([q.coords[0] + g.data[0],
                                            q.coords[1] + g.data[1],
                                            q.coords[2]]))

    def action_tangent(g, comps):
        return np.array(comps, dtype=float)

    def generator(xi, q):
        return np.array([xi[0], xi[1], 0.0])

    def projection(q):
        return ShapePoint(SHAPE_CIRCLE, [q.coords[2]])

    def projection_tangent(q, comps):
        return np.array([comps[2]])

    def section_eval(s):
        th = float(s.coords[0])
        return ConfigPoint(chart, np.array([offset * np.sin(th),
                                            -offset * np.cos(th), th]))

    def section_tangent(s, sdot):
        th = float(s.coords[0])
        rate = float(np.asarray(sdot).reshape(-1)[0])
        return rate * np.array([offset * np.cos(th), offset * np.sin(th), 1.0])

    def group_part(q):
        x1, x2, th = q.coords
        return GroupElement(R2, np.array([x1 - offset * np.sin(th),
                                          x2 + offset * np.cos(th)]))

    def group_part_velocity(q, comps):
        th = q.coords[2]
        return np.array([comps[0] - offset * np.cos(th) * comps[2],
                         comps[1] - offset * np.sin(th) * comps[2]])

    def uq_display(q):
        th = q.coords[2]
        return np.array([[-r * np.cos(th)], [-r * np.sin(th)], [1.0]])

    def implicit_fast(s_coords, g, xi, xidot):
        th = float(s_coords[0])
        return [-m * r * (math.cos(th) * xidot[0]
                          + math.sin(th) * (xidot[1] + g_grav))]

    def sample_config(rng):
        return ConfigPoint(chart, np.array([rng.normal(0, 2.0), rng.normal(0, 2.0),
                                            rng.uniform(-np.pi, np.pi)]))

    section = SectionMap("center_of_oscillation", section_eval, section_tangent)
    triv = Trivialization("rocket_flat", section, group_part,
                          group_part_velocity, implicit_fast)
    atlas = Atlas((triv,), lambda s, idx: 0, 0.0, (lambda s: 0.0,))
    return SystemModel(
        name="rocket", chart=chart,
        metric=MetricField(metric, lambda q: dM),
        potential=potential, potential_differential=potential_diff,
        control_codistribution=control, group_kind=R2,
        action=action, action_tangent=action_tangent, generator=generator,
        projection=projection, projection_tangent=projection_tangent,
        shape_dim=1, shape_chart=SHAPE_CIRCLE, control_rank=2,
        sections=(section,), trivializations=(triv,),
        params={"m": m, "J": J, "r": r, "g_grav": g_grav},
        sample_config=sample_config, uq_display=uq_display, atlas=atlas,
        constant_metric=True)


# ---------------------------------------------------------------------------
# planar aerial manipulator
# ---------------------------------------------------------------------------

def make_manipulator(m_g=1.0, m_q=0.3, l_g=0.2, l_q=0.4,
                     g_grav=GRAVITY_DEFAULT) -> SystemModel:
    """Planar aerial manipulator on SE(2) x T^1 with SE(2) symmetry.

    Coordinates (x1, x2, theta, phi): end-effector pose and joint angle; the
    vehicle attitude is phi + theta.  Two rigid bodies: a uniform gripper rod
    of mass m_g and length l_g whose tip is the end-effector point, and a
    vehicle of mass m_q whose center of mass sits at eccentricity l_q from
    the joint along the vehicle axis.  Controls: thrust along the vehicle
    axis plus torques on theta and phi.
    """
    _require_positive(m_g=m_g, m_q=m_q, l_g=l_g, l_q=l_q, g_grav=g_grav)
    chart = Chart("manipulator_xytp", 4, FRAME_COORDINATE,
                  (False, False, True, True))
    c1 = l_g * (m_g + 2.0 * m_q)
    c2 = l_q * m_q
    c3 = m_g + m_q
    c4 = -l_q * m_q / (m_g + m_q)
    I_rod = m_g * l_g**2 / 12.0
    I_veh = 0.5 * m_q * l_q**2

    def metric(q):
        th, ph = q.coords[2], q.coords[3]
        ps = th + ph
        u, w = _unit2_perp(th), _unit2_perp(ps)
        M = np.zeros((4, 4))
        M[0, 0] = M[1, 1] = c3
        mxth = -(c1 / 2.0) * u - c2 * w
        mxph = -c2 * w
        M[0:2, 2] = mxth
        M[2, 0:2] = mxth
        M[0:2, 3] = mxph
        M[3, 0:2] = mxph
        M[2, 2] = (m_q * (l_g**2 + l_q**2 + 2.0 * l_g * l_q * np.cos(ph))
                   + m_g * l_g**2 / 4.0 + I_rod + I_veh)
        M[2, 3] = M[3, 2] = m_q * (l_q**2 + l_g * l_q * np.cos(ph)) + I_veh
        M[3, 3] = m_q * l_q**2 + I_veh
        return M

    def metric_partials(q):
        th, ph = q.coords[2], q.coords[3]
        ps = th + ph
        du, dw = -_unit2(th), -_unit2(ps)
        dM = np.zeros((4, 4, 4))
        dth = np.zeros((4, 4))
        v = -(c1 / 2.0) * du - c2 * dw
        dth[0:2, 2] = v
        dth[2, 0:2] = v
        dth[0:2, 3] = -c2 * dw
        dth[3, 0:2] = -c2 * dw
        dM[:, :, 2] = dth
        dph = np.zeros((4, 4))
        v = -c2 * dw
        dph[0:2, 2] = v
        dph[2, 0:2] = v
        dph[0:2, 3] = v
        dph[3, 0:2] = v
        dph[2, 2] = -2.0 * m_q * l_g * l_q * np.sin(ph)
        dph[2, 3] = dph[3, 2] = -m_q * l_g * l_q * np.sin(ph)
        dM[:, :, 3] = dph
        return dM

    def potential(q):
        x2, th, ph = q.coords[1], q.coords[2], q.coords[3]
        return g_grav * (c3 * x2 - (c1 / 2.0) * np.sin(th) - c2 * np.sin(th + ph))

    def potential_diff(q):
        th, ph = q.coords[2], q.coords[3]
        ps = th + ph
        return g_grav * np.array([0.0, c3,
                                  -(c1 / 2.0) * np.cos(th) - c2 * np.cos(ps),
                                  -c2 * np.cos(ps)])

    def control(q):
        ps = q.coords[2] + q.coords[3]
        return np.array([[np.cos(ps), 0.0, 0.0],
                         [np.sin(ps), 0.0, 0.0],
                         [0.0, 1.0, 0.0],
                         [0.0, 0.0, 1.0]])

    def action(g, q):
        xy = rot2(g.data[2]) @ q.coords[0:2] + g.data[0:2]
        return ConfigPoint(chart, np.array([xy[0], xy[1],
                                            q.coords[2] + g.data[2],
                                            q.coords[3]]))

    def action_tangent(g, comps):
        out = np.array(comps, dtype=float)
        out[0:2] = rot2(g.data[2]) @ out[0:2]
        return out

    def generator(xi, q):
        return np.array([xi[0] - xi[2] * q.coords[1],
                         xi[1] + xi[2] * q.coords[0],
                         xi[2], 0.0])

    def projection(q):
        return ShapePoint(SHAPE_CIRCLE, [q.coords[3]])

    def projection_tangent(q, comps):
        return np.array([comps[3]])

    def section_eval(s):
        ph = float(s.coords[0])
        return ConfigPoint(chart, np.array([(c2 / c3) * np.cos(ph),
                                            (c2 / c3) * np.sin(ph), 0.0, ph]))

    def section_tangent(s, sdot):
        ph = float(s.coords[0])
        rate = float(np.asarray(sdot).reshape(-1)[0])
        return rate * np.array([-(c2 / c3) * np.sin(ph),
                                (c2 / c3) * np.cos(ph), 0.0, 1.0])

    def group_part(q):
        x1, x2, th, ph = q.coords
        ps = th + ph
        return GroupElement(SE2, np.array([x1 + c4 * np.cos(ps),
                                           x2 + c4 * np.sin(ps), th]))

    def group_part_velocity(q, comps):
        ps = q.coords[2] + q.coords[3]
        psdot = comps[2] + comps[3]
        return np.array([comps[0] - c4 * np.sin(ps) * psdot,
                         comps[1] + c4 * np.cos(ps) * psdot,
                         comps[2]])

    def uq_display(q):
        ps = q.coords[2] + q.coords[3]
        return np.array([[-np.sin(ps)], [np.cos(ps)], [0.0], [0.0]])

    k_off = c1 / (2.0 * c3)

    def implicit_fast(s_coords, g, xi, xidot):
        # momentum balance along the unactuated direction; the system center
        # of mass is a function of the group variables alone
        ph = float(s_coords[0])
        gd = g.data
        g1, g2, g3 = gd[0], gd[1], gd[2]
        xi1, xi2, xi3 = xi[0], xi[1], xi[2]
        xd1, xd2, xd3 = xidot[0], xidot[1], xidot[2]
        xi3sq = xi3 * xi3
        gdd1 = xd1 - xd3 * g2 - xi3 * xi2 - xi3sq * g1
        gdd2 = xd2 + xd3 * g1 + xi3 * xi1 - xi3sq * g2
        cg, sg = math.cos(g3), math.sin(g3)
        acc1 = gdd1 - k_off * (-xd3 * sg - xi3sq * cg)
        acc2 = gdd2 - k_off * (xd3 * cg - xi3sq * sg)
        a = g3 + ph
        return [c3 * (-math.sin(a) * acc1 + math.cos(a) * (acc2 + g_grav))]

    def sample_config(rng):
        return ConfigPoint(chart, np.array([rng.normal(0, 2.0), rng.normal(0, 2.0),
                                            rng.uniform(-np.pi, np.pi),
                                            rng.uniform(-np.pi, np.pi)]))

    section = SectionMap("end_effector_circle", section_eval, section_tangent)
    triv = Trivialization("manipulator_flat", section, group_part,
                          group_part_velocity, implicit_fast)
    atlas = Atlas((triv,), lambda s, idx: 0, 0.0, (lambda s: 0.0,))
    return SystemModel(
        name="manipulator", chart=chart,
        metric=MetricField(metric, metric_partials),
        potential=potential, potential_differential=potential_diff,
        control_codistribution=control, group_kind=SE2,
        action=action, action_tangent=action_tangent, generator=generator,
        projection=projection, projection_tangent=projection_tangent,
        shape_dim=1, shape_chart=SHAPE_CIRCLE, control_rank=3,
        sections=(section,), trivializations=(triv,),
        params={"m_g": m_g, "m_q": m_q, "l_g": l_g, "l_q": l_q,
                "g_grav": g_grav},
        sample_config=sample_config, uq_display=uq_display, atlas=atlas)


# ---------------------------------------------------------------------------
# quadrotor
# ---------------------------------------------------------------------------

def _sigma_north(s):
    s1, s2, s3 = s
    a = 1.0 / (1.0 + s3)
    return np.array([
        [1.0 - s1 * s1 * a, -s1 * s2 * a, s1],
        [-s1 * s2 * a, 1.0 - s2 * s2 * a, s2],
        [-s1, -s2, s3]])


def _sigma_north_partials(s):
    s1, s2, s3 = s
    a = 1.0 / (1.0 + s3)
    d1 = np.array([[-2 * s1 * a, -s2 * a, 1.0],
                   [-s2 * a, 0.0, 0.0],
                   [-1.0, 0.0, 0.0]])
    d2 = np.array([[0.0, -s1 * a, 0.0],
                   [-s1 * a, -2 * s2 * a, 1.0],
                   [0.0, -1.0, 0.0]])
    d3 = np.array([[s1 * s1 * a * a, s1 * s2 * a * a, 0.0],
                   [s1 * s2 * a * a, s2 * s2 * a * a, 0.0],
                   [0.0, 0.0, 1.0]])
    return d1, d2, d3


def _sigma_south(s):
    s1, s2, s3 = s
    b = 1.0 / (s3 - 1.0)
    return np.array([
        [1.0 + s1 * s1 * b, -s1 * s2 * b, s1],
        [s1 * s2 * b, -1.0 - s2 * s2 * b, s2],
        [s1, -s2, s3]])


def _sigma_south_partials(s):
    s1, s2, s3 = s
    b = 1.0 / (s3 - 1.0)
    d1 = np.array([[2 * s1 * b, -s2 * b, 1.0],
                   [s2 * b, 0.0, 0.0],
                   [1.0, 0.0, 0.0]])
    d2 = np.array([[0.0, -s1 * b, 0.0],
                   [s1 * b, -2 * s2 * b, 1.0],
                   [0.0, -1.0, 0.0]])
    d3 = np.array([[-s1 * s1 * b * b, s1 * s2 * b * b, 0.0],
                   [-s1 * s2 * b * b, s2 * s2 * b * b, 0.0],
                   [0.0, 0.0, 1.0]])
    return d1, d2, d3


def make_quadrotor(m=1.0, J_xx=0.01, J_zz=0.02,
                   g_grav=GRAVITY_DEFAULT) -> SystemModel:
    """Quadrotor on SE(3) with translation + body-yaw symmetry.

    The configuration stores (x, R); tangent components are body-frame
    (v, omega).  The rotational inertia is symmetric about the thrust axis
    (J_yy = J_xx).  The shape is the thrust-axis direction R e3 on the
    sphere; two local sections cover it minus one pole each, and the atlas
    switches between them with a hysteresis band.
    """
    _require_positive(m=m, J_xx=J_xx, J_zz=J_zz, g_grav=g_grav)
    chart = Chart("quadrotor_se3", 12, FRAME_BODY, (False,) * 12)
    M6 = np.diag([m, m, m, J_xx, J_xx, J_zz])
    Jmat = np.diag([J_xx, J_xx, J_zz])
    e3 = np.array([0.0, 0.0, 1.0])

    def metric(q):
        return M6

    def potential(q):
        return m * g_grav * q.coords[2]

    def potential_diff(q):
        R = q.rotation
        return np.concatenate([m * g_grav * (R.T @ e3), np.zeros(3)])

    F6 = np.zeros((6, 4))
    F6[2, 0] = 1.0
    F6[3:6, 1:4] = np.eye(3)

    def control(q):
        return F6

    def action(g, q):
        x = q.position + g.data[0:3]
        R = q.rotation @ rot_z(g.data[3])
        return ConfigPoint(chart, np.concatenate([x, R.reshape(-1)]))

    def action_tangent(g, comps):
        Rz = rot_z(g.data[3])
        out = np.empty(6)
        out[0:3] = Rz.T @ comps[0:3]
        out[3:6] = Rz.T @ comps[3:6]
        return out

    def generator(xi, q):
        R = q.rotation
        return np.concatenate([R.T @ xi[0:3], xi[3] * e3])

    def projection(q):
        return ShapePoint(SHAPE_SPHERE, q.rotation[:, 2])

    def projection_tangent(q, comps):
        R = q.rotation
        omega_world = R @ comps[3:6]
        return cross3(omega_world, R[:, 2])

    def make_section(name, sigma, sigma_partials, pole):
        def eval_(s):
            R = sigma(s.coords)
            return ConfigPoint(chart, np.concatenate([np.zeros(3), R.reshape(-1)]))

        def tangent(s, sdot):
            sdot = np.asarray(sdot, dtype=float).reshape(-1)
            d1, d2, d3 = sigma_partials(s.coords)
            dR = d1 * sdot[0] + d2 * sdot[1] + d3 * sdot[2]
            R = sigma(s.coords)
            omega = vee(R.T @ dR)
            return np.concatenate([np.zeros(3), omega])

        return SectionMap(name, eval_, tangent, excluded_pole=np.asarray(pole))

    section_n = make_section("north", _sigma_north, _sigma_north_partials,
                             [0.0, 0.0, -1.0])
    section_s = make_section("south", _sigma_south, _sigma_south_partials,
                             [0.0, 0.0, 1.0])

    def make_group_part(sigma, sigma_partials, section):
        def group_part(q):
            s = projection(q)
            section.require_contains(s)
            A = sigma(s.coords).T @ q.rotation
            yaw = np.arctan2(A[1, 0], A[0, 0])
            return GroupElement(R3XS1, np.concatenate([q.position, [yaw]]))

        def group_part_velocity(q, comps):
            R = q.rotation
            v, omega = comps[0:3], comps[3:6]
            s = R[:, 2]
            sdot = cross3(R @ omega, s)
            d1, d2, d3 = sigma_partials(s)
            dR = d1 * sdot[0] + d2 * sdot[1] + d3 * sdot[2]
            eta3 = vee(sigma(s).T @ dR)[2]
            return np.concatenate([R @ v, [omega[2] - eta3]])

        return group_part, group_part_velocity

    gp_n, gpv_n = make_group_part(_sigma_north, _sigma_north_partials, section_n)
    gp_s, gpv_s = make_group_part(_sigma_south, _sigma_south_partials, section_s)

    def make_implicit_fast(sigma):
        def implicit_fast(s_coords, g, xi, xidot):
            spec = np.array([float(xidot[0]), float(xidot[1]),
                             float(xidot[2]) + g_grav])
            w = sigma(s_coords).T @ spec
            c4, s4 = math.cos(float(g.data[3])), math.sin(float(g.data[3]))
            return m * np.array([c4 * w[0] + s4 * w[1],
                                 -s4 * w[0] + c4 * w[1]])

        return implicit_fast

    triv_n = Trivialization("north_flat", section_n, gp_n, gpv_n,
                            make_implicit_fast(_sigma_north))
    triv_s = Trivialization("south_flat", section_s, gp_s, gpv_s,
                            make_implicit_fast(_sigma_south))

    hysteresis = 0.6

    def switch_rule(s, active):
        s3 = float(s.coords[2])
        if active == 0 and s3 < -hysteresis:
            return 1
        if active == 1 and s3 > hysteresis:
            return 0
        return active

    def south_offset(s):
        # sigma_south(s) rot_z(offset) == sigma_north(s) away from both poles
        return np.pi - 2.0 * np.arctan2(s.coords[1], s.coords[0])

    atlas = Atlas((triv_n, triv_s), switch_rule, hysteresis,
                  (lambda s: 0.0, south_offset))

    def uq_display(q):
        out = np.zeros((6, 2))
        out[0, 0] = 1.0
        out[1, 1] = 1.0
        return out

    def shape_solver_closed(g, xi, xidot):
        specific = np.asarray(xidot, dtype=float)[0:3] + g_grav * e3
        n = np.linalg.norm(specific)
        if n < 1e-8 * max(1.0, g_grav):
            return None  # free fall: direction undefined
        return specific / n

    def sample_config(rng):
        x = rng.normal(0, 2.0, size=3)
        A = rng.normal(size=(3, 3))
        Q, _ = np.linalg.qr(A)
        if np.linalg.det(Q) < 0:
            Q[:, 0] = -Q[:, 0]
        return ConfigPoint(chart, np.concatenate([x, Q.reshape(-1)]))

    return SystemModel(
        name="quadrotor", chart=chart,
        metric=MetricField(metric, None),
        potential=potential, potential_differential=potential_diff,
        control_codistribution=control, group_kind=R3XS1,
        action=action, action_tangent=action_tangent, generator=generator,
        projection=projection, projection_tangent=projection_tangent,
        shape_dim=2, shape_chart=SHAPE_SPHERE, control_rank=4,
        sections=(section_n, section_s), trivializations=(triv_n, triv_s),
        params={"m": m, "J_xx": J_xx, "J_zz": J_zz, "g_grav": g_grav},
        sample_config=sample_config, uq_display=uq_display,
        body_connection=body_connection_tensor(M6),
        shape_solver_closed=shape_solver_closed, atlas=atlas,
        constant_metric=True)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

_FACTORIES = {
    "rocket": (make_rocket, {"m", "J", "r", "g_grav"}),
    "manipulator": (make_manipulator, {"m_g", "m_q", "l_g", "l_q", "g_grav"}),
    "quadrotor": (make_quadrotor, {"m", "J_xx", "J_zz", "g_grav"}),
}


def build_system(name: str, params: dict = None, section_scale: float = 1.0,
                 control_columns=None) -> SystemModel:
    if name not in _FACTORIES:
        raise ModelError(f"unknown system {name!r}; expected one of "
                         f"{sorted(_FACTORIES)}")
    factory, allowed = _FACTORIES[name]
    params = dict(params or {})
    unknown = set(params) - allowed
    if unknown:
        raise ModelError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    for key, value in params.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ModelError(f"parameter {key} must be a number")
    if name == "rocket":
        system = factory(section_scale=section_scale, **params)
    else:
        if section_scale != 1.0:
            raise ModelError("section_scale is only supported for the rocket model")
        system = factory(**params)
    if control_columns is not None:
        system = _restrict_control(system, control_columns)
    return system


def _restrict_control(system: SystemModel, columns) -> SystemModel:
    """Keep only the named control-codistribution columns.

    The closed-form constraint evaluators are tied to the full actuator set,
    so the restricted model falls back to the assembled machinery everywhere.
    """
    import dataclasses
    try:
        cols = [int(c) for c in columns]
    except (TypeError, ValueError) as exc:
        raise ModelError("control_columns must be a list of indices") from exc
    if not cols or len(set(cols)) != len(cols) \
            or any(c < 0 or c >= system.control_rank for c in cols):
        raise ModelError(
            f"control_columns must be distinct indices below "
            f"{system.control_rank}")
    base = system.control_codistribution

    def restricted(q):
        return np.asarray(base(q))[:, cols]

    trivs = tuple(dataclasses.replace(t, implicit_fast=None)
                  for t in system.trivializations)
    atlas = system.atlas
    if atlas is not None:
        atlas = dataclasses.replace(atlas, trivializations=trivs)
    return dataclasses.replace(
        system, control_codistribution=restricted, control_rank=len(cols),
        uq_display=None, shape_solver_closed=None, trivializations=trivs,
        atlas=atlas)


def load_model(path) -> SystemModel:
    """Load a SystemModel from a JSON model file; unknown keys are rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError("model file must hold a JSON object")
    unknown = set(doc) - {"system", "params", "section_scale",
                          "control_columns"}
    if unknown:
        raise ModelError(f"unknown model-file key(s): {sorted(unknown)}")
    if "system" not in doc:
        raise ModelError('model file must name a "system"')
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ModelError('"params" must be an object')
    return build_system(doc["system"], params,
                        section_scale=float(doc.get("section_scale", 1.0)),
                        control_columns=doc.get("control_columns"))
