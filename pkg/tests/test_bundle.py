import numpy as np
import pytest

import geoflat as gf
from geoflat import bundle
from conftest import random_group


def test_rocket_action_translates(rocket):
    q = rocket.point([0.0, 0.0, np.pi / 4])
    g = gf.GroupElement("R2", [1.0, 2.0])
    out = gf.act(rocket, g, q)
    np.testing.assert_allclose(out.coords, [1.0, 2.0, np.pi / 4], atol=1e-15)


def test_identity_action(all_systems):
    rng = np.random.default_rng(0)
    for system in all_systems:
        q = system.sample_config(rng)
        e = bundle.identity(system.group_kind)
        np.testing.assert_allclose(gf.act(system, e, q).coords, q.coords,
                                   atol=1e-15)


def test_action_composition(all_systems):
    rng = np.random.default_rng(1)
    for system in all_systems:
        for _ in range(20):
            q = system.sample_config(rng)
            a, b = random_group(system, rng), random_group(system, rng)
            lhs = gf.act(system, gf.compose(a, b), q)
            rhs = gf.act(system, a, gf.act(system, b, q))
            np.testing.assert_allclose(lhs.coords, rhs.coords, atol=1e-12)


def test_quadrotor_half_yaw_twice(quadrotor):
    rng = np.random.default_rng(2)
    q = quadrotor.sample_config(rng)
    half = gf.GroupElement("R3xS1", [0.0, 0.0, 0.0, np.pi / 2])
    full = gf.GroupElement("R3xS1", [0.0, 0.0, 0.0, np.pi])
    twice = gf.act(quadrotor, half, gf.act(quadrotor, half, q))
    once = gf.act(quadrotor, full, q)
    np.testing.assert_allclose(twice.coords, once.coords, atol=1e-12)


def test_group_inverse(all_systems):
    rng = np.random.default_rng(3)
    for system in all_systems:
        for _ in range(10):
            a = random_group(system, rng)
            e = gf.compose(a, bundle.inverse(a))
            np.testing.assert_allclose(e.data, 0.0, atol=1e-12)


def test_rocket_projection(rocket):
    q = rocket.point([5.0, -3.0, 0.7])
    np.testing.assert_allclose(gf.project(rocket, q).coords, [0.7], atol=1e-15)


def test_quadrotor_projection_identity(quadrotor):
    q = quadrotor.point(np.concatenate([np.zeros(3), np.eye(3).reshape(-1)]))
    np.testing.assert_allclose(gf.project(quadrotor, q).coords, [0, 0, 1],
                               atol=1e-15)


def test_projection_invariance(all_systems):
    rng = np.random.default_rng(4)
    for system in all_systems:
        for _ in range(100):
            q = system.sample_config(rng)
            g = random_group(system, rng)
            s1 = gf.project(system, q).coords
            s2 = gf.project(system, gf.act(system, g, q)).coords
            np.testing.assert_allclose(s1, s2, atol=1e-12)


def test_trivialize_rocket_origin(rocket):
    s, g = gf.trivialize(rocket, rocket.trivializations[0],
                         rocket.point([0.0, 0.0, 0.0]))
    offset = rocket.params["J"] / (rocket.params["m"] * rocket.params["r"])
    np.testing.assert_allclose(s.coords, [0.0], atol=1e-15)
    np.testing.assert_allclose(g.data, [0.0, offset], atol=1e-15)


def test_trivialize_manipulator_origin(manipulator):
    s, g = gf.trivialize(manipulator, manipulator.trivializations[0],
                         manipulator.point([0.0, 0.0, 0.0, 0.0]))
    p = manipulator.params
    c4 = -p["l_q"] * p["m_q"] / (p["m_g"] + p["m_q"])
    np.testing.assert_allclose(g.data, [c4, 0.0, 0.0], atol=1e-15)


def test_trivialize_untrivialize_roundtrip(all_systems):
    rng = np.random.default_rng(5)
    for system in all_systems:
        triv = system.trivializations[0]
        count = 0
        while count < 1000:
            q = system.sample_config(rng)
            s = gf.project(system, q)
            if not triv.section.contains(s, margin=1e-3):
                continue
            count += 1
            s2, g = gf.trivialize(system, triv, q)
            q2 = gf.untrivialize(system, triv, s2, g)
            if system.chart.frame_kind == "body_frame":
                assert gf.state_distance(system, q, q2) < 1e-10
            else:
                np.testing.assert_allclose(q2.coords, q.coords, atol=1e-10)


def test_group_part_equivariance(all_systems):
    rng = np.random.default_rng(6)
    for system in all_systems:
        triv = system.trivializations[0]
        count = 0
        while count < 1000:
            q = system.sample_config(rng)
            g = random_group(system, rng)
            s_here = gf.project(system, q)
            s_moved = gf.project(system, gf.act(system, g, q))
            if not (triv.section.contains(s_here, margin=1e-3)
                    and triv.section.contains(s_moved, margin=1e-3)):
                continue
            count += 1
            lhs = triv.group_part(gf.act(system, g, q))
            rhs = gf.compose(g, triv.group_part(q))
            assert gf.group_distance(lhs, rhs) < 1e-10


def test_velocity_split_rocket_translation(rocket):
    triv = rocket.trivializations[0]
    q = rocket.point([0.2, -0.4, 0.9])
    xi, sdot = gf.velocity_split(rocket, triv, q, rocket.tangent(q, [1, 0, 0]))
    np.testing.assert_allclose(xi.comps, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(sdot, [0.0], atol=1e-12)


def test_velocity_split_rocket_horizontal(rocket):
    m, J, r = (rocket.params[k] for k in ("m", "J", "r"))
    triv = rocket.trivializations[0]
    th = 0.6
    q = rocket.point([1.0, 2.0, th])
    h = [J * np.cos(th), J * np.sin(th), m * r]
    xi, sdot = gf.velocity_split(rocket, triv, q, rocket.tangent(q, h))
    np.testing.assert_allclose(xi.comps, [0.0, 0.0], atol=1e-10)
    np.testing.assert_allclose(sdot, [m * r], atol=1e-12)


def test_velocity_split_quadrotor_yaw(quadrotor):
    rng = np.random.default_rng(7)
    triv = quadrotor.trivializations[0]
    w = 0.7
    for _ in range(5):
        q = quadrotor.sample_config(rng)
        if not triv.section.contains(gf.project(quadrotor, q), margin=1e-2):
            continue
        qdot = quadrotor.tangent(q, [0, 0, 0, 0, 0, w])
        xi, sdot = gf.velocity_split(quadrotor, triv, q, qdot)
        np.testing.assert_allclose(sdot, np.zeros(3), atol=1e-12)
        assert abs(xi.comps[3] - w) < 1e-10


def test_velocity_split_reconstructs_velocity(all_systems):
    # qdot = generator(xi) + horizontal lift of sdot
    rng = np.random.default_rng(8)
    for system in all_systems:
        triv = system.trivializations[0]
        count = 0
        while count < 50:
            q = system.sample_config(rng)
            if not triv.section.contains(gf.project(system, q), margin=1e-2):
                continue
            count += 1
            v = rng.normal(size=system.vel_dim)
            xi, sdot = gf.velocity_split(system, triv, q, system.tangent(q, v))
            rebuilt = (gf.infinitesimal_generator(system, xi, q).comps
                       + gf.horizontal_lift(system, triv, q, sdot).comps)
            np.testing.assert_allclose(rebuilt, v, atol=1e-9)


def test_group_part_velocity_matches_fd(all_systems):
    import dataclasses
    rng = np.random.default_rng(9)
    for system in all_systems:
        triv = system.trivializations[0]
        fd_triv = dataclasses.replace(triv, group_part_velocity=None)
        count = 0
        while count < 20:
            q = system.sample_config(rng)
            if not triv.section.contains(gf.project(system, q), margin=1e-2):
                continue
            count += 1
            v = rng.normal(size=system.vel_dim)
            analytic = bundle.group_part_velocity(system, triv, q, v)
            fd = bundle.group_part_velocity(system, fd_triv, q, v)
            np.testing.assert_allclose(analytic, fd, atol=1e-6)


def test_generator_rocket_translation(rocket):
    rng = np.random.default_rng(10)
    xi = gf.LieAlgebraVec("R2", [1.0, 0.0])
    for _ in range(5):
        q = rocket.sample_config(rng)
        np.testing.assert_allclose(
            gf.infinitesimal_generator(rocket, xi, q).comps, [1, 0, 0],
            atol=1e-15)


def test_generator_manipulator_rotation(manipulator):
    q = manipulator.point([1.3, -0.7, 0.2, 0.5])
    xi = gf.LieAlgebraVec("SE2", [0.0, 0.0, 1.0])
    np.testing.assert_allclose(
        gf.infinitesimal_generator(manipulator, xi, q).comps,
        [0.7, 1.3, 1.0, 0.0], atol=1e-15)


def test_generator_zero(all_systems):
    rng = np.random.default_rng(11)
    for system in all_systems:
        q = system.sample_config(rng)
        xi = gf.LieAlgebraVec(system.group_kind, np.zeros(system.group_dim))
        np.testing.assert_allclose(
            gf.infinitesimal_generator(system, xi, q).comps,
            np.zeros(system.vel_dim), atol=1e-15)


def test_generator_matches_flow_difference(all_systems):
    # (Phi_exp(t xi) q - q) / t -> generator as t -> 0
    rng = np.random.default_rng(12)
    for system in all_systems:
        for _ in range(10):
            q = system.sample_config(rng)
            xi = rng.normal(size=system.group_dim)
            gen = system.generator(xi, q)
            t = 1e-6
            qp = gf.act(system, gf.group_exp(system.group_kind, xi, t), q)
            qm = gf.act(system, gf.group_exp(system.group_kind, xi, -t), q)
            if system.chart.frame_kind == "body_frame":
                from geoflat.so3 import log_so3
                dv = q.rotation.T @ (qp.position - qm.position) / (2 * t)
                dw = log_so3(qm.rotation.T @ qp.rotation) / (2 * t)
                fd = np.concatenate([dv, dw])
            else:
                diff = qp.coords - qm.coords
                mask = np.array(system.chart.wrap_mask, dtype=bool)
                diff[mask] = gf.wrap_angle(diff[mask])
                fd = diff / (2 * t)
            np.testing.assert_allclose(fd, gen, atol=1e-6)


def test_section_property(all_systems):
    rng = np.random.default_rng(13)
    for system in all_systems:
        for section in system.sections:
            count = 0
            while count < 1000:
                if system.shape_chart == "circle":
                    s = gf.ShapePoint("circle", [rng.uniform(-np.pi, np.pi)])
                else:
                    v = rng.normal(size=3)
                    s = gf.ShapePoint("sphere", v / np.linalg.norm(v))
                if not section.contains(s, margin=1e-3):
                    continue
                count += 1
                back = gf.project(system, section.eval(s))
                np.testing.assert_allclose(back.coords, s.coords, atol=1e-10)


def test_horizontal_is_in_group_part_kernel(all_systems):
    # the canonical flat connection satisfies T(group_part)(H) = 0
    rng = np.random.default_rng(14)
    for system in all_systems:
        triv = system.trivializations[0]
        count = 0
        while count < 25:
            q = system.sample_config(rng)
            if not triv.section.contains(gf.project(system, q), margin=1e-2):
                continue
            count += 1
            sdot = rng.normal(size=(1 if system.shape_dim == 1 else 3))
            if system.shape_chart == "sphere":
                s = gf.project(system, q).coords
                sdot = sdot - (sdot @ s) * s
            h = gf.horizontal_lift(system, triv, q, sdot)
            rate = bundle.group_part_velocity(system, triv, q, h.comps)
            assert np.abs(rate).max() < 1e-9 * max(1.0, np.abs(sdot).max())


def test_generators_equivariant_abelian(rocket, quadrotor):
    # for Abelian symmetry the generators commute with the action
    rng = np.random.default_rng(15)
    for system in (rocket, quadrotor):
        for _ in range(50):
            q = system.sample_config(rng)
            g = random_group(system, rng)
            xi = rng.normal(size=system.group_dim)
            pushed = gf.act_tangent(system, g, system.generator(xi, q))
            there = system.generator(xi, gf.act(system, g, q))
            np.testing.assert_allclose(pushed, there, atol=1e-10)


def test_section_tangent_matches_fd(all_systems):
    rng = np.random.default_rng(16)
    from geoflat.flatness import _section_tangent_fd
    for system in all_systems:
        for section in system.sections:
            count = 0
            while count < 20:
                if system.shape_chart == "circle":
                    s = gf.ShapePoint("circle", [rng.uniform(-np.pi, np.pi)])
                    direction = np.array([1.0])
                else:
                    v = rng.normal(size=3)
                    s = gf.ShapePoint("sphere", v / np.linalg.norm(v))
                    if not section.contains(s, margin=0.1):
                        continue
                    t = rng.normal(size=3)
                    t -= (t @ s.coords) * s.coords
                    direction = t / np.linalg.norm(t)
                count += 1
                analytic = section.tangent(s, direction)
                fd = _section_tangent_fd(system, section, s, direction)
                np.testing.assert_allclose(analytic, fd, atol=1e-7)


def test_group_distance_wraps_angles():
    a = gf.GroupElement("SE2", [0.0, 0.0, 3.1])
    b = gf.GroupElement("SE2", [0.0, 0.0, -3.1])
    assert gf.group_distance(a, b) < 0.1


def test_spatial_velocity_roundtrip():
    rng = np.random.default_rng(17)
    for kind in ("R2", "SE2", "R3xS1"):
        for _ in range(10):
            g = gf.GroupElement(kind, rng.normal(size=gf.GroupElement(
                kind, np.zeros(bundle.GROUP_DIM[kind])).dim))
            gdot = rng.normal(size=g.dim)
            gddot = rng.normal(size=g.dim)
            xi = bundle.spatial_velocity(kind, g, gdot)
            np.testing.assert_allclose(
                bundle.coordinate_velocity(kind, g, xi), gdot, atol=1e-13)
            xidot = bundle.spatial_velocity_rate(kind, g, gdot, gddot)
            np.testing.assert_allclose(
                bundle.coordinate_acceleration(kind, g, xi, xidot), gddot,
                atol=1e-13)
