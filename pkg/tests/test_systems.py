import json

import numpy as np
import pytest

import geoflat as gf
from geoflat.geometry import metric_at
from geoflat.systems import build_system, load_model
from conftest import random_group, span_residual


def rocket_uq_column(rocket, th):
    r = rocket.params["r"]
    return np.array([-r * np.cos(th), -r * np.sin(th), 1.0])


def test_rocket_uq_display(rocket):
    q = rocket.point([0.0, 0.0, np.pi / 2])
    got = gf.unactuated_basis(rocket, q).basis
    want = np.array([[0.0], [-rocket.params["r"]], [1.0]])
    assert span_residual(got, want) < 1e-12


def test_rocket_horizontal_display(rocket):
    m, J, r = (rocket.params[k] for k in ("m", "J", "r"))
    triv = rocket.trivializations[0]
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = rocket.sample_config(rng)
        th = q.coords[2]
        h = gf.horizontal_lift(rocket, triv, q, [1.0]).comps
        want = np.array([J * np.cos(th), J * np.sin(th), m * r])
        assert span_residual(h.reshape(-1, 1), want.reshape(-1, 1)) < 1e-10


def test_rocket_dim_condition(rocket):
    assert gf.check_dim_condition(rocket)


def test_manipulator_delta_perp_and_horizontal(manipulator):
    p = manipulator.params
    c1 = p["l_g"] * (p["m_g"] + 2 * p["m_q"])
    c2 = p["l_q"] * p["m_q"]
    c3 = p["m_g"] + p["m_q"]
    rng = np.random.default_rng(1)
    triv = manipulator.trivializations[0]
    for _ in range(50):
        q = manipulator.sample_config(rng)
        th, ph = q.coords[2], q.coords[3]
        ps = th + ph
        col1 = np.array([-c1 * np.sin(th) - 2 * c2 * np.sin(ps),
                         c1 * np.cos(th) + 2 * c2 * np.cos(ps),
                         2 * c3, 0.0])
        col2 = np.array([-c2 * np.sin(ps), c2 * np.cos(ps), 0.0, c3])
        # both columns are metric-orthogonal to the underactuation
        # distribution span{d/dx1, d/dx2}
        M = metric_at(manipulator, q)
        D = np.zeros((4, 2))
        D[0, 0] = D[1, 1] = 1.0
        assert np.abs(D.T @ M @ np.stack([col1, col2], axis=1)).max() < 1e-9
        # displayed horizontal column is the lift of the unit shape rate
        h = gf.horizontal_lift(manipulator, triv, q, [1.0]).comps
        want = np.array([-np.sin(ps), np.cos(ps), 0.0,
                         (p["m_g"] + p["m_q"]) / (p["l_q"] * p["m_q"])])
        assert span_residual(h.reshape(-1, 1), want.reshape(-1, 1)) < 1e-10


def test_manipulator_section_display(manipulator):
    p = manipulator.params
    c = p["l_q"] * p["m_q"] / (p["m_g"] + p["m_q"])
    s = manipulator.shape([0.0])
    q = manipulator.sections[0].eval(s)
    np.testing.assert_allclose(q.coords, [c, 0.0, 0.0, 0.0], atol=1e-15)


def test_manipulator_uq_display(manipulator):
    rng = np.random.default_rng(2)
    for _ in range(20):
        q = manipulator.sample_config(rng)
        ps = q.coords[2] + q.coords[3]
        got = gf.unactuated_basis(manipulator, q).basis
        want = np.array([[-np.sin(ps)], [np.cos(ps)], [0.0], [0.0]])
        assert span_residual(got, want) < 1e-10


def test_quadrotor_sections_displayed_matrices(quadrotor):
    north, south = quadrotor.sections
    # closed-form matrices at reference shapes
    e3 = np.array([0.0, 0.0, 1.0])
    qn = north.eval(gf.ShapePoint("sphere", e3))
    np.testing.assert_allclose(qn.rotation, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(qn.position, np.zeros(3), atol=1e-15)
    qs = south.eval(gf.ShapePoint("sphere", -e3))
    np.testing.assert_allclose(qs.rotation[:, 2], -e3, atol=1e-15)
    np.testing.assert_allclose(qs.position, np.zeros(3), atol=1e-15)
    rng = np.random.default_rng(3)
    for _ in range(200):
        v = rng.normal(size=3)
        s = v / np.linalg.norm(v)
        for section, pole in ((north, [0, 0, -1.0]), (south, [0, 0, 1.0])):
            if np.linalg.norm(s - pole) < 1e-3:
                continue
            R = section.eval(gf.ShapePoint("sphere", s)).rotation
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            np.testing.assert_allclose(R @ np.array([0, 0, 1.0]), s, atol=1e-12)


def test_quadrotor_section_domain_errors(quadrotor):
    north = quadrotor.sections[0]
    with pytest.raises(gf.ChartDomainError):
        north.require_contains(gf.ShapePoint("sphere", [0.0, 0.0, -1.0]))


def test_quadrotor_dim_condition(quadrotor):
    assert gf.check_dim_condition(quadrotor)


def test_rocket_flat_output_formula_sweep(rocket):
    rng = np.random.default_rng(4)
    triv = rocket.trivializations[0]
    for _ in range(200):
        q = rocket.sample_config(rng)
        x1, x2, th = q.coords
        offset = rocket.params["J"] / (rocket.params["m"] * rocket.params["r"])
        y = gf.flat_output(rocket, triv, q)
        np.testing.assert_allclose(
            y.data, [x1 - offset * np.sin(th), x2 + offset * np.cos(th)],
            atol=1e-12)


def test_broken_symmetry(rocket, quadrotor):
    # kinetic energy invariant under the full action while the potential is
    # not invariant under vertical translation
    rng = np.random.default_rng(5)
    for system, lift in ((rocket, [0.0, 1.0]), (quadrotor, [0, 0, 1.0, 0])):
        q = system.sample_config(rng)
        v = rng.normal(size=system.vel_dim)
        g = random_group(system, rng)
        k1 = gf.kinetic_energy(system, q, v)
        k2 = gf.kinetic_energy(system, gf.act(system, g, q),
                               gf.act_tangent(system, g, v))
        assert abs(k1 - k2) < 1e-10 * max(1.0, abs(k1))
        up = gf.GroupElement(system.group_kind, lift)
        p1 = system.potential(q)
        p2 = system.potential(gf.act(system, up, q))
        assert abs(p1 - p2) > 1e-3


def test_rejects_nonpositive_parameters():
    with pytest.raises(gf.ModelError):
        gf.make_rocket(m=-1.0)
    with pytest.raises(gf.ModelError):
        gf.make_manipulator(l_q=0.0)
    with pytest.raises(gf.ModelError):
        gf.make_quadrotor(J_xx=0.0)


def test_metric_spd_at_random_points(all_systems):
    rng = np.random.default_rng(6)
    for system in all_systems:
        for _ in range(100):
            q = system.sample_config(rng)
            M = metric_at(system, q, check=True)
            assert np.linalg.eigvalsh(M)[0] > 0


def test_build_system_rejects_unknown(tmp_path):
    with pytest.raises(gf.ModelError):
        build_system("hovercraft")
    with pytest.raises(gf.ModelError):
        build_system("rocket", {"mass": 1.0})
    with pytest.raises(gf.ModelError):
        build_system("rocket", {"m": "heavy"})


def test_load_model_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"system": "rocket",
                                "params": {"m": 2.0, "J": 0.3}}))
    system = load_model(path)
    assert system.name == "rocket"
    assert system.params["m"] == 2.0
    assert system.params["J"] == 0.3
    assert system.params["r"] == 0.5


def test_load_model_rejects_unknown_keys(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"system": "rocket", "stuff": 1}))
    with pytest.raises(gf.ModelError):
        load_model(path)
    path.write_text("not json")
    with pytest.raises(gf.ModelError):
        load_model(path)


def test_control_columns_restriction():
    system = build_system("rocket", control_columns=[0])
    assert system.control_rank == 1
    assert not gf.check_dim_condition(system)


def test_quadrotor_atlas_switch_rule(quadrotor):
    atlas = quadrotor.atlas
    north_shape = gf.ShapePoint("sphere", [0.0, 0.0, 1.0])
    south_shape = gf.ShapePoint("sphere", [0.0, 0.0, -1.0])
    equator = gf.ShapePoint("sphere", [1.0, 0.0, 0.0])
    assert atlas.switch_rule(north_shape, 0) == 0
    assert atlas.switch_rule(equator, 0) == 0      # inside the band: hold
    assert atlas.switch_rule(south_shape, 0) == 1  # leave the band: switch
    assert atlas.switch_rule(equator, 1) == 1
    assert atlas.switch_rule(north_shape, 1) == 0


def test_quadrotor_chart_transition_angle(quadrotor):
    # sigma_south(s) rot_z(offset(s)) must equal sigma_north(s) away from
    # the poles, so the two charts describe the same configuration
    from geoflat.so3 import rot_z
    atlas = quadrotor.atlas
    north, south = quadrotor.sections
    rng = np.random.default_rng(7)
    for _ in range(100):
        v = rng.normal(size=3)
        s = v / np.linalg.norm(v)
        if abs(s[2]) > 0.95:
            continue
        sp = gf.ShapePoint("sphere", s)
        off = atlas.offset(1, sp)
        lhs = south.eval(sp).rotation @ rot_z(off)
        np.testing.assert_allclose(lhs, north.eval(sp).rotation, atol=1e-12)
