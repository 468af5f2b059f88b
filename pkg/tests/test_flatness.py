import dataclasses

import numpy as np
import pytest

import geoflat as gf
from geoflat.flatness import implicit_dynamics_value
from geoflat.geometry import metric_at
from geoflat.systems import build_system
from conftest import random_group, span_residual


def test_unactuated_basis_rocket(rocket):
    q = rocket.point([0.0, 0.0, 0.0])
    got = gf.unactuated_basis(rocket, q).basis
    want = np.array([[-rocket.params["r"]], [0.0], [1.0]])
    assert span_residual(got, want) < 1e-12


def test_unactuated_basis_quadrotor(quadrotor):
    rng = np.random.default_rng(0)
    q = quadrotor.sample_config(rng)
    got = gf.unactuated_basis(quadrotor, q).basis
    want = np.zeros((6, 2))
    want[0, 0] = want[1, 1] = 1.0
    assert span_residual(got, want) < 1e-12


def test_unactuated_basis_fully_actuated(rocket):
    system = dataclasses.replace(
        rocket, control_codistribution=lambda q: np.eye(3), control_rank=3,
        uq_display=None)
    q = system.point([0.0, 0.0, 0.0])
    assert gf.unactuated_basis(system, q).basis.shape == (3, 0)


def test_unactuated_basis_detects_rank_drop(rocket):
    def degenerate(q):
        F = rocket.control_codistribution(q)
        F = np.array(F)
        F[:, 1] = F[:, 0]
        return F

    system = dataclasses.replace(rocket, control_codistribution=degenerate,
                                 uq_display=None)
    with pytest.raises(gf.ModelError):
        gf.unactuated_basis(system, system.point([0.0, 0.0, 0.0]))


def test_delta_rocket_display(rocket):
    r = rocket.params["r"]
    rng = np.random.default_rng(1)
    for _ in range(25):
        q = rocket.sample_config(rng)
        th = q.coords[2]
        want = np.array([[-r * np.cos(th), r * np.sin(th)],
                         [-r * np.sin(th), -r * np.cos(th)],
                         [1.0, 0.0]])
        got = gf.underactuation_distribution(rocket, q).basis
        assert got.shape[1] == 2
        assert span_residual(got, want) < 1e-9


def test_delta_manipulator_display(manipulator):
    rng = np.random.default_rng(2)
    want = np.zeros((4, 2))
    want[0, 0] = want[1, 1] = 1.0
    for _ in range(25):
        q = manipulator.sample_config(rng)
        got = gf.underactuation_distribution(manipulator, q).basis
        assert got.shape[1] == 2
        assert span_residual(got, want) < 1e-9


def test_delta_quadrotor_display(quadrotor):
    rng = np.random.default_rng(3)
    want = np.zeros((6, 3))
    want[0, 0] = want[1, 1] = want[2, 2] = 1.0
    for _ in range(25):
        q = quadrotor.sample_config(rng)
        got = gf.underactuation_distribution(quadrotor, q).basis
        assert got.shape[1] == 3
        assert span_residual(got, want) < 1e-9


def test_delta_contains_uq_and_f_annihilates(all_systems):
    rng = np.random.default_rng(4)
    for system in all_systems:
        for _ in range(20):
            q = system.sample_config(rng)
            uq = gf.unactuated_basis(system, q).basis
            F = np.asarray(system.control_codistribution(q))
            assert np.abs(F.T @ uq).max() < 1e-10
            delta = gf.underactuation_distribution(system, q).basis
            # UQ is a subspace of the span
            proj = delta @ (delta.T @ uq)
            assert np.abs(proj - uq).max() < 1e-9


def test_check_dim_condition(rocket, quadrotor):
    assert gf.check_dim_condition(rocket)
    assert gf.check_dim_condition(quadrotor)
    assert not gf.check_dim_condition(build_system("rocket",
                                                   control_columns=[0]))


def test_check_orthogonality_builtin_sections(all_systems):
    for system in all_systems:
        for section in system.sections:
            res = gf.check_orthogonality(system, section, n_samples=50, seed=5)
            assert res < 1e-9, (system.name, section.name, res)


def test_check_orthogonality_detects_tampered_section():
    bad = gf.make_rocket(section_scale=2.0)
    res = gf.check_orthogonality(bad, bad.sections[0], n_samples=50, seed=6)
    assert res > 1e-2


def test_check_orthogonality_action_invariance(rocket):
    # same inner products evaluated after moving along the fiber: metric
    # invariance makes the residual identical up to roundoff
    rng = np.random.default_rng(7)
    section = rocket.sections[0]
    for _ in range(20):
        th = rng.uniform(-np.pi, np.pi)
        s = rocket.shape([th])
        q = section.eval(s)
        g = random_group(rocket, rng)
        M = metric_at(rocket, q)
        delta = gf.underactuation_distribution(rocket, q).basis
        tsig = section.tangent(s, [1.0])
        vals_here = tsig @ M @ delta
        q2 = gf.act(rocket, g, q)
        M2 = metric_at(rocket, q2)
        delta2 = gf.underactuation_distribution(rocket, q2).basis
        tsig2 = gf.act_tangent(rocket, g, tsig)
        vals_there = tsig2 @ M2 @ delta2
        # compare as subsp-invariant magnitudes
        assert abs(np.linalg.norm(vals_here) - np.linalg.norm(vals_there)) < 1e-9


def test_delta_equivariance(all_systems):
    for system in all_systems:
        res = gf.check_delta_equivariance(system, n_samples=30, seed=8)
        assert res < 1e-9, (system.name, res)


def test_delta_equivariance_identity_exact(rocket):
    # the identity element moves nothing: the pushed basis is bitwise equal
    rng = np.random.default_rng(9)
    q = rocket.sample_config(rng)
    d = gf.underactuation_distribution(rocket, q).basis
    e = gf.identity(rocket.group_kind)
    pushed = np.stack([gf.act_tangent(rocket, e, d[:, j])
                       for j in range(d.shape[1])], axis=1)
    assert np.array_equal(pushed, d)


def rocket_E_closed(rocket, th, xidot):
    m, r, g = rocket.params["m"], rocket.params["r"], rocket.params["g_grav"]
    return -m * r * (np.cos(th) * xidot[0] + np.sin(th) * (xidot[1] + g))


def test_implicit_dynamics_rocket_closed_form(rocket):
    triv = rocket.trivializations[0]
    rng = np.random.default_rng(10)
    for _ in range(20):
        th = rng.uniform(-np.pi, np.pi)
        g = gf.GroupElement("R2", rng.normal(size=2))
        xi = rng.normal(size=2)
        xidot = rng.normal(size=2)
        ev = gf.implicit_dynamics(rocket, triv, rocket.shape([th]), g, xi, xidot)
        want = rocket_E_closed(rocket, th, xidot)
        np.testing.assert_allclose(ev.value, [want], atol=1e-12)


def test_implicit_dynamics_rocket_zero_xidot(rocket):
    triv = rocket.trivializations[0]
    g_grav = rocket.params["g_grav"]
    m, r = rocket.params["m"], rocket.params["r"]
    g = gf.GroupElement("R2", [3.0, -1.0])
    for th in (0.0, 0.4, np.pi / 2, np.pi - 1e-9):
        ev = gf.implicit_dynamics(rocket, triv, rocket.shape([th]), g,
                                  np.zeros(2), np.zeros(2))
        np.testing.assert_allclose(ev.value, [-m * r * np.sin(th) * g_grav],
                                   atol=1e-12)


def test_implicit_dynamics_quadrotor_hover_zero(quadrotor):
    triv = quadrotor.trivializations[0]
    s = gf.ShapePoint("sphere", [0.0, 0.0, 1.0])
    g = gf.GroupElement("R3xS1", [1.0, -2.0, 0.5, 0.7])
    ev = gf.implicit_dynamics(quadrotor, triv, s, g, np.zeros(4), np.zeros(4))
    np.testing.assert_allclose(ev.value, np.zeros(2), atol=1e-12)


def test_implicit_fast_matches_assembled(all_systems):
    # the per-system closed forms against the generically assembled
    # evaluation from generators, connection, and potential gradient
    rng = np.random.default_rng(11)
    for system in all_systems:
        triv = system.trivializations[0]
        for _ in range(15):
            if system.shape_chart == "circle":
                s = system.shape([rng.uniform(-np.pi, np.pi)])
            else:
                v = rng.normal(size=3)
                v /= np.linalg.norm(v)
                if v[2] < -0.9:
                    v[2] = abs(v[2])
                    v /= np.linalg.norm(v)
                s = system.shape(v)
            g = random_group(system, rng)
            xi = rng.normal(size=system.group_dim)
            xidot = rng.normal(size=system.group_dim)
            fast = implicit_dynamics_value(system, triv, s, g, xi, xidot)
            asm = implicit_dynamics_value(system, triv, s, g, xi, xidot,
                                          assembled=True)
            np.testing.assert_allclose(fast, asm, atol=1e-7)


def test_implicit_dynamics_requires_square(rocket):
    system = build_system("rocket", control_columns=[0])
    triv = system.trivializations[0]
    with pytest.raises(gf.ModelError):
        gf.implicit_dynamics(system, triv, system.shape([0.0]),
                             gf.GroupElement("R2", [0.0, 0.0]),
                             np.zeros(2), np.zeros(2))


def test_full_implicit_dynamics_shape_independent(all_systems):
    # with the orthogonal section, the full constraint with nonzero shape
    # velocity and acceleration collapses to the reduced form
    rng = np.random.default_rng(12)
    for system in all_systems:
        triv = system.trivializations[0]
        dim_s = system.shape_dim
        for _ in range(10):
            if system.shape_chart == "circle":
                s = system.shape([rng.uniform(-np.pi, np.pi)])
            else:
                v = rng.normal(size=3)
                v /= np.linalg.norm(v)
                if abs(v[2]) > 0.9:
                    v = np.array([v[0], np.sign(v[1]) * 0.9, v[2] * 0.1])
                    v /= np.linalg.norm(v)
                s = system.shape(v)
            g = random_group(system, rng)
            xi = rng.normal(size=system.group_dim)
            xidot = rng.normal(size=system.group_dim)
            sdot = rng.normal(size=dim_s)
            sddot = rng.normal(size=dim_s)
            full = gf.implicit_dynamics_full(system, triv, s, sdot, sddot,
                                             g, xi, xidot)
            reduced = implicit_dynamics_value(system, triv, s, g, xi, xidot,
                                              assembled=True)
            np.testing.assert_allclose(full, reduced, atol=1e-8)


def test_full_implicit_dynamics_detects_nonorthogonal_section():
    # sanity: with a tampered (non-orthogonal) section the shape-derivative
    # terms do not cancel
    bad = gf.make_rocket(section_scale=2.0)
    triv = bad.trivializations[0]
    s = bad.shape([0.4])
    g = gf.GroupElement("R2", [0.0, 0.0])
    full = gf.implicit_dynamics_full(bad, triv, s, [1.0], [0.5], g,
                                     np.zeros(2), np.zeros(2))
    reduced = implicit_dynamics_value(bad, triv, s, g, np.zeros(2),
                                      np.zeros(2), assembled=True)
    assert np.abs(full - reduced).max() > 1e-3


def test_check_regularity_rocket(rocket):
    rep = gf.check_regularity(rocket, rocket.trivializations[0],
                              n_samples=100, seed=13)
    assert rep.n_roots > 0
    assert rep.generic_fraction == 1.0


def test_check_regularity_manipulator(manipulator):
    rep = gf.check_regularity(manipulator, manipulator.trivializations[0],
                              n_samples=60, seed=14)
    assert rep.n_roots > 0
    assert rep.generic_fraction == 1.0


def test_check_regularity_quadrotor(quadrotor):
    rep = gf.check_regularity(quadrotor, quadrotor.trivializations[0],
                              n_samples=40, seed=15)
    assert rep.n_roots > 0
    assert rep.generic_fraction == 1.0


def test_free_fall_singular_rocket(rocket):
    # in free fall the reduced constraint vanishes identically: every shape
    # is a root and the Jacobian is singular there
    triv = rocket.trivializations[0]
    g = gf.GroupElement("R2", [0.0, 0.0])
    xidot = np.array([0.0, -rocket.params["g_grav"]])
    ev = gf.implicit_dynamics(rocket, triv, rocket.shape([0.3]), g,
                              np.zeros(2), xidot)
    np.testing.assert_allclose(ev.value, [0.0], atol=1e-12)
    from geoflat.flatness import jacobian_is_singular
    assert jacobian_is_singular(ev.jacobian_shape, scale=1.0)


def test_free_fall_singular_quadrotor(quadrotor):
    with pytest.raises(gf.SingularShapeError):
        gf.solve_shape(quadrotor, quadrotor.trivializations[0],
                       gf.GroupElement("R3xS1", np.zeros(4)), np.zeros(4),
                       [0.0, 0.0, -quadrotor.params["g_grav"], 0.0])


def test_rank_delta_constant(all_systems):
    expected = {"rocket": 2, "manipulator": 2, "quadrotor": 3}
    rng = np.random.default_rng(16)
    for system in all_systems:
        for _ in range(30):
            q = system.sample_config(rng)
            assert gf.underactuation_distribution(system, q).basis.shape[1] \
                == expected[system.name]


def test_thread_env_smoke(rocket, monkeypatch):
    monkeypatch.setenv("GEOFLAT_THREADS", "2")
    res2 = gf.check_delta_equivariance(rocket, n_samples=10, seed=17)
    monkeypatch.setenv("GEOFLAT_THREADS", "1")
    res1 = gf.check_delta_equivariance(rocket, n_samples=10, seed=17)
    assert res1 == res2
