"""Verification of the flatness conditions: the unactuated subbundle, the
underactuation distribution, the group/control dimension count, section
orthogonality, equivariance, and regularity of the reduced implicit dynamics.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

from . import bundle
from .geometry import covariant_field_derivative, grad_potential, metric_at
from .model import (SHAPE_CIRCLE, SHAPE_SPHERE, ConfigPoint, GroupElement,
                    ModelError, ShapePoint, SystemModel, Trivialization)

RANK_REL_TOL = 1e-9
GRAVITY_FALLBACK = 9.81


def thread_count() -> int:
    """Worker cap for sampling sweeps, from GEOFLAT_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("GEOFLAT_THREADS", "1")))
    except ValueError:
        return 1


def _map_samples(fn, items):
    workers = thread_count()
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class DistributionSample:
    """Orthonormal basis (columns) of a distribution at one point."""
    at: ConfigPoint
    basis: np.ndarray


@dataclass(frozen=True)
class ImplicitDynamicsEval:
    value: np.ndarray
    jacobian_shape: np.ndarray


@dataclass
class RegularityReport:
    shape_dim: int
    n_requested: int
    n_roots: int = 0
    n_singular: int = 0
    n_skipped: int = 0
    singular_samples: list = field(default_factory=list)

    @property
    def generic_fraction(self) -> float:
        if self.n_roots == 0:
            return 0.0
        return 1.0 - self.n_singular / self.n_roots


def _nullspace(A, rel_tol=RANK_REL_TOL):
    """Orthonormal nullspace basis of A (columns) and the rank of A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    U, sv, Vt = np.linalg.svd(A)
    if sv.size == 0:
        return np.eye(A.shape[1]), 0
    rank = int(np.sum(sv > rel_tol * sv[0]))
    return Vt[rank:].T, rank


def unactuated_basis(system: SystemModel, q: ConfigPoint) -> DistributionSample:
    """Coannihilator of the control codistribution: directions paired to zero
    by every control covector (metric-free natural pairing)."""
    F = np.asarray(system.control_codistribution(q), dtype=float)
    basis, rank = _nullspace(F.T)
    if rank < system.control_rank:
        raise ModelError(
            f"control codistribution rank dropped to {rank} (generic "
            f"{system.control_rank}) at this configuration")
    return DistributionSample(q, basis)


def _uq_field(system: SystemModel, q_ref: ConfigPoint):
    """Smooth local frame of the unactuated subbundle around q_ref.

    Plain nullspace bases are not continuous in q; this fixes the basis at
    q_ref and continues it by projection onto the nullspace at nearby points
    followed by re-orthonormalization.
    """
    ref = unactuated_basis(system, q_ref).basis

    def field(q: ConfigPoint) -> np.ndarray:
        null, _ = _nullspace(np.asarray(system.control_codistribution(q)).T)
        proj = null @ (null.T @ ref)
        Q, R = np.linalg.qr(proj)
        # keep orientation aligned with the reference frame
        signs = np.sign(np.diag(R))
        signs[signs == 0] = 1.0
        return Q * signs

    return field


def underactuation_distribution(system: SystemModel,
                                q: ConfigPoint) -> DistributionSample:
    """Span of the unactuated subbundle together with covariant derivatives
    of its local sections along a full frame of directions, pruned to an
    orthonormal basis by a rank-revealing decomposition."""
    frame = _uq_field(system, q)
    uq = frame(q)
    n, u = uq.shape
    cols = [uq]
    eye = np.eye(n)
    for i in range(u):
        def comp(qq, i=i):
            return frame(qq)[:, i]

        for j in range(n):
            cols.append(covariant_field_derivative(
                system, comp, eye[j], q).reshape(n, 1))
    stacked = np.concatenate(cols, axis=1)
    U, sv, _ = np.linalg.svd(stacked)
    rank = int(np.sum(sv > RANK_REL_TOL * sv[0]))
    return DistributionSample(q, U[:, :rank])


def check_dim_condition(system: SystemModel, n_samples: int = 5,
                        seed: int = 0) -> bool:
    """Necessary condition: the symmetry-group dimension equals the generic
    rank of the control codistribution."""
    rng = np.random.default_rng(seed)
    rank = 0
    for _ in range(n_samples):
        F = np.asarray(system.control_codistribution(system.sample_config(rng)))
        sv = np.linalg.svd(F, compute_uv=False)
        rank = max(rank, int(np.sum(sv > RANK_REL_TOL * sv[0])))
    return rank == system.group_dim


def _sample_shape(system: SystemModel, rng, section=None, pole_cap=1e-3):
    if system.shape_chart == SHAPE_CIRCLE:
        return ShapePoint(SHAPE_CIRCLE, [rng.uniform(-np.pi, np.pi)])
    while True:
        v = rng.normal(size=3)
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            continue
        s = v / nv
        if section is not None and section.excluded_pole is not None:
            if np.linalg.norm(s - section.excluded_pole) <= pole_cap:
                continue
        return ShapePoint(SHAPE_SPHERE, s)


def _section_tangent_fd(system: SystemModel, section, s: ShapePoint,
                        direction, step: float = 1e-6) -> np.ndarray:
    """Chart components of the section differential by central differences."""
    direction = np.asarray(direction, dtype=float).reshape(-1)
    if system.shape_chart == SHAPE_CIRCLE:
        sp = ShapePoint(SHAPE_CIRCLE, s.coords + step * direction)
        sm = ShapePoint(SHAPE_CIRCLE, s.coords - step * direction)
    else:
        vp = s.coords + step * direction
        vm = s.coords - step * direction
        sp = ShapePoint(SHAPE_SPHERE, vp / np.linalg.norm(vp))
        sm = ShapePoint(SHAPE_SPHERE, vm / np.linalg.norm(vm))
    qp, qm = section.eval(sp), section.eval(sm)
    if system.chart.frame_kind == "coordinate":
        from .model import wrap_angle
        diff = qp.coords - qm.coords
        mask = np.array(system.chart.wrap_mask, dtype=bool)
        diff[mask] = wrap_angle(diff[mask])
        return diff / (2.0 * step)
    from .so3 import log_so3
    v = qp.position - qm.position
    R0 = section.eval(s).rotation
    omega = log_so3(qm.rotation.T @ qp.rotation)
    return np.concatenate([R0.T @ v, omega]) / (2.0 * step)


def check_orthogonality(system: SystemModel, section, n_samples: int = 100,
                        seed: int = 0, pole_cap: float = 1e-3) -> float:
    """Largest normalized metric pairing between section tangents and the
    underactuation distribution over sampled shapes (condition I)."""
    rng = np.random.default_rng(seed)
    shapes = [_sample_shape(system, rng, section, pole_cap)
              for _ in range(n_samples)]

    def residual_at(s):
        q = section.eval(s)
        basis = bundle.shape_tangent_basis(system, s)
        M = metric_at(system, q)
        delta = underactuation_distribution(system, q).basis
        worst = 0.0
        for alpha in range(basis.shape[1]):
            t = _section_tangent_fd(system, section, s, basis[:, alpha])
            tn = t / max(np.sqrt(t @ M @ t), 1e-300)
            for j in range(delta.shape[1]):
                d = delta[:, j]
                dn = d / max(np.sqrt(d @ M @ d), 1e-300)
                worst = max(worst, abs(tn @ M @ dn))
        return worst

    return float(max(_map_samples(residual_at, shapes)))


def check_delta_equivariance(system: SystemModel, n_samples: int = 100,
                             seed: int = 0) -> float:
    """Largest principal-angle sine between the pushforward of the
    underactuation distribution and the distribution at the moved point."""
    rng = np.random.default_rng(seed)

    def sample_group():
        n = system.group_dim
        data = rng.normal(0, 2.0, size=n)
        return GroupElement(system.group_kind, data)

    pairs = [(sample_group(), system.sample_config(rng))
             for _ in range(n_samples)]

    def residual_at(pair):
        g, q = pair
        d_here = underactuation_distribution(system, q).basis
        pushed = np.stack([bundle.act_tangent(system, g, d_here[:, j])
                           for j in range(d_here.shape[1])], axis=1)
        d_there = underactuation_distribution(system, bundle.act(system, g, q)).basis
        if pushed.shape[1] != d_there.shape[1]:
            return 1.0
        angles = subspace_angles(pushed, d_there)
        return float(np.max(np.sin(angles))) if angles.size else 0.0

    return float(max(_map_samples(residual_at, pairs)))


# ---------------------------------------------------------------------------
# implicit dynamics
# ---------------------------------------------------------------------------

def _shape_step(system: SystemModel, s: ShapePoint, direction,
                step: float) -> ShapePoint:
    direction = np.asarray(direction, dtype=float).reshape(-1)
    if system.shape_chart == SHAPE_CIRCLE:
        return ShapePoint(SHAPE_CIRCLE, s.coords + step * direction)
    v = s.coords + step * direction
    return ShapePoint(SHAPE_SPHERE, v / np.linalg.norm(v))


def implicit_dynamics_value(system: SystemModel, triv: Trivialization,
                            s: ShapePoint, g: GroupElement, xi, xidot,
                            assembled: bool = False) -> np.ndarray:
    """Reduced feasibility constraint E(s; g, xi, xidot) with the shape
    held at the section (valid for orthogonal sections).

    The closed-form per-system evaluation is used when available; the
    assembled path builds E from generators, the connection, and the
    potential gradient, and is the reference implementation.
    """
    xi = np.asarray(xi, dtype=float)
    xidot = np.asarray(xidot, dtype=float)
    if triv.implicit_fast is not None and not assembled:
        return np.asarray(triv.implicit_fast(s.coords, g, xi, xidot), dtype=float)
    return _implicit_assembled(system, triv, s, g, xi, xidot)


def _implicit_assembled(system: SystemModel, triv: Trivialization,
                        s: ShapePoint, g: GroupElement, xi, xidot,
                        uq_basis=None) -> np.ndarray:
    q = bundle.untrivialize(system, triv, s, g)
    k = system.group_dim
    gens = []
    eye = np.eye(k)
    for a in range(k):
        gens.append(np.asarray(system.generator(eye[a], q), dtype=float))
    acc = np.zeros(system.vel_dim)
    for a in range(k):
        acc += xidot[a] * gens[a]
    for a in range(k):
        if xi[a] == 0.0:
            continue
        for b in range(k):
            if xi[b] == 0.0:
                continue

            def gen_b(qq, b=b):
                return system.generator(eye[b], qq)

            acc += xi[a] * xi[b] * covariant_field_derivative(
                system, gen_b, gens[a], q)
    acc += grad_potential(system, q).comps
    if uq_basis is None:
        uq_basis = (system.uq_display(q) if system.uq_display is not None
                    else unactuated_basis(system, q).basis)
    M = metric_at(system, q)
    return uq_basis.T @ (M @ acc)


def implicit_dynamics(system: SystemModel, triv: Trivialization,
                      s: ShapePoint, g: GroupElement, xi, xidot,
                      jac_step: float = 1e-6,
                      assembled: bool = False) -> ImplicitDynamicsEval:
    """Constraint value plus its shape Jacobian by central differences in the
    shape tangent basis (sphere steps are renormalized)."""
    if system.group_dim != system.control_rank:
        raise ModelError("implicit dynamics require dim G == rank F")
    value = implicit_dynamics_value(system, triv, s, g, xi, xidot, assembled)
    basis = bundle.shape_tangent_basis(system, s)
    u = value.shape[0]
    Jm = np.empty((u, basis.shape[1]))
    for alpha in range(basis.shape[1]):
        sp = _shape_step(system, s, basis[:, alpha], jac_step)
        sm = _shape_step(system, s, basis[:, alpha], -jac_step)
        Jm[:, alpha] = (implicit_dynamics_value(system, triv, sp, g, xi, xidot, assembled)
                        - implicit_dynamics_value(system, triv, sm, g, xi, xidot,
                                                  assembled)) / (2.0 * jac_step)
    return ImplicitDynamicsEval(value, Jm)


def implicit_dynamics_full(system: SystemModel, triv: Trivialization,
                           s: ShapePoint, sdot, sddot, g: GroupElement,
                           xi, xidot) -> np.ndarray:
    """Full local implicit dynamics with nonzero shape velocity and
    acceleration, assembled from the standard-basis acceleration expansion:

        xidot^a V_a + sddot^α H_α + xi^a xi^b ∇_{V_a} V_b
        + 2 xi^a sdot^β ∇_{V_a} H_β + sdot^α sdot^β ∇_{H_α} H_β

    paired against the unactuated basis together with grad P.  For sphere
    shapes, sdot/sddot are coordinates in the tangent basis at s (see
    `bundle.shape_tangent_basis`), using the normalized-offset parametrization
    around s.
    """
    xi = np.asarray(xi, dtype=float)
    xidot = np.asarray(xidot, dtype=float)
    sdot = np.asarray(sdot, dtype=float).reshape(-1)
    sddot = np.asarray(sddot, dtype=float).reshape(-1)
    q = bundle.untrivialize(system, triv, s, g)
    k = system.group_dim
    eye = np.eye(k)

    basis = bundle.shape_tangent_basis(system, s)
    dim_s = basis.shape[1]
    s0 = s.coords

    def shape_from_coords(u_coords):
        if system.shape_chart == SHAPE_CIRCLE:
            return ShapePoint(SHAPE_CIRCLE, s0 + basis @ u_coords)
        v = s0 + basis @ u_coords
        return ShapePoint(SHAPE_SPHERE, v / np.linalg.norm(v))

    def coords_from_shape(sp: ShapePoint):
        if system.shape_chart == SHAPE_CIRCLE:
            return (sp.coords - s0) @ basis
        sv = sp.coords
        return basis.T @ (sv / float(sv @ s0) - s0)

    def coord_field_direction(sp: ShapePoint, alpha: int):
        """d shape / d u_alpha at sp for the normalized-offset parametrization."""
        if system.shape_chart == SHAPE_CIRCLE:
            return basis[:, alpha]
        u_coords = coords_from_shape(sp)
        v = s0 + basis @ u_coords
        n = np.linalg.norm(v)
        sv = v / n
        t = basis[:, alpha]
        return (t - sv * float(sv @ t)) / n

    def gen_field(a):
        def field(qq):
            return system.generator(eye[a], qq)

        return field

    def h_field(alpha):
        def field(qq):
            sp = system.projection(qq)
            gg = triv.group_part(qq)
            tsig = triv.section.tangent(sp, coord_field_direction(sp, alpha))
            return bundle.act_tangent(system, gg, tsig)

        return field

    gens = [np.asarray(system.generator(eye[a], q), dtype=float) for a in range(k)]
    hcols = [np.asarray(h_field(alpha)(q), dtype=float) for alpha in range(dim_s)]

    acc = np.zeros(system.vel_dim)
    for a in range(k):
        acc += xidot[a] * gens[a]
    for alpha in range(dim_s):
        acc += sddot[alpha] * hcols[alpha]
    for a in range(k):
        for b in range(k):
            acc += xi[a] * xi[b] * covariant_field_derivative(
                system, gen_field(b), gens[a], q)
    for a in range(k):
        for beta in range(dim_s):
            acc += 2.0 * xi[a] * sdot[beta] * covariant_field_derivative(
                system, h_field(beta), gens[a], q)
    for alpha in range(dim_s):
        for beta in range(dim_s):
            acc += sdot[alpha] * sdot[beta] * covariant_field_derivative(
                system, h_field(beta), hcols[alpha], q)
    acc += grad_potential(system, q).comps
    uq_basis = (system.uq_display(q) if system.uq_display is not None
                else unactuated_basis(system, q).basis)
    M = metric_at(system, q)
    return uq_basis.T @ (M @ acc)


# ---------------------------------------------------------------------------
# regularity
# ---------------------------------------------------------------------------

SINGULAR_ABS_TOL = 1e-8


def jacobian_is_singular(Jm: np.ndarray, scale: float = 1.0) -> bool:
    sv = np.linalg.svd(np.atleast_2d(Jm), compute_uv=False)
    return bool(sv[-1] <= SINGULAR_ABS_TOL * max(sv[0], scale))


def check_regularity(system: SystemModel, triv: Trivialization,
                     n_samples: int = 100, seed: int = 0,
                     sample_scale: float = 10.0) -> RegularityReport:
    """Sample (g, xi, xidot) tuples, solve the reduced constraint for the
    shape by multi-start Newton, and report how often the shape Jacobian has
    full rank at the roots found (condition II)."""
    from .flatmap import solve_shape_multistart

    rng = np.random.default_rng(seed)
    report = RegularityReport(shape_dim=system.shape_dim, n_requested=n_samples)
    k = system.group_dim

    def draw_ball(n):
        v = rng.normal(size=n)
        radius = rng.uniform() ** (1.0 / n)
        return sample_scale * radius * v / np.linalg.norm(v)

    for _ in range(n_samples):
        g = GroupElement(system.group_kind, draw_ball(k))
        xi = draw_ball(k)
        xidot = draw_ball(k)
        roots = solve_shape_multistart(system, triv, g, xi, xidot)
        if not roots:
            report.n_skipped += 1
            continue
        for s in roots:
            ev = implicit_dynamics(system, triv, s, g, xi, xidot)
            report.n_roots += 1
            force_scale = float(np.linalg.norm(xidot) + system.params.get(
                "g_grav", GRAVITY_FALLBACK))
            if jacobian_is_singular(ev.jacobian_shape, scale=force_scale):
                report.n_singular += 1
                report.singular_samples.append(
                    {"g": g.data.tolist(), "xi": xi.tolist(),
                     "xidot": xidot.tolist(), "shape": s.coords.tolist()})
    return report
