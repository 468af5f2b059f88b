"""The flatness pipeline: forward flat output, Newton shape solve from the
reduced implicit dynamics, configuration reconstruction from the flat output
and two derivatives, and input recovery through the forced geodesic equation.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bundle
from .flatness import _implicit_assembled
from .geometry import christoffel_at, grad_potential, metric_at, body_quadratic
from .model import (FRAME_BODY, SHAPE_CIRCLE, SHAPE_SPHERE, ChartDomainError,
                    ConfigPoint, GroupElement, ModelError, ShapePoint,
                    ShapeSolveError, SingularShapeError, SystemModel,
                    TangentVec, Trivialization, wrap_angle)
from .so3 import cross3, log_so3

NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 50
JACOBIAN_COND_MAX = 1e10


@dataclass(frozen=True)
class FlatPoint:
    """A flat-output value with time derivatives up to order 4.

    Angle components carry derivatives of the unwrapped angle.  Two
    derivatives determine the configuration; four determine the inputs.
    """
    value: GroupElement
    derivs: tuple = ()

    def __post_init__(self):
        derivs = tuple(np.array(d, dtype=float).reshape(-1) for d in self.derivs)
        if len(derivs) > 4:
            raise ModelError("flat points carry at most 4 derivatives")
        for d in derivs:
            if d.shape[0] != self.value.dim:
                raise ModelError("derivative length must match the group dimension")
            d.setflags(write=False)
        object.__setattr__(self, "derivs", derivs)

    @property
    def order(self):
        return len(self.derivs)

    def deriv(self, k: int) -> np.ndarray:
        if k == 0:
            return self.value.data
        if k <= len(self.derivs):
            return self.derivs[k - 1]
        return np.zeros(self.value.dim)


def taylor_shift(y: FlatPoint, dt: float, order: Optional[int] = None) -> FlatPoint:
    """Shift a flat jet in time using its own truncated Taylor expansion."""
    n = y.order if order is None else min(order, y.order)
    rows = np.stack([y.deriv(k) for k in range(y.order + 1)], axis=0)
    out = _shift_rows(rows, dt, n)
    return FlatPoint(GroupElement(y.value.kind, out[0]), tuple(out[1:]))


@dataclass(frozen=True)
class ReconstructedSample:
    t: float
    q: ConfigPoint
    qdot: TangentVec
    force_coeffs: np.ndarray
    residual: float
    shape: ShapePoint
    chart_index: int = 0


def flat_output(system: SystemModel, triv: Trivialization,
                q: ConfigPoint) -> GroupElement:
    """Group part of the trivialization: the geometric flat output."""
    _, g = bundle.trivialize(system, triv, q)
    return g


def group_state_from_jet(system: SystemModel, y: FlatPoint):
    """(g, xi, xidot) from a flat jet with at least two derivatives."""
    if y.order < 2:
        raise ModelError("configuration reconstruction needs two derivatives")
    g = y.value
    xi = bundle.spatial_velocity(system.group_kind, g, y.deriv(1))
    xidot = bundle.spatial_velocity_rate(system.group_kind, g, y.deriv(1),
                                         y.deriv(2))
    return g, xi, xidot


def _shape_retract(system: SystemModel, coords, delta) -> np.ndarray:
    if system.shape_chart == SHAPE_CIRCLE:
        return np.asarray(coords, dtype=float) + delta
    v = np.asarray(coords, dtype=float) + delta
    return v / np.linalg.norm(v)


def _tangent_basis_coords(system: SystemModel, coords) -> np.ndarray:
    if system.shape_chart == SHAPE_CIRCLE:
        return _CIRCLE_BASIS
    k = int(np.argmin(np.abs(coords)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = np.cross(coords, e)
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(coords, t1)
    return np.stack([t1, t2], axis=1)


_CIRCLE_BASIS = np.array([[1.0]])


def _implicit_assembled_coords(system, triv, coords, g, xi, xidot):
    s = ShapePoint(system.shape_chart, coords)
    return _implicit_assembled(system, triv, s, g, xi, xidot)


def solve_shape(system: SystemModel, triv: Trivialization, g: GroupElement,
                xi, xidot, s_guess: Optional[ShapePoint] = None,
                use_closed_form: bool = True, tol: float = NEWTON_TOL,
                max_iter: int = NEWTON_MAX_ITER) -> ShapePoint:
    """Solve the reduced implicit dynamics E(s) = 0 for the shape.

    A system-supplied closed form is used when available; otherwise Newton
    iteration with a finite-difference Jacobian, re-normalizing on-sphere
    iterates each step.  Tuples whose Jacobian is ill conditioned at an
    iterate are refused: the flat correspondence is only claimed away from
    the singular set (free fall being the canonical example).
    """
    xi = np.asarray(xi, dtype=float)
    xidot = np.asarray(xidot, dtype=float)
    if use_closed_form and system.shape_solver_closed is not None:
        coords = system.shape_solver_closed(g, xi, xidot)
        if coords is None:
            raise SingularShapeError(
                "implicit dynamics are singular for this tuple (zero net "
                "specific force: free fall)")
        s = ShapePoint(system.shape_chart, coords)
        triv.section.require_contains(s)
        return s

    fast = triv.implicit_fast
    scale = float(np.linalg.norm(xidot)) + system.params.get("g_grav", 9.81)
    converge = tol * max(1.0, scale)
    if fast is not None and system.shape_dim == 1 \
            and system.shape_chart == SHAPE_CIRCLE:
        return _solve_shape_scalar(system, triv, fast, g, xi, xidot, s_guess,
                                   converge, max_iter)
    if fast is not None:
        def value_at(coords):
            return np.asarray(fast(coords, g, xi, xidot), dtype=float)
    else:
        def value_at(coords):
            return _implicit_assembled_coords(system, triv, coords, g, xi, xidot)

    if s_guess is None:
        # cold start: seed from the spread point with the smallest constraint
        guesses = [sp.coords for sp in _spread_guesses(system)]
        norms = [float(np.linalg.norm(value_at(c))) for c in guesses]
        coords = np.array(guesses[int(np.argmin(norms))])
    else:
        coords = np.array(s_guess.coords, dtype=float)
    best, best_norm = coords, np.inf
    jac_step = 1e-6
    max_step = 1.0
    value = value_at(coords)
    for _ in range(max_iter):
        norm = float(np.linalg.norm(value))
        if norm < best_norm:
            best, best_norm = coords, norm
        if norm < converge:
            s = ShapePoint(system.shape_chart, coords)
            triv.section.require_contains(s)
            return s
        basis = _tangent_basis_coords(system, coords)
        Jm = np.empty((value.shape[0], basis.shape[1]))
        for alpha in range(basis.shape[1]):
            cp = _shape_retract(system, coords, jac_step * basis[:, alpha])
            cm = _shape_retract(system, coords, -jac_step * basis[:, alpha])
            Jm[:, alpha] = (value_at(cp) - value_at(cm)) / (2.0 * jac_step)
        sv = np.linalg.svd(Jm, compute_uv=False)
        if sv[-1] <= 0 or sv[0] / sv[-1] > JACOBIAN_COND_MAX:
            raise SingularShapeError(
                "shape Jacobian is singular at the current iterate (the tuple "
                "may lie on the singular set, e.g. free fall)",
                best=ShapePoint(system.shape_chart, best),
                residual_norm=best_norm)
        step = np.linalg.solve(Jm, -value)
        step_norm = float(np.linalg.norm(step))
        if step_norm > max_step:
            step *= max_step / step_norm
        # damped update: halve until the constraint shrinks
        scale_step = 1.0
        for _ in range(6):
            cand = _shape_retract(system, coords, scale_step * (basis @ step))
            cand_value = value_at(cand)
            if float(np.linalg.norm(cand_value)) < norm:
                break
            scale_step *= 0.5
        coords, value = cand, cand_value
    raise ShapeSolveError(
        f"Newton did not converge within {max_iter} iterations "
        f"(best |E| = {best_norm:.3e})",
        best=ShapePoint(system.shape_chart, best), residual_norm=best_norm)


def _solve_shape_scalar(system, triv, fast, g, xi, xidot, s_guess,
                        converge, max_iter, jac_step=1e-6, max_step=1.0):
    """Scalar Newton for one-dimensional circle shape spaces (shared logic
    with the array path, specialized to avoid array round trips)."""

    def val(th):
        return float(fast((th,), g, xi, xidot)[0])

    if s_guess is None:
        cands = [(-np.pi + 0.25 * np.pi * k) for k in range(8)]
        th = min(cands, key=lambda c: abs(val(c)))
    else:
        th = float(s_guess.coords[0])
    best, best_norm = th, np.inf
    v = val(th)
    for _ in range(max_iter):
        av = abs(v)
        if av < best_norm:
            best, best_norm = th, av
        if av < converge:
            return ShapePoint(SHAPE_CIRCLE, (th,))
        deriv = (val(th + jac_step) - val(th - jac_step)) / (2.0 * jac_step)
        if deriv == 0.0:
            raise SingularShapeError(
                "shape Jacobian is singular at the current iterate (the tuple "
                "may lie on the singular set, e.g. free fall)",
                best=ShapePoint(SHAPE_CIRCLE, (best,)), residual_norm=best_norm)
        step = -v / deriv
        if step > max_step:
            step = max_step
        elif step < -max_step:
            step = -max_step
        scale_step = 1.0
        for _ in range(6):
            cand = th + scale_step * step
            cand_v = val(cand)
            if abs(cand_v) < av:
                break
            scale_step *= 0.5
        th, v = cand, cand_v
    raise ShapeSolveError(
        f"Newton did not converge within {max_iter} iterations "
        f"(best |E| = {best_norm:.3e})",
        best=ShapePoint(SHAPE_CIRCLE, (best,)), residual_norm=best_norm)


def _spread_guesses(system: SystemModel):
    if system.shape_chart == SHAPE_CIRCLE:
        return [ShapePoint(SHAPE_CIRCLE, [a])
                for a in np.linspace(-np.pi, np.pi, 8, endpoint=False)]
    corners = np.array([[sx, sy, sz] for sx in (-1.0, 1.0)
                        for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)])
    return [ShapePoint(SHAPE_SPHERE, c / np.linalg.norm(c)) for c in corners]


def solve_shape_multistart(system: SystemModel, triv: Trivialization,
                           g: GroupElement, xi, xidot,
                           dedupe_tol: float = 1e-6) -> list:
    """Newton from spread initial guesses; returns the distinct converged
    roots inside the section domain."""
    roots = []
    for guess in _spread_guesses(system):
        try:
            s = solve_shape(system, triv, g, xi, xidot, s_guess=guess,
                            use_closed_form=False)
        except (ShapeSolveError, ChartDomainError):
            continue
        if system.shape_chart == SHAPE_CIRCLE:
            coords = np.array([wrap_angle(s.coords[0])])
            s = ShapePoint(SHAPE_CIRCLE, coords)
            new = all(abs(wrap_angle(s.coords[0] - r.coords[0])) > dedupe_tol
                      for r in roots)
        else:
            new = all(np.linalg.norm(s.coords - r.coords) > dedupe_tol
                      for r in roots)
        if new:
            roots.append(s)
    return roots


def reconstruct(system: SystemModel, triv: Trivialization, y: FlatPoint,
                s_guess: Optional[ShapePoint] = None):
    """Configuration from a flat jet with two derivatives: solve the shape,
    then q = Phi_g(sigma(s))."""
    g, xi, xidot = group_state_from_jet(system, y)
    s = solve_shape(system, triv, g, xi, xidot, s_guess=s_guess)
    q = bundle.untrivialize(system, triv, s, g)
    return q, s


def reconstruct_atlas(system: SystemModel, y: FlatPoint, chart_index: int,
                      s_guess: Optional[ShapePoint] = None):
    """Atlas-aware reconstruction: the flat plan is interpreted in chart 0's
    trivialization and evaluated through the requested chart, offsetting the
    group angle so the physical configuration is chart independent."""
    atlas = system.atlas
    triv = atlas.trivializations[chart_index]
    g, xi, xidot = group_state_from_jet(system, y)
    s = solve_shape(system, triv, g, xi, xidot, s_guess=s_guess)
    offset = atlas.offset(chart_index, s)
    if offset != 0.0:
        data = np.array(g.data, dtype=float)
        data[-1] = data[-1] + offset
        g = GroupElement(g.kind, data)
    q = bundle.untrivialize(system, triv, s, g)
    return q, s


# ---------------------------------------------------------------------------
# full reconstruction with velocities and inputs
# ---------------------------------------------------------------------------

_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


_SHIFT_CACHE = {}


def _shift_matrix(dt: float, upto: int, order: int) -> np.ndarray:
    """Taylor shift operator S with S @ rows = derivative rows at t + dt."""
    key = (dt, upto, order)
    S = _SHIFT_CACHE.get(key)
    if S is None:
        S = np.zeros((upto + 1, order + 1))
        for k in range(upto + 1):
            fact = 1.0
            if k <= order:
                S[k, k] = 1.0
            for j in range(k + 1, order + 1):
                fact *= dt / (j - k)
                S[k, j] = fact
        if len(_SHIFT_CACHE) > 4096:
            _SHIFT_CACHE.clear()
        _SHIFT_CACHE[key] = S
    return S


def _shift_rows(rows: np.ndarray, dt: float, upto: int) -> np.ndarray:
    """Taylor-shift stacked derivative rows (order x dim) to t + dt."""
    return _shift_matrix(dt, upto, rows.shape[0] - 1) @ rows


def _stencil_states(system: SystemModel, y: FlatPoint, dt_fd: float,
                    chart_index: int, s_guess):
    kind = system.group_kind
    atlas = system.atlas
    triv = (atlas.trivializations[chart_index] if atlas is not None
            else system.trivializations[chart_index])
    rows = np.stack([y.deriv(k) for k in range(y.order + 1)], axis=0)
    qs, shapes = [], []
    guess = s_guess
    for k in (-2, -1, 0, 1, 2):
        r = _shift_rows(rows, k * dt_fd, 2)
        g = GroupElement(kind, r[0])
        xi = bundle.spatial_velocity(kind, g, r[1])
        xidot = bundle.spatial_velocity_rate(kind, g, r[1], r[2])
        s = solve_shape(system, triv, g, xi, xidot, s_guess=guess)
        offset = atlas.offset(chart_index, s) if atlas is not None else 0.0
        if offset != 0.0:
            data = np.array(g.data, dtype=float)
            data[-1] = data[-1] + offset
            g = GroupElement(kind, data)
        qs.append(bundle.untrivialize(system, triv, s, g))
        shapes.append(s)
        guess = s
    return qs, shapes


def _derivatives_coordinate(system: SystemModel, qs, dt_fd: float):
    rows = np.stack([q.coords for q in qs], axis=0)
    mask = np.array(system.chart.wrap_mask, dtype=bool)
    if mask.any():
        # unwrap angle columns across the stencil around the center value
        for j in np.nonzero(mask)[0]:
            col = rows[:, j]
            rows[:, j] = wrap_angle(col - col[2])
    # center the stencil so constant columns cancel exactly
    rows = rows - rows[2]
    qdot = _D1 @ rows / dt_fd
    qddot = _D2 @ rows / dt_fd**2
    return qdot, qddot


def _derivatives_body(qs, dt_fd: float):
    x0 = qs[2].position
    xs = np.stack([q.position - x0 for q in qs], axis=0)
    R0 = qs[2].rotation
    thetas = np.stack([log_so3(R0.T @ q.rotation) for q in qs], axis=0)
    xdot = _D1 @ xs / dt_fd
    xddot = _D2 @ xs / dt_fd**2
    omega = _D1 @ thetas / dt_fd
    omegadot = _D2 @ thetas / dt_fd**2
    v = R0.T @ xdot
    vdot = R0.T @ xddot - cross3(omega, v)
    return np.concatenate([v, omega]), np.concatenate([vdot, omegadot])


def reconstruct_full(system: SystemModel, y: FlatPoint, t: float = 0.0,
                     dt_fd: float = 1e-4, chart_index: int = 0,
                     s_guess: Optional[ShapePoint] = None,
                     residual_tol: float = 1e-6) -> ReconstructedSample:
    """Recover configuration, velocity, and force coefficients at one instant
    from a flat jet with four derivatives.

    The velocity and acceleration come from 5-point central differences of
    the reconstruction map over time offsets {0, ±dt_fd, ±2 dt_fd}; the force
    coefficients solve the raised control columns against the forced-geodesic
    left side in the least-squares sense, and the out-of-span remainder is
    reported as the residual.
    """
    if y.order < 4:
        raise ModelError("input recovery needs four flat-output derivatives")
    qs, shapes = _stencil_states(system, y, dt_fd, chart_index, s_guess)
    q = qs[2]
    if system.chart.frame_kind == FRAME_BODY:
        qdot, qddot = _derivatives_body(qs, dt_fd)
        acc = qddot + body_quadratic(system, qdot)
    else:
        qdot, qddot = _derivatives_coordinate(system, qs, dt_fd)
        G = christoffel_at(system, q)
        acc = qddot + np.einsum("kij,i,j->k", G, qdot, qdot)
    residual_vec = acc + grad_potential(system, q).comps
    F = np.asarray(system.control_codistribution(q), dtype=float)
    M = metric_at(system, q)
    raised = np.linalg.solve(M, F)
    coeffs, *_ = np.linalg.lstsq(raised, residual_vec, rcond=None)
    remainder = float(np.linalg.norm(raised @ coeffs - residual_vec))
    scale = max(1.0, float(np.linalg.norm(residual_vec)))
    if remainder > residual_tol * scale:
        raise ShapeSolveError(
            f"dynamics residual {remainder:.3e} exceeds tolerance "
            f"{residual_tol * scale:.3e}: the flat trajectory is not "
            "dynamically feasible at this instant")
    return ReconstructedSample(t=t, q=q, qdot=TangentVec(q, qdot),
                               force_coeffs=coeffs, residual=remainder,
                               shape=shapes[2], chart_index=chart_index)
