"""Smooth flat-space trajectories: piecewise polynomials through waypoints
minimizing the integral of the squared fourth derivative, with analytic
derivatives to order 4 and C^4 knot continuity.

Angle components are planned on the unwrapped real line; only returned values
are wrapped, never derivatives.
"""

import json
from dataclasses import dataclass

import numpy as np

from .flatmap import FlatPoint
from .model import (GROUP_ANGLE_IDX, GROUP_DIM, GroupElement, ModelError,
                    wrap_angle)

REST_DEGREE = 7      # position pinned, derivatives 1..3 zeroed at the ends
PINNED_DEGREE = 9    # boundary derivatives to order 4 prescribed


@dataclass(frozen=True)
class FlatTrajectory:
    """Per-component polynomial segments over a shared knot vector.

    coeffs[k, d, i] is the coefficient of tau^i on segment k for component d,
    with tau the time since the segment start.
    """
    group_kind: str
    knots: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float).reshape(-1)
        coeffs = np.array(self.coeffs, dtype=float)
        if knots.ndim != 1 or knots.size < 2 or np.any(np.diff(knots) <= 0):
            raise ModelError("knot times must be strictly increasing")
        if coeffs.ndim != 3 or coeffs.shape[0] != knots.size - 1 \
                or coeffs.shape[1] != GROUP_DIM[self.group_kind]:
            raise ModelError("coefficient array shape mismatch")
        knots.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def t0(self):
        return float(self.knots[0])

    @property
    def t1(self):
        return float(self.knots[-1])


def _poly_derivs_all(C, tau, order):
    """Values and derivatives through `order` of polynomials with coefficient
    rows C (dim x ncoef), evaluated by Horner on successively differentiated
    coefficients."""
    dim, n = C.shape
    out = np.empty((dim, order + 1))
    D = C
    for k in range(order + 1):
        if D.shape[1] == 0:
            out[:, k:] = 0.0
            break
        acc = D[:, -1].copy()
        for i in range(D.shape[1] - 2, -1, -1):
            acc *= tau
            acc += D[:, i]
        out[:, k] = acc
        D = D[:, 1:] * np.arange(1, D.shape[1])
    return out


def evaluate(traj: FlatTrajectory, t: float, order: int = 4) -> FlatPoint:
    """Evaluate the trajectory and its exact polynomial derivatives.

    Angle components are wrapped in the returned value only.
    """
    if order < 0 or order > 4:
        raise ModelError("derivative order must be between 0 and 4")
    eps = 1e-9 * max(1.0, abs(traj.t1 - traj.t0))
    if t < traj.t0 - eps or t > traj.t1 + eps:
        raise ModelError(f"time {t} outside trajectory range "
                         f"[{traj.t0}, {traj.t1}]")
    t = min(max(t, traj.t0), traj.t1)
    k = int(np.searchsorted(traj.knots, t, side="right")) - 1
    k = min(max(k, 0), traj.knots.size - 2)
    tau = t - traj.knots[k]
    rows = _poly_derivs_all(traj.coeffs[k], tau, order)
    value = rows[:, 0].copy()
    for i in GROUP_ANGLE_IDX[traj.group_kind]:
        value[i] = wrap_angle(value[i])
    return FlatPoint(GroupElement(traj.group_kind, value),
                     tuple(rows[:, 1 + j] for j in range(order)))


def snap_cost(traj: FlatTrajectory) -> float:
    """Integral of the squared 4th derivative summed over components."""
    total = 0.0
    deg = traj.coeffs.shape[2] - 1
    for k in range(traj.coeffs.shape[0]):
        T = traj.knots[k + 1] - traj.knots[k]
        H = _snap_hessian(deg, T)
        for d in range(traj.coeffs.shape[1]):
            c = traj.coeffs[k, d]
            total += c @ H @ c
    return float(total)


def _fact_ratio(i, k):
    """i! / (i - k)! (zero when i < k)."""
    if i < k:
        return 0.0
    out = 1.0
    for j in range(i, i - k, -1):
        out *= j
    return out


def _deriv_row(deg, k, tau):
    row = np.zeros(deg + 1)
    for i in range(k, deg + 1):
        row[i] = _fact_ratio(i, k) * tau ** (i - k)
    return row


def _snap_hessian(deg, T):
    H = np.zeros((deg + 1, deg + 1))
    for i in range(4, deg + 1):
        for j in range(4, deg + 1):
            H[i, j] = (_fact_ratio(i, 4) * _fact_ratio(j, 4)
                       * T ** (i + j - 7) / (i + j - 7))
    return H


def _unwrap_waypoints(kind, points):
    pts = np.array(points, dtype=float)
    for i in GROUP_ANGLE_IDX[kind]:
        col = pts[:, i]
        for k in range(1, col.size):
            col[k] = col[k - 1] + wrap_angle(col[k] - col[k - 1])
        pts[:, i] = col
    return pts


def min_snap(kind: str, times, points, boundary="rest") -> FlatTrajectory:
    """Piecewise-polynomial interpolant minimizing the snap integral.

    Args:
        kind: group kind of the flat output.
        times: strictly increasing waypoint times (>= 2).
        points: per-waypoint component rows (GroupElement data or arrays).
        boundary: "rest" (zero velocity/acceleration/jerk at both ends) or a
            dict {"start": [v, a, j, s], "end": [...]} of derivative rows
            pinning orders 1..4.

    The quadratic program is solved through its KKT system; the constraint
    blocks are shared across components, so one factorization serves them all.
    """
    times = np.array(times, dtype=float).reshape(-1)
    if times.size < 2:
        raise ModelError("need at least two waypoints")
    if np.any(np.diff(times) <= 0):
        raise ModelError("waypoint times must be strictly increasing")
    rows = []
    for p in points:
        data = p.data if isinstance(p, GroupElement) else np.asarray(p, dtype=float)
        rows.append(np.array(data, dtype=float).reshape(-1))
    pts = np.stack(rows, axis=0)
    dim = GROUP_DIM[kind]
    if pts.shape != (times.size, dim):
        raise ModelError(f"expected {times.size} x {dim} waypoint array")
    pts = _unwrap_waypoints(kind, pts)

    if boundary == "rest":
        deg = REST_DEGREE
        start_derivs = end_derivs = np.zeros((3, dim))
    else:
        deg = PINNED_DEGREE
        try:
            start_derivs = np.array(boundary["start"], dtype=float).reshape(4, dim)
            end_derivs = np.array(boundary["end"], dtype=float).reshape(4, dim)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(
                'boundary must be "rest" or {"start": 4 derivative rows, '
                '"end": 4 derivative rows}') from exc

    n_seg = times.size - 1
    n_coef = deg + 1
    n_var = n_seg * n_coef
    n_bnd = start_derivs.shape[0]

    a_rows, b_rows = [], []

    def add(row_seg, seg_index, rhs_row):
        row = np.zeros(n_var)
        row[seg_index * n_coef:(seg_index + 1) * n_coef] = row_seg
        a_rows.append(row)
        b_rows.append(rhs_row)

    for k in range(n_seg):
        T = times[k + 1] - times[k]
        add(_deriv_row(deg, 0, 0.0), k, pts[k])
        add(_deriv_row(deg, 0, T), k, pts[k + 1])
    for k in range(n_seg - 1):
        T = times[k + 1] - times[k]
        for order in range(1, 5):
            row = np.zeros(n_var)
            row[k * n_coef:(k + 1) * n_coef] = _deriv_row(deg, order, T)
            row[(k + 1) * n_coef:(k + 2) * n_coef] = -_deriv_row(deg, order, 0.0)
            a_rows.append(row)
            b_rows.append(np.zeros(dim))
    for order in range(1, n_bnd + 1):
        add(_deriv_row(deg, order, 0.0), 0, start_derivs[order - 1])
        add(_deriv_row(deg, order, times[-1] - times[-2]), n_seg - 1,
            end_derivs[order - 1])

    A = np.stack(a_rows, axis=0)
    b = np.stack(b_rows, axis=0)
    H = np.zeros((n_var, n_var))
    for k in range(n_seg):
        T = times[k + 1] - times[k]
        sl = slice(k * n_coef, (k + 1) * n_coef)
        H[sl, sl] = _snap_hessian(deg, T)

    m = A.shape[0]
    KKT = np.zeros((n_var + m, n_var + m))
    KKT[:n_var, :n_var] = H
    KKT[:n_var, n_var:] = A.T
    KKT[n_var:, :n_var] = A
    rhs = np.concatenate([np.zeros((n_var, dim)), b], axis=0)
    try:
        sol = np.linalg.solve(KKT, rhs)
    except np.linalg.LinAlgError as exc:
        raise ModelError("singular interpolation system (duplicate or "
                         "degenerate waypoint times)") from exc
    coeffs = np.empty((n_seg, dim, n_coef))
    for k in range(n_seg):
        for d in range(dim):
            coeffs[k, d] = sol[k * n_coef:(k + 1) * n_coef, d]
    return FlatTrajectory(kind, times, coeffs)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def trajectory_to_dict(traj: FlatTrajectory) -> dict:
    return {
        "group_kind": traj.group_kind,
        "knots": traj.knots.tolist(),
        "coeffs": traj.coeffs.tolist(),
    }


def trajectory_from_dict(doc: dict) -> FlatTrajectory:
    try:
        return FlatTrajectory(doc["group_kind"], np.array(doc["knots"]),
                              np.array(doc["coeffs"]))
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed trajectory document: {exc}") from exc


def save_trajectory(path, traj: FlatTrajectory):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trajectory_to_dict(traj), fh, sort_keys=True)
        fh.write("\n")


def load_trajectory(path) -> FlatTrajectory:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read trajectory file {path}: {exc}") from exc
    return trajectory_from_dict(doc)


def load_waypoints(path) -> dict:
    """Waypoint file: {"times": [...], "points": [[...], ...],
    "boundary": "rest" | {"start": ..., "end": ...}}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read waypoint file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError("waypoint file must hold a JSON object")
    unknown = set(doc) - {"times", "points", "boundary"}
    if unknown:
        raise ModelError(f"unknown waypoint-file key(s): {sorted(unknown)}")
    if "times" not in doc or "points" not in doc:
        raise ModelError('waypoint file needs "times" and "points"')
    return {"times": doc["times"], "points": doc["points"],
            "boundary": doc.get("boundary", "rest")}
