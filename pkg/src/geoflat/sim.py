"""Forward integration of the forced geodesic equation and the round-trip
harness that closes the flatness loop: plan -> reconstruct inputs ->
integrate -> compare flat outputs.

Coordinate charts integrate their coordinates with classic RK4.  The rigid
body integrates position and velocity in vector space and the attitude on
the rotation group through per-step exponential coordinates, which keeps
orthonormality drift at machine precision.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import bundle, planner
from .flatmap import reconstruct_full
from .geometry import forward_acceleration, total_energy
from .model import (FRAME_BODY, ConfigPoint, GroupElement, ModelError,
                    ShapePoint, SystemModel, TangentVec, wrap_angle)
from .so3 import dexpinv, exp_so3, log_so3


@dataclass(frozen=True)
class StateTrajectory:
    """Time-sampled states and applied force coefficients.

    `coords` are raw chart coordinates (angles left unwrapped so the columns
    stay continuous); `vels` are chart-frame velocity components.
    """
    system: SystemModel
    times: np.ndarray
    coords: np.ndarray
    vels: np.ndarray
    inputs: np.ndarray

    def point(self, k: int) -> ConfigPoint:
        return ConfigPoint(self.system.chart, self.coords[k])

    def velocity(self, k: int) -> TangentVec:
        return TangentVec(self.point(k), self.vels[k])


def integrate(system: SystemModel, q0: ConfigPoint, qdot0: TangentVec,
              input_fn, dt: float, T: float) -> StateTrajectory:
    """Classic 4th-order Runge-Kutta on the first-order form of the forced
    geodesic equation; `input_fn(t)` returns force coefficients."""
    if dt <= 0 or T < dt:
        raise ModelError("need dt > 0 and T >= dt")
    n_steps = int(round(T / dt))
    times = np.array([k * dt for k in range(n_steps + 1)])
    if system.chart.frame_kind == FRAME_BODY:
        return _integrate_body(system, q0, qdot0, input_fn, dt, times)
    return _integrate_chart(system, q0, qdot0, input_fn, dt, times)


def _integrate_chart(system, q0, qdot0, input_fn, dt, times):
    n = system.chart.dim
    coords = np.empty((times.size, n))
    vels = np.empty((times.size, n))
    inputs = np.empty((times.size, system.control_rank))
    x = np.array(q0.coords, dtype=float)
    v = np.array(qdot0.comps, dtype=float)

    def rate(state, u):
        q = ConfigPoint(system.chart, state[:n])
        acc = forward_acceleration(system, q, state[n:], u)
        return np.concatenate([state[n:], acc])

    state = np.concatenate([x, v])
    for k, t in enumerate(times):
        coords[k] = state[:n]
        vels[k] = state[n:]
        u0 = np.asarray(input_fn(t), dtype=float)
        inputs[k] = u0
        if k == times.size - 1:
            break
        umid = np.asarray(input_fn(t + dt / 2.0), dtype=float)
        uend = np.asarray(input_fn(t + dt), dtype=float)
        k1 = rate(state, u0)
        k2 = rate(state + 0.5 * dt * k1, umid)
        k3 = rate(state + 0.5 * dt * k2, umid)
        k4 = rate(state + dt * k3, uend)
        state = state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return StateTrajectory(system, times, coords, vels, inputs)


def _integrate_body(system, q0, qdot0, input_fn, dt, times):
    coords = np.empty((times.size, 12))
    vels = np.empty((times.size, 6))
    inputs = np.empty((times.size, system.control_rank))
    x = np.array(q0.position, dtype=float)
    R = np.array(q0.rotation, dtype=float)
    v = np.array(qdot0.comps[0:3], dtype=float)
    w = np.array(qdot0.comps[3:6], dtype=float)

    def rate(state, R0, u):
        # state = (x, v, theta, omega); attitude R0 exp(theta^)
        xx, vv, th, ww = state[0:3], state[3:6], state[6:9], state[9:12]
        Rt = R0 @ exp_so3(th)
        q = ConfigPoint(system.chart, np.concatenate([xx, Rt.reshape(-1)]))
        acc = forward_acceleration(system, q, np.concatenate([vv, ww]), u)
        return np.concatenate([Rt @ vv, acc[0:3], dexpinv(th, ww), acc[3:6]])

    for k, t in enumerate(times):
        coords[k] = np.concatenate([x, R.reshape(-1)])
        vels[k] = np.concatenate([v, w])
        u0 = np.asarray(input_fn(t), dtype=float)
        inputs[k] = u0
        if k == times.size - 1:
            break
        umid = np.asarray(input_fn(t + dt / 2.0), dtype=float)
        uend = np.asarray(input_fn(t + dt), dtype=float)
        state = np.concatenate([x, v, np.zeros(3), w])
        k1 = rate(state, R, u0)
        k2 = rate(state + 0.5 * dt * k1, R, umid)
        k3 = rate(state + 0.5 * dt * k2, R, umid)
        k4 = rate(state + dt * k3, R, uend)
        state = state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        x, v, w = state[0:3], state[3:6], state[9:12]
        R = R @ exp_so3(state[6:9])
    return StateTrajectory(system, times, coords, vels, inputs)


def energy_series(traj: StateTrajectory) -> np.ndarray:
    return np.array([total_energy(traj.system, traj.point(k), traj.vels[k])
                     for k in range(traj.times.size)])


def state_distance(system: SystemModel, q1: ConfigPoint,
                   q2: ConfigPoint) -> float:
    """Chart-aware distance used for switch-continuity checks."""
    if system.chart.frame_kind == FRAME_BODY:
        dx = float(np.linalg.norm(q1.position - q2.position))
        dr = float(np.linalg.norm(log_so3(q1.rotation.T @ q2.rotation)))
        return dx + dr
    diff = q1.coords - q2.coords
    mask = np.array(system.chart.wrap_mask, dtype=bool)
    diff[mask] = wrap_angle(diff[mask])
    return float(np.linalg.norm(diff))


# ---------------------------------------------------------------------------
# round trip
# ---------------------------------------------------------------------------

@dataclass
class SwitchEvent:
    t: float
    from_chart: int
    to_chart: int
    continuity_error: float


@dataclass
class RoundTripReport:
    max_flat_error: float
    max_residual: float
    switch_events: list = field(default_factory=list)
    dt: float = 0.0
    n_samples: int = 0
    trajectory: StateTrajectory = None
    flat_errors: np.ndarray = None
    chart_indices: np.ndarray = None

    def to_dict(self) -> dict:
        return {
            "max_flat_error": self.max_flat_error,
            "max_residual": self.max_residual,
            "dt": self.dt,
            "n_samples": self.n_samples,
            "switch_events": [
                {"t": ev.t, "from_chart": ev.from_chart,
                 "to_chart": ev.to_chart,
                 "continuity_error": ev.continuity_error}
                for ev in self.switch_events],
        }


class _Reconstructor:
    """Memoized full reconstruction along a flat trajectory with atlas chart
    scheduling by hysteresis.

    Newton shape solves are seeded time-locally (from the caller-provided
    guess, falling back to the running chain) so that interleaved evaluation
    orders cannot hop between solution branches.
    """

    def __init__(self, system: SystemModel, traj: planner.FlatTrajectory,
                 dt_fd: float = 1e-4):
        self.system = system
        self.traj = traj
        self.dt_fd = dt_fd
        self.atlas = system.atlas
        self.cache = {}
        self.last_shape = None
        self.chart = 0

    def chart_for_shape(self, s: ShapePoint) -> int:
        self.chart = self.atlas.switch_rule(s, self.chart)
        return self.chart

    def sample(self, t: float, chart_index: int = 0, s_guess=None):
        key = (float(t), chart_index)
        if key in self.cache:
            return self.cache[key]
        y = planner.evaluate(self.traj, t, order=4)
        guess = s_guess if s_guess is not None else self.last_shape
        out = reconstruct_full(self.system, y, t=t, dt_fd=self.dt_fd,
                               chart_index=chart_index, s_guess=guess)
        self.last_shape = out.shape
        self.cache[key] = out
        return out


def roundtrip_verify(system: SystemModel, traj: planner.FlatTrajectory,
                     dt: float = 1e-3, dt_fd: float = 1e-4) -> RoundTripReport:
    """Reconstruct the initial state and input schedule from a flat
    trajectory, integrate forward, and report the largest group distance
    between the simulated flat output and the plan.

    Atlas systems log chart switches and the configuration mismatch between
    the outgoing and incoming chart at each switch instant.
    """
    recon = _Reconstructor(system, traj, dt_fd=dt_fd)
    T = traj.t1 - traj.t0
    n_steps = int(round(T / dt))
    times = np.array([traj.t0 + k * dt for k in range(n_steps + 1)])

    # schedule charts along the reference reconstruction, logging switches
    chart_indices = np.zeros(times.size, dtype=int)
    switch_events = []
    max_residual = 0.0
    prev_chart = 0
    ref_samples = []
    for k, t in enumerate(times):
        sample = recon.sample(t, chart_index=prev_chart)
        new_chart = recon.chart_for_shape(sample.shape)
        if new_chart != prev_chart:
            other = recon.sample(t, chart_index=new_chart)
            err = state_distance(system, sample.q, other.q)
            switch_events.append(SwitchEvent(float(t), prev_chart, new_chart, err))
            sample = other
            prev_chart = new_chart
        chart_indices[k] = prev_chart
        ref_samples.append(sample)
        max_residual = max(max_residual, sample.residual)

    def input_fn(t):
        # hold the chart of the step's left sample (both charts agree in the
        # overlap band) and seed the shape solve from that sample
        k = min(int(np.floor((t - traj.t0) / dt + 1e-9)), times.size - 1)
        return recon.sample(float(t), chart_index=int(chart_indices[k]),
                            s_guess=ref_samples[k].shape).force_coeffs

    first = ref_samples[0]
    sim = integrate(system, first.q, first.qdot, input_fn, dt, T)

    flat_errors = np.empty(times.size)
    for k, t in enumerate(times):
        q_sim = sim.point(k)
        idx = int(chart_indices[k])
        triv = system.atlas.trivializations[idx]
        got = triv.group_part(q_sim)
        want = planner.evaluate(traj, t, order=0).value
        offset = system.atlas.offset(idx, ref_samples[k].shape)
        if offset != 0.0:
            data = np.array(want.data, dtype=float)
            data[-1] = data[-1] + offset
            want = GroupElement(want.kind, data)
        flat_errors[k] = bundle.group_distance(got, want)
    return RoundTripReport(
        max_flat_error=float(flat_errors.max()),
        max_residual=float(max_residual),
        switch_events=switch_events,
        dt=dt, n_samples=times.size, trajectory=sim,
        flat_errors=flat_errors, chart_indices=chart_indices)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def write_states_csv(path, traj: StateTrajectory, flat_errors=None,
                     chart_indices=None, residuals=None):
    """Time series as CSV: t, chart coordinates, velocity components, force
    coefficients, and optional flat-error / chart columns."""
    system = traj.system
    n, m = traj.coords.shape[1], traj.vels.shape[1]
    header = (["t"] + [f"q{i}" for i in range(n)] + [f"qd{i}" for i in range(m)]
              + [f"f{i}" for i in range(traj.inputs.shape[1])])
    if residuals is not None:
        header.append("residual")
    if flat_errors is not None:
        header.append("flat_error")
    if chart_indices is not None:
        header.append("chart")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(traj.times.size):
            row = ([repr(float(traj.times[k]))]
                   + [repr(float(x)) for x in traj.coords[k]]
                   + [repr(float(x)) for x in traj.vels[k]]
                   + [repr(float(x)) for x in traj.inputs[k]])
            if residuals is not None:
                row.append(repr(float(residuals[k])))
            if flat_errors is not None:
                row.append(repr(float(flat_errors[k])))
            if chart_indices is not None:
                row.append(str(int(chart_indices[k])))
            writer.writerow(row)
