"""Core value types: charts, configuration points, group elements, sections,
trivializations, and the mechanical-system model record.

Conventions
-----------
* Coordinate charts store plain coordinate vectors; angle-like coordinates
  are wrapped to [-pi, pi) at construction.
* The body-frame chart for a rigid body in space stores 12 numbers: the world
  position (3) followed by the rotation matrix row-major (9).  Tangent and
  cotangent components on that chart are 6-vectors (v_body, omega_body).
* Group elements are minimal coordinate tuples; angle components wrap.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .so3 import det3, orthonormality_defect

FRAME_COORDINATE = "coordinate"
FRAME_BODY = "body_frame"

R2 = "R2"
SE2 = "SE2"
R3XS1 = "R3xS1"

GROUP_DIM = {R2: 2, SE2: 3, R3XS1: 4}
# indices of angle-like components per group kind
GROUP_ANGLE_IDX = {R2: (), SE2: (2,), R3XS1: (3,)}


class ModelError(ValueError):
    """Raised when a system model is structurally invalid (bad parameters,
    non-SPD metric, malformed model file)."""


class ChartDomainError(RuntimeError):
    """Raised when a shape leaves the domain of a local section."""


class ShapeSolveError(RuntimeError):
    """Newton shape solve failed to converge.

    Attributes:
        best: best iterate found.
        residual_norm: constraint norm at the best iterate.
    """

    def __init__(self, message, best=None, residual_norm=None):
        super().__init__(message)
        self.best = best
        self.residual_norm = residual_norm


class SingularShapeError(ShapeSolveError):
    """The implicit dynamics are singular at the requested tuple, as happens
    in free fall where the constraint loses rank."""


def wrap_angle(x):
    """Wrap to [-pi, pi)."""
    if isinstance(x, float) or isinstance(x, int):
        return (x + np.pi) % (2.0 * np.pi) - np.pi
    return np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class Chart:
    name: str
    dim: int
    frame_kind: str = FRAME_COORDINATE
    wrap_mask: tuple = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ModelError(f"chart dimension must be >= 1, got {self.dim}")
        if self.frame_kind not in (FRAME_COORDINATE, FRAME_BODY):
            raise ModelError(f"unknown frame kind {self.frame_kind!r}")
        if len(self.wrap_mask) != self.dim:
            raise ModelError("wrap_mask length must equal chart dim")
        object.__setattr__(self, "_angle_idx",
                           tuple(i for i, w in enumerate(self.wrap_mask) if w))

    @property
    def angle_idx(self):
        return self._angle_idx

    @property
    def vel_dim(self):
        """Dimension of tangent vectors on this chart."""
        return 6 if self.frame_kind == FRAME_BODY else self.dim


@dataclass(frozen=True)
class ConfigPoint:
    chart: Chart
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1)
        if coords.shape[0] != self.chart.dim:
            raise ModelError(
                f"expected {self.chart.dim} coordinates, got {coords.shape[0]}")
        for i in self.chart.angle_idx:
            c = coords[i]
            if c < -np.pi or c >= np.pi:
                coords[i] = wrap_angle(float(c))
        if self.chart.frame_kind == FRAME_BODY:
            R = coords[3:12].reshape(3, 3)
            if orthonormality_defect(R) > 1e-9 or abs(det3(R) - 1.0) > 1e-9:
                raise ModelError("rotation block is not a rotation matrix")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    # body-frame accessors
    @property
    def position(self):
        return self.coords[0:3]

    @property
    def rotation(self):
        return self.coords[3:12].reshape(3, 3)


@dataclass(frozen=True)
class TangentVec:
    at: ConfigPoint
    comps: np.ndarray

    def __post_init__(self):
        comps = np.array(self.comps, dtype=float).reshape(-1)
        if comps.shape[0] != self.at.chart.vel_dim:
            raise ModelError(
                f"expected {self.at.chart.vel_dim} components, got {comps.shape[0]}")
        comps.setflags(write=False)
        object.__setattr__(self, "comps", comps)


@dataclass(frozen=True)
class CotangentVec:
    at: ConfigPoint
    comps: np.ndarray

    def __post_init__(self):
        comps = np.array(self.comps, dtype=float).reshape(-1)
        if comps.shape[0] != self.at.chart.vel_dim:
            raise ModelError(
                f"expected {self.at.chart.vel_dim} components, got {comps.shape[0]}")
        comps.setflags(write=False)
        object.__setattr__(self, "comps", comps)


@dataclass(frozen=True)
class MetricField:
    """Kinetic-energy metric: q -> SPD matrix in the chart frame.

    `partials`, when given, maps q to the stacked coordinate derivatives
    dM/dq^k with shape (n, n, n) indexed [i, j, k]; only meaningful on
    coordinate charts.
    """
    eval: Callable[[ConfigPoint], np.ndarray]
    partials: Optional[Callable[[ConfigPoint], np.ndarray]] = None


@dataclass(frozen=True)
class GroupElement:
    kind: str
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float).reshape(-1)
        if self.kind not in GROUP_DIM:
            raise ModelError(f"unknown group kind {self.kind!r}")
        if data.shape[0] != GROUP_DIM[self.kind]:
            raise ModelError(
                f"{self.kind} element needs {GROUP_DIM[self.kind]} numbers")
        for i in GROUP_ANGLE_IDX[self.kind]:
            c = data[i]
            if c < -np.pi or c >= np.pi:
                data[i] = wrap_angle(float(c))
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self):
        return GROUP_DIM[self.kind]


@dataclass(frozen=True)
class LieAlgebraVec:
    kind: str
    comps: np.ndarray

    def __post_init__(self):
        comps = np.array(self.comps, dtype=float).reshape(-1)
        if comps.shape[0] != GROUP_DIM[self.kind]:
            raise ModelError(
                f"{self.kind} algebra vector needs {GROUP_DIM[self.kind]} numbers")
        comps.setflags(write=False)
        object.__setattr__(self, "comps", comps)


SHAPE_CIRCLE = "circle"
SHAPE_SPHERE = "sphere"


@dataclass(frozen=True)
class ShapePoint:
    chart: str
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1)
        if self.chart == SHAPE_SPHERE:
            n = np.linalg.norm(coords)
            if coords.shape[0] != 3 or abs(n - 1.0) > 1e-10:
                raise ModelError("sphere shape must be a unit 3-vector")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True)
class SectionMap:
    """Smooth right inverse of the bundle projection on a shape domain.

    `eval` maps a shape point to a configuration; `tangent(s, sdot)` returns
    the chart components of the section differential applied to a shape
    velocity (ambient 3-vector tangent to the sphere, or a scalar rate for
    circle shapes).  `excluded_pole` marks the single shape removed from the
    domain for local sections on the sphere.
    """
    name: str
    eval: Callable[[ShapePoint], ConfigPoint]
    tangent: Callable[[ShapePoint, np.ndarray], np.ndarray]
    excluded_pole: Optional[np.ndarray] = None
    domain_margin: float = 1e-9

    def contains(self, s: ShapePoint, margin: float = None) -> bool:
        if self.excluded_pole is None:
            return True
        margin = self.domain_margin if margin is None else margin
        return float(np.linalg.norm(s.coords - self.excluded_pole)) > margin

    def require_contains(self, s: ShapePoint):
        if not self.contains(s):
            raise ChartDomainError(
                f"shape {np.array2string(s.coords, precision=6)} is at or near "
                f"the excluded pole of section {self.name!r}; switch charts")


@dataclass(frozen=True)
class Trivialization:
    """Equivariant splitting q -> (shape, group element) built from a section.

    `group_part` is the group-valued flat-output map; `group_part_velocity`
    returns d/dt of its coordinates along a tangent vector (closed form for
    the built-in systems).  `implicit_fast`, when present, evaluates the
    reduced feasibility constraint E(s; g, xi, xidot) in closed form using the
    displayed unactuated basis.
    """
    name: str
    section: SectionMap
    group_part: Callable[[ConfigPoint], GroupElement]
    group_part_velocity: Optional[Callable[[ConfigPoint, np.ndarray], np.ndarray]] = None
    implicit_fast: Optional[Callable] = None


@dataclass(frozen=True)
class Atlas:
    """Collection of trivializations covering the shape space, with a
    hysteresis switching rule and the yaw reinterpretation between charts.

    `switch_rule(shape, active_index)` returns the next active index.
    `anchor_offset[i](shape)` is the angle added to the planned group angle
    so that chart i reproduces the same physical configuration as chart 0.
    """
    trivializations: tuple
    switch_rule: Callable[[ShapePoint, int], int]
    hysteresis_band: float
    anchor_offset: tuple = ()

    def offset(self, index: int, s: ShapePoint) -> float:
        if not self.anchor_offset:
            return 0.0
        return float(self.anchor_offset[index](s))


@dataclass(frozen=True)
class SystemModel:
    """Complete description of one unconstrained mechanical system with
    (broken) symmetry: chart, kinetic-energy metric, potential, control
    codistribution, group action, bundle projection and sections.

    Callable field signatures (all components in the chart frame):
        potential(q) -> float
        potential_differential(q) -> covector components, optional closed form
        control_codistribution(q) -> (vel_dim, rank) covector columns
        action(g, q) -> ConfigPoint
        action_tangent(g, comps) -> comps          pushforward of Phi_g
        generator(xi, q) -> comps                  infinitesimal generator
        projection(q) -> ShapePoint
        projection_tangent(q, comps) -> shape velocity
        sample_config(rng) -> ConfigPoint          random configuration
        shape_solver_closed(g, xi, xidot) -> shape coords or None
        uq_display(q) -> (vel_dim, u)              reference unactuated basis
    """
    name: str
    chart: Chart
    metric: MetricField
    potential: Callable
    control_codistribution: Callable
    group_kind: str
    action: Callable
    action_tangent: Callable
    generator: Callable
    projection: Callable
    projection_tangent: Callable
    shape_dim: int
    shape_chart: str
    control_rank: int
    sections: tuple
    trivializations: tuple
    params: dict
    sample_config: Callable
    potential_differential: Optional[Callable] = None
    body_connection: Optional[np.ndarray] = None
    shape_solver_closed: Optional[Callable] = None
    uq_display: Optional[Callable] = None
    atlas: Optional[Atlas] = None
    constant_metric: bool = False

    @property
    def group_dim(self):
        return GROUP_DIM[self.group_kind]

    @property
    def vel_dim(self):
        return self.chart.vel_dim

    def point(self, coords) -> ConfigPoint:
        return ConfigPoint(self.chart, np.asarray(coords, dtype=float))

    def tangent(self, q: ConfigPoint, comps) -> TangentVec:
        return TangentVec(q, np.asarray(comps, dtype=float))

    def shape(self, coords) -> ShapePoint:
        return ShapePoint(self.shape_chart, np.asarray(coords, dtype=float))
