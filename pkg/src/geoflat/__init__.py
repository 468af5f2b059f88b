"""geoflat: symmetry-derived flat outputs for unconstrained mechanical
systems on principal bundles.

The library verifies the orthogonality and regularity conditions under which
the group variables of a bundle trivialization are a flat output, constructs
the flat-output maps from sections, plans smooth trajectories in flat space,
reconstructs full state and input trajectories, and verifies them by forward
simulation.
"""

from .model import (Atlas, Chart, ChartDomainError, ConfigPoint, CotangentVec,
                    GroupElement, LieAlgebraVec, MetricField, ModelError,
                    SectionMap, ShapePoint, ShapeSolveError,
                    SingularShapeError, SystemModel, TangentVec,
                    Trivialization, wrap_angle)
from .geometry import (christoffel_at, dynamics_residual, flat_iso,
                       grad_potential, kinetic_energy, metric_at, sharp,
                       total_energy)
from .bundle import (act, act_tangent, compose, group_distance, group_exp,
                     horizontal_lift, identity, infinitesimal_generator,
                     inverse, project, spatial_velocity, trivialize,
                     untrivialize, velocity_split)
from .flatness import (DistributionSample, ImplicitDynamicsEval,
                       RegularityReport, check_delta_equivariance,
                       check_dim_condition, check_orthogonality,
                       check_regularity, implicit_dynamics,
                       implicit_dynamics_full, unactuated_basis,
                       underactuation_distribution)
from .flatmap import (FlatPoint, ReconstructedSample, flat_output,
                      reconstruct, reconstruct_atlas, reconstruct_full,
                      solve_shape, solve_shape_multistart, taylor_shift)
from .planner import (FlatTrajectory, evaluate, load_trajectory,
                      load_waypoints, min_snap, save_trajectory, snap_cost)
from .sim import (RoundTripReport, StateTrajectory, energy_series, integrate,
                  roundtrip_verify, state_distance, write_states_csv)
from .systems import (build_system, load_model, make_manipulator,
                      make_quadrotor, make_rocket)

__version__ = "0.1.0"

__all__ = [
    "Atlas", "Chart", "ChartDomainError", "ConfigPoint", "CotangentVec",
    "DistributionSample", "FlatPoint", "FlatTrajectory", "GroupElement",
    "ImplicitDynamicsEval", "LieAlgebraVec", "MetricField", "ModelError",
    "ReconstructedSample", "RegularityReport", "RoundTripReport",
    "SectionMap", "ShapePoint", "ShapeSolveError", "SingularShapeError",
    "StateTrajectory", "SystemModel", "TangentVec", "Trivialization",
    "act", "act_tangent", "build_system", "check_delta_equivariance",
    "check_dim_condition", "check_orthogonality", "check_regularity",
    "christoffel_at", "compose", "dynamics_residual", "energy_series",
    "evaluate", "flat_iso", "flat_output", "grad_potential", "group_distance",
    "group_exp", "horizontal_lift", "identity", "implicit_dynamics",
    "implicit_dynamics_full", "infinitesimal_generator", "integrate",
    "inverse", "kinetic_energy", "load_model", "load_trajectory",
    "load_waypoints", "make_manipulator", "make_quadrotor", "make_rocket",
    "metric_at", "min_snap", "project", "reconstruct", "reconstruct_atlas",
    "reconstruct_full", "roundtrip_verify", "save_trajectory", "sharp",
    "snap_cost", "solve_shape", "solve_shape_multistart", "spatial_velocity",
    "state_distance", "taylor_shift", "total_energy", "trivialize",
    "unactuated_basis", "underactuation_distribution", "untrivialize",
    "velocity_split", "wrap_angle", "write_states_csv",
]
