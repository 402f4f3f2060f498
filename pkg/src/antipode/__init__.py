"""Distances, diameters and antipodal displacements on Cheeger-deformed spheres,
Berger spheres and spherical joins."""

from .errors import (AntipodeError, ConvergenceError, DomainError, GraphError, GridError,
                     ParameterError, SingularOrbitError, StepSizeError)
from .metrics import (DiagonalMetric, SphereShape, WarpProfile, max_orbit_diameter, orbit_diameter,
                      smoothness_check, warp_eval)
from .reduced import DistanceResult, ReducedPoint, round_distance
from .geodesic import GeodesicState, ShootingOptions, integrate_geodesic, shoot_distance
from .oracle import GridGraph, build_grid, grid_distance, refined_distance
from .analysis import (AmbientPoint, VerificationReport, collapse_curve, displacement_profile, distance,
                       estimate_diameter, reduce_pair, verify_theorem)
from .berger import (BergerParams, berger_diameter, figure1_table, half_hopf, lambda1, li_functional,
                     s3_numeric_diameter)
from .join import JoinParams, JoinPoint, join_diameter, join_displacement, join_distance

__version__ = "0.1.0"
