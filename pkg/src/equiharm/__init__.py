"""Equivariant harmonic maps from a punctured disk into model CAT(0) spaces."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .construct import bridge_bound, bridge_map, gamma_family, interpolate_maps, prototype_map, pulled_boundary, wave_boundary
from .energy import discrete_energy, energy_report, loop_energy, modified_energy, tol_disc
from .errors import DomainError, NumericError
from .experiment import run_experiment
from .grid import CylinderGrid, EquivariantGridMap, make_grid
from .isometries import (
    EuclideanIsometry,
    MobiusIsometry,
    ProductIsometry,
    TreeElliptic,
    TreeTranslation,
    displacement_profile,
    e_rho,
    isometry_from_spec,
    translation_length,
)
from .solver import SolveOptions, solve_annulus, solve_punctured, two_start_uniqueness
from .spaces import Euclidean, HyperbolicPlane, MetricTree, Product, TreeShape, space_from_spec
from .verify import (
    CheckOutcome,
    check_density_decay,
    check_F_shape,
    check_harmonic,
    check_interpolation,
    check_log_growth,
    check_subharmonic_distance,
    check_sublog_growth,
)

__version__ = "0.1.0"
