"""Boundary-anchored hyperbolic metrics on strictly pseudoconvex domains.

The package builds a Gromov hyperbolic geometry on a bounded domain from
boundary data alone: a distance to the boundary, a projection onto it, a
sampled boundary metric, and the collar paths that tie them together.
On top of that sit a closed-formula distance ``g``, its geodesic
envelope ``d``, an interior Finsler estimate with its sandwich fit, the
four-point and boundary-at-infinity apparatus, and orbit classification
for domain self-maps.
"""

from .errors import (
    HypkobError, ConfigError, PointOutsideDomain, ProjectionDiverged,
    CurvatureEstimateFailed, OutsideShellRange, DerivativeEvaluationFailed,
    DimensionTooSmall, DegenerateContact, ContactUnavailable,
    GraphDisconnected, ImageOffBoundary, ProjectionsDiffer, HeightsDiffer,
    RefinementStalled, PrefixTooShort, NotStabilized, ZeroVector,
    PointOutsideShellRegion, MapEscapedDomain,
)
from .domain import (
    ScalarField, Domain, HeightProjection, ReachEstimate, estimate_reach,
    reach_details, height, project_boundary, foot_on_shell,
    principal_curvatures, ball_field, ellipsoid_field, superellipsoid_field,
    polynomial_field,
)
from .structures import (
    StructureField, standard_structure, check_structure, alpha_vec, eta_vec,
    two_form_on, levi_form, levi_matrix, ConvexityReport,
    check_strict_convexity, ContactData, contact_at, contact_batch,
)
from .boundary import (
    BoundaryGraph, build_graph, d_H, boundary_geodesic, BoundaryMap,
    LipschitzReport, lipschitz_estimate, lipschitz_details,
)
from .metrics import (
    MetricFamily, MetricFunctional, Polyline, PreparedPoints,
    collar_profile_distance, g_value, d_value, vertical_path,
    horizontal_path, composite_upper_path, geodesic, path_length,
    estimate_C, lift_dipping_path, dilation,
)
from .kobayashi import (
    TangentSplit, split_vector, split_batch, kobayashi_speed,
    kobayashi_speed_batch, k_infinitesimal, kobayashi_length, k_length,
    KobayashiMetric, k_distance, QIReport, quasi_isometry_fit, qi_check,
)
from .gromov import (
    BoxSampler, BoundaryBiasedSampler, distance_matrix, HyperbolicityReport,
    four_point_from_matrix, four_point_delta, gromov_product,
    ConvergenceReport, converges_at_infinity, BoundaryPointRecord,
    normal_record, boundary_product, boundary_identification,
    triangle_thinness,
)
from .dynamics import (
    DomainMap, identity_map, affine_contraction, rotation_map, map_from_spec,
    OrbitRecord, iterate, iterate_many, check_semicontraction, OrbitVerdict,
    classify_orbit,
)
from .config import RunConfig, Workspace, load_config, build_workspace

__version__ = "0.1.0"
