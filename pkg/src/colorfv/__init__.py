"""colorfv: finite volume solver for scalar conservation laws coupled
across material regions by a vector-valued color field.

The package builds polygonal meshes with dual subcell geometry, blends
per-material conservation laws into one model through edge-averaged
color weights, advances a well-balanced subcell reconstruction scheme
with monotone fluxes, and certifies runs with maximum-principle,
entropy, oscillation, and front-speed diagnostics.
"""

from .coupling import (Annulus, ColorField, CouplingError, CouplingModel,
                       Difference, Disk, DomainLayout, EmptyRegion,
                       FluxFamily, GammaMap, HalfPlane, LayoutError,
                       Triangle, build_color_field, dflux_dw,
                       flux_of_conserved, invert_conserved,
                       invert_conserved_weighted, make_linear_coupling,
                       smoothstep)
from .diagnostics import (DiagnosticsLog, EntropyPair, FrontTrack,
                          MeasurementError, check_well_balanced,
                          entropy_residuals, front_speed,
                          max_principle_margin, oscillation_increment,
                          quadratic_entropy)
from .families import (FamilyError, build_flux, build_gamma, build_initial,
                       build_region, parse_call)
from .flux import (FluxError, NumericalFlux, directional_flux, godunov,
                   rusanov, wave_speed_bound)
from .io import (ConfigError, CouplingSpec, LayoutSpec, MeshSpec, RunConfig,
                 RunSpec, SchemeSpec, parse_config, parse_config_text,
                 serialize_config, write_diagnostics_csv, write_snapshot)
from .mesh import (BOUNDARY, BetaRule, DualGeometry, MeshError,
                   MeshQualityReport, PrimalMesh, build_cartesian_mesh,
                   derive_dual, load_mesh, mesh_from_cells, save_mesh,
                   validate_mesh)
from .numerics import RootError, adaptive_gauss, gauss_rule, solve_increasing
from .presets import PRESET_NAMES, preset_config, preset_text
from .scheme import (InitQuadrature, RunResult, SchemeError, Snapshot,
                     SolverState, StepRecord, assemble, compute_dt,
                     init_state, local_cfl_numbers, record_identity_errors,
                     reconstruct_subcell, run, step, widened_range)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
