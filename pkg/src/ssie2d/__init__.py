"""2D TM single-source surface integral equation solver.

Penetrable regions are replaced by equivalent electric currents through
differential surface admittance operators; PEC regions carry physical
currents.  Both couple through one background EFIE.
"""

from .errors import (AssemblyError, BranchCutError, ContractError, GeometryError, MetricError,
                     ResonanceError, SceneParseError, SingularArgumentError, SSIEError,
                     TruncationError)
from .geometry import (C0, EPS0, MU0, VACUUM, BoundaryMesh, Circle, Material, PlaneWave, Polygon,
                       Rect, Region, Scene, build_scene, congruence_signature, load_scene,
                       mesh_boundary, scene_from_dict, scene_to_dict, wavelength, wavenumber)
from .operators import DsaoCache, dsao, surface_admittance
from .oracle import CylinderSpec, mie_fields, mie_rcs
from .postproc import (echo_width_db, far_field, near_field, optical_theorem_check,
                       relative_error_field, uniform_error)
from .solver import assemble_global, frequency_sweep, solve, solve_scene

__version__ = "0.1.0"
