"""Series-reversion reconstruction for electrical impedance tomography.

Forward models (FE continuum, complete electrode, exact concentric-disk
spectral), their measurement-matrix derivatives, and a backend-agnostic
series-reversion engine with truncated-SVD regularisation up to fourth
order (conjectural general recursion beyond).
"""

__version__ = "0.1.0"

from .mesh import (CoefficientField, Mesh, MeshError, PixelPartition,
                   build_pixel_partition, concentric_partition,
                   generate_disk_mesh, refine_mesh)
from .matrices import DerivativeMatrix, NDMatrix
from .reversion import (ReversionConfig, ReversionError, ReversionResult,
                        apply_contrast_cutoff, compute_F1, general_recursion_step,
                        pipeline_terms,
                        recursion_terms, run_reversion, theorem_terms,
                        truncated_pseudoinverse)
from .diskmodes import (ConcentricPerturbation, ModeTriple, SpanSelection,
                        SpectralBackend, apply_P_eta, dlambda_eigenvalue,
                        error_sweep, nd_eigenvalue, neumann_mode,
                        reconstruct_kappa, trace_mode)

__all__ = [
    "CoefficientField", "Mesh", "MeshError", "PixelPartition",
    "build_pixel_partition", "concentric_partition", "generate_disk_mesh",
    "refine_mesh", "DerivativeMatrix", "NDMatrix", "ReversionConfig",
    "ReversionError", "ReversionResult", "apply_contrast_cutoff",
    "compute_F1", "general_recursion_step", "pipeline_terms",
    "recursion_terms", "run_reversion",
    "theorem_terms", "truncated_pseudoinverse", "ConcentricPerturbation",
    "ModeTriple", "SpanSelection", "SpectralBackend", "apply_P_eta",
    "dlambda_eigenvalue", "error_sweep", "nd_eigenvalue", "neumann_mode",
    "reconstruct_kappa", "trace_mode", "__version__",
]
