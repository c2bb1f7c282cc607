"""EEG source localization with eLORETA and lead-field-corrected ReLORETA.

Includes an analytic spherical forward simulator, a forward-model
perturbation engine, binary matrix I/O, and a benchmark harness.
"""

from .eloreta import (
    DEFAULT_ALPHA,
    EloretaState,
    SourceEstimate,
    eloreta_apply,
    eloreta_weights,
    kernel_backend,
    localize,
    reconstruction_error,
)
from .forward import (
    EegEpoch,
    ErpSpec,
    ForwardModelError,
    LeadField,
    NoiseSpec,
    SimulationError,
    assemble_leadfield,
    brown_noise,
    erp_waveform,
    leadfield_column,
    leadfield_subset,
    simulate_epoch,
    snr_db,
)
from .geometry import (
    DipoleSourceSpec,
    ElectrodeArray,
    GeometryError,
    HeadModel,
    SourceGrid,
    build_sphere_grid,
    extended_source_dipoles,
    geometry_from_json,
    geometry_to_json,
    standard_1020_electrodes,
)
from .linalg import NumericalError, centering_matrix, pinv, sym_sqrt
from .matio import MatrixFormatError, read_matrix, write_matrix
from .perturb import (
    PerturbationSpec,
    build_inverse_problem,
    distort_model,
    jitter_electrodes,
    tilt_electrodes,
)
from .reloreta import (
    IterationRecord,
    ReloretaConfig,
    ReloretaTrace,
    lm_step,
    ndre,
    reloreta_gradient,
    run_reloreta,
    updated_leadfield,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ALPHA", "EloretaState", "SourceEstimate", "eloreta_apply",
    "eloreta_weights", "kernel_backend", "localize", "reconstruction_error",
    "EegEpoch", "ErpSpec", "ForwardModelError", "LeadField", "NoiseSpec",
    "SimulationError", "assemble_leadfield", "brown_noise", "erp_waveform",
    "leadfield_column", "leadfield_subset", "simulate_epoch", "snr_db",
    "DipoleSourceSpec", "ElectrodeArray", "GeometryError", "HeadModel",
    "SourceGrid", "build_sphere_grid", "extended_source_dipoles",
    "geometry_from_json", "geometry_to_json", "standard_1020_electrodes",
    "NumericalError", "centering_matrix", "pinv", "sym_sqrt",
    "MatrixFormatError", "read_matrix", "write_matrix",
    "PerturbationSpec", "build_inverse_problem", "distort_model",
    "jitter_electrodes", "tilt_electrodes",
    "IterationRecord", "ReloretaConfig", "ReloretaTrace", "lm_step", "ndre",
    "reloreta_gradient", "run_reloreta", "updated_leadfield",
    "__version__",
]
