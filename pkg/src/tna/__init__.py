"""Last-layer recalibration by tilt-and-average plus classical calibration maps."""

from .bundle import FeatureBundle, import_csv, load_bundle, make_synth_a, save_bundle, synth_generate
from .calibration import (
    EnsembleTemperatureMap,
    IdentityMap,
    IsotonicOvAMap,
    TemperatureMap,
    apply_map,
    fit_ets,
    fit_irova,
    fit_temperature,
    load_map,
    save_map,
)
from .core import (
    AveragedWeight,
    LastLayer,
    TiltPlan,
    confidence,
    logit_matrix,
    logits,
    mrc_trace,
    sample_beta,
    softmax,
    tilt_to_target,
    tna,
)
from .errors import (
    BundleError,
    ChecksumError,
    DomainError,
    FormatVersionError,
    SaturationError,
    TruncatedFileError,
    UnfittedMapError,
)
from .geometry import GivensFactor, TiltedTransform, angle_between, apply_givens, compose_transform, mrc
from .metrics import EvalReport, PredictionRecord, ReliabilityTable, adaece, ece, evaluate
from .rng import SeededRng
from .search import SearchResult, SearchSpec, data_efficiency_sweep, repeat_search, search_complete, search_sparse
from .verify import (
    MonteCarloModeReport,
    closed_form_mode_deg,
    emit_figure_curves,
    orthogonality_concentration,
    prop1_check,
    sample_on_cone,
    thm1_mode_check,
)

__version__ = "0.1.0"
