"""Eye-tracking signal quality from raw gaze-vector recordings."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    GazeAngles,
    GazeSample,
    GazeVector,
    Recording,
    TargetStep,
    Task,
    angles_to_vector,
    to_angles,
)
from .exceptions import (  # noqa: E402
    AnalysisError,
    DataError,
    DomainError,
    EstimationError,
    GazeQualityError,
    InvalidVectorError,
    ParseError,
    RankDeficiencyError,
    SelectionError,
    ValidationError,
)
from .ingestion import load_dataset, load_manifest, parse_recording, validate_recording  # noqa: E402
from .metrics import (  # noqa: E402
    aggregate_metric,
    segment_accuracy,
    segment_precision,
    temporal_stats,
    vector_accuracy,
)
from .oracle import OracleConfig, generate_grid_recording, generate_saccades_recording  # noqa: E402
from .preprocessing import (  # noqa: E402
    StableFixationExtractor,
    error_profile,
    estimate_latency,
    extract_segments,
    select_stable_window,
)
from .recalibration import (  # noqa: E402
    AffineRecalibrator,
    CalibrationModel,
    apply_calibration,
    fit_calibration,
    recalibrate_recording,
)
from .regression import (  # noqa: E402
    CrosstalkSelector,
    OrdinaryLeastSquares,
    crosstalk,
    linearity,
    ols_fit,
    t_quantile,
)
