"""Multi-objective inactive subspaces and blade envelopes for tolerance design."""

from .config import PipelineConfig
from .covariance import (
    ActiveSubspace,
    GradientCovariance,
    WeightVector,
    scalar_covariance,
    smooth_weights,
    subspace_from_covariance,
    vector_covariance,
)
from .envelope import (
    DecisionModel,
    EnvelopeBand,
    EnvelopeClassifier,
    LogisticFit,
    build_band,
    classify,
    fit_decision_model,
    geometric_mahalanobis,
    output_mahalanobis,
    train_logistic,
)
from .exceptions import (
    BladeEnvelopeError,
    ConfigError,
    EmptySliceError,
    GeometryError,
    MissingArtifactsError,
    NoActiveDirectionsError,
    NotSymmetricError,
    NotTrainedError,
    NumericalError,
    RankDeficientError,
    SingularCovarianceError,
    TrivialIntersectionError,
)
from .linalg import (
    OrthonormalBasis,
    SubspacePair,
    eigendecompose_spsd,
    intersect_inactive,
    numerical_rank,
    select_gap,
    subspace_distance,
)
from .mesh import export_mesh, is_watertight
from .oracle import BladeProfile, BumpDeformation, FlowSample, SyntheticBladeOracle, isentropic_mach
from .pipeline import Pipeline, export_plotdata, run_pipeline
from .sampling import ActiveBlock, ActiveCoordinateSpec, SampleEnsemble, hit_and_run, set_active_coordinates
from .surrogates import PolynomialSurrogate, TrainingSet, active_direction_linear, fit_surrogate

__version__ = "0.1.0"
