"""heartlab: a reproducible tabular ML workbench for heart-disease risk
modeling, with dual numba/numpy kernels, SMOTE resampling, eleven model
families, a full metric suite, and Shapley/LIME explanations."""

__version__ = "0.1.0"

from ._kernels import NUMBA_ENABLED, backend_name
from .data import (
    ColumnSchema,
    Dataset,
    FixtureSpec,
    HEART16,
    SCHEMAS,
    SplitSpec,
    load_csv,
    make_fixture,
    planted_coefficients,
    train_test_split,
    validate_schema,
    write_csv,
)
from .errors import (
    ConfigError,
    ContractError,
    ExplainError,
    FitError,
    HeartlabError,
    MetricError,
    ModelLoadError,
    ModelSpecError,
    ParseError,
    ResamplingError,
    SchemaError,
    TransformError,
)
from .explain import (
    Attribution,
    LimeConfig,
    LimeExplanation,
    ShapConfig,
    coalition_value,
    lime_explain,
    sample_background,
    shap_exact,
    shap_sampled,
    shap_values,
)
from .metrics import (
    ConfusionMatrix,
    EvaluationPairs,
    ResidualSeries,
    RocCurve,
    auc_pair_count,
    classification_metrics,
    confusion_matrix,
    regression_metrics,
    residuals,
    roc_curve,
)
from .models import (
    ALL_FAMILIES,
    EstimatorSpec,
    TrainedModel,
    fit,
    load_model,
    predict,
    predict_proba,
    save_model,
)
from .preprocess import (
    IqrBounds,
    PreprocessConfig,
    PreprocessorState,
    fit_preprocessor,
    iqr_filter,
    transform,
    transform_filtered,
)
from .runner import (
    ReportBundle,
    RunConfig,
    compare_models,
    derive_seed,
    parse_config,
    run_experiment,
)
from .smote import SmoteConfig, nearest_same_class, smote

__all__ = [
    "ALL_FAMILIES",
    "Attribution",
    "ColumnSchema",
    "ConfigError",
    "ConfusionMatrix",
    "ContractError",
    "Dataset",
    "EstimatorSpec",
    "EvaluationPairs",
    "ExplainError",
    "FitError",
    "FixtureSpec",
    "HEART16",
    "HeartlabError",
    "IqrBounds",
    "LimeConfig",
    "LimeExplanation",
    "MetricError",
    "ModelLoadError",
    "ModelSpecError",
    "NUMBA_ENABLED",
    "ParseError",
    "PreprocessConfig",
    "PreprocessorState",
    "ReportBundle",
    "ResamplingError",
    "ResidualSeries",
    "RocCurve",
    "RunConfig",
    "SCHEMAS",
    "SchemaError",
    "ShapConfig",
    "SmoteConfig",
    "SplitSpec",
    "TrainedModel",
    "TransformError",
    "auc_pair_count",
    "backend_name",
    "classification_metrics",
    "coalition_value",
    "compare_models",
    "confusion_matrix",
    "derive_seed",
    "fit",
    "fit_preprocessor",
    "iqr_filter",
    "lime_explain",
    "load_csv",
    "load_model",
    "make_fixture",
    "nearest_same_class",
    "parse_config",
    "planted_coefficients",
    "predict",
    "predict_proba",
    "regression_metrics",
    "residuals",
    "roc_curve",
    "run_experiment",
    "sample_background",
    "save_model",
    "shap_exact",
    "shap_sampled",
    "shap_values",
    "smote",
    "train_test_split",
    "transform",
    "transform_filtered",
    "validate_schema",
    "write_csv",
]
