"""Exception types raised across the workbench.

Every error a pipeline stage can raise derives from HeartlabError so the
runner can catch one type, name the failing stage, and write a partial
manifest.
"""


class HeartlabError(Exception):
    """Base class for all workbench errors."""


class SchemaError(HeartlabError):
    """CSV header or column schema does not match expectations."""


class ParseError(HeartlabError):
    """A cell could not be parsed; message carries row/column coordinates."""


class ConfigError(HeartlabError):
    """Invalid configuration value or cross-reference."""


class FitError(HeartlabError):
    """Degenerate training input (empty data, all-missing column, single-class...)."""


class TransformError(HeartlabError):
    """Applying a fitted preprocessor failed (e.g. unseen category text)."""


class ResamplingError(HeartlabError):
    """SMOTE preconditions violated (class too small, missing labels)."""


class ContractError(HeartlabError):
    """A call broke an API contract (length mismatch, fingerprint mismatch...)."""


class ModelSpecError(HeartlabError):
    """Estimator family/task combination is not supported."""


class MetricError(HeartlabError):
    """Metric undefined for this input (e.g. single-class ROC)."""


class ExplainError(HeartlabError):
    """Attribution could not be computed with the given configuration."""


class ModelLoadError(HeartlabError):
    """Persisted model payload is corrupt, truncated or incompatible."""
