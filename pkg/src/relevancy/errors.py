"""Exception hierarchy shared across the toolkit.

Every error raised on purpose by this package derives from RelevancyError,
so the CLI can map domain failures to a single exit code.
"""


class RelevancyError(Exception):
    """Base class for all domain errors raised by this package."""


class InputError(RelevancyError):
    """Malformed or inconsistent caller-supplied data."""


class ConfigurationError(RelevancyError):
    """Invalid configuration value or missing prerequisite."""


class AccountingError(RelevancyError):
    """Dataset bookkeeping violation (e.g. an unlabeled pair in a manifest)."""


class SamplingError(RelevancyError):
    """Negative sampling cannot satisfy the requested budget."""


class TemplateError(RelevancyError):
    """Prompt template missing, malformed, or lacking required placeholders."""


class ProtocolError(RelevancyError):
    """Provider returned a response outside the agreed wire contract."""


class ProviderFailure(RelevancyError):
    """Transient provider failure; eligible for retry."""


class LabelingError(RelevancyError):
    """Labeling gave up after exhausting retries."""


class GenerationError(RelevancyError):
    """Constrained generation failed (rejection budget or provider failure)."""


class TrainingError(RelevancyError):
    """Backend failure during a training run."""


class StateError(RelevancyError):
    """Operation requires state the object does not have (e.g. untrained model)."""
