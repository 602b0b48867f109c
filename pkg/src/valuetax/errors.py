"""Exception types shared across the toolkit.

Every error carries the name of the module that raised it so the CLI can
surface provenance in its single-line error output.
"""


class ValueTaxError(Exception):
    """Base class for all toolkit errors."""

    module = "valuetax"


class TaxonomyError(ValueTaxError):
    module = "taxonomy"


class IngestError(ValueTaxError):
    module = "dataset"


class PairingError(ValueTaxError):
    module = "dataset"


class SplitError(ValueTaxError):
    module = "dataset"


class EvidenceError(ValueTaxError):
    module = "evidence"


class MetricError(ValueTaxError):
    module = "metrics"


class DegenerateResultError(MetricError):
    """A result that exists only as a flagged degenerate (near-zero gain,
    under-supported pair) was requested in strict mode."""


class RobustnessError(ValueTaxError):
    module = "robustness"


class GenerationError(ValueTaxError):
    module = "synthetic"


class ElicitationError(ValueTaxError):
    """Fatal elicitation failure (endpoint unreachable, auth rejected)."""

    module = "elicitation"


class ConfigError(ValueTaxError):
    module = "cli"
