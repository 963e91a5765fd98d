"""Exception hierarchy shared across the toolkit.

Errors that cross the CLI boundary carry a short machine-parseable code,
printed as ``error[CODE] message`` before a nonzero exit.
"""


class ToolkitError(Exception):
    """Base class for beamfuse errors."""

    code = "E_INTERNAL"


class ConfigError(ToolkitError):
    """Invalid or inconsistent configuration."""

    code = "E_CONFIG"


class DataFormatError(ToolkitError):
    """Malformed input file (WAV, feature file, ARPA, manifest, model JSON)."""

    code = "E_FORMAT"


class StageError(ToolkitError):
    """A pipeline stage failed; message names the stage and the cause."""

    code = "E_STAGE"

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
