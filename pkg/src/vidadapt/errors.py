"""Exception taxonomy shared across the package.

Each class maps to one failure category surfaced by the CLI exit codes;
library code raises these instead of bare ValueError/RuntimeError so tests
and the dispatcher can tell categories apart.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A documented precondition was violated (bad scalar, missing grad, ...)."""


class ConfigError(ValueError):
    """Invalid or out-of-range configuration value; CLI exit code 2."""


class RoleError(RuntimeError):
    """Checkpoint role does not permit the requested operation."""


class SurgeryError(RuntimeError):
    """Weight-surgery mismatch: parameter name sets, ranks, or shapes differ."""


class PipelineOrderError(RuntimeError):
    """A training stage was invoked before its prerequisites; CLI exit code 3."""


class CheckpointParseError(ValueError):
    """Corrupt or truncated checkpoint file.

    Carries the byte offset at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CheckpointVersionError(ValueError):
    """Checkpoint format version is not supported."""


class ProtocolError(ValueError):
    """Evaluation protocol violation, e.g. seed mismatch across methods."""
