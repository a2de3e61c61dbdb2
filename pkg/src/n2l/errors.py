"""Exception types shared across the codec."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


class ConfigurationError(ValueError):
    """Image geometry or settings incompatible with the requested configuration."""


class UnsupportedFormat(ValueError):
    """Stream magic or version not recognized."""


class MalformedBitstream(ValueError):
    """Stream is structurally invalid (truncated, wrong length, bad payload)."""

    def __init__(self, message, bit_offset=None):
        if bit_offset is not None:
            message = f"{message} (bit offset {bit_offset})"
        super().__init__(message)
        self.bit_offset = bit_offset


class TrainingDiverged(RuntimeError):
    """Optimization produced non-finite values."""
