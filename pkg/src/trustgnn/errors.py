"""Exception hierarchy shared across the package.

Every error carries a short machine-parsable ``category`` used by the CLI
to emit single-line diagnostics and pick exit codes.
"""


class TrustGnnError(Exception):
    category = "internal"


class ParseError(TrustGnnError):
    """Malformed input file (bad row, wrong column count, non-integer field)."""

    category = "parse"


class ValidationError(TrustGnnError):
    """Well-formed input that violates a documented contract."""

    category = "validation"


class EmptyGraphError(ValidationError):
    category = "validation"


class ConfigError(TrustGnnError):
    """Bad or inconsistent configuration (unknown keys, shape mismatches)."""

    category = "config"


class NumericalFaultError(TrustGnnError):
    """NaN/Inf detected during numerical computation."""

    category = "numerics"

    def __init__(self, msg, layer=None, epoch=None):
        super().__init__(msg)
        self.layer = layer
        self.epoch = epoch
