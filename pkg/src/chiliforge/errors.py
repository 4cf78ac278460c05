"""Exception types shared across the pipeline."""


class ChiliforgeError(Exception):
    """Base class for all pipeline errors."""


class UnknownElement(ChiliforgeError):
    pass


class MissingRadius(ChiliforgeError):
    pass


class MissingScatteringData(ChiliforgeError):
    pass


class CifSyntaxError(ChiliforgeError):
    """Structurally unrecoverable CIF input; carries the byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


class MissingSection(ChiliforgeError):
    pass


class InvalidSpacegroup(ChiliforgeError):
    pass


class SymmetryClash(ChiliforgeError):
    pass


class DegenerateFit(ChiliforgeError):
    pass


class CellTooLarge(ChiliforgeError):
    pass


class NoMetalAtom(ChiliforgeError):
    pass


class EmptyParticle(ChiliforgeError):
    pass


class GridMismatch(ChiliforgeError):
    pass


class ConstantSignal(ChiliforgeError):
    pass


class MalformedRow(ChiliforgeError):
    def __init__(self, row_number, text):
        super().__init__(f"row {row_number}: {text!r}")
        self.row_number = row_number


class NotFound(ChiliforgeError):
    pass


class TransportError(ChiliforgeError):
    pass


class InsufficientClass(ChiliforgeError):
    pass


class ChecksumMismatch(ChiliforgeError):
    pass


class SchemaVersionMismatch(ChiliforgeError):
    pass


class InvariantViolation(ChiliforgeError):
    pass
