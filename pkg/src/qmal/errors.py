"""Exception hierarchy for the qmal simulator."""


class QmalError(Exception):
    """Base class for all simulator errors."""


# --- distinguishability data -------------------------------------------------

class NonSquare(QmalError):
    """Matrix input is not square."""


class NonHermitian(QmalError):
    """Gram matrix is not Hermitian within tolerance."""


class BadDiagonal(QmalError):
    """Gram matrix diagonal deviates from 1 beyond tolerance."""


class OverUnitOverlap(QmalError):
    """A pairwise overlap has magnitude above 1."""


class NotPSD(QmalError):
    """Gram matrix has an eigenvalue below -tol."""


class NumericalBreakdown(QmalError):
    """Orthogonalization produced a negative residual norm."""


class SizeMismatch(QmalError):
    """Photon groups of different sizes cannot be overlapped."""


# --- basis -------------------------------------------------------------------

class EmptyAllowedSet(QmalError):
    """A photon was given no allowed external modes."""


class DimensionOverflow(QmalError):
    """Requested basis or resolution size exceeds the configured cap."""


class NotInBasis(QmalError):
    """Mode assignment list falls outside the enumerated basis."""


# --- states ------------------------------------------------------------------

class BasisMismatch(QmalError):
    """Two states are indexed by incompatible bases."""


class RefNotPure(QmalError):
    """Fidelity reference state is not rank one."""


class OutOfRangeExpectation(QmalError):
    """Encoded expectation value outside [-1, 1] beyond tolerance."""


class UnweightedPattern(QmalError):
    """A detection pattern with nonzero probability has no measurement weight."""


class ZeroProbabilityMass(QmalError):
    """No probability mass left after post-selection."""


# --- evolution ---------------------------------------------------------------

class BadModes(QmalError):
    """Component references invalid or repeated external modes."""


class NonUnitaryCustom(QmalError):
    """Custom component matrix is not unitary within tolerance."""


class BasisTooSmall(QmalError):
    """Component support escapes the allowed-mode sets and expansion is off."""


# --- resolution / post-selection ----------------------------------------------

class HeraldImpossible(QmalError):
    """Requested herald pattern has (near-)zero probability."""


# --- circuits ----------------------------------------------------------------

class InvalidIR(QmalError):
    """Circuit intermediate representation failed validation."""


class CircuitSyntaxError(InvalidIR):
    """Circuit file is not well-formed."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class CircuitSemanticError(InvalidIR):
    """Circuit file is well-formed but semantically invalid."""

    def __init__(self, message, op_index=None):
        super().__init__(message if op_index is None else f"op {op_index}: {message}")
        self.op_index = op_index


# --- oracle ------------------------------------------------------------------

class DenseCapExceeded(QmalError):
    """Brute-force oracle state would exceed the dense amplitude cap."""
