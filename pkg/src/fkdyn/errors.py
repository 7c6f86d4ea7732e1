"""Error taxonomy shared across the package.

Every raisable condition named by an operation contract has a dedicated class
here so callers can catch precisely.  Conditions that are reported rather than
raised (horizon caps, exhausted budgets) are represented as flags on result
objects, not exceptions.
"""


class FkdynError(Exception):
    """Base class for all package errors."""


class ConfigError(FkdynError):
    """Invalid experiment configuration; message carries file:line context."""


class TorusTooSmall(FkdynError):
    """Torus side n < 3 would create multi-edges."""


class InvalidSideMask(FkdynError):
    """Side-homogeneous mask selects no valid side."""


class EdgeAlreadyPresent(FkdynError):
    """insert_edge on an edge already in the configuration."""


class EdgeAbsent(FkdynError):
    """delete_edge on an edge not in the configuration."""


class TooLargeToEnumerate(FkdynError):
    """Instance exceeds the exact-enumeration cap."""


class DegenerateCut(FkdynError):
    """Conductance of a cut with pi(A) * pi(A^c) = 0."""


class EmptyEvent(FkdynError):
    """Conditioning on an event of measure zero / empty support."""


class InitOutsidePhase(FkdynError):
    """Restricted chain started outside its phase."""


class NonIntegerQ(FkdynError):
    """Potts-side operation with non-integer q."""


class BurnInNotConverged(FkdynError):
    """Sandwich gap failed to plateau before the burn-in cap."""


class RestrictedSamplerNotMixed(FkdynError):
    """Cross-seed diagnostics rejected the restricted-chain samples."""


class AnchorStepZeroP(FkdynError):
    """Ratio step starting at p = 0 (or p = 1) must be taken analytically."""
