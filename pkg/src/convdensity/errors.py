"""Exception types shared across the package.

Every error carries a short machine-readable ``kind`` so the CLI can emit
structured error JSON without string-matching messages.
"""


class ConvDensityError(Exception):
    """Base class for all package errors."""

    kind = "error"


class AssumptionViolated(ConvDensityError):
    """The noise characteristic function is too small on the probed band."""

    kind = "assumption-violated"


class MissingSampler(ConvDensityError):
    """A custom noise or target lacks a sampler that the operation needs."""

    kind = "missing-sampler"


class DivergentIntegral(ConvDensityError):
    """A weighted Fourier integral of the kernel does not converge."""

    kind = "divergent-integral"


class BandTooNarrow(ConvDensityError):
    """The FFT frequency band truncates the kernel transform too early."""

    kind = "band-too-narrow"


class EmptyGrid(ConvDensityError):
    """No bandwidth survives the admissibility truncation."""

    kind = "empty-grid"


class LatticeClosureViolated(ConvDensityError):
    """A componentwise maximum of two grid members is not in the grid."""

    kind = "lattice-closure-violated"


class SupportNotCovered(ConvDensityError):
    """The quadrature window misses non-negligible target mass."""

    kind = "support-not-covered"
