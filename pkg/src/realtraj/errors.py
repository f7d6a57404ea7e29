"""Exception hierarchy for the engine.

Three families matter to callers: configuration problems (bad input,
caught before any stepping), numerical guards (a run started but a
stability or sanity bound tripped), and I/O.  The CLI maps these to
exit codes 1, 2 and 3 respectively.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class ConfigError(EngineError):
    """Invalid configuration, model or parameter set."""


class DimensionMismatch(ConfigError):
    """Operator shapes are incompatible."""


class InvalidState(ConfigError):
    """A state failed its role invariants (trace, Hermiticity, positivity)."""


class NumericalGuard(EngineError):
    """A runtime stability or sanity bound was violated."""


class VanishingJumpProbability(NumericalGuard):
    """Conditioning on a jump whose probability is numerically zero."""


class ProbabilityOverflow(NumericalGuard):
    """A per-step jump probability exceeded 0.5; the step size is too coarse."""


class CflViolation(NumericalGuard):
    """Explicit grid step violates the diffusion CFL bound."""


class JumpNotGridAligned(ConfigError):
    """Jump amplitude is not an integer number of grid cells."""


class ZeroEvidence(NumericalGuard):
    """Bayes update with vanishing marginal likelihood."""


class MassNotConserved(NumericalGuard):
    """A grid step lost or created probability beyond tolerance."""


class AvalancheDuringDeadTime(NumericalGuard):
    """A record contains an avalanche while the detector is dead."""


class GridMassLeak(NumericalGuard):
    """Significant weight reached the edge of the voltage grid."""


class NonfiniteInnovation(NumericalGuard):
    """The innovation became NaN or infinite."""


class NoRealSolution(ConfigError):
    """Requested quantity has no real solution for these parameters."""


class IoError(EngineError):
    """File could not be read, parsed or written."""
