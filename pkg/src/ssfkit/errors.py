"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for configuration
problems, 3 for numerical non-convergence, 4 when a computation is aborted
because it came too close to the spectrum or to a spectral singularity.
"""

from __future__ import annotations


class SsfError(Exception):
    exit_code = 1


class ConfigError(SsfError):
    exit_code = 2


class ConfigInvalid(ConfigError):
    pass


class NonHermitianBase(ConfigError):
    pass


class UnboundedPerturbation(ConfigError):
    pass


class UnsupportedSpec(ConfigError):
    pass


class OrderTooHigh(ConfigError):
    pass


class InadmissibleCutoff(ConfigError):
    pass


class BranchViolation(ConfigError):
    pass


class ZeroMeanPotential(ConfigError):
    pass


class ConvergenceError(SsfError):
    exit_code = 3


class QuadratureNotConverged(ConvergenceError):
    pass


class ExtrapolationDiverged(ConvergenceError):
    pass


class NonIdempotent(ConvergenceError):
    pass


class GrowthUnbounded(ConvergenceError):
    pass


class GmNotInvertible(ConvergenceError):
    pass


class ResolutionTooCoarse(ConvergenceError):
    pass


class OrderUnresolved(ConvergenceError):
    pass


class SingularityProximity(SsfError):
    exit_code = 4


class SingularShift(SingularityProximity):
    pass


class ContourHitsSpectrum(SingularityProximity):
    pass


class UnresolvablePhaseJump(SingularityProximity):
    pass


class NearSingularity(SingularityProximity):
    pass


class OnSingularity(SingularityProximity):
    pass


class RealAxisEvaluation(SingularityProximity):
    pass
