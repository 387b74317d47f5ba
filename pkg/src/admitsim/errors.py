"""Exception types shared across the toolkit."""


class AdmitsimError(Exception):
    """Base class for all toolkit errors."""


class DegenerateFrame(AdmitsimError):
    """Frame construction failed: input vectors parallel or near-zero."""


class NotOrthonormal(AdmitsimError):
    """Axis triple is not orthonormal within tolerance."""


class SingularMap(AdmitsimError):
    """Undamped least-squares requested at a singular Jacobian."""


class NoConvergence(AdmitsimError):
    """Iterative solver exhausted its iteration budget."""


class JointLimitViolation(AdmitsimError):
    """A joint solution lies outside the model's limits."""


class PassivityViolation(AdmitsimError):
    """Virtual-dynamics parameters violate the passivity conditions."""


class GoalUnreachable(AdmitsimError):
    """No inverse-kinematics solution exists for the requested goal pose."""


class NoPathFound(AdmitsimError):
    """Planner iteration budget exhausted without reaching the goal."""


class TooFewMatches(AdmitsimError):
    """Feature matching produced fewer correspondences than the model needs."""


class PointAtInfinity(AdmitsimError):
    """Projective mapping sent a point to infinity (w ~ 0)."""


class DegenerateConfiguration(AdmitsimError):
    """Point configuration is rank-deficient (collinear or coincident)."""


class ConsensusFailed(AdmitsimError):
    """Robust estimation could not find a consensus set of at least 4 inliers."""


class NoDepth(AdmitsimError):
    """No valid depth available at the pixel or within the fallback window."""


class PlaneBehindCamera(AdmitsimError):
    """Synthetic plane placement puts generated points behind the camera."""


class PlanFailure(AdmitsimError):
    """Scenario setup could not produce an executable trajectory."""


class NumericalDivergence(AdmitsimError):
    """Simulation state became non-finite."""


class ConfigError(AdmitsimError):
    """Scenario or model configuration file is invalid."""


class VersionError(AdmitsimError):
    """Stored file carries an unsupported schema version."""


class ParseError(AdmitsimError):
    """Stored file is malformed.

    ``line`` is the 1-based line number at which parsing failed, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line
