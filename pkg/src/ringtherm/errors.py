"""Exception types raised across the library."""


class RingthermError(Exception):
    """Base class for all library errors."""


class TooFewAtoms(RingthermError):
    """Probe needs at least two atoms."""


class CouplingOutOfRange(RingthermError):
    """|coupling| must stay below half the transition frequency."""


class NonpositiveFrequency(RingthermError):
    """Transition frequency must be positive."""


class NoLowerLevel(RingthermError):
    """Requested a downward transition from the bottom of the ladder."""


class PhiOutOfRange(RingthermError):
    """Superposition angle must lie in [0, pi/2]."""


class NonpositiveTemperature(RingthermError):
    """Bath temperature must be positive here."""


class NonzeroCoupling(RingthermError):
    """Collective form of the generator is only valid at zero coupling."""


class IntegrationFailure(RingthermError):
    """Time integration broke down before reaching the horizon."""

    def __init__(self, message: str, time_reached: float):
        super().__init__(f"{message} (time reached: {time_reached:g})")
        self.time_reached = time_reached


class DidNotEquilibrate(RingthermError):
    """Equilibration criterion was not met before the horizon cap."""


class SingularTerm(RingthermError):
    """An empty level carries a non-negligible temperature derivative."""


class NotDensityMatrix(RingthermError):
    """Oracle input is not Hermitian, unit-trace and positive semidefinite."""


class NonpositiveQfi(RingthermError):
    """Error bound requires strictly positive Fisher information."""


class DegenerateFit(RingthermError):
    """Scaling fit needs at least three distinct positive data points."""


class ConfigError(RingthermError):
    """Run configuration failed validation; message names the offending key."""
