"""Exception hierarchy shared by all modules."""


class AlphaLabError(Exception):
    """Base class for errors raised by alphalab."""


class InvalidInputError(AlphaLabError, ValueError):
    """Arguments violate a documented precondition."""


class IntegrationError(AlphaLabError):
    """Newton iteration inside an implicit integrator step did not converge."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class NotApplicableError(AlphaLabError):
    """A backend or oracle was asked to handle a model outside its hypotheses."""


class NoCriticalPointError(AlphaLabError):
    """No critical point of a discrete action could be located."""


class WindowExhaustionError(AlphaLabError):
    """The persistence window did not capture the requested homology class."""


class FeasibilityError(AlphaLabError):
    """The requested computation exceeds a hard size guard."""


class AmbiguityError(AlphaLabError):
    """Continuation reached a bifurcation and cannot choose a branch."""

    def __init__(self, message, branches=()):
        super().__init__(message)
        self.branches = list(branches)


class SelectorInconsistencyError(AlphaLabError):
    """A selected spectral value is missing from the critical level set it defines."""


class EscapeError(AlphaLabError):
    """A trajectory left the compact region it was required to stay in."""
