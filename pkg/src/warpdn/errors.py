"""Exception hierarchy shared by all warpdn modules."""


class WarpDNError(Exception):
    """Base class for every error raised by warpdn."""


class ProfileError(WarpDNError, ValueError):
    """Malformed coefficient profile (gaps, overlaps, sign changes, bad params)."""


class IntegrabilityError(WarpDNError):
    """A coefficient that must be in L^1 failed its integrability certificate."""


class SingularityError(WarpDNError):
    """Step size underflow: a singularity is too strong for the integrator."""


class ContractError(WarpDNError, ValueError):
    """Inputs violate an operation's precondition (mismatched z, problem, ...)."""


class PoleError(WarpDNError):
    """Spectral parameter sits at (or numerically next to) a Dirichlet eigenvalue."""


class BracketingError(WarpDNError):
    """Eigenvalue isolation failed even after mesh refinement."""


class RegimeError(WarpDNError):
    """Requested combination of regularity class and frequency is unsupported."""


class AdmissibilityError(WarpDNError):
    """The fiber eigenvalue collides with the radial Dirichlet spectrum."""


class BlowUpError(WarpDNError):
    """Conformal factor left (0, inf) during integration."""


class DomainError(WarpDNError, ValueError):
    """Argument outside the supported domain of a special function."""


class MatchingError(WarpDNError):
    """Interface matching conditions of a cloak solution are inconsistent."""
