"""Exception hierarchy shared by all modules."""


class QuadEnergyError(Exception):
    """Base class for every error raised by this package."""


class RankDeficient(QuadEnergyError):
    """Hessian rank too small for the critical set to be a point or a line."""


class StructuralMismatch(QuadEnergyError):
    """The Jacobian degeneracy test and the structural test disagree."""


class DegenerateForm(QuadEnergyError):
    """Two-variable quadratic form whose matrix is (numerically) singular."""


class AllZeroAxis(QuadEnergyError):
    """The xy and yz coefficients both vanish; the switched-variable route is required."""


class DepthTooLarge(QuadEnergyError):
    pass


class UnassignedAtom(QuadEnergyError):
    """An atom heavier than C_mu * delta**alpha fits no dyadic level."""


class PreconditionFail(QuadEnergyError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class TripleBudgetExceeded(QuadEnergyError):
    pass


class BudgetExceeded(QuadEnergyError):
    pass


class FiberTooClose(QuadEnergyError):
    pass


class DeltaTooLarge(QuadEnergyError):
    pass


class NonPositiveValue(QuadEnergyError):
    pass


class DegeneratePolynomial(QuadEnergyError):
    """Raised by scan gates when the polynomial is not non-degenerate."""


class IoFailure(QuadEnergyError):
    pass
