"""Exception hierarchy shared by all modules.

``DomainError`` covers invalid models, families and hyperparameters (CLI exit
code 1); ``Refusal`` covers requests beyond a configured cap or outside what
can be certified (exit code 2).
"""


class GibbsMixError(Exception):
    pass


class DomainError(GibbsMixError, ValueError):
    pass


class StructuralError(DomainError):
    """Malformed partition: empty parts or labels outside 1..t."""


class Refusal(GibbsMixError):
    pass


class ImpossibleStateError(GibbsMixError, RuntimeError):
    """A Gibbs update found every candidate weight equal to zero."""
