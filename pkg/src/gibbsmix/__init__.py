"""Gibbs-type partition mixtures over conjugate exponential families."""
from ._backend import BACKEND
from .errors import DomainError, GibbsMixError, ImpossibleStateError, Refusal, StructuralError

__version__ = "0.1.0"
