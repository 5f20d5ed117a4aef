"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class HHGSPTError(Exception):
    """Base class; the CLI maps any subclass to exit code 3."""


class DegenerateDenominator(HHGSPTError):
    pass


class NegativeRadicand(HHGSPTError):
    pass


class PartialVanishes(HHGSPTError):
    pass


class FoldSingularity(HHGSPTError):
    pass


class NotOnManifold(HHGSPTError):
    pass


class NoFoldAtV(HHGSPTError):
    pass


class NotFound(HHGSPTError):
    pass


class NoLandingPoint(HHGSPTError):
    pass


class SingularIntegrand(HHGSPTError):
    pass


class NoSignChange(HHGSPTError):
    pass


class StepUnderflow(HHGSPTError):
    pass


class LeftDomain(HHGSPTError):
    pass


class TooShort(HHGSPTError):
    pass


class Unclassifiable(HHGSPTError):
    pass


class ConfigError(HHGSPTError):
    """Invalid configuration; the CLI maps this to exit code 2."""
