"""Exception hierarchy shared by every module."""


class FairDynError(Exception):
    """Base class for all package errors."""


class DomainError(FairDynError, ValueError):
    """An argument lies outside its mathematical domain."""


class StructureError(FairDynError, ValueError):
    """Inputs violate a structural precondition (support ordering, kind)."""


class RangeError(FairDynError, ValueError):
    """A constraint target cannot be matched by the other group."""


class RegimeError(FairDynError, ValueError):
    """A diagnostic was requested outside the regime where it is defined."""


class CaseError(FairDynError, ValueError):
    """A scenario matches none of the enumerated closed-form cases."""


class ModelError(FairDynError, ValueError):
    """Population state does not match the dynamics model."""


class DivergenceError(FairDynError, ArithmeticError):
    """A fixed point does not exist because retention equals one."""


class EmptyGroupError(FairDynError, ValueError):
    """A group has no samples left to learn from. ``group`` names it."""

    def __init__(self, group: str, message: str = ""):
        super().__init__(message or f"group {group} has no samples")
        self.group = group


class IoError(FairDynError, OSError):
    """An output path could not be written."""


class ConfigError(FairDynError, ValueError):
    """A scenario file failed validation. ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
