"""
Error types raised across DeskAIA
Every error also derives from the closest builtin so plain except clauses keep working
"""


class AIAError(Exception):
    """Base class for all DeskAIA errors"""


class ShapeMismatchError(AIAError, ValueError):
    """Operand shapes are incompatible"""


class TargetValueError(AIAError, ValueError):
    """Loss targets are not binary"""


class NonScalarLossError(AIAError, ValueError):
    """backward() was called on a tensor with more than one element"""


class MissingGradientError(AIAError, RuntimeError):
    """An optimizer step found a parameter without a gradient"""


class InvalidOrderError(AIAError, ValueError):
    """Interaction order is empty, repeats a kind or names an unknown kind"""


class PenaltyDomainError(AIAError, ValueError):
    """Loss value outside the domain of the staleness penalty"""


class MemoryKeyError(AIAError, KeyError):
    """Memory key outside the dataset bounds"""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class FileFormatError(AIAError, ValueError):
    """Checkpoint, pool or dataset file is malformed or has the wrong version"""


class ConfigError(AIAError, ValueError):
    """Run configuration is invalid"""


class ResourceGuardError(ConfigError):
    """Requested run exceeds the configured resource guard"""


class EmptySplitError(AIAError, ValueError):
    """Evaluation split contains no clips"""
