"""
Eccezioni del toolkit topoclass.

Ogni classe espone un `code` leggibile dalle macchine: la CLI lo stampa
nella riga di errore finale.
"""
from typing import Optional


class TopoclassError(Exception):
    code = "TOPOCLASS_ERROR"


class FormatError(TopoclassError, ValueError):
    """File con magic number, header o formato non riconosciuto."""
    code = "FORMAT_ERROR"


class LengthError(TopoclassError, ValueError):
    """Payload troncato rispetto alle dimensioni dichiarate nell'header."""
    code = "LENGTH_ERROR"


class ConsistencyError(TopoclassError, ValueError):
    code = "CONSISTENCY_ERROR"


class ArgumentError(TopoclassError, ValueError):
    code = "ARGUMENT_ERROR"


class EmptyClassError(TopoclassError, ValueError):
    code = "EMPTY_CLASS_ERROR"


class ShapeError(TopoclassError, ValueError):
    code = "SHAPE_ERROR"


class DivergenceError(TopoclassError, ArithmeticError):
    """Loss non finita durante il training."""
    code = "DIVERGENCE_ERROR"

    def __init__(self, epoch: int, message: Optional[str] = None):
        self.epoch = epoch
        super().__init__(message or f"loss non finita all'epoca {epoch}")
