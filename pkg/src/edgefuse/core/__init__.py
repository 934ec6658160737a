from .flops import FlopsLedger, stage
from .rng import Rng
from .tensor import ContractError, ShapeError, Tensor, no_grad, precision

__all__ = ["FlopsLedger", "stage", "Rng", "Tensor", "no_grad", "precision", "ShapeError", "ContractError"]
