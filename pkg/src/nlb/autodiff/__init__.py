"""Minimal reverse-mode autodiff over numpy arrays."""

from . import ops
from .gradcheck import grad_check
from .optim import Adam
from .serialize import load_params, save_params
from .tensor import ShapeError, Tape, Tensor, current_tape

__all__ = ["ops", "grad_check", "Adam", "load_params", "save_params",
           "ShapeError", "Tape", "Tensor", "current_tape"]
