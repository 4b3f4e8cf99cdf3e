"""Lie symmetries of SDEs: verification, discovery, transformation, reduction
and Monte Carlo certification."""

from .expr import Expr, var, param
from .parse import parse, parse_guard
from .printing import to_text
from .sde import Domain, SdeModel, bind_params, generator_apply
from .symmetry import AnsatzSpace, InconclusiveError, find_symmetries, is_symmetry
from .transform import InfinitesimalTransformation, StochasticTransformation, apply_to_sde, lie_bracket, pushforward

__version__ = "0.1.0"

__all__ = [
    "Expr",
    "var",
    "param",
    "parse",
    "parse_guard",
    "to_text",
    "Domain",
    "SdeModel",
    "bind_params",
    "generator_apply",
    "AnsatzSpace",
    "InconclusiveError",
    "find_symmetries",
    "is_symmetry",
    "InfinitesimalTransformation",
    "StochasticTransformation",
    "apply_to_sde",
    "lie_bracket",
    "pushforward",
]
