"""Sketch-based distance oracles for symmetric norms."""

from .norms import parse_norm, eval_norm, mmc_bound, LayerProfile, layer_vector_norm
from .oracle import Knobs, PROFILES, Oracle, OracleParams, ParameterError

__all__ = [
    "parse_norm",
    "eval_norm",
    "mmc_bound",
    "LayerProfile",
    "layer_vector_norm",
    "Knobs",
    "PROFILES",
    "Oracle",
    "OracleParams",
    "ParameterError",
]
