"""Brute-force ground truth for every estimated quantity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .norms import LayerProfile, SymNorm, eval_norm, layer_profile_exact, layer_vector_norm

__all__ = [
    "ExactReport",
    "exact_distance",
    "exact_heavy_hitters",
    "exact_tail_norm",
    "classify_layers",
    "reference_query",
    "exact_report",
]


def _vec(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-d vector")
    return v


def exact_distance(norm: SymNorm, q, x) -> float:
    q, x = _vec(q), _vec(x)
    if q.shape != x.shape:
        raise ValueError("dimension mismatch")
    return eval_norm(norm, q - x)


def _tail_order(v: np.ndarray) -> np.ndarray:
    """Indices by decreasing magnitude, lower index first among ties."""
    return np.lexsort((np.arange(v.size), -np.abs(v)))


def exact_tail_norm(v, k: int) -> float:
    """l2 norm after zeroing the k largest magnitudes (ties: lower index removed first)."""
    v = _vec(v)
    if k < 0:
        raise ValueError("k must be nonnegative")
    rest = _tail_order(v)[k:]
    return float(np.sqrt(np.sum(v[rest] ** 2)))


def exact_heavy_hitters(v, eps: float) -> np.ndarray:
    """All j with |v_j| >= eps * ||v_tail(ceil(eps^-2))||_2, excluding zeros."""
    v = _vec(v)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    k = math.ceil(1.0 / eps**2 - 1e-12)
    tail = exact_tail_norm(v, k)
    mags = np.abs(v)
    return np.flatnonzero((mags >= eps * tail) & (mags > 0))


@dataclass
class LayerClasses:
    exponents: np.ndarray
    important: np.ndarray
    contributing: np.ndarray
    trackable: np.ndarray


def classify_layers(profile: LayerProfile, beta: float, norm: SymNorm | None = None, x=None) -> LayerClasses:
    """Evaluate the importance, contribution and trackability tests literally.

    A layer is beta-important when b_i > beta * (count of all larger layers)
    and b_i alpha^(2i) >= beta * sum_{j <= i} b_j alpha^(2j). It is
    beta-contributing when its bucket alone has norm >= beta times the layer
    vector's (default norm: l2). It is beta-trackable against `x` (default:
    the layer vector) when alpha^(2i) >= beta * ||x_tail(ceil(1/beta))||_2^2.
    Only nonempty layers are reported.
    """
    from .norms import LpNorm

    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    keep = profile.counts > 0
    e = profile.exponents[keep]
    b = profile.counts[keep]
    vals = profile.values[keep]
    mass = b * vals**2
    larger = np.concatenate([np.cumsum(b[::-1])[::-1][1:], [0.0]])
    cumulative = np.cumsum(mass)
    important = (b > beta * larger) & (mass >= beta * cumulative)
    norm = norm or LpNorm(2.0)
    total = layer_vector_norm(norm, profile)
    bucket = np.array([norm.from_runs(np.array([val]), np.array([cnt]), profile.dim)
                       for val, cnt in zip(vals, b)])
    contributing = bucket >= beta * total
    if x is None:
        x = profile.materialize()
    k = math.ceil(1.0 / beta - 1e-12)
    tail2 = exact_tail_norm(x, k) ** 2
    trackable = vals**2 >= beta * tail2
    return LayerClasses(e, important, contributing, trackable)


def reference_query(norm: SymNorm, q, x, alpha: float) -> float:
    """Norm of the exact layer vector of q - x; lies in [exact, alpha * exact]."""
    q, x = _vec(q), _vec(x)
    if q.shape != x.shape:
        raise ValueError("dimension mismatch")
    return layer_vector_norm(norm, layer_profile_exact(q - x, alpha))


@dataclass
class ExactReport:
    distance: float
    profile: LayerProfile
    important: np.ndarray
    contributing: np.ndarray
    heavy: np.ndarray
    tail: dict[int, float] = field(default_factory=dict)


def exact_report(norm: SymNorm, v, alpha: float, beta: float, eps: float,
                 tail_ks: tuple[int, ...] = ()) -> ExactReport:
    v = _vec(v)
    prof = layer_profile_exact(v, alpha)
    cls = classify_layers(prof, beta, norm, v)
    return ExactReport(
        eval_norm(norm, v), prof, cls.important, cls.contributing,
        exact_heavy_hitters(v, eps), {k: exact_tail_norm(v, k) for k in tail_ks},
    )
