"""Smoothness levels: mean pairwise cosine similarity of feature rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rmask.errors import ParameterError, ShapeError


@dataclass
class SmoothnessResult:
    gsl: float
    per_node_nsl: np.ndarray | None = None


def _unit_rows(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ParameterError("smoothness needs at least two rows")
    norms = np.linalg.norm(x, axis=1)
    nonzero = norms > 0
    unit = np.zeros_like(x)
    unit[nonzero] = x[nonzero] / norms[nonzero, None]
    return unit, nonzero


def gsl(x, per_node: bool = False) -> SmoothnessResult:
    """Graph smoothness level in O(N d).

    With unit rows ``u_i`` and ``s = sum_i u_i``, the sum of all off-diagonal
    cosines is ``|s|^2 - Z`` where ``Z`` counts the nonzero rows. Zero rows
    contribute cosine 0 to every pair.
    """
    unit, nonzero = _unit_rows(x)
    n = unit.shape[0]
    s = unit.sum(axis=0)
    z = int(nonzero.sum())
    value = (float(s @ s) - z) / (n * (n - 1))
    value = min(1.0, max(-1.0, value))
    nsl = None
    if per_node:
        nsl = np.where(nonzero, (unit @ s - 1.0) / (n - 1), 0.0)
    return SmoothnessResult(value, nsl)


def nsl(x, i: int) -> float:
    """Mean cosine similarity of row ``i`` against every other row."""
    unit, nonzero = _unit_rows(x)
    n = unit.shape[0]
    if not 0 <= i < n:
        raise ParameterError(f"row {i} outside [0, {n})")
    if not nonzero[i]:
        return 0.0
    return float((unit @ unit[i]).sum() - 1.0) / (n - 1)


def gsl_bruteforce(x) -> float:
    """O(N^2) reference: explicit ``dot / (|a| |b|)`` for every ordered pair."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ParameterError("smoothness needs at least two rows")
    norms = np.linalg.norm(x, axis=1)
    total = 0.0
    for i in range(n):
        if norms[i] == 0:
            continue
        dots = x @ x[i]
        denom = norms * norms[i]
        cos = np.divide(dots, denom, out=np.zeros(n), where=denom > 0)
        cos[i] = 0.0
        total += cos.sum()
    return total / (n * (n - 1))


def gsl_per_hop(hops) -> list:
    """``[{"hop": k, "gsl": value}, ...]`` for a sequence of hop matrices."""
    return [{"hop": k, "gsl": gsl(h).gsl} for k, h in enumerate(hops)]
