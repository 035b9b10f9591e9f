"""Jukes-Cantor substitution model.

States are A=0, C=1, G=2, T=3 project-wide.  The rate parameter is the
TOTAL leaving rate: the generator has off-diagonal entries rate/3, so one
unit of branch length at rate r means r expected substitutions per site.
All absolute rate estimates produced by this package follow that
convention; a per-target-rate convention would differ by a factor of 3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NUM_STATES = 4
STATE_ALPHABET = "ACGT"

__all__ = [
    "NUM_STATES",
    "STATE_ALPHABET",
    "JukesCantorModel",
    "decay_factor",
    "transition_matrix",
    "stationary_distribution",
]


def decay_factor(rate, t):
    """exp(-4*rate*t/3), the off-diagonal eigenvalue term of the JC chain.

    Accepts scalars or arrays (broadcast).  Negative rates or branch
    lengths are a domain error.
    """
    rate = np.asarray(rate, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(rate < 0) or np.any(t < 0):
        raise ValueError("rate and branch length must be >= 0")
    return np.exp(-(4.0 / 3.0) * rate * t)


def transition_matrix(rate: float, t: float) -> np.ndarray:
    """4x4 matrix P[a, b] = P(state b at the child | state a at the parent)."""
    e = decay_factor(rate, t)
    same = 0.25 + 0.75 * e
    diff = 0.25 - 0.25 * e
    out = np.full((NUM_STATES, NUM_STATES), diff)
    np.fill_diagonal(out, same)
    return out


def stationary_distribution() -> np.ndarray:
    """Uniform over the four states."""
    return np.full(NUM_STATES, 0.25)


@dataclass(frozen=True)
class JukesCantorModel:
    """JC model at a fixed substitution rate (total leaving rate per site)."""

    rate: float

    def __post_init__(self):
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"rate must be finite and >= 0, got {self.rate}")

    @property
    def num_states(self) -> int:
        return NUM_STATES

    def transition_prob(self, t: float, a: int, b: int) -> float:
        """P(child state b | parent state a, branch length t)."""
        if t < 0:
            raise ValueError(f"branch length must be >= 0, got {t}")
        if not (0 <= a < NUM_STATES and 0 <= b < NUM_STATES):
            raise ValueError("states must be in 0..3")
        e = float(decay_factor(self.rate, t))
        return 0.25 + 0.75 * e if a == b else 0.25 - 0.25 * e

    def transition_matrix(self, t: float) -> np.ndarray:
        return transition_matrix(self.rate, t)

    def stationary(self) -> np.ndarray:
        return stationary_distribution()
