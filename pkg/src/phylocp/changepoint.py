"""Trans-dimensional change-point state, priors, and proposal kernels.

A state is (k, s_1..s_k, rate_1..rate_{k+1}) with change-point positions
strictly increasing in {2..m}.  Segment j covers 1-based sites
[s_{j-1}, s_j) with s_0 = 1 and s_{k+1} = m+1, so every site belongs to
exactly one segment.

The proposal kernels mirror the samplers' needs: a truncated
discrete-uniform walk on k, a sequential no-duplicate discrete-uniform
walk on the change-point positions, and an independent log-normal walk on
the rates.  Every kernel returns exact forward and reverse log densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ChangePointState",
    "PriorSpec",
    "ProposalSpec",
    "ProposeFailure",
    "log_prior",
    "sample_prior",
    "propose_k",
    "propose_changepoints",
    "propose_changepoints_from_uniforms",
    "changepoint_log_density",
    "propose_rates",
    "birth_death_adjust",
    "gamma_logpdf",
    "segment_bounds",
]


class ProposeFailure(Exception):
    """A proposal window emptied out; callers treat this as a rejected move."""


@dataclass(frozen=True)
class ChangePointState:
    """Point in the trans-dimensional space: k, positions, per-segment rates."""

    k: int
    s: tuple[int, ...]
    theta: tuple[float, ...]

    def __post_init__(self):
        if self.k != len(self.s):
            raise ValueError(f"k={self.k} but {len(self.s)} change-points given")
        if len(self.theta) != self.k + 1:
            raise ValueError(f"need {self.k + 1} rates, got {len(self.theta)}")
        if any(not (t > 0 and math.isfinite(t)) for t in self.theta):
            raise ValueError("rates must be positive and finite")
        if any(b <= a for a, b in zip(self.s, self.s[1:])):
            raise ValueError("change-points must be strictly increasing")
        if self.s and self.s[0] < 2:
            raise ValueError("change-points live in {2..m}")

    def validate_for(self, m: int) -> None:
        if self.s and self.s[-1] > m:
            raise ValueError(f"change-point {self.s[-1]} exceeds m={m}")

    @property
    def theta_array(self) -> np.ndarray:
        return np.asarray(self.theta, dtype=float)


def segment_bounds(s: tuple[int, ...], m: int) -> list[tuple[int, int]]:
    """Half-open 0-based column ranges of each segment, covering all m sites."""
    edges = [1, *s, m + 1]
    return [(edges[j] - 1, edges[j + 1] - 1) for j in range(len(s) + 1)]


@dataclass(frozen=True)
class PriorSpec:
    """Uniform k over its support, uniform k-subsets of {2..m}, Gamma rates."""

    k_support: tuple[int, ...] = (0, 1)
    gamma_shape: float = 2.0
    gamma_scale: float = 0.4

    def __post_init__(self):
        if not self.k_support:
            raise ValueError("k_support must be nonempty")
        ks = tuple(sorted(set(self.k_support)))
        if ks != tuple(range(ks[0], ks[-1] + 1)):
            raise ValueError("k_support must be a contiguous integer range")
        object.__setattr__(self, "k_support", ks)
        if not (self.gamma_shape > 0 and self.gamma_scale > 0):
            raise ValueError("gamma shape and scale must be positive")

    @property
    def k_min(self) -> int:
        return self.k_support[0]

    @property
    def k_max(self) -> int:
        return self.k_support[-1]

    def log_p_k(self, k: int) -> float:
        return -math.log(len(self.k_support)) if k in self.k_support else -math.inf


@dataclass(frozen=True)
class ProposalSpec:
    """Tuning knobs for the three kernels; widths are odd and > 1."""

    w_k: int = 3
    w_s: int = 3
    sigma_rate: float = 0.25

    def __post_init__(self):
        for name, w in (("w_k", self.w_k), ("w_s", self.w_s)):
            if w <= 1 or w % 2 == 0:
                raise ValueError(f"{name} must be an odd integer > 1, got {w}")
        if not self.sigma_rate > 0:
            raise ValueError("sigma_rate must be positive")


def gamma_logpdf(x, shape: float, scale: float):
    """log Gamma(x; shape, scale), -inf for x <= 0. Vectorized."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            (shape - 1.0) * np.log(x)
            - x / scale
            - gammaln(shape)
            - shape * math.log(scale)
        )
    out = np.where(x > 0, out, -np.inf)
    return out if out.ndim else float(out)


def log_choose(n: int, r: int) -> float:
    return float(gammaln(n + 1) - gammaln(r + 1) - gammaln(n - r + 1))


def log_prior(state: ChangePointState, prior: PriorSpec, m: int) -> float:
    """Joint log prior density of (k, s, theta); -inf outside the support."""
    if state.k not in prior.k_support:
        return -math.inf
    if state.s and (state.s[0] < 2 or state.s[-1] > m):
        return -math.inf
    if any(b <= a for a, b in zip(state.s, state.s[1:])):
        return -math.inf
    lp = prior.log_p_k(state.k)
    lp -= log_choose(m - 1, state.k)  # uniform over k-subsets of {2..m}
    lp += float(np.sum(gamma_logpdf(state.theta_array, prior.gamma_shape, prior.gamma_scale)))
    return lp


def sample_prior(k: int, prior: PriorSpec, m: int, rng: np.random.Generator) -> ChangePointState:
    """Draw s uniformly among sorted k-subsets of {2..m} and i.i.d. Gamma rates."""
    if k not in prior.k_support:
        raise ValueError(f"k={k} outside prior support {prior.k_support}")
    if k > max(m - 1, 0):
        raise ValueError(f"cannot place {k} change-points among {max(m - 1, 0)} positions")
    s = np.sort(rng.choice(np.arange(2, m + 1), size=k, replace=False))
    theta = rng.gamma(prior.gamma_shape, prior.gamma_scale, size=k + 1)
    return ChangePointState(k=k, s=tuple(int(v) for v in s), theta=tuple(float(t) for t in theta))


def birth_death_adjust(
    state: ChangePointState, k_new: int, prior: PriorSpec, m: int, rng: np.random.Generator
) -> ChangePointState:
    """Map a proposed dimension to a fresh prior draw at that dimension.

    The samplers never transform the incumbent state across dimensions; a
    new dimension always starts from a fresh prior population, so this is
    simply the initializer for that population.
    """
    return sample_prior(k_new, prior, m, rng)


# ---------------------------------------------------------------------------
# Proposal kernels


def _window(center: int, half: int, lo: int, hi: int, excluded=()) -> list[int]:
    vals = [v for v in range(max(center - half, lo), min(center + half, hi) + 1)]
    if excluded:
        banned = set(excluded)
        vals = [v for v in vals if v not in banned]
    return vals


def propose_k(k: int, spec: ProposalSpec, prior: PriorSpec, rng: np.random.Generator):
    """Truncated discrete-uniform walk on k within the prior support.

    Returns (k_new, log q(k_new|k), log q(k|k_new)); out-of-support values
    are removed rather than reflected, so the two directional densities can
    differ near the boundary.
    """
    half = (spec.w_k - 1) // 2
    support = _window(k, half, prior.k_min, prior.k_max)
    k_new = int(rng.choice(support))
    log_fwd = -math.log(len(support))
    reverse = _window(k_new, half, prior.k_min, prior.k_max)
    log_rev = -math.log(len(reverse)) if k in reverse else -math.inf
    return k_new, log_fwd, log_rev


def changepoint_log_density(
    s_from: tuple[int, ...], s_to: tuple[int, ...], spec: ProposalSpec, m: int
) -> float:
    """Exact log density of drawing the sequence s_to from s_from.

    The draw is sequential by position: position j's window is centered on
    s_from[j] over {2..m} with positions already drawn for 1..j-1 removed.
    Unreachable targets get -inf.
    """
    half = (spec.w_s - 1) // 2
    logq = 0.0
    for j, target in enumerate(s_to):
        window = _window(s_from[j], half, 2, m, excluded=s_to[:j])
        if not window or target not in window:
            return -math.inf
        logq -= math.log(len(window))
    return logq


def propose_changepoints(
    s: tuple[int, ...], spec: ProposalSpec, m: int, rng: np.random.Generator
):
    """Sequential no-duplicate discrete-uniform walk on the positions.

    Position 1 is drawn from a truncated window around s_1; each later
    position's window excludes the values already drawn.  The result is
    re-sorted.  Returns (s_new, log q forward, log q reverse), both
    densities evaluated over the same position-1-first sequential scheme.
    Raises ProposeFailure if a window empties out.
    """
    return propose_changepoints_from_uniforms(s, spec, m, rng.random(len(s)))


def propose_changepoints_from_uniforms(
    s: tuple[int, ...], spec: ProposalSpec, m: int, uniforms
):
    """As propose_changepoints, consuming one pre-drawn uniform per position.

    Lets batch samplers lay out all randomness for a move step up front
    (one row of uniforms per particle) while sharing this exact kernel.
    """
    half = (spec.w_s - 1) // 2
    drawn: list[int] = []
    log_fwd = 0.0
    for j, center in enumerate(s):
        window = _window(center, half, 2, m, excluded=drawn)
        if not window:
            raise ProposeFailure(f"empty window for change-point {j + 1}")
        drawn.append(window[min(int(uniforms[j] * len(window)), len(window) - 1)])
        log_fwd -= math.log(len(window))
    s_new = tuple(sorted(drawn))
    log_rev = changepoint_log_density(s_new, s, spec, m)
    return s_new, log_fwd, log_rev


def propose_rates(theta: np.ndarray, spec: ProposalSpec, rng: np.random.Generator):
    """Independent log-normal random walk on every rate (median-preserving).

    Returns (theta_new, log q forward, log q reverse).  The two densities
    differ only through the log-scale Jacobian:
    log q(new|old) - log q(old|new) = sum(log old - log new).
    """
    theta = np.asarray(theta, dtype=float)
    z = rng.standard_normal(theta.shape)
    theta_new = theta * np.exp(spec.sigma_rate * z)
    log_fwd = float(np.sum(lognormal_logpdf(theta_new, np.log(theta), spec.sigma_rate)))
    log_rev = float(np.sum(lognormal_logpdf(theta, np.log(theta_new), spec.sigma_rate)))
    return theta_new, log_fwd, log_rev


def lognormal_logpdf(x, mu_log, sigma: float):
    """log density of LogNormal(mu_log, sigma) at x. Vectorized."""
    x = np.asarray(x, dtype=float)
    z = (np.log(x) - mu_log) / sigma
    return -np.log(x) - math.log(sigma) - 0.5 * math.log(2.0 * math.pi) - 0.5 * z * z
