"""Tempered SMC sampler at fixed dimension k with an unbiased evidence estimate.

The sampler bridges from the prior to the within-model posterior through
tempered targets (likelihood^kappa_t * prior), resampling multinomially at
every step and moving particles with Metropolis-Hastings sweeps that leave
the current tempered target invariant (a rate move, then a change-point
move).  The incremental weight of step t is the tempered-likelihood ratio
evaluated at the resampled, pre-move particle, so the running product of
mean weights is an unbiased estimate of the model evidence.

Randomness is laid out for reproducibility under any internal parallelism:
a master stream (derived from the run seed) drives initialization,
resampling and particle selection, and each move step t draws its whole
batch from a stream derived from (seed, t), one row per particle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .changepoint import (
    ChangePointState,
    PriorSpec,
    ProposalSpec,
    gamma_logpdf,
    propose_changepoints_from_uniforms,
    ProposeFailure,
    sample_prior,
)
from .likelihood import LikelihoodEngine, SequenceData

__all__ = [
    "TemperSchedule",
    "make_schedule",
    "SmcDegeneracyError",
    "StepRecord",
    "ParticleSystem",
    "run_smc",
    "select_particle",
    "dump_trace",
]


class SmcDegeneracyError(RuntimeError):
    """Every particle weight vanished at some step; callers treat the
    enclosing proposal as rejected."""

    def __init__(self, step: int):
        super().__init__(f"all particle weights are zero at step {step}")
        self.step = step


@dataclass(frozen=True)
class TemperSchedule:
    """Tempering exponents kappa_0 = 0 < ... < kappa_T = 1."""

    kappas: tuple[float, ...]

    def __post_init__(self):
        ks = self.kappas
        if len(ks) < 2 or ks[0] != 0.0 or ks[-1] != 1.0:
            raise ValueError("schedule must run from exactly 0 to exactly 1")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("schedule must be strictly increasing")

    @property
    def n_steps(self) -> int:
        return len(self.kappas) - 1


def make_schedule(n_steps: int, exponent: float = 2.0) -> TemperSchedule:
    """Power schedule kappa_t = (t/T)^exponent."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    if not exponent > 0:
        raise ValueError("exponent must be positive")
    kappas = tuple((t / n_steps) ** exponent for t in range(n_steps + 1))
    return TemperSchedule(kappas=(0.0, *kappas[1:-1], 1.0))


@dataclass(frozen=True)
class StepRecord:
    """Population snapshot after one SMC step (post-move particles)."""

    kappa: float
    ancestors: np.ndarray | None   # (N,) resampled indices, None at t=0
    s: np.ndarray                  # (N, k)
    theta: np.ndarray              # (N, k+1)
    log_weights: np.ndarray        # (N,) unnormalized


@dataclass(frozen=True)
class ParticleSystem:
    """Full record of one SMC run; the evidence is recomputable from it."""

    k: int
    n_particles: int
    steps: tuple[StepRecord, ...]

    @property
    def log_evidence(self) -> float:
        """Sum over steps of log mean unnormalized weight."""
        total = 0.0
        for step in self.steps:
            total += float(logsumexp(step.log_weights)) - math.log(self.n_particles)
        return total

    @property
    def final(self) -> StepRecord:
        return self.steps[-1]

    def state_at(self, step: int, index: int) -> ChangePointState:
        rec = self.steps[step]
        return ChangePointState(
            k=self.k,
            s=tuple(int(v) for v in rec.s[index]),
            theta=tuple(float(v) for v in rec.theta[index]),
        )


def segment_log_likelihoods(site_ll: np.ndarray, s: np.ndarray, m: int) -> np.ndarray:
    """Per-particle total log-likelihood from per-rate site rows.

    site_ll is (N, k+1, m) with row j holding every site's log-likelihood
    under particle i's rate j; s is (N, k) sorted positions.  Prefix sums
    cover the common all-finite case; rows containing -inf are summed
    directly to avoid inf - inf.
    """
    n, seg, m_ = site_ll.shape
    if m_ != m:
        raise ValueError("site matrix width disagrees with m")
    if m == 0:
        return np.zeros(n)
    edges = np.empty((n, seg + 1), dtype=np.int64)
    edges[:, 0] = 0
    if seg > 1:
        edges[:, 1:-1] = s - 1
    edges[:, -1] = m
    finite = np.isfinite(site_ll)
    if finite.all():
        padded = np.concatenate(
            [np.zeros((n, seg, 1)), np.cumsum(site_ll, axis=2)], axis=2
        )
        upper = np.take_along_axis(padded, edges[:, None, 1:], axis=2)
        lower = np.take_along_axis(padded, edges[:, None, :-1], axis=2)
        diag = np.einsum("ijj->ij", upper - lower)
        return diag.sum(axis=1)
    out = np.empty(n)
    for i in range(n):
        total = 0.0
        for j in range(seg):
            total += float(site_ll[i, j, edges[i, j] : edges[i, j + 1]].sum())
        out[i] = total
    return out


class _Population:
    """Mutable working set of one SMC run (arrays row-per-particle)."""

    def __init__(self, k, s, theta, site_ll, loglik, log_prior_theta):
        self.k = k
        self.s = s
        self.theta = theta
        self.site_ll = site_ll
        self.loglik = loglik
        self.log_prior_theta = log_prior_theta

    def reindex(self, idx: np.ndarray) -> None:
        self.s = self.s[idx]
        self.theta = self.theta[idx]
        self.site_ll = self.site_ll[idx]
        self.loglik = self.loglik[idx]
        self.log_prior_theta = self.log_prior_theta[idx]


def _seed_key(seed) -> tuple[int, ...]:
    if isinstance(seed, (tuple, list)):
        return tuple(int(v) for v in seed)
    return (int(seed),)


def _move_rng(seed, t: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([*_seed_key(seed), 1, t]))
    )


def run_smc(
    k: int,
    data: SequenceData,
    engine: LikelihoodEngine,
    prior: PriorSpec,
    proposals: ProposalSpec,
    n_particles: int,
    schedule: TemperSchedule,
    kernel_sweeps: int = 1,
    seed=0,
) -> ParticleSystem:
    """Run the sampler at fixed k and return the full particle record.

    ``seed`` may be an int or a tuple of ints (callers embedding many runs
    key them by e.g. (master_seed, iteration)).  Raises SmcDegeneracyError
    when every weight vanishes at some step.
    """
    if n_particles < 1:
        raise ValueError("need at least one particle")
    if k not in prior.k_support:
        raise ValueError(f"k={k} outside prior support {prior.k_support}")
    n = n_particles
    m = data.m
    master = np.random.default_rng(np.random.SeedSequence([*_seed_key(seed), 0]))

    s = np.empty((n, k), dtype=np.int64)
    theta = np.empty((n, k + 1))
    for i in range(n):
        st = sample_prior(k, prior, m, master)
        s[i] = st.s
        theta[i] = st.theta
    site_ll = engine.rate_site_matrix(theta, data)
    pop = _Population(
        k=k,
        s=s,
        theta=theta,
        site_ll=site_ll,
        loglik=segment_log_likelihoods(site_ll, s, m),
        log_prior_theta=gamma_logpdf(theta, prior.gamma_shape, prior.gamma_scale).sum(axis=1),
    )

    steps = [
        StepRecord(
            kappa=0.0,
            ancestors=None,
            s=pop.s.copy(),
            theta=pop.theta.copy(),
            log_weights=np.zeros(n),
        )
    ]
    log_weights = np.zeros(n)

    for t in range(1, schedule.n_steps + 1):
        kappa = schedule.kappas[t]
        delta = kappa - schedule.kappas[t - 1]

        # Step 2: multinomial resampling from the previous unnormalized weights.
        with np.errstate(invalid="ignore"):
            shifted = log_weights - log_weights.max()
        if not np.isfinite(shifted).any():
            raise SmcDegeneracyError(t - 1)
        probs = np.exp(shifted)
        probs /= probs.sum()
        ancestors = master.choice(n, size=n, replace=True, p=probs)
        pop.reindex(ancestors)

        # Step 3: incremental weight at the pre-move resampled particle,
        # then MH sweeps invariant for the step-t tempered target.
        log_weights = delta * pop.loglik
        if not np.isfinite(log_weights).any():
            raise SmcDegeneracyError(t)
        _mh_sweeps(pop, kappa, kernel_sweeps, engine, data, prior, proposals,
                   _move_rng(seed, t))

        steps.append(
            StepRecord(
                kappa=kappa,
                ancestors=ancestors,
                s=pop.s.copy(),
                theta=pop.theta.copy(),
                log_weights=log_weights.copy(),
            )
        )

    return ParticleSystem(k=k, n_particles=n, steps=tuple(steps))


def _mh_sweeps(pop, kappa, sweeps, engine, data, prior, proposals, rng):
    for _ in range(sweeps):
        _rate_move(pop, kappa, engine, data, prior, proposals, rng)
        if pop.k > 0:
            _changepoint_move(pop, kappa, data.m, proposals, rng)


def _rate_move(pop, kappa, engine, data, prior, proposals, rng):
    """Joint log-normal walk on all rates, accepted against the tempered target."""
    n = pop.theta.shape[0]
    z = rng.standard_normal(pop.theta.shape)
    u = rng.random(n)
    theta_new = pop.theta * np.exp(proposals.sigma_rate * z)
    site_new = engine.rate_site_matrix(theta_new, data)
    ll_new = segment_log_likelihoods(site_new, pop.s, data.m)
    prior_new = gamma_logpdf(theta_new, prior.gamma_shape, prior.gamma_scale).sum(axis=1)
    hastings = np.sum(np.log(theta_new) - np.log(pop.theta), axis=1)
    with np.errstate(invalid="ignore"):
        log_alpha = kappa * (ll_new - pop.loglik) + (prior_new - pop.log_prior_theta) + hastings
    accept = np.log(u) < log_alpha
    if accept.any():
        pop.theta[accept] = theta_new[accept]
        pop.site_ll[accept] = site_new[accept]
        pop.loglik[accept] = ll_new[accept]
        pop.log_prior_theta[accept] = prior_new[accept]


def _changepoint_move(pop, kappa, m, proposals, rng):
    """Sequential windowed walk on the positions; rates (and the per-site
    rows) are untouched, so only the segment re-summation is recomputed."""
    n, k = pop.s.shape
    uniforms = rng.random((n, k))
    u = rng.random(n)
    s_new = pop.s.copy()
    delta_q = np.full(n, -np.inf)
    for i in range(n):
        try:
            s_i, log_fwd, log_rev = propose_changepoints_from_uniforms(
                tuple(int(v) for v in pop.s[i]), proposals, m, uniforms[i]
            )
        except ProposeFailure:
            continue  # empty window counts as a rejected move
        s_new[i] = s_i
        delta_q[i] = log_rev - log_fwd
    ll_new = segment_log_likelihoods(pop.site_ll, s_new, m)
    with np.errstate(invalid="ignore"):
        log_alpha = kappa * (ll_new - pop.loglik) + delta_q
    accept = np.log(u) < log_alpha
    if accept.any():
        pop.s[accept] = s_new[accept]
        pop.loglik[accept] = ll_new[accept]


def dump_trace(system: ParticleSystem, path) -> None:
    """Write the full particle history as CSV: one row per (step, particle)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "ancestor", "log_weight", "k", "s", "theta"])
        for t, step in enumerate(system.steps):
            for i in range(system.n_particles):
                ancestor = "" if step.ancestors is None else int(step.ancestors[i])
                writer.writerow([
                    t, i, ancestor,
                    repr(float(step.log_weights[i])),
                    system.k,
                    ";".join(str(int(v)) for v in step.s[i]),
                    ";".join(repr(float(v)) for v in step.theta[i]),
                ])


def select_particle(system: ParticleSystem, rng: np.random.Generator):
    """Draw a final-step particle index with probability proportional to its
    unnormalized weight; returns (index, state)."""
    logw = system.final.log_weights
    with np.errstate(invalid="ignore"):
        shifted = logw - logw.max()
    if not np.isfinite(shifted).any():
        raise SmcDegeneracyError(len(system.steps) - 1)
    probs = np.exp(shifted)
    probs /= probs.sum()
    index = int(rng.choice(system.n_particles, p=probs))
    return index, system.state_at(-1, index)
