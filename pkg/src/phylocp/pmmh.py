"""Trans-dimensional particle marginal Metropolis-Hastings over the model index.

The outer chain proposes a new change-point count k' with a truncated
discrete-uniform walk, runs a fresh SMC at k' (even when k' == k), selects
one particle proportionally to its final weight, and accepts the pair
(k', particle) using the ratio of evidence estimates corrected by the
model prior and proposal asymmetry.  On rejection everything is retained,
including the incumbent's stored evidence estimate; refreshing it would
break the exact-approximation property of the algorithm.

The evidence machinery is pluggable: the exact method wraps the tempered
SMC sampler, the likelihood-free baseline substitutes simulation-based
acceptance fractions while reusing this outer loop unchanged.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .changepoint import ChangePointState, PriorSpec, ProposalSpec, propose_k
from .likelihood import LikelihoodEngine, SequenceData
from .smc import SmcDegeneracyError, make_schedule, run_smc, select_particle
from .tree import Tree

__all__ = [
    "ChainRecord",
    "PmmhConfig",
    "SmcEvidenceSampler",
    "pmmh_init",
    "pmmh_step",
    "run_chain",
    "run_pmmh",
    "acceptance_ratio",
    "visit_frequencies",
]

_INIT_RETRIES = 10


@dataclass(frozen=True)
class ChainRecord:
    """One outer-chain iteration: the incumbent state and its bookkeeping."""

    iteration: int
    state: ChangePointState
    log_evidence: float
    accepted: bool
    proposal_k: int
    wall_time: float


@dataclass(frozen=True)
class PmmhConfig:
    """Run settings for the outer chain and its embedded SMC."""

    iterations: int = 1000
    n_particles: int = 20
    temper_steps: int = 10
    schedule_exponent: float = 2.0
    proposal: ProposalSpec = field(default_factory=ProposalSpec)
    prior: PriorSpec = field(default_factory=PriorSpec)
    g: int = 1
    seed: int = 0
    kernel_sweeps: int = 1
    time_budget: float | None = None
    n_threads: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ValueError("time_budget must be positive")


class SmcEvidenceSampler:
    """Evidence estimates from the tempered SMC sampler (the exact method)."""

    def __init__(self, data: SequenceData, engine: LikelihoodEngine, config: PmmhConfig):
        self.data = data
        self.engine = engine
        self.prior = config.prior
        self.proposals = config.proposal
        self.n_particles = config.n_particles
        self.schedule = make_schedule(config.temper_steps, config.schedule_exponent)
        self.kernel_sweeps = config.kernel_sweeps

    def __call__(self, k: int, seed, rng: np.random.Generator):
        system = run_smc(
            k,
            self.data,
            self.engine,
            self.prior,
            self.proposals,
            self.n_particles,
            self.schedule,
            kernel_sweeps=self.kernel_sweeps,
            seed=seed,
        )
        _, state = select_particle(system, rng)
        return system.log_evidence, state


def pmmh_init(sampler, config: PmmhConfig, rng: np.random.Generator) -> ChainRecord:
    """Draw k from its prior, run one SMC there, and record the start state.

    Degenerate SMC runs are retried with fresh derived seeds a bounded
    number of times before giving up.
    """
    prior = config.prior
    k0 = int(rng.choice(prior.k_support))
    last_error: SmcDegeneracyError | None = None
    for attempt in range(_INIT_RETRIES):
        try:
            log_ev, state = sampler(k0, (config.seed, 11, 0, attempt), rng)
        except SmcDegeneracyError as err:
            last_error = err
            continue
        return ChainRecord(
            iteration=0,
            state=state,
            log_evidence=log_ev,
            accepted=False,
            proposal_k=k0,
            wall_time=0.0,
        )
    raise RuntimeError(
        f"initialization failed: {_INIT_RETRIES} degenerate SMC runs at k={k0}"
    ) from last_error


def pmmh_step(
    current: ChainRecord,
    sampler,
    config: PmmhConfig,
    rng: np.random.Generator,
    iteration: int,
    elapsed: float,
) -> ChainRecord:
    """One accept/reject step: fresh SMC at the proposed k', stored evidence
    for the incumbent (never recomputed)."""
    prior = config.prior
    k = current.state.k
    k_new, log_fwd, log_rev = propose_k(k, config.proposal, prior, rng)
    u = rng.random()
    try:
        log_ev_new, state_new = sampler(k_new, (config.seed, 11, iteration), rng)
    except SmcDegeneracyError:
        return ChainRecord(
            iteration=iteration,
            state=current.state,
            log_evidence=current.log_evidence,
            accepted=False,
            proposal_k=k_new,
            wall_time=elapsed,
        )
    log_alpha = (
        (log_ev_new + prior.log_p_k(k_new) + log_rev)
        - (current.log_evidence + prior.log_p_k(k) + log_fwd)
    )
    if math.log(u) < log_alpha:
        return ChainRecord(
            iteration=iteration,
            state=state_new,
            log_evidence=log_ev_new,
            accepted=True,
            proposal_k=k_new,
            wall_time=elapsed,
        )
    return ChainRecord(
        iteration=iteration,
        state=current.state,
        log_evidence=current.log_evidence,
        accepted=False,
        proposal_k=k_new,
        wall_time=elapsed,
    )


def run_chain(sampler, config: PmmhConfig, progress=None) -> list[ChainRecord]:
    """Drive the outer chain for an iteration budget and/or a wall-clock budget."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 10]))
    start = time.perf_counter()
    records = [pmmh_init(sampler, config, rng)]
    iteration = 0
    while True:
        iteration += 1
        if iteration >= config.iterations:
            break
        if config.time_budget is not None and time.perf_counter() - start > config.time_budget:
            break
        records.append(
            pmmh_step(records[-1], sampler, config, rng, iteration,
                      time.perf_counter() - start)
        )
        if progress is not None:
            progress(records[-1])
    return records


def run_pmmh(config: PmmhConfig, data: SequenceData, tree: Tree) -> list[ChainRecord]:
    """Exact-method chain: tempered SMC evidence at the configured g."""
    engine = LikelihoodEngine(tree, g=config.g, n_threads=config.n_threads)
    sampler = SmcEvidenceSampler(data, engine, config)
    return run_chain(sampler, config)


def acceptance_ratio(records: list[ChainRecord]) -> float:
    """Accepted steps over proposal steps (the initialization row is not one)."""
    steps = [r for r in records if r.iteration > 0]
    if not steps:
        return float("nan")
    return sum(r.accepted for r in steps) / len(steps)


def visit_frequencies(records: list[ChainRecord], burn_in: int = 0) -> dict[int, float]:
    """Posterior model probabilities estimated by visit counts after burn-in."""
    kept = [r for r in records if r.iteration >= burn_in]
    if not kept:
        raise ValueError("burn_in leaves no records")
    counts: dict[int, int] = {}
    for r in kept:
        counts[r.state.k] = counts.get(r.state.k, 0) + 1
    return {k: c / len(kept) for k, c in sorted(counts.items())}
