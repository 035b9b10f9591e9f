"""Likelihood-free baselines: a PMMH over an ABC-SMC evidence estimate, and a
population ABC-SMC over (model, parameters) with decreasing tolerances.

Both compare simulated pseudo-data to the observations with the same
summary distance: the count of cells (sequence, site) whose states differ.
The PMMH variant keeps the exact method's outer chain and swaps the
tempered-likelihood weights for ratios of acceptance fractions
("how many of this particle's M pseudo-datasets fall within the current
tolerance") across a tolerance ladder that ends at the terminal value.
The population variant follows the classic model-selection scheme: sample
a model from the previous generation, perturb it, perturb a particle of
that model, keep it if its simulated dataset lands within tolerance, and
reweight by prior over the mixture of perturbation kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .changepoint import (
    ChangePointState,
    PriorSpec,
    ProposalSpec,
    ProposeFailure,
    changepoint_log_density,
    gamma_logpdf,
    log_prior,
    lognormal_logpdf,
    propose_changepoints_from_uniforms,
    sample_prior,
)
from .likelihood import SequenceData
from .pmmh import ChainRecord, PmmhConfig, run_chain
from .smc import SmcDegeneracyError, StepRecord, ParticleSystem, _seed_key, select_particle
from .tree import Tree

__all__ = [
    "AbcConfig",
    "ToleranceStallError",
    "summary_distance",
    "tolerance_ladder",
    "run_abc_smc_evidence",
    "AbcEvidenceSampler",
    "run_pmmh_abc",
    "AbcSmcResult",
    "run_abc_smc_model_selection",
]


class ToleranceStallError(RuntimeError):
    """A generation's attempt budget ran out without any acceptance."""

    def __init__(self, generation: int, epsilon: float):
        super().__init__(
            f"no acceptances within budget at generation {generation} (eps={epsilon:g})"
        )
        self.generation = generation
        self.epsilon = epsilon


@dataclass(frozen=True)
class AbcConfig:
    """Settings shared by both baselines (outer-chain fields included)."""

    n_pseudo: int = 20             # pseudo-datasets per particle (PMMH-ABC)
    n_particles: int = 20
    steps: int = 10                # tolerance ladder length
    terminal_tolerance: float | None = None   # default n*m/3, set at run time
    proposal: ProposalSpec = field(default_factory=ProposalSpec)
    prior: PriorSpec = field(default_factory=PriorSpec)
    seed: int = 0
    iterations: int = 1000
    time_budget: float | None = None
    kernel_sweeps: int = 1
    max_generation_attempts: int = 200_000

    def __post_init__(self):
        if self.n_pseudo < 1 or self.n_particles < 1 or self.steps < 1:
            raise ValueError("n_pseudo, n_particles and steps must be >= 1")


def summary_distance(sim: SequenceData, obs: SequenceData) -> int:
    """Number of (sequence, site) cells where the two datasets disagree."""
    if sim.x.shape != obs.x.shape:
        raise ValueError(f"shape mismatch: {sim.x.shape} vs {obs.x.shape}")
    return int(np.count_nonzero(sim.x != obs.x))


def tolerance_ladder(n: int, m: int, config: AbcConfig) -> np.ndarray:
    """Geometric ladder from the vacuous n*m down to the terminal tolerance."""
    vacuous = float(n * m)
    terminal = config.terminal_tolerance
    if terminal is None:
        terminal = n * m / 3.0
    if not 0 < terminal <= vacuous:
        raise ValueError(f"terminal tolerance must be in (0, {vacuous}]")
    ratio = (terminal / vacuous) ** (1.0 / config.steps)
    return vacuous * ratio ** np.arange(config.steps + 1)


# ---------------------------------------------------------------------------
# Vectorized pseudo-data machinery


def _rate_grid(s: np.ndarray, theta: np.ndarray, m: int) -> np.ndarray:
    """(N, m) per-site rates from per-particle (s, theta) rows."""
    sites = np.arange(1, m + 1)
    seg_idx = (s[:, :, None] <= sites[None, None, :]).sum(axis=1)
    return np.take_along_axis(theta, seg_idx, axis=1)


def _simulate_distances(
    tree: Tree, s, theta, obs: SequenceData, n_pseudo: int, rng: np.random.Generator
) -> np.ndarray:
    """(N, M) summary distances of fresh pseudo-datasets per particle."""
    n_part = theta.shape[0]
    m = obs.m
    rates = np.repeat(_rate_grid(s, theta, m), n_pseudo, axis=0)  # (N*M, m)
    b = rates.shape[0]
    states = np.empty((b, tree.n_nodes, m), dtype=np.uint8)
    states[:, tree.root - 1] = rng.integers(0, 4, size=(b, m))
    for node in range(tree.root - 1, 0, -1):
        parent = states[:, tree.parent[node] - 1]
        e = np.exp(-(4.0 / 3.0) * rates * tree.branch_length[node])
        stay = rng.random(size=(b, m)) < (0.25 + 0.75 * e)
        shift = rng.integers(1, 4, size=(b, m))
        states[:, node - 1] = np.where(stay, parent, (parent + shift) % 4)
    leaves = states[:, : tree.n_leaves, :]
    diffs = (leaves != obs.x[None]).sum(axis=(1, 2))
    return diffs.reshape(n_part, n_pseudo)


def _log_accept_fraction(dist: np.ndarray, eps: float) -> np.ndarray:
    frac = (dist <= eps).mean(axis=1)
    with np.errstate(divide="ignore"):
        return np.log(frac)


# ---------------------------------------------------------------------------
# PMMH-ABC: evidence from acceptance fractions over the tolerance ladder


def run_abc_smc_evidence(
    k: int,
    obs: SequenceData,
    tree: Tree,
    config: AbcConfig,
    seed=0,
) -> ParticleSystem:
    """ABC analogue of the tempered SMC run at fixed k.

    Particle weights at ladder rung t are the ratio of acceptance
    fractions at successive tolerances, evaluated pre-move; the recorded
    run therefore yields the evidence estimate through the same
    product-of-mean-weights bookkeeping as the exact sampler.
    """
    prior, proposals = config.prior, config.proposal
    if k not in prior.k_support:
        raise ValueError(f"k={k} outside prior support {prior.k_support}")
    n, m_pseudo = config.n_particles, config.n_pseudo
    m = obs.m
    ladder = tolerance_ladder(obs.n, m, config)
    key = _seed_key(seed)
    master = np.random.default_rng(np.random.SeedSequence([*key, 0]))

    s = np.empty((n, k), dtype=np.int64)
    theta = np.empty((n, k + 1))
    for i in range(n):
        st = sample_prior(k, prior, m, master)
        s[i] = st.s
        theta[i] = st.theta
    dist = _simulate_distances(tree, s, theta, obs, m_pseudo, master)
    log_prior_theta = gamma_logpdf(theta, prior.gamma_shape, prior.gamma_scale).sum(axis=1)

    steps = [StepRecord(kappa=0.0, ancestors=None, s=s.copy(), theta=theta.copy(),
                        log_weights=np.zeros(n))]
    log_weights = np.zeros(n)

    for t in range(1, config.steps + 1):
        eps_prev, eps = ladder[t - 1], ladder[t]
        move_rng = np.random.default_rng(
            np.random.Philox(np.random.SeedSequence([*key, 1, t]))
        )

        with np.errstate(invalid="ignore"):
            shifted = log_weights - log_weights.max()
        if not np.isfinite(shifted).any():
            raise SmcDegeneracyError(t - 1)
        probs = np.exp(shifted)
        probs /= probs.sum()
        ancestors = master.choice(n, size=n, replace=True, p=probs)
        s, theta, dist = s[ancestors], theta[ancestors], dist[ancestors]
        log_prior_theta = log_prior_theta[ancestors]

        log_weights = _log_accept_fraction(dist, eps) - _log_accept_fraction(dist, eps_prev)
        if not np.isfinite(log_weights).any():
            raise SmcDegeneracyError(t)

        for _ in range(config.kernel_sweeps):
            # Rate move: fresh pseudo-data for the proposal, indicator accept.
            z = move_rng.standard_normal(theta.shape)
            u = move_rng.random(n)
            theta_new = theta * np.exp(proposals.sigma_rate * z)
            dist_new = _simulate_distances(tree, s, theta_new, obs, m_pseudo, move_rng)
            prior_new = gamma_logpdf(theta_new, prior.gamma_shape, prior.gamma_scale).sum(axis=1)
            hastings = np.sum(np.log(theta_new) - np.log(theta), axis=1)
            with np.errstate(invalid="ignore"):
                log_alpha = (
                    _log_accept_fraction(dist_new, eps) - _log_accept_fraction(dist, eps)
                    + prior_new - log_prior_theta + hastings
                )
                accept = np.log(u) < log_alpha
            theta[accept] = theta_new[accept]
            dist[accept] = dist_new[accept]
            log_prior_theta[accept] = prior_new[accept]

            if k > 0:
                # Change-point move, also with fresh pseudo-data.
                uniforms = move_rng.random((n, k))
                u = move_rng.random(n)
                s_new = s.copy()
                delta_q = np.full(n, -np.inf)
                for i in range(n):
                    try:
                        s_i, log_fwd, log_rev = propose_changepoints_from_uniforms(
                            tuple(int(v) for v in s[i]), proposals, m, uniforms[i]
                        )
                    except ProposeFailure:
                        continue
                    s_new[i] = s_i
                    delta_q[i] = log_rev - log_fwd
                dist_new = _simulate_distances(tree, s_new, theta, obs, m_pseudo, move_rng)
                with np.errstate(invalid="ignore"):
                    log_alpha = (
                        _log_accept_fraction(dist_new, eps) - _log_accept_fraction(dist, eps)
                        + delta_q
                    )
                    accept = np.log(u) < log_alpha
                s[accept] = s_new[accept]
                dist[accept] = dist_new[accept]

        steps.append(StepRecord(kappa=float(eps), ancestors=ancestors,
                                s=s.copy(), theta=theta.copy(),
                                log_weights=log_weights.copy()))

    return ParticleSystem(k=k, n_particles=n, steps=tuple(steps))


class AbcEvidenceSampler:
    """Drop-in replacement for the exact evidence machinery in the outer chain."""

    def __init__(self, data: SequenceData, tree: Tree, config: AbcConfig):
        self.data = data
        self.tree = tree
        self.config = config

    def __call__(self, k: int, seed, rng: np.random.Generator):
        system = run_abc_smc_evidence(k, self.data, self.tree, self.config, seed=seed)
        _, state = select_particle(system, rng)
        return system.log_evidence, state


def run_pmmh_abc(config: AbcConfig, data: SequenceData, tree: Tree) -> list[ChainRecord]:
    """Outer PMMH chain with the ABC evidence estimate substituted."""
    outer = PmmhConfig(
        iterations=config.iterations,
        n_particles=config.n_particles,
        temper_steps=config.steps,
        proposal=config.proposal,
        prior=config.prior,
        seed=config.seed,
        time_budget=config.time_budget,
    )
    sampler = AbcEvidenceSampler(data, tree, config)
    return run_chain(sampler, outer)


# ---------------------------------------------------------------------------
# Population ABC-SMC over (model, parameters)


@dataclass(frozen=True)
class AbcSmcResult:
    """Final weighted population plus per-generation acceptance bookkeeping."""

    models: np.ndarray                  # (N,) model index per particle
    states: tuple[ChangePointState, ...]
    weights: np.ndarray                 # (N,) normalized
    model_probs: dict[int, float]
    ess_per_model: dict[int, float]
    attempts_per_generation: tuple[int, ...]
    tolerances: tuple[float, ...]

    def model_ess(self, k: int) -> float:
        return self.ess_per_model.get(k, 0.0)


def _model_kernel_logpdf(k_to: int, k_from: int, spec: ProposalSpec, prior: PriorSpec) -> float:
    half = (spec.w_k - 1) // 2
    lo = max(k_from - half, prior.k_min)
    hi = min(k_from + half, prior.k_max)
    if not lo <= k_to <= hi:
        return -math.inf
    return -math.log(hi - lo + 1)


def _perturb_model(k_from: int, spec: ProposalSpec, prior: PriorSpec, u: float) -> int:
    half = (spec.w_k - 1) // 2
    lo = max(k_from - half, prior.k_min)
    hi = min(k_from + half, prior.k_max)
    return lo + min(int(u * (hi - lo + 1)), hi - lo)


def run_abc_smc_model_selection(
    config: AbcConfig, data: SequenceData, tree: Tree
) -> AbcSmcResult:
    """Population ABC over models and parameters with decreasing tolerances.

    Raises ToleranceStallError if a generation exhausts its attempt budget
    with no acceptance.
    """
    prior, proposals = config.prior, config.proposal
    n = config.n_particles
    m = data.m
    ladder = tolerance_ladder(data.n, m, config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7]))

    models = np.zeros(n, dtype=np.int64)
    particles: list[ChangePointState] = []
    weights = np.full(n, 1.0 / n)
    attempts_log: list[int] = []

    for t in range(1, config.steps + 1):
        eps = ladder[t]
        new_models = np.zeros(n, dtype=np.int64)
        new_particles: list[ChangePointState] = []
        new_logw = np.zeros(n)
        accepted = 0
        attempts = 0
        model_probs = _weighted_model_probs(models, weights, prior) if t > 1 else None

        while accepted < n:
            block = min(256, config.max_generation_attempts - attempts)
            if block <= 0:
                if accepted == 0:
                    raise ToleranceStallError(t, float(eps))
                # Budget exhausted mid-generation: degrade gracefully by
                # recycling what was accepted so far.
                reps = [i % accepted for i in range(n)]
                new_models = new_models[: accepted][reps]
                new_particles = [new_particles[i] for i in reps]
                new_logw = new_logw[: accepted][reps]
                break
            cand = _propose_candidates(
                block, t, models, particles, weights, model_probs,
                prior, proposals, m, rng
            )
            if not cand:
                attempts += block
                continue
            ks, states, logws = cand
            attempts += block - len(states)  # draws that failed to construct
            dists = _distances_for_candidates(tree, states, data, rng)
            for j in range(len(states)):
                attempts += 1
                if dists[j] <= eps:
                    new_models[accepted] = ks[j]
                    new_particles.append(states[j])
                    new_logw[accepted] = logws[j]
                    accepted += 1
                    if accepted == n:
                        break

        attempts_log.append(attempts)
        models = new_models
        particles = new_particles
        w = np.exp(new_logw - logsumexp(new_logw))
        weights = w / w.sum()

    model_probs = _weighted_model_probs(models, weights, prior)
    ess = {}
    for k in prior.k_support:
        wk = weights[models == k]
        ess[k] = float((wk.sum() ** 2) / (wk ** 2).sum()) if wk.size else 0.0
    return AbcSmcResult(
        models=models,
        states=tuple(particles),
        weights=weights,
        model_probs=model_probs,
        ess_per_model=ess,
        attempts_per_generation=tuple(attempts_log),
        tolerances=tuple(float(e) for e in ladder[1:]),
    )


def _weighted_model_probs(models, weights, prior: PriorSpec) -> dict[int, float]:
    return {
        k: float(weights[models == k].sum()) for k in prior.k_support
    }


def _propose_candidates(
    block, t, models, particles, weights, model_probs, prior, proposals, m, rng
):
    """Draw a block of candidate (model, state, log-weight) triples."""
    ks = []
    states = []
    logws = []
    for _ in range(block):
        if t == 1:
            k = int(rng.choice(prior.k_support))
            state = sample_prior(k, prior, m, rng)
            ks.append(k)
            states.append(state)
            logws.append(0.0)
            continue
        # Sample a model from the previous generation and perturb it; models
        # absent from the previous population cannot be proposed from.
        probs = np.array([model_probs[k] for k in prior.k_support])
        if probs.sum() <= 0:
            raise RuntimeError("previous generation carries no weight")
        src_k = int(rng.choice(prior.k_support, p=probs / probs.sum()))
        k = _perturb_model(src_k, proposals, prior, rng.random())
        idx = np.nonzero(models == k)[0]
        if idx.size == 0:
            continue
        wk = weights[idx]
        src = particles[int(rng.choice(idx, p=wk / wk.sum()))]
        try:
            s_new, _, _ = propose_changepoints_from_uniforms(
                src.s, proposals, m, rng.random(k)
            )
        except ProposeFailure:
            continue
        theta_new = src.theta_array * np.exp(
            proposals.sigma_rate * rng.standard_normal(k + 1)
        )
        state = ChangePointState(
            k=k, s=s_new, theta=tuple(float(v) for v in theta_new)
        )
        logws.append(_toni_log_weight(state, models, particles, weights,
                                      model_probs, prior, proposals, m))
        ks.append(k)
        states.append(state)
    if not states:
        return None
    return ks, states, logws


def _toni_log_weight(
    state, models, particles, weights, model_probs, prior, proposals, m
) -> float:
    """Prior density over the mixture of model/parameter perturbation kernels."""
    num = log_prior(state, prior, m)
    model_mix = [
        math.log(model_probs[kp]) + _model_kernel_logpdf(state.k, kp, proposals, prior)
        for kp in prior.k_support
        if model_probs[kp] > 0
    ]
    log_km = logsumexp(model_mix)
    idx = np.nonzero(models == state.k)[0]
    wk = weights[idx]
    wk = wk / wk.sum()
    kernel_terms = np.empty(idx.size)
    for pos, j in enumerate(idx):
        src = particles[int(j)]
        log_qs = changepoint_log_density(src.s, state.s, proposals, m)
        log_qt = float(
            np.sum(lognormal_logpdf(state.theta_array, np.log(src.theta_array),
                                    proposals.sigma_rate))
        )
        kernel_terms[pos] = math.log(wk[pos]) + log_qs + log_qt if wk[pos] > 0 else -np.inf
    denom = log_km + logsumexp(kernel_terms)
    return num - denom


def _distances_for_candidates(tree, states, obs, rng) -> np.ndarray:
    """One simulated dataset per candidate state, vectorized across the block."""
    b = len(states)
    m = obs.m
    kmax = max(st.k for st in states)
    s = np.full((b, kmax), m + 1, dtype=np.int64)
    theta = np.ones((b, kmax + 1))
    for i, st in enumerate(states):
        s[i, : st.k] = st.s
        # Pad trailing segments (never reached) with the last real rate.
        theta[i, : st.k + 1] = st.theta
        theta[i, st.k + 1 :] = st.theta[-1]
    rates = _rate_grid(s, theta, m)
    b_states = np.empty((b, tree.n_nodes, m), dtype=np.uint8)
    b_states[:, tree.root - 1] = rng.integers(0, 4, size=(b, m))
    for node in range(tree.root - 1, 0, -1):
        parent = b_states[:, tree.parent[node] - 1]
        e = np.exp(-(4.0 / 3.0) * rates * tree.branch_length[node])
        stay = rng.random(size=(b, m)) < (0.25 + 0.75 * e)
        shift = rng.integers(1, 4, size=(b, m))
        b_states[:, node - 1] = np.where(stay, parent, (parent + shift) % 4)
    leaves = b_states[:, : tree.n_leaves, :]
    return (leaves != obs.x[None]).sum(axis=(1, 2))
