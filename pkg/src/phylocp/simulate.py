"""Forward simulation of sequence data from the change-point model.

Each site draws the root state from the stationary distribution of its
segment's rate, then propagates down the tree edge by edge.  Sites are
independent given the rates; the per-node sampling is vectorized across
whole blocks of sites (and, for the ABC machinery, across replicate
datasets at once).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .changepoint import ChangePointState, segment_bounds
from .likelihood import SequenceData
from .substitution import NUM_STATES
from .tree import Tree

__all__ = ["SimulationSpec", "simulate_dataset", "simulate_pseudo_data", "simulate_batch"]


@dataclass(frozen=True)
class SimulationSpec:
    """True parameters for a simulated dataset."""

    tree: Tree
    state: ChangePointState
    m: int
    seed: int

    def __post_init__(self):
        self.state.validate_for(self.m)


def simulate_dataset(spec: SimulationSpec, return_internal: bool = False):
    """Simulate leaf sequences (optionally also the internal-node states)."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    return simulate_pseudo_data(spec.tree, spec.state, spec.m, rng, return_internal)


def simulate_pseudo_data(
    tree: Tree,
    state: ChangePointState,
    m: int,
    rng: np.random.Generator,
    return_internal: bool = False,
):
    """Simulate one dataset drawing from the caller's rng stream."""
    full = simulate_batch(tree, state, m, rng, batch=1)[0]
    data = SequenceData(full[: tree.n_leaves], names=tree.leaf_names)
    if return_internal:
        return data, full
    return data


def simulate_batch(
    tree: Tree, state: ChangePointState, m: int, rng: np.random.Generator, batch: int
) -> np.ndarray:
    """(batch, 2n-1, m) node-state matrix for `batch` independent datasets.

    The row index is node id - 1.  Drawing order is fixed (segments in
    order, nodes root-down), so outputs are reproducible from the rng
    state regardless of how the caller later parallelizes.
    """
    state.validate_for(m)
    nodes = tree.n_nodes
    out = np.empty((batch, nodes, m), dtype=np.uint8)
    if m == 0:
        return out
    for j, (a, b) in enumerate(segment_bounds(state.s, m)):
        width = b - a
        if width == 0:
            continue
        rate = state.theta[j]
        out[:, tree.root - 1, a:b] = rng.integers(0, NUM_STATES, size=(batch, width))
        # Parent ids exceed child ids, so descending id order is root-down.
        for node in range(tree.root - 1, 0, -1):
            parent_states = out[:, tree.parent[node] - 1, a:b]
            e = np.exp(-(4.0 / 3.0) * rate * tree.branch_length[node])
            stay = rng.random(size=(batch, width)) < (0.25 + 0.75 * e)
            # A substituted site lands uniformly on one of the other 3 states.
            shift = rng.integers(1, NUM_STATES, size=(batch, width))
            out[:, node - 1, a:b] = np.where(
                stay, parent_states, (parent_states + shift) % NUM_STATES
            )
    return out
