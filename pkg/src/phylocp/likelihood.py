"""Observed-data log-likelihoods via pruning, exact or with the top of the tree removed.

The exact per-site likelihood marginalizes the unobserved internal states
by belief propagation up the tree, O(p^2 n) per site.  The truncated
variant keeps only nodes 1..2n-g: messages rise to the children of the
removed region, and each boundary node (a removed node with at least one
kept child) is integrated out under the stationary distribution instead
of the true top-of-tree joint.  Sibling subtrees hanging off the same
boundary node stay coupled through its single marginalized state.

Everything is computed in probability space with per-node rescaling, so a
site's log-likelihood is exact down to -inf (impossible data at rate 0).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .changepoint import ChangePointState, segment_bounds
from .substitution import NUM_STATES
from .tree import Tree, boundary_nodes

__all__ = ["SequenceData", "LikelihoodEngine", "complexity_probe"]


@dataclass(frozen=True)
class SequenceData:
    """n aligned sequences over m sites, states encoded 0..3."""

    x: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.uint8)
        if x.ndim != 2:
            raise ValueError("x must be a 2-D (n, m) array")
        if x.size and x.max() >= NUM_STATES:
            raise ValueError("states must be in 0..3")
        if self.names is not None and len(self.names) != x.shape[0]:
            raise ValueError("names length disagrees with row count")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def leaf_onehots(self) -> np.ndarray:
        """(n, m, 4) indicator array, cached after the first call."""
        cached = getattr(self, "_onehots", None)
        if cached is None:
            eye = np.eye(NUM_STATES)
            cached = eye[self.x]
            cached.setflags(write=False)
            object.__setattr__(self, "_onehots", cached)
        return cached


class LikelihoodEngine:
    """Pruning engine for one tree at a fixed truncation level g.

    g=1 reproduces the exact model; 2 <= g <= n keeps only nodes
    1..2n-g and marginalizes the boundary under stationary weights.
    Site columns are independent given the rates, so evaluation can be
    chunked across sites (``n_threads``); results are bitwise identical
    for any thread count because each site is computed independently and
    the final reduction order is fixed.
    """

    def __init__(self, tree: Tree, g: int = 1, n_threads: int = 1):
        n = tree.n_leaves
        if not 1 <= g <= n:
            raise ValueError(f"g must be in 1..{n}, got {g}")
        if n_threads < 1:
            raise ValueError("n_threads must be >= 1")
        self.tree = tree
        self.g = g
        self.n_threads = n_threads

        cut = 2 * n - g if g >= 2 else tree.root
        self._cut = cut
        # Emission plan: each kept node sends its edge message either to a
        # kept parent or into the bucket of the removed node it hangs off.
        # The exact model is the same computation with a single bucket at
        # the root (whose "edge" is the root marginal, folded in below).
        # With parent id > child id, children of a kept node are always
        # kept, so processing nodes in id order sees children before parents.
        if g == 1:
            self._integration = {tree.root: list(tree.children(tree.root))}
            self._internal = list(range(n + 1, tree.root))
        else:
            bset = boundary_nodes(tree, g)
            self._integration = {
                b: [c for c in range(1, cut + 1) if int(tree.parent[c]) == b]
                for b in sorted(bset)
            }
            self._internal = list(range(n + 1, cut + 1))
            # A removed node with a kept child is by definition a boundary
            # node, so every forest root is covered by the buckets above.
            covered = {c for cs in self._integration.values() for c in cs}
            roots = {c for c in range(1, cut + 1) if int(tree.parent[c]) > cut}
            assert roots == covered, "kept forest roots must hang off boundary nodes"

    # -- core ---------------------------------------------------------------

    def site_log_likelihoods(self, rates, data: SequenceData) -> np.ndarray:
        """(R, m) per-site log-likelihoods for a batch of rates.

        This is the hot path shared by every sampler; rates is any 1-D
        array of substitution rates and the result row r is the per-column
        log-likelihood under rate r.
        """
        rates = np.atleast_1d(np.asarray(rates, dtype=float))
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite and >= 0")
        if data.n != self.tree.n_leaves:
            raise ValueError(
                f"data has {data.n} rows but the tree has {self.tree.n_leaves} leaves"
            )
        m = data.m
        if m == 0:
            return np.zeros((rates.size, 0))
        onehots = data.leaf_onehots()
        if self.n_threads == 1 or m < 2 * self.n_threads:
            return self._pass(rates, onehots)
        chunks = np.array_split(np.arange(m), self.n_threads)
        out = np.empty((rates.size, m))
        with ThreadPoolExecutor(max_workers=self.n_threads) as pool:
            futures = [
                pool.submit(self._pass, rates, onehots[:, chunk, :])
                for chunk in chunks
            ]
            for chunk, fut in zip(chunks, futures):
                out[:, chunk] = fut.result()
        return out

    def _pass(self, rates: np.ndarray, onehots: np.ndarray) -> np.ndarray:
        """One pruning sweep over a block of site columns."""
        tree = self.tree
        R = rates.size
        m = onehots.shape[1]
        # JC edge factors per (rate, node): prob the child copies the parent
        # state (ps) or lands on one specific other state (pd).
        decay = np.exp(
            np.outer(-(4.0 / 3.0) * rates, tree.branch_length[: self._cut + 1])
        )
        ps = 0.25 + 0.75 * decay
        pd = 0.25 - 0.25 * decay

        pending: dict[int, np.ndarray] = {}   # child messages awaiting a kept parent
        buckets: dict[int, list[np.ndarray]] = {b: [] for b in self._integration}
        logscale = np.zeros((R, m))

        def emit(node: int, lik: np.ndarray) -> None:
            # Edge factor from `node` up to its parent under JC symmetry:
            # message(b) = pd * sum_a lik(a) + (ps - pd) * lik(b).
            a = pd[:, node].reshape(R, 1, 1)
            b = (ps[:, node] - pd[:, node]).reshape(R, 1, 1)
            msg = a * lik.sum(axis=-1, keepdims=True) + b * lik
            parent = int(tree.parent[node])
            if parent in buckets:
                buckets[parent].append(msg)
            else:
                prev = pending.get(parent)
                pending[parent] = msg if prev is None else prev * msg

        for leaf in range(1, tree.n_leaves + 1):
            emit(leaf, onehots[leaf - 1])
        for node in self._internal:
            lik = pending.pop(node)
            mx = lik.max(axis=-1)
            with np.errstate(divide="ignore"):
                logscale += np.log(mx)
            lik = lik / np.where(mx == 0.0, 1.0, mx)[..., None]
            emit(node, lik)

        # Each bucket owner is integrated out under the stationary weights;
        # sibling messages below it are combined before the sum over states.
        total = logscale
        for msgs in buckets.values():
            prod = msgs[0]
            for msg in msgs[1:]:
                prod = prod * msg
            with np.errstate(divide="ignore"):
                total = total + np.log(0.25 * prod.sum(axis=-1))
        return total

    # -- public operations ----------------------------------------------------

    def site_log_likelihood(self, rate: float, data: SequenceData, column: int) -> float:
        """Log-likelihood of a single observed column under one rate."""
        col = SequenceData(data.x[:, column : column + 1])
        return float(self.site_log_likelihoods(np.array([rate]), col)[0, 0])

    def rate_site_matrix(self, theta: np.ndarray, data: SequenceData) -> np.ndarray:
        """(..., m) site log-likelihoods for an arbitrary-shaped rate array."""
        theta = np.asarray(theta, dtype=float)
        flat = self.site_log_likelihoods(theta.reshape(-1), data)
        return flat.reshape(*theta.shape, data.m)

    def segmented_log_likelihood(self, state: ChangePointState, data: SequenceData) -> float:
        """Total log-likelihood of the change-point model at this engine's g."""
        state.validate_for(data.m)
        if data.m == 0:
            return 0.0
        sll = self.site_log_likelihoods(state.theta_array, data)
        total = 0.0
        for j, (a, b) in enumerate(segment_bounds(state.s, data.m)):
            total += float(sll[j, a:b].sum())
        return total

    def time_machine_log_likelihood(self, state: ChangePointState, data: SequenceData) -> float:
        """Truncated-model log-likelihood; identical to the exact value at g=1."""
        return self.segmented_log_likelihood(state, data)


def complexity_probe(engine: LikelihoodEngine, data: SequenceData, rate: float, repeats: int = 3) -> float:
    """Best-of-``repeats`` wall time of one full-likelihood evaluation, in seconds."""
    state = ChangePointState(k=0, s=(), theta=(rate,))
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        engine.segmented_log_likelihood(state, data)
        best = min(best, time.perf_counter() - t0)
    return best
