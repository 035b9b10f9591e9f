"""Chain diagnostics: acceptance ratio, autocorrelation, ESS, Geweke Z,
interval summaries, and model probabilities.

Everything here is a pure function of the chain records, so a summary can
always be recomputed from the chain CSV alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pmmh import ChainRecord

__all__ = [
    "autocorrelation",
    "weighted_ess",
    "geweke_z",
    "hpd_interval",
    "ChainSummary",
    "summarize_chain",
]


def autocorrelation(series, lag: int) -> float:
    """Sample autocorrelation at one lag; NaN for constant series."""
    x = np.asarray(series, dtype=float)
    if lag < 0 or lag >= x.size:
        raise ValueError(f"lag must be in 0..{x.size - 1}")
    centered = x - x.mean()
    denom = float(np.dot(centered, centered))
    if denom == 0.0:
        return float("nan")
    if lag == 0:
        return 1.0
    return float(np.dot(centered[:-lag], centered[lag:]) / denom)


def weighted_ess(weights) -> float:
    """Kish effective sample size (sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise ValueError("weights must be nonnegative and nonempty")
    total = w.sum()
    if total == 0:
        raise ValueError("all weights are zero")
    return float(total * total / np.dot(w, w))


def _batch_means_var(x: np.ndarray) -> float:
    """Spectral-density-at-zero estimate of Var(mean(x)) via batch means."""
    n = x.size
    b = max(int(math.sqrt(n)), 1)
    nb = n // b
    if nb < 2:
        return float("nan")
    means = x[: nb * b].reshape(nb, b).mean(axis=1)
    return float(b * means.var(ddof=1) / n)


def geweke_z(series, first_frac: float = 0.1, last_frac: float = 0.5) -> float:
    """Z-score comparing the early-window and late-window means.

    Window variances come from batch-means spectral estimates, so the
    score is calibrated for autocorrelated chains.  NaN when a window is
    too short (< 10 points) or degenerate.
    """
    x = np.asarray(series, dtype=float)
    n_first = int(first_frac * x.size)
    n_last = int(last_frac * x.size)
    if n_first < 10 or n_last < 10:
        return float("nan")
    first = x[:n_first]
    last = x[x.size - n_last :]
    var = _batch_means_var(first) + _batch_means_var(last)
    if not var > 0:
        return float("nan")
    return float((first.mean() - last.mean()) / math.sqrt(var))


def hpd_interval(samples, mass: float = 0.95) -> tuple[float, float]:
    """Shortest contiguous interval holding at least the requested mass.

    Sorted-window sweep; ties are broken toward the smallest lower end.
    Requires at least 20 samples.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 20:
        raise ValueError(f"need >= 20 samples, got {x.size}")
    if not 0 < mass <= 1:
        raise ValueError("mass must be in (0, 1]")
    window = int(math.ceil(mass * x.size))
    widths = x[window - 1 :] - x[: x.size - window + 1]
    best = int(np.argmin(widths))  # argmin keeps the first (smallest lo) tie
    return float(x[best]), float(x[best + window - 1])


def _mcse_mean(x: np.ndarray) -> float:
    var = _batch_means_var(x)
    return math.sqrt(var) if var > 0 else float("nan")


@dataclass(frozen=True)
class ChainSummary:
    """Everything the result tables report, computed from one chain."""

    n_records: int
    burn_in: int
    model_probs: dict[int, float]
    sample_counts: dict[int, int]
    acceptance_ratio: float
    acf_k: dict[int, float]                 # lag -> autocorrelation of k
    target_k: int
    geweke: dict[str, float]                # parameter -> Z score
    quantile_intervals: dict[str, tuple[float, float]]
    hpd_intervals: dict[str, tuple[float, float]]
    mean_mcse_intervals: dict[str, tuple[float, float]]
    posterior_means: dict[str, float]
    s_mode: dict[str, int] = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "n_records": self.n_records,
            "burn_in": self.burn_in,
            "model_probs": {str(k): v for k, v in self.model_probs.items()},
            "sample_counts": {str(k): v for k, v in self.sample_counts.items()},
            "acceptance_ratio": self.acceptance_ratio,
            "acf_k": {str(k): v for k, v in self.acf_k.items()},
            "target_k": self.target_k,
            "geweke": self.geweke,
            "quantile_intervals": self.quantile_intervals,
            "hpd_intervals": self.hpd_intervals,
            "mean_mcse_intervals": self.mean_mcse_intervals,
            "posterior_means": self.posterior_means,
            "s_mode": self.s_mode,
        }


def summarize_chain(
    records: list[ChainRecord],
    burn_in: int = 0,
    target_k: int | None = None,
    acf_lags: tuple[int, ...] = (25, 100),
) -> ChainSummary:
    """Compute the full summary for a chain after discarding burn-in.

    Parameter intervals are computed from the iterations that visited
    ``target_k`` (default: the most-visited model); an interval is omitted
    when that model has too few samples to support it.
    """
    if burn_in >= len(records):
        raise ValueError(f"burn_in {burn_in} >= chain length {len(records)}")
    kept = [r for r in records if r.iteration >= burn_in]
    ks = np.array([r.state.k for r in kept])
    n_kept = len(kept)

    counts: dict[int, int] = {}
    for k in ks:
        counts[int(k)] = counts.get(int(k), 0) + 1
    model_probs = {k: c / n_kept for k, c in sorted(counts.items())}

    steps = [r for r in kept if r.iteration > 0]
    acc = sum(r.accepted for r in steps) / len(steps) if steps else float("nan")

    acf_k = {lag: autocorrelation(ks, lag) if lag < n_kept else float("nan")
             for lag in acf_lags}

    if target_k is None:
        target_k = max(model_probs, key=model_probs.get)
    sub = [r for r in kept if r.state.k == target_k]

    geweke: dict[str, float] = {"k": geweke_z(ks)}
    quantiles: dict[str, tuple[float, float]] = {}
    hpds: dict[str, tuple[float, float]] = {}
    mcses: dict[str, tuple[float, float]] = {}
    means: dict[str, float] = {}
    s_mode: dict[str, int] = {}

    def add_parameter(name: str, values: np.ndarray) -> None:
        geweke[name] = geweke_z(values)
        means[name] = float(values.mean())
        quantiles[name] = (
            float(np.quantile(values, 0.025)),
            float(np.quantile(values, 0.975)),
        )
        if values.size >= 20:
            hpds[name] = hpd_interval(values)
        mcse = _mcse_mean(values)
        if not math.isnan(mcse):
            mcses[name] = (
                means[name] - 1.96 * mcse,
                means[name] + 1.96 * mcse,
            )

    if sub:
        for j in range(target_k):
            values = np.array([r.state.s[j] for r in sub], dtype=float)
            add_parameter(f"s{j + 1}", values)
            positions, freq = np.unique(values.astype(int), return_counts=True)
            s_mode[f"s{j + 1}"] = int(positions[np.argmax(freq)])
        for j in range(target_k + 1):
            add_parameter(f"theta{j + 1}", np.array([r.state.theta[j] for r in sub]))

    return ChainSummary(
        n_records=len(records),
        burn_in=burn_in,
        model_probs=model_probs,
        sample_counts=counts,
        acceptance_ratio=acc,
        acf_k=acf_k,
        target_k=int(target_k),
        geweke=geweke,
        quantile_intervals=quantiles,
        hpd_intervals=hpds,
        mean_mcse_intervals=mcses,
        posterior_means=means,
        s_mode=s_mode,
    )
