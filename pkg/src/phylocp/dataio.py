"""File formats: relaxed FASTA sequences, chain CSV, JSON sidecars, plot data.

Output files carry the run's config hash and seed (CSV in a leading
comment line, JSON as fields) so chains and summaries can be matched up
later.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .changepoint import ChangePointState
from .diagnostics import ChainSummary, autocorrelation
from .likelihood import SequenceData
from .pmmh import ChainRecord
from .substitution import STATE_ALPHABET

__all__ = [
    "config_hash",
    "write_fasta",
    "read_fasta",
    "write_chain_csv",
    "read_chain_csv",
    "write_json",
    "read_json",
    "write_plot_data",
]

_DECODE = {ch: i for i, ch in enumerate(STATE_ALPHABET)}


def config_hash(config: dict) -> str:
    """Stable short hash of a JSON-serializable config."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Sequences


def write_fasta(path, data: SequenceData) -> None:
    names = data.names or tuple(f"seq{i + 1}" for i in range(data.n))
    with open(path, "w") as fh:
        for name, row in zip(names, data.x):
            fh.write(f">{name}\n")
            fh.write("".join(STATE_ALPHABET[v] for v in row) + "\n")


def read_fasta(path) -> SequenceData:
    """Relaxed FASTA: '>name' headers, ACGT bodies, blank lines ignored."""
    names: list[str] = []
    rows: list[list[int]] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith(">"):
                names.append(line[1:].strip())
                rows.append([])
                continue
            if not names:
                raise ValueError(f"{path}:{lineno}: sequence data before any header")
            try:
                rows[-1].extend(_DECODE[ch] for ch in line.upper())
            except KeyError as err:
                raise ValueError(
                    f"{path}:{lineno}: unknown state {err.args[0]!r}"
                ) from None
    if not names:
        raise ValueError(f"{path}: no sequences found")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"{path}: sequences have unequal lengths {sorted(lengths)}")
    return SequenceData(np.array(rows, dtype=np.uint8), names=tuple(names))


# ---------------------------------------------------------------------------
# Chains

_CHAIN_FIELDS = [
    "iteration", "k", "s", "theta", "log_evidence",
    "accepted", "proposal_k", "cumulative_seconds",
]


def write_chain_csv(path, records: list[ChainRecord], meta: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={meta['config_hash']} seed={meta['seed']}\n")
        writer = csv.writer(fh)
        writer.writerow(_CHAIN_FIELDS)
        for r in records:
            writer.writerow([
                r.iteration,
                r.state.k,
                ";".join(str(v) for v in r.state.s),
                ";".join(repr(v) for v in r.state.theta),
                repr(r.log_evidence),
                int(r.accepted),
                r.proposal_k,
                f"{r.wall_time:.6f}",
            ])


def read_chain_csv(path):
    """Returns (records, meta). Raises ValueError with a line number on
    malformed rows."""
    meta = {"config_hash": None, "seed": None}
    records: list[ChainRecord] = []
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for token in first[1:].split():
                if "=" in token:
                    key, val = token.split("=", 1)
                    meta[key] = val
            header_line = fh.readline()
        else:
            header_line = first
        header = next(csv.reader([header_line]))
        if header != _CHAIN_FIELDS:
            raise ValueError(f"{path}:1: unexpected chain header {header}")
        offset = 3 if first.startswith("#") else 2
        for lineno, row in enumerate(csv.reader(fh), offset):
            try:
                s = tuple(int(v) for v in row[2].split(";") if v)
                theta = tuple(float(v) for v in row[3].split(";") if v)
                records.append(ChainRecord(
                    iteration=int(row[0]),
                    state=ChangePointState(k=int(row[1]), s=s, theta=theta),
                    log_evidence=float(row[4]),
                    accepted=bool(int(row[5])),
                    proposal_k=int(row[6]),
                    wall_time=float(row[7]),
                ))
            except (ValueError, IndexError) as err:
                raise ValueError(f"{path}:{lineno}: malformed chain row: {err}") from None
    if not records:
        raise ValueError(f"{path}: empty chain")
    return records, meta


# ---------------------------------------------------------------------------
# JSON sidecars and plot data


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_plot_data(out_dir, records: list[ChainRecord], summary: ChainSummary,
                    burn_in: int, acf_max_lag: int = 100) -> list[str]:
    """Emit plot-ready tables: s1 histogram, rate density grids, ACF of k.

    Rendering is out of scope; these files hold the numbers a plotting
    tool needs.  Returns the file names written.
    """
    out_dir = Path(out_dir)
    written: list[str] = []
    kept = [r for r in records if r.iteration >= burn_in]
    ks = np.array([r.state.k for r in kept])

    lags = range(0, min(acf_max_lag, len(ks) - 1) + 1)
    with open(out_dir / "acf_k.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lag", "acf"])
        for lag in lags:
            writer.writerow([lag, autocorrelation(ks, lag)])
    written.append("acf_k.csv")

    target = summary.target_k
    sub = [r for r in kept if r.state.k == target]
    if sub and target >= 1:
        s1 = np.array([r.state.s[0] for r in sub])
        values, freq = np.unique(s1, return_counts=True)
        with open(out_dir / "s1_histogram.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s1", "count"])
            for v, c in zip(values, freq):
                writer.writerow([int(v), int(c)])
        written.append("s1_histogram.csv")

    if sub:
        from scipy.stats import gaussian_kde

        for j in range(target + 1):
            values = np.array([r.state.theta[j] for r in sub])
            name = f"rate{j + 1}_density.csv"
            with open(out_dir / name, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow([f"theta{j + 1}", "density"])
                if values.size >= 3 and values.std() > 0:
                    grid = np.linspace(values.min() * 0.5, values.max() * 1.5, 200)
                    dens = gaussian_kde(values)(grid)
                    for x, d in zip(grid, dens):
                        writer.writerow([repr(float(x)), repr(float(d))])
                else:
                    writer.writerow([repr(float(values.mean())), "inf"])
            written.append(name)
    return written
