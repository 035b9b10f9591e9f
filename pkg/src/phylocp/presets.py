"""Named experiment presets: tree, true parameters, priors, and run settings.

The four simulation studies share one balanced 8-taxon tree with unit
branch lengths; their datasets are regenerated from the pinned seeds, so
every downstream number is reproducible.  The act1-workflow preset is an
end-to-end smoke configuration on a bundled 6-taxon synthetic stand-in
for a real gene alignment (no numeric claims attach to it).
"""

from __future__ import annotations

import copy

__all__ = ["PRESETS", "get_preset", "preset_names"]

_EIGHT_TAXON_TREE = (
    "(((Taxon0:1.0,Taxon1:1.0):1.0,(Taxon2:1.0,Taxon3:1.0):1.0):1.0,"
    "((Taxon4:1.0,Taxon5:1.0):1.0,(Taxon6:1.0,Taxon7:1.0):1.0):1.0):1.0;"
)

_SIX_TAXON_TREE = (
    "(((Strain1:0.12,Strain2:0.09):0.06,Strain3:0.16):0.04,"
    "((Strain4:0.11,Strain5:0.14):0.07,Strain6:0.18):0.05):0.2;"
)

PRESETS: dict[str, dict] = {
    "base-dataset": {
        "newick": _EIGHT_TAXON_TREE,
        "m": 50,
        "truth": {"k": 1, "s": [25], "theta": [0.75, 0.85]},
        "dataset_seed": 6738,
        "prior": {"k_support": [0, 1], "gamma_shape": 2.0, "gamma_scale": 0.4},
        "proposal": {"w_k": 3, "w_s": 3, "sigma_rate": 0.25},
        "run": {"n_particles": 20, "temper_steps": 10, "g": 4, "iterations": 4000},
    },
    "two-changepoints": {
        "newick": _EIGHT_TAXON_TREE,
        "m": 50,
        "truth": {"k": 2, "s": [15, 35], "theta": [0.75, 0.85, 0.75]},
        "dataset_seed": 11,
        "prior": {"k_support": [1, 2], "gamma_shape": 2.0, "gamma_scale": 0.4},
        "proposal": {"w_k": 3, "w_s": 3, "sigma_rate": 0.25},
        "run": {"n_particles": 20, "temper_steps": 10, "g": 4, "iterations": 4000},
    },
    "subtle-changepoint": {
        "newick": _EIGHT_TAXON_TREE,
        "m": 50,
        "truth": {"k": 1, "s": [25], "theta": [0.75, 0.8]},
        "dataset_seed": 12,
        "prior": {"k_support": [0, 1], "gamma_shape": 2.0, "gamma_scale": 0.4},
        "proposal": {"w_k": 3, "w_s": 3, "sigma_rate": 0.25},
        "run": {"n_particles": 20, "temper_steps": 10, "g": 4, "iterations": 4000},
    },
    "more-sites": {
        "newick": _EIGHT_TAXON_TREE,
        "m": 80,
        "truth": {"k": 1, "s": [40], "theta": [0.75, 0.85]},
        "dataset_seed": 13,
        "prior": {"k_support": [0, 1], "gamma_shape": 2.0, "gamma_scale": 0.4},
        "proposal": {"w_k": 3, "w_s": 3, "sigma_rate": 0.25},
        "run": {"n_particles": 20, "temper_steps": 50, "g": 4, "iterations": 4000},
    },
    "act1-workflow": {
        "newick": _SIX_TAXON_TREE,
        "m": 540,
        "truth": {"k": 1, "s": [197], "theta": [0.9, 0.3]},
        "dataset_seed": 14,
        "prior": {"k_support": [0, 1, 2], "gamma_shape": 1.0, "gamma_scale": 0.3},
        "proposal": {"w_k": 3, "w_s": 3, "sigma_rate": 0.25},
        "run": {"n_particles": 50, "temper_steps": 150, "g": 4, "iterations": 1000},
    },
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None
