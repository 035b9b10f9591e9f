"""Command-line interface: simulate / infer / diagnose / bench / preset.

Batch operation only; every run writes its outputs (with the config hash
and seed embedded) into --out.  Exit codes: 0 success, 2 validation
error, 3 I/O error, 4 engine failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path


from . import dataio
from .abc_baselines import (
    AbcConfig,
    ToleranceStallError,
    run_abc_smc_model_selection,
    run_pmmh_abc,
)
from .changepoint import ChangePointState, PriorSpec, ProposalSpec
from .diagnostics import summarize_chain
from .likelihood import LikelihoodEngine, SequenceData, complexity_probe
from .pmmh import PmmhConfig, acceptance_ratio, run_pmmh, visit_frequencies
from .presets import get_preset, preset_names
from .simulate import SimulationSpec, simulate_dataset
from .smc import SmcDegeneracyError, make_schedule, run_smc
from .tree import NewickError, UnsupportedTreeError, parse_newick, to_newick

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_ENGINE = 4


class ValidationError(ValueError):
    pass


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, NewickError, UnsupportedTreeError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except (SmcDegeneracyError, ToleranceStallError, RuntimeError) as err:
        print(f"engine failure: {err}", file=sys.stderr)
        return EXIT_ENGINE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phylocp",
        description="Substitution-rate change-point inference on a fixed phylogeny.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a dataset from known parameters")
    p_sim.add_argument("--preset", choices=preset_names())
    p_sim.add_argument("--tree", type=Path, help="Newick tree file")
    p_sim.add_argument("--config", type=Path, help="simulation spec JSON")
    p_sim.add_argument("--seed", type=int, help="override the dataset seed")
    p_sim.add_argument("--out", type=Path, required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_inf = sub.add_parser("infer", help="run an inference chain")
    p_inf.add_argument("--tree", type=Path, required=True)
    p_inf.add_argument("--data", type=Path, required=True)
    p_inf.add_argument("--config", type=Path, help="run config JSON")
    p_inf.add_argument("--method", choices=["pmmh", "pmmh-abc", "abc-smc"])
    p_inf.add_argument("--g", type=int)
    p_inf.add_argument("--iterations", type=int)
    p_inf.add_argument("--time-budget", type=float, help="wall-clock budget in seconds")
    p_inf.add_argument("--seed", type=int)
    p_inf.add_argument("--threads", type=int)
    p_inf.add_argument("--by-name", action="store_true",
                       help="map sequences to leaves by name instead of file order")
    p_inf.add_argument("--burn-in", type=int, default=0)
    p_inf.add_argument("--out", type=Path, required=True)
    p_inf.set_defaults(func=cmd_infer)

    p_diag = sub.add_parser("diagnose", help="recompute diagnostics from a chain CSV")
    p_diag.add_argument("--chain", type=Path, required=True)
    p_diag.add_argument("--summary", type=Path,
                        help="summary JSON to cross-check the config hash against")
    p_diag.add_argument("--burn-in", type=int, default=0)
    p_diag.add_argument("--target-k", type=int)
    p_diag.add_argument("--force", action="store_true",
                        help="proceed despite a chain/summary hash mismatch")
    p_diag.add_argument("--out", type=Path, required=True)
    p_diag.set_defaults(func=cmd_diagnose)

    p_bench = sub.add_parser("bench", help="evidence-estimate spread and timings per g")
    p_bench.add_argument("--tree", type=Path, required=True)
    p_bench.add_argument("--data", type=Path, required=True)
    p_bench.add_argument("--config", type=Path)
    p_bench.add_argument("--g", type=str, default="1,4",
                         help="comma-separated truncation levels")
    p_bench.add_argument("--replicates", type=int, default=50)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--threads", type=int)
    p_bench.add_argument("--by-name", action="store_true")
    p_bench.add_argument("--out", type=Path, required=True)
    p_bench.set_defaults(func=cmd_bench)

    p_pre = sub.add_parser("preset", help="materialize a named preset")
    p_pre.add_argument("name", choices=preset_names())
    p_pre.add_argument("--out", type=Path, required=True)
    p_pre.set_defaults(func=cmd_preset)

    return parser


# ---------------------------------------------------------------------------
# Helpers


def _load_tree(path: Path):
    text = Path(path).read_text().strip()
    return parse_newick(text)


def _load_data(path: Path, tree, by_name: bool) -> SequenceData:
    data = dataio.read_fasta(path)
    if data.n != tree.n_leaves:
        raise ValidationError(
            f"data has {data.n} sequences but the tree has {tree.n_leaves} leaves"
        )
    if by_name:
        order = {name: i for i, name in enumerate(data.names)}
        missing = [n for n in tree.leaf_names if n not in order]
        if missing:
            raise ValidationError(f"sequences missing for leaves: {missing}")
        rows = [order[name] for name in tree.leaf_names]
        data = SequenceData(data.x[rows], names=tree.leaf_names)
    return data


def _merge_config(args, defaults: dict) -> dict:
    config = dict(defaults)
    if args.config:
        config.update(dataio.read_json(args.config))
    for key in ("method", "g", "iterations", "seed", "threads"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if getattr(args, "time_budget", None) is not None:
        config["time_budget"] = args.time_budget
    return config


def _specs_from_config(config: dict) -> tuple[PriorSpec, ProposalSpec]:
    prior = PriorSpec(
        k_support=tuple(config.get("prior", {}).get("k_support", (0, 1))),
        gamma_shape=config.get("prior", {}).get("gamma_shape", 2.0),
        gamma_scale=config.get("prior", {}).get("gamma_scale", 0.4),
    )
    proposal = ProposalSpec(
        w_k=config.get("proposal", {}).get("w_k", 3),
        w_s=config.get("proposal", {}).get("w_s", 3),
        sigma_rate=config.get("proposal", {}).get("sigma_rate", 0.25),
    )
    return prior, proposal


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args) -> int:
    if args.preset:
        spec_dict = get_preset(args.preset)
    elif args.config:
        spec_dict = dataio.read_json(args.config)
        if args.tree:
            spec_dict["newick"] = Path(args.tree).read_text().strip()
        if "newick" not in spec_dict:
            raise ValidationError("simulation config needs a tree (--tree or 'newick')")
    else:
        raise ValidationError("simulate needs --preset or --config")
    if args.seed is not None:
        spec_dict["dataset_seed"] = args.seed

    tree = parse_newick(spec_dict["newick"])
    truth = spec_dict["truth"]
    state = ChangePointState(
        k=int(truth["k"]),
        s=tuple(int(v) for v in truth["s"]),
        theta=tuple(float(v) for v in truth["theta"]),
    )
    spec = SimulationSpec(tree=tree, state=state, m=int(spec_dict["m"]),
                          seed=int(spec_dict["dataset_seed"]))
    data = simulate_dataset(spec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_fasta(out / "sequences.fasta", data)
    (out / "tree.nwk").write_text(to_newick(tree) + "\n")
    truth_payload = {
        "k": state.k,
        "s": list(state.s),
        "theta": list(state.theta),
        "m": spec.m,
        "seed": spec.seed,
        "config_hash": dataio.config_hash(spec_dict),
    }
    dataio.write_json(out / "truth.json", truth_payload)
    print(f"wrote {data.n}x{data.m} dataset to {out}")
    return EXIT_OK


_INFER_DEFAULTS = {
    "method": "pmmh",
    "g": 1,
    "iterations": 1000,
    "seed": 0,
    "threads": 1,
    "n_particles": 20,
    "temper_steps": 10,
    "schedule_exponent": 2.0,
    "kernel_sweeps": 1,
    "n_pseudo": 20,
    "time_budget": None,
}


def cmd_infer(args) -> int:
    tree = _load_tree(args.tree)
    data = _load_data(args.data, tree, args.by_name)
    config = _merge_config(args, _INFER_DEFAULTS)
    prior, proposal = _specs_from_config(config)
    chash = dataio.config_hash(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    if config["method"] == "abc-smc":
        abc_config = _abc_config(config, prior, proposal)
        result = run_abc_smc_model_selection(abc_config, data, tree)
        _write_abc_smc_outputs(out, result, config, chash)
        print(f"abc-smc model probabilities: {result.model_probs}")
        return EXIT_OK

    if config["method"] == "pmmh":
        pcfg = PmmhConfig(
            iterations=int(config["iterations"]),
            n_particles=int(config["n_particles"]),
            temper_steps=int(config["temper_steps"]),
            schedule_exponent=float(config["schedule_exponent"]),
            proposal=proposal,
            prior=prior,
            g=int(config["g"]),
            seed=int(config["seed"]),
            kernel_sweeps=int(config["kernel_sweeps"]),
            time_budget=config["time_budget"],
            n_threads=int(config["threads"]),
        )
        records = run_pmmh(pcfg, data, tree)
    elif config["method"] == "pmmh-abc":
        records = run_pmmh_abc(_abc_config(config, prior, proposal), data, tree)
    else:
        raise ValidationError(f"unknown method {config['method']!r}")

    meta = {"config_hash": chash, "seed": config["seed"]}
    dataio.write_chain_csv(out / "chain.csv", records, meta)
    summary = {
        "method": config["method"],
        "seed": config["seed"],
        "config_hash": chash,
        "config": config,
        "model_probs": {str(k): v for k, v in
                        visit_frequencies(records, args.burn_in).items()},
        "acceptance_ratio": acceptance_ratio(records),
        "iterations": len(records),
        "wall_time": time.perf_counter() - start,
    }
    dataio.write_json(out / "summary.json", summary)
    print(f"chain of {len(records)} records -> {out}; "
          f"P(k|data) = {summary['model_probs']}")
    return EXIT_OK


def _abc_config(config: dict, prior: PriorSpec, proposal: ProposalSpec) -> AbcConfig:
    return AbcConfig(
        n_pseudo=int(config.get("n_pseudo", 20)),
        n_particles=int(config["n_particles"]),
        steps=int(config["temper_steps"]),
        terminal_tolerance=config.get("terminal_tolerance"),
        proposal=proposal,
        prior=prior,
        seed=int(config["seed"]),
        iterations=int(config["iterations"]),
        time_budget=config["time_budget"],
        kernel_sweeps=int(config.get("kernel_sweeps", 1)),
    )


def _write_abc_smc_outputs(out: Path, result, config: dict, chash: str) -> None:
    with open(out / "abc_samples.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={chash} seed={config['seed']}\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "s", "theta", "weight"])
        for k, state, w in zip(result.models, result.states, result.weights):
            writer.writerow([
                int(k),
                ";".join(str(v) for v in state.s),
                ";".join(repr(v) for v in state.theta),
                repr(float(w)),
            ])
    dataio.write_json(out / "summary.json", {
        "method": "abc-smc",
        "seed": config["seed"],
        "config_hash": chash,
        "config": config,
        "model_probs": {str(k): v for k, v in result.model_probs.items()},
        "ess_per_model": {str(k): v for k, v in result.ess_per_model.items()},
        "attempts_per_generation": list(result.attempts_per_generation),
        "tolerances": list(result.tolerances),
    })


def cmd_diagnose(args) -> int:
    records, meta = dataio.read_chain_csv(args.chain)
    if args.summary is not None:
        summary_meta = dataio.read_json(args.summary)
        if summary_meta.get("config_hash") != meta.get("config_hash") and not args.force:
            raise ValidationError(
                "chain/summary config hashes disagree "
                f"({meta.get('config_hash')} vs {summary_meta.get('config_hash')}); "
                "pass --force to proceed"
            )
    if args.burn_in >= len(records):
        raise ValidationError(
            f"burn-in {args.burn_in} >= chain length {len(records)}"
        )
    summary = summarize_chain(records, burn_in=args.burn_in, target_k=args.target_k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = summary.to_jsonable()
    payload["config_hash"] = meta.get("config_hash")
    payload["seed"] = meta.get("seed")
    dataio.write_json(out / "diagnostics.json", payload)
    written = dataio.write_plot_data(out, records, summary, args.burn_in)
    print(f"diagnostics.json + {', '.join(written)} -> {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    tree = _load_tree(args.tree)
    data = _load_data(args.data, tree, args.by_name)
    config = _merge_config(args, dict(_INFER_DEFAULTS))
    prior, proposal = _specs_from_config(config)
    chash = dataio.config_hash(config)
    g_values = [int(v) for v in str(args.g).split(",") if v]
    schedule = make_schedule(int(config["temper_steps"]),
                             float(config["schedule_exponent"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    probe_rows = []
    for g in g_values:
        engine = LikelihoodEngine(tree, g=g, n_threads=int(config.get("threads") or 1))
        probe_rows.append([g, f"{complexity_probe(engine, data, 0.8):.6f}"])
        for k in prior.k_support:
            for rep in range(args.replicates):
                t0 = time.perf_counter()
                try:
                    system = run_smc(
                        k, data, engine, prior, proposal,
                        int(config["n_particles"]), schedule,
                        kernel_sweeps=int(config["kernel_sweeps"]),
                        seed=(args.seed, g, k, rep),
                    )
                    log_ev = system.log_evidence
                except SmcDegeneracyError:
                    log_ev = float("-inf")
                rows.append([g, k, rep, repr(log_ev),
                             f"{time.perf_counter() - t0:.6f}"])
    with open(out / "bench.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={chash} seed={args.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["g", "k", "replicate", "log_evidence", "seconds"])
        writer.writerows(rows)
    with open(out / "likelihood_probe.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={chash} seed={args.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["g", "likelihood_eval_seconds"])
        writer.writerows(probe_rows)
    print(f"bench table ({len(rows)} rows) -> {out / 'bench.csv'}")
    return EXIT_OK


def cmd_preset(args) -> int:
    preset = get_preset(args.name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tree.nwk").write_text(preset["newick"] + "\n")
    dataio.write_json(out / "config.json", preset)
    print(f"preset {args.name} -> {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
