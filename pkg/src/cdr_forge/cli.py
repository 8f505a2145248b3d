"""Command-line entry points.

Subcommands: prepare-target, noise, gen-training, fit, bench.
Exit codes: 0 success, 2 configuration problem, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .circuits import load_circuit, save_circuit
from .errors import CdrForgeError, ConfigurationError
from .fitting import (
    TrainingSample,
    TrainingSet,
    fit_plain,
    fit_report,
    fit_symmetric,
    mitigate_plain,
    CdrResult,
)
from .harness import emit_outputs, load_config, run_experiment
from .noise import build_random_model, perfect_model, save_noise_model
from .seeding import derive
from .training import McmcConfig, generate_standard, mcmc_chain_result, target_grid
from .xy_target import AnsatzSpec, XYModel, exact_ground, half_chain_correlators, vqe_optimize


def _cmd_prepare_target(args) -> int:
    if args.model != "xy":
        raise ConfigurationError(f"unknown target model {args.model!r}")
    model = XYModel(args.qubits)
    result = vqe_optimize(
        model,
        AnsatzSpec(args.layers),
        args.seed,
        energy_target=args.energy_target,
    )
    save_circuit(result.circuit, args.out)
    exact_energy, _ = exact_ground(model)
    sidecar = {
        "qubits": model.qubits,
        "layers": result.layers,
        "energy": result.energy,
        "exact_energy": exact_energy,
        "energy_gap": result.gap,
        "vqe_seed": args.seed,
        "non_clifford_gates": result.circuit.non_clifford_count(),
    }
    with open(str(args.out) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out} ({result.layers} layers, energy gap {result.gap:.2e})")
    return 0


def _cmd_noise(args) -> int:
    if args.perfect:
        model = perfect_model(args.qubits)
    elif args.surrogate:
        if not 0 <= args.p_lo <= args.p_hi <= 1:
            raise ConfigurationError(f"invalid mixing range [{args.p_lo}, {args.p_hi}]")
        model = build_random_model(args.qubits, (args.p_lo, args.p_hi), args.seed)
    else:
        raise ConfigurationError("pick --surrogate or --perfect")
    save_noise_model(model, args.out)
    print(f"wrote {args.out}")
    return 0


def _parse_targets(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigurationError(f"cannot parse target list {text!r}") from None


def _cmd_gen_training(args) -> int:
    coi = load_circuit(args.coi)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    entries = []
    if args.method == "standard":
        for index in range(args.count):
            circuit = generate_standard(
                coi, args.non_clifford, args.sigma, derive(args.seed, "standard", index)
            )
            path = f"{args.out_dir}/train_{index:03d}.circ"
            save_circuit(circuit, path)
            entries.append({"file": path, "index": index})
    else:
        observables = {
            obs.label: obs for obs in half_chain_correlators(coi.num_qubits)
        }
        if args.observable not in observables:
            raise ConfigurationError(
                f"unknown observable {args.observable!r}; choose from {sorted(observables)}"
            )
        obs = observables[args.observable]
        if args.targets:
            targets = _parse_targets(args.targets)
        else:
            targets = target_grid(args.grid)
        config = McmcConfig(
            sigma_mcmc=args.sigma_mcmc,
            n_swap=args.n_swap,
            sigma_sub=args.sigma,
            max_steps=args.max_steps,
            restarts=args.restarts,
            epsilon_target=args.epsilon,
        )
        for index, target in enumerate(targets):
            chain = mcmc_chain_result(
                coi, obs, target, args.non_clifford, config, derive(args.seed, "mcmc", index)
            )
            path = f"{args.out_dir}/train_{index:03d}.circ"
            save_circuit(chain.circuit, path)
            entries.append(
                {
                    "file": path,
                    "index": index,
                    "observable": obs.label,
                    "target": target,
                    "o_exact": chain.o_exact,
                    "steps": chain.steps,
                    "attempt": chain.attempt,
                }
            )
    manifest = {
        "method": args.method,
        "coi": str(args.coi),
        "non_clifford": args.non_clifford,
        "seed": args.seed,
        "circuits": entries,
    }
    with open(f"{args.out_dir}/manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(entries)} circuits to {args.out_dir}")
    return 0


def _cmd_fit(args) -> int:
    try:
        with open(args.training, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"training file is not valid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read {args.training}: {exc}") from None
    try:
        samples = tuple(
            TrainingSample(
                str(s["circuit_id"]),
                str(s["observable_id"]),
                float(s["o_exact"]),
                float(s["o_noisy"]),
                int(s.get("shots", 0)),
            )
            for s in doc["samples"]
        )
        coi_noisy = {str(k): float(v) for k, v in doc["coi_noisy"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad training file structure: {exc}") from None
    training_set = TrainingSet(samples, coi_noisy)
    if args.symmetric:
        result = fit_symmetric(training_set)
        report = fit_report(result, training_set, "symmetric")
    else:
        fits = {}
        mitigated = {}
        for oid in training_set.observable_ids():
            fits[oid] = fit_plain(training_set, oid)
            mitigated[oid] = mitigate_plain(fits[oid], coi_noisy[oid])
        report = fit_report(
            CdrResult(fits, mitigated, None, {}), training_set, "plain"
        )
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_bench(args) -> int:
    config = load_config(args.config)
    if args.out:
        config = type(config).from_dict({**config.to_dict(), "output_dir": args.out})
    rows, failures, summary = run_experiment(config)
    written = emit_outputs(rows, failures, summary, config.output_dir)
    print(f"{len(rows)} instances succeeded, {len(failures)} failed")
    print(f"wrote {written['results']} and {written['summary']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdr-forge",
        description="Clifford data regression with shot-efficient training circuits",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-target", help="variationally prepare a circuit of interest")
    p.add_argument("--model", default="xy", help="target family (xy)")
    p.add_argument("--qubits", type=int, required=True)
    p.add_argument("--layers", type=int, default=4, help="starting ansatz depth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--energy-target", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_prepare_target)

    p = sub.add_parser("noise", help="build and save a noise model")
    p.add_argument("--surrogate", action="store_true", help="randomly mixed channel family")
    p.add_argument("--perfect", action="store_true", help="identity channels everywhere")
    p.add_argument("--qubits", type=int, required=True)
    p.add_argument("--p-lo", type=float, default=0.05)
    p.add_argument("--p-hi", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("gen-training", help="generate near-Clifford training circuits")
    p.add_argument("--method", choices=("standard", "mcmc"), required=True)
    p.add_argument("--coi", required=True, help="circuit of interest file")
    p.add_argument("--non-clifford", type=int, default=30, metavar="N",
                   help="non-Clifford gates kept per training circuit")
    p.add_argument("--count", type=int, default=10, help="standard: circuits to draw")
    p.add_argument("--sigma", type=float, default=0.5, help="substitution weight width")
    p.add_argument("--observable", help="mcmc: correlator label, e.g. X1X4")
    p.add_argument("--targets", help="mcmc: comma-separated target values")
    p.add_argument("--grid", type=int, default=5, help="mcmc: target grid size if --targets absent")
    p.add_argument("--sigma-mcmc", type=float, default=0.01)
    p.add_argument("--n-swap", type=int, default=5)
    p.add_argument("--max-steps", type=int, default=20000)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=0.03, help="mcmc: acceptance band around target")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_gen_training)

    p = sub.add_parser("fit", help="fit mitigation coefficients from a training-data file")
    p.add_argument("--training", required=True, help="JSON with samples + coi_noisy")
    p.add_argument("--symmetric", action="store_true",
                   help="constrained joint fit instead of per-observable regression")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("bench", help="run a full standard-vs-efficient comparison")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", help="override the config's output directory")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CdrForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
