"""Experiment orchestration: target + noise preparation, measurement layouts,
standard vs efficient CDR sweeps over (N_t, N_s) grids, and result emission.

Every stochastic step draws from a seed derived from the master seed and the
cell coordinates, so a config maps to byte-identical outputs regardless of
worker count or execution order.
"""
from __future__ import annotations

import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .circuits import Circuit, PauliObservable, load_circuit
from .errors import (
    CdrForgeError,
    ConfigurationError,
    McmcExhaustedError,
    SingularFitError,
)
from .fitting import (
    TrainingSample,
    TrainingSet,
    absolute_error,
    fit_plain,
    fit_symmetric,
    mitigate_plain,
)
from .noise import NoiseModel, build_random_model, load_noise_model, perfect_model
from .seeding import derive, rng_from
from .simulator import DensityMatrix, expectation_exact, run_exact, run_noisy, sample_pauli_group
from .training import McmcConfig, generate_standard, mcmc_chain_result, target_grid
from .xy_target import AnsatzSpec, XYModel, half_chain_correlators, vqe_optimize

DEFAULT_P_RANGE = (0.05, 0.15)
DEFAULT_SUBSTITUTIONS = 30
DEFAULT_INSTANCES = 10
EFFICIENT_BASE_TARGETS = (-0.5, 0.5)


@dataclass(frozen=True)
class TargetSpec:
    kind: str  # "xy" or "file"
    path: str | None = None
    qubits: int | None = None
    layers: int = 4
    seed: int | None = None
    energy_target: float = 1e-6

    def __post_init__(self):
        if self.kind == "xy":
            if self.qubits is None:
                raise ConfigurationError("xy target needs a qubit count")
        elif self.kind == "file":
            if not self.path:
                raise ConfigurationError("file target needs a path")
        else:
            raise ConfigurationError(f"unknown target kind {self.kind!r}")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str  # "surrogate", "file", or "perfect"
    path: str | None = None
    p_range: tuple[float, float] = DEFAULT_P_RANGE
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("surrogate", "file", "perfect"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ConfigurationError("file noise needs a path")
        lo, hi = self.p_range
        if not (0 <= lo <= hi <= 1):
            raise ConfigurationError(f"invalid p_range {self.p_range}")


@dataclass(frozen=True)
class ExperimentConfig:
    target: TargetSpec
    noise: NoiseSpec
    method: str = "both"
    n_t_values: tuple[int, ...] = (2, 6, 12, 30)
    n_s_values: tuple[int, ...] = (1000, 10000)
    instances: int = DEFAULT_INSTANCES
    substitutions: int = DEFAULT_SUBSTITUTIONS
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    output_dir: str = "cdr-out"
    master_seed: int = 0
    standard_fit: str = "plain"
    workers: int = 1

    def __post_init__(self):
        if self.method not in ("standard", "efficient", "both"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.standard_fit not in ("plain", "symmetric"):
            raise ConfigurationError(f"unknown standard_fit {self.standard_fit!r}")
        object.__setattr__(self, "n_t_values", tuple(int(v) for v in self.n_t_values))
        object.__setattr__(self, "n_s_values", tuple(int(v) for v in self.n_s_values))
        if any(v < 2 for v in self.n_t_values):
            raise ConfigurationError("every N_t must be >= 2")
        if any(v < 1 for v in self.n_s_values):
            raise ConfigurationError("every N_s must be >= 1")
        if self.instances < 1:
            raise ConfigurationError("instances must be >= 1")
        if self.substitutions < 0:
            raise ConfigurationError("substitution count must be >= 0")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    @property
    def methods(self) -> tuple[str, ...]:
        return ("standard", "efficient") if self.method == "both" else (self.method,)

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        try:
            target = TargetSpec(**doc["target"])
            noise_doc = dict(doc["noise"])
            if "p_range" in noise_doc:
                noise_doc["p_range"] = tuple(noise_doc["p_range"])
            noise = NoiseSpec(**noise_doc)
            mcmc = McmcConfig(**doc.get("mcmc", {}))
            return ExperimentConfig(
                target=target,
                noise=noise,
                method=doc.get("method", "both"),
                n_t_values=tuple(doc.get("n_t", (2, 6, 12, 30))),
                n_s_values=tuple(doc.get("n_s", (1000, 10000))),
                instances=int(doc.get("instances", DEFAULT_INSTANCES)),
                substitutions=int(doc.get("n", DEFAULT_SUBSTITUTIONS)),
                output_dir=doc.get("output_dir", "cdr-out"),
                master_seed=int(doc.get("master_seed", 0)),
                standard_fit=doc.get("standard_fit", "plain"),
                workers=int(doc.get("workers", 1)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"bad experiment config: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "target": {k: v for k, v in vars(self.target).items() if v is not None},
            "noise": {
                k: (list(v) if isinstance(v, tuple) else v)
                for k, v in vars(self.noise).items()
                if v is not None
            },
            "method": self.method,
            "n_t": list(self.n_t_values),
            "n_s": list(self.n_s_values),
            "instances": self.instances,
            "n": self.substitutions,
            "mcmc": {
                "sigma_mcmc": self.mcmc.sigma_mcmc,
                "n_swap": self.mcmc.n_swap,
                "sigma_sub": self.mcmc.sigma_sub,
                "targets": list(self.mcmc.targets),
                "max_steps": self.mcmc.max_steps,
                "restarts": self.mcmc.restarts,
                "epsilon_target": self.mcmc.epsilon_target,
            },
            "output_dir": self.output_dir,
            "master_seed": self.master_seed,
            "standard_fit": self.standard_fit,
            "workers": self.workers,
        }


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(doc)


@dataclass(frozen=True)
class StandardPlan:
    bases: tuple[str, ...]
    flagged_extra: bool = False


def layout_standard(
    n_t: int, observables: list[PauliObservable], seed, instance_parity: int = 0
) -> StandardPlan:
    """Half the circuits in the X basis, half in Y.

    N_t=2 pairs are too small to split, so whole instances alternate basis by
    parity.  An odd leftover circuit gets a random basis and is flagged.
    """
    if n_t < 2:
        raise ConfigurationError(f"N_t must be >= 2, got {n_t}")
    letters = sorted({obs.basis_letter() for obs in observables})
    if letters != ["X", "Y"]:
        raise ConfigurationError(f"expected X and Y basis observables, got {letters}")
    if n_t == 2:
        basis = "X" if instance_parity % 2 == 0 else "Y"
        return StandardPlan((basis, basis))
    rng = rng_from(seed)
    n_x = n_t // 2
    flagged = n_t % 2 == 1
    # odd N_t: the leftover circuit's basis is a fair coin, so neither basis
    # is systematically favored across instances
    if flagged and rng.choice(2) == 0:
        n_x += 1
    bases = ["Y"] * n_t
    for slot in rng.choice(n_t, size=n_x, replace=False):
        bases[int(slot)] = "X"
    return StandardPlan(tuple(bases), flagged)


@dataclass(frozen=True)
class EfficientItem:
    observable_index: int
    target: float


@dataclass(frozen=True)
class EfficientPlan:
    items: tuple[EfficientItem, ...]
    effective_n_t: int
    diagnostic: str | None = None


def layout_efficient(
    n_t: int,
    observables: list[PauliObservable],
    seed,
    base_targets: tuple[float, float] = EFFICIENT_BASE_TARGETS,
) -> EfficientPlan:
    """One chain-generated circuit per (observable, target).

    N_t >= 2M spreads a grid of N_t/M targets over every observable; below
    that, N_t/2 randomly chosen observables get the two-point grid.
    Inexpressible N_t values shrink to the nearest expressible layout.
    """
    if n_t < 2:
        raise ConfigurationError(f"N_t must be >= 2, got {n_t}")
    m = len(observables)
    if m < 1:
        raise ConfigurationError("no observables")
    if n_t >= 2 * m:
        grid_n = n_t // m
        targets = target_grid(grid_n)
        items = tuple(
            EfficientItem(j, y) for j in range(m) for y in targets
        )
        effective = grid_n * m
        diagnostic = None if effective == n_t else (
            f"N_t={n_t} not expressible as observables x grid; using {effective}"
        )
        return EfficientPlan(items, effective, diagnostic)
    half = n_t // 2
    effective = 2 * half
    diagnostic = None if effective == n_t else (
        f"odd N_t={n_t} reduced to {effective}"
    )
    rng = rng_from(seed)
    chosen = sorted(int(j) for j in rng.choice(m, size=half, replace=False))
    items = tuple(EfficientItem(j, y) for j in chosen for y in base_targets)
    return EfficientPlan(items, effective, diagnostic)


@dataclass(frozen=True)
class ResultRow:
    method: str
    n_t: int
    n_s: int
    n_s_total: int
    instance: int
    error_mitigated: float
    error_noisy: float
    mitigated: dict[str, float]
    noisy: dict[str, float]
    exact: dict[str, float]
    seed_label: str
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FailureRecord:
    method: str
    n_t: int
    n_s: int
    instance: int
    reason: str


@dataclass(frozen=True)
class PreparedExperiment:
    """Target, observables, noise and the reusable coi simulations."""

    coi: Circuit
    observables: tuple[PauliObservable, ...]
    exact_values: dict[str, float]
    noise_model: NoiseModel
    coi_density: DensityMatrix
    target_info: dict


def prepare_experiment(config: ExperimentConfig) -> PreparedExperiment:
    if config.target.kind == "xy":
        model = XYModel(config.target.qubits)
        seed = config.target.seed
        if seed is None:
            seed = int(derive(config.master_seed, "target-vqe").generate_state(1)[0])
        result = vqe_optimize(
            model,
            AnsatzSpec(config.target.layers),
            seed,
            energy_target=config.target.energy_target,
        )
        coi = result.circuit
        target_info = {
            "kind": "xy",
            "qubits": model.qubits,
            "layers": result.layers,
            "energy": result.energy,
            "energy_gap": result.gap,
            "vqe_seed": seed,
        }
    else:
        coi = load_circuit(config.target.path)
        target_info = {"kind": "file", "path": config.target.path, "qubits": coi.num_qubits}
    qubits = coi.num_qubits
    if qubits % 2 != 0:
        raise ConfigurationError("half-chain correlators need an even qubit count")
    available = coi.non_clifford_count()
    if config.substitutions > available:
        raise ConfigurationError(
            f"N={config.substitutions} exceeds the target's {available} non-Clifford gates"
        )
    observables = tuple(half_chain_correlators(qubits))

    if config.noise.kind == "file":
        noise_model = load_noise_model(config.noise.path)
        if noise_model.num_qubits != qubits:
            raise ConfigurationError(
                f"noise model is for {noise_model.num_qubits} qubits, target has {qubits}"
            )
    elif config.noise.kind == "perfect":
        noise_model = perfect_model(qubits)
    else:
        seed = config.noise.seed
        if seed is None:
            seed = int(derive(config.master_seed, "noise-model").generate_state(1)[0])
        noise_model = build_random_model(qubits, config.noise.p_range, seed)

    exact_state = run_exact(coi)
    exact_values = {
        obs.label: expectation_exact(exact_state, obs) for obs in observables
    }
    coi_density = run_noisy(coi, noise_model)
    return PreparedExperiment(
        coi, observables, exact_values, noise_model, coi_density, target_info
    )


def _observables_by_basis(observables) -> dict[str, list[PauliObservable]]:
    grouped: dict[str, list[PauliObservable]] = {}
    for obs in observables:
        grouped.setdefault(obs.basis_letter(), []).append(obs)
    return grouped


def _measure_coi(prepared: PreparedExperiment, config, method, n_t, n_s, instance):
    grouped = _observables_by_basis(prepared.observables)
    values: dict[str, float] = {}
    for basis in sorted(grouped):
        estimates = sample_pauli_group(
            prepared.coi_density,
            basis,
            grouped[basis],
            n_s,
            derive(config.master_seed, "shots-coi", method, n_t, n_s, instance, basis),
        )
        for obs, est in zip(grouped[basis], estimates):
            values[obs.label] = est.value
    return values


def run_instance(
    prepared: PreparedExperiment,
    config: ExperimentConfig,
    method: str,
    n_t: int,
    n_s: int,
    instance: int,
) -> ResultRow:
    """One (method, N_t, N_s, instance) cell entry.

    Raises McmcExhaustedError or SingularFitError for the caller to convert
    into a FailureRecord; those instances never enter the statistics.
    """
    master = config.master_seed
    grouped = _observables_by_basis(prepared.observables)
    diagnostics: dict = {}
    samples: list[TrainingSample] = []
    if method == "standard":
        plan = layout_standard(
            n_t,
            list(prepared.observables),
            derive(master, "layout", method, n_t, n_s, instance),
            instance_parity=instance,
        )
        if plan.flagged_extra:
            diagnostics["odd_extra_basis"] = True
        runs = len(plan.bases)
        for t, basis in enumerate(plan.bases):
            circuit = generate_standard(
                prepared.coi,
                config.substitutions,
                config.mcmc.sigma_sub,
                derive(master, "standard-train", n_t, n_s, instance, t),
            )
            psi = run_exact(circuit)
            rho = run_noisy(circuit, prepared.noise_model)
            estimates = sample_pauli_group(
                rho,
                basis,
                grouped[basis],
                n_s,
                derive(master, "shots-train", method, n_t, n_s, instance, t),
            )
            for obs, est in zip(grouped[basis], estimates):
                samples.append(
                    TrainingSample(
                        f"t{t}", obs.label, expectation_exact(psi, obs), est.value, n_s
                    )
                )
    elif method == "efficient":
        plan = layout_efficient(
            n_t,
            list(prepared.observables),
            derive(master, "layout", method, n_t, n_s, instance),
        )
        if plan.diagnostic:
            diagnostics["layout"] = plan.diagnostic
        runs = len(plan.items)
        for idx, item in enumerate(plan.items):
            obs = prepared.observables[item.observable_index]
            chain = mcmc_chain_result(
                prepared.coi,
                obs,
                item.target,
                config.substitutions,
                config.mcmc,
                derive(master, "mcmc-chain", n_t, n_s, instance, idx),
            )
            rho = run_noisy(chain.circuit, prepared.noise_model)
            estimate = sample_pauli_group(
                rho,
                obs.basis_letter(),
                [obs],
                n_s,
                derive(master, "shots-train", method, n_t, n_s, instance, idx),
            )[0]
            samples.append(
                TrainingSample(f"t{idx}", obs.label, chain.o_exact, estimate.value, n_s)
            )
    else:
        raise ConfigurationError(f"unknown method {method!r}")

    coi_noisy = _measure_coi(prepared, config, method, n_t, n_s, instance)
    training_set = TrainingSet(tuple(samples), coi_noisy)

    if method == "standard" and config.standard_fit == "plain":
        mitigated: dict[str, float] = {}
        for oid in training_set.observable_ids():
            fit = fit_plain(training_set, oid)
            mitigated[oid] = mitigate_plain(fit, coi_noisy[oid])
    else:
        result = fit_symmetric(training_set)
        mitigated = dict(result.mitigated)
        diagnostics["degenerate"] = result.diagnostics["degenerate"]
        if method == "efficient":
            # the common value mitigates observables that got no circuits
            for obs in prepared.observables:
                mitigated.setdefault(obs.label, result.common_value)

    keys = sorted(mitigated)
    error_mitigated = absolute_error(
        {k: mitigated[k] for k in keys}, {k: prepared.exact_values[k] for k in keys}
    )
    error_noisy = absolute_error(
        {k: coi_noisy[k] for k in keys}, {k: prepared.exact_values[k] for k in keys}
    )
    return ResultRow(
        method=method,
        n_t=n_t,
        n_s=n_s,
        n_s_total=n_s * (runs + 2),
        instance=instance,
        error_mitigated=error_mitigated,
        error_noisy=error_noisy,
        mitigated=mitigated,
        noisy=coi_noisy,
        exact=dict(prepared.exact_values),
        seed_label=f"{master}:{method}:{n_t}:{n_s}:{instance}",
        diagnostics=diagnostics,
    )


def _cell_jobs(config: ExperimentConfig):
    for method in config.methods:
        for n_t in config.n_t_values:
            for n_s in config.n_s_values:
                for instance in range(config.instances):
                    yield method, n_t, n_s, instance


def _run_job(args):
    prepared, config, method, n_t, n_s, instance = args
    try:
        return run_instance(prepared, config, method, n_t, n_s, instance)
    except (McmcExhaustedError, SingularFitError) as exc:
        return FailureRecord(method, n_t, n_s, instance, f"{type(exc).__name__}: {exc}")


def run_experiment(config: ExperimentConfig):
    """Run every cell; returns (rows, failures, summary)."""
    prepared = prepare_experiment(config)
    jobs = [(prepared, config, *job) for job in _cell_jobs(config)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_job, jobs, chunksize=1))
    else:
        outcomes = [_run_job(job) for job in jobs]
    rows = [o for o in outcomes if isinstance(o, ResultRow)]
    failures = [o for o in outcomes if isinstance(o, FailureRecord)]
    rows.sort(key=lambda r: (r.method, r.n_t, r.n_s, r.instance))
    failures.sort(key=lambda f: (f.method, f.n_t, f.n_s, f.instance))
    summary = summarize(config, prepared, rows, failures)
    return rows, failures, summary


def summarize(config, prepared, rows, failures) -> dict:
    cells = []
    for method in config.methods:
        for n_t in config.n_t_values:
            for n_s in config.n_s_values:
                cell_rows = [
                    r for r in rows if (r.method, r.n_t, r.n_s) == (method, n_t, n_s)
                ]
                failed = [
                    f for f in failures if (f.method, f.n_t, f.n_s) == (method, n_t, n_s)
                ]
                entry = {
                    "method": method,
                    "n_t": n_t,
                    "n_s": n_s,
                    "instances_succeeded": len(cell_rows),
                    "instances_failed": len(failed),
                }
                if cell_rows:
                    mit = [r.error_mitigated for r in cell_rows]
                    noisy = [r.error_noisy for r in cell_rows]
                    entry["n_s_total"] = cell_rows[0].n_s_total
                    entry["mitigated_error"] = {
                        "mean": statistics.fmean(mit),
                        "median": statistics.median(mit),
                        "max": max(mit),
                    }
                    entry["noisy_error"] = {
                        "mean": statistics.fmean(noisy),
                        "median": statistics.median(noisy),
                        "max": max(noisy),
                    }
                cells.append(entry)
    return {
        "config": config.to_dict(),
        "target": prepared.target_info,
        "n_s_total_formula": (
            "N_s x (measurement runs + 2): one run per training circuit basis, "
            "plus the circuit of interest in both bases; coi runs are counted "
            "in the plotted budget"
        ),
        "cells": cells,
        "failures": [vars(f) for f in failures],
    }


CSV_CORE_COLUMNS = (
    "method",
    "n_t",
    "n_s",
    "n_s_total",
    "instance",
    "error_mitigated",
    "error_noisy",
)


def _csv_columns(rows) -> list[str]:
    labels = sorted({label for row in rows for label in row.exact})
    columns = list(CSV_CORE_COLUMNS)
    for label in labels:
        columns += [f"exact_{label}", f"noisy_{label}", f"mitigated_{label}"]
    columns += ["seed_label", "diagnostics"]
    return columns


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_outputs(rows, failures, summary, output_dir) -> dict[str, str]:
    """results.csv + summary.json + per-(method, N_s) plot data files."""
    if not rows:
        raise CdrForgeError("no successful instances; nothing to write")
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "plotdata").mkdir(exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from None

    columns = _csv_columns(rows)
    lines = [",".join(columns)]
    for row in rows:
        record = {
            "method": row.method,
            "n_t": row.n_t,
            "n_s": row.n_s,
            "n_s_total": row.n_s_total,
            "instance": row.instance,
            "error_mitigated": row.error_mitigated,
            "error_noisy": row.error_noisy,
            "seed_label": row.seed_label,
            "diagnostics": ";".join(f"{k}={v}" for k, v in sorted(row.diagnostics.items())),
        }
        for label in row.exact:
            record[f"exact_{label}"] = row.exact[label]
            record[f"noisy_{label}"] = row.noisy.get(label)
            record[f"mitigated_{label}"] = row.mitigated.get(label)
        lines.append(",".join(_format_cell(record.get(col)) for col in columns))
    results_path = out / "results.csv"
    results_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    written = {"results": str(results_path), "summary": str(summary_path)}
    by_key: dict[tuple[str, int], list] = {}
    for row in rows:
        by_key.setdefault((row.method, row.n_s), []).append(row)
    for (method, n_s), group in sorted(by_key.items()):
        by_budget: dict[int, list] = {}
        for row in group:
            by_budget.setdefault(row.n_s_total, []).append(row)
        plot_lines = ["n_s_total,mean_error,max_error,mean_noisy_error"]
        for budget in sorted(by_budget):
            cell = by_budget[budget]
            mit = [r.error_mitigated for r in cell]
            noisy = [r.error_noisy for r in cell]
            plot_lines.append(
                f"{budget},{statistics.fmean(mit)!r},{max(mit)!r},{statistics.fmean(noisy)!r}"
            )
        path = out / "plotdata" / f"{method}_ns{n_s}.csv"
        path.write_text("\n".join(plot_lines) + "\n", encoding="utf-8")
        written[f"plotdata:{method}:{n_s}"] = str(path)
    return written
