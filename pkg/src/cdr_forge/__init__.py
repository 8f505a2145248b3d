"""Clifford data regression error mitigation with shot-efficient training sets.

The pieces fit together as: prepare a circuit of interest (`xy_target`),
build a noise model (`noise`), draw near-Clifford training circuits
(`training`), simulate them (`simulator`), fit the noisy-to-exact map
(`fitting`), and orchestrate full comparisons (`harness`).
"""

from .circuits import (
    Circuit,
    Gate,
    PauliObservable,
    load_circuit,
    parse_circuit,
    save_circuit,
    serialize_circuit,
)
from .errors import (
    CdrForgeError,
    CircuitError,
    ConfigurationError,
    McmcExhaustedError,
    SimulationError,
    SingularFitError,
    VqeConvergenceError,
)
from .fitting import (
    CdrResult,
    TrainingSample,
    TrainingSet,
    absolute_error,
    fit_plain,
    fit_report,
    fit_symmetric,
    mitigate_plain,
    outside_physical_range,
)
from .harness import (
    ExperimentConfig,
    FailureRecord,
    NoiseSpec,
    ResultRow,
    TargetSpec,
    emit_outputs,
    layout_efficient,
    layout_standard,
    load_config,
    prepare_experiment,
    run_experiment,
)
from .noise import (
    NoiseModel,
    ProcessMatrix,
    amplitude_damping_ptm,
    build_random_model,
    depolarizing_ptm,
    load_noise_model,
    perfect_model,
    ring_topology,
    save_noise_model,
    validate_cptp,
)
from .seeding import derive, derived_rng, rng_from
from .simulator import (
    DensityMatrix,
    ShotEstimate,
    StateVector,
    expectation_exact,
    expectation_noisy,
    run_exact,
    run_noisy,
    sample_pauli_group,
)
from .training import (
    ChainResult,
    McmcConfig,
    SubstitutionState,
    generate_standard,
    mcmc_chain,
    mcmc_chain_result,
    mcmc_propose,
    substitution_weights,
    target_grid,
    target_weight,
)
from .xy_target import (
    AnsatzSpec,
    VqeResult,
    XYModel,
    build_ansatz,
    exact_ground,
    half_chain_correlators,
    pad_non_clifford,
    vqe_optimize,
)

__version__ = "0.1.0"
