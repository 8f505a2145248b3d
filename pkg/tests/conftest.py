import pytest

from cdr_forge.noise import build_random_model
from cdr_forge.xy_target import AnsatzSpec, XYModel, vqe_optimize


@pytest.fixture(scope="session")
def coi_q4():
    """Variationally prepared 4-qubit target, shared across the session."""
    return vqe_optimize(XYModel(4), AnsatzSpec(4), seed=11)


@pytest.fixture(scope="session")
def coi_q6():
    """The 6-qubit benchmark target; costs about a minute to prepare."""
    return vqe_optimize(XYModel(6), AnsatzSpec(4), seed=11)


@pytest.fixture(scope="session")
def surrogate_q6():
    return build_random_model(6, (0.05, 0.15), seed=3)


@pytest.fixture(scope="session")
def coi_q4_file(coi_q4, tmp_path_factory):
    from cdr_forge.circuits import save_circuit

    path = tmp_path_factory.mktemp("targets") / "coi4.circ"
    save_circuit(coi_q4.circuit, path)
    return path
