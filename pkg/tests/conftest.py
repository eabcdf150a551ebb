from functools import reduce
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).resolve().parents[1] / "data"

# independent single-qubit matrices in the |g>=0, |r>=1 basis with Z|r> = +|r>
PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, 1j], [-1j, 0]], dtype=complex),
    "Z": np.diag([-1.0, 1.0]).astype(complex),
}


def kron_string(label: str) -> np.ndarray:
    """Kronecker product with qubit 0 as the least significant bit."""
    return reduce(np.kron, [PAULI[a] for a in reversed(label)])


def kron_hamiltonian(h) -> np.ndarray:
    return sum(t.coefficient * kron_string(t.string.label) for t in h.terms)


@pytest.fixture(scope="session")
def lih():
    from rydberg_hybrid.paulialg import load_hamiltonian

    return load_hamiltonian(DATA / "lih_1.5A.ham")


@pytest.fixture(scope="session")
def beh2():
    from rydberg_hybrid.paulialg import load_hamiltonian

    return load_hamiltonian(DATA / "beh2_1.17A.ham")
