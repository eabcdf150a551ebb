"""Pauli strings, Pauli-sum Hamiltonians and an exact-diagonalization oracle.

Basis ordering: qubit ``q`` is bit ``q`` of the computational-basis index
(qubit 0 is the least significant bit). Bit 1 is the Rydberg state, on which
``Z`` has eigenvalue +1.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

AXES = ("I", "X", "Y", "Z")
DENSE_MAX_QUBITS = 14


class HamiltonianFormatError(ValueError):
    """Raised for malformed coefficient files; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DimensionGuardError(ValueError):
    pass


@dataclass(frozen=True)
class PauliString:
    axes: tuple[str, ...]

    def __post_init__(self):
        axes = tuple(self.axes)
        for a in axes:
            if a not in AXES:
                raise ValueError(f"unknown Pauli axis {a!r}")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """``'IXZ'`` -> qubit 0 is I, qubit 1 is X, qubit 2 is Z."""
        return cls(tuple(label))

    @classmethod
    def from_ops(cls, ops: dict[int, str], n: int) -> "PauliString":
        axes = ["I"] * n
        for q, a in ops.items():
            axes[q] = a
        return cls(tuple(axes))

    def __len__(self) -> int:
        return len(self.axes)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(j for j, a in enumerate(self.axes) if a != "I")

    @property
    def label(self) -> str:
        return "".join(self.axes)

    @property
    def weight(self) -> int:
        return sum(a != "I" for a in self.axes)

    def masks(self) -> tuple[int, int, int]:
        """Bit masks of (flip, sign, y) qubits used by the matrix builders."""
        flip = sign = ymask = 0
        for q, a in enumerate(self.axes):
            if a in "XY":
                flip |= 1 << q
            if a in "YZ":
                sign |= 1 << q
            if a == "Y":
                ymask |= 1 << q
        return flip, sign, ymask

    def ops_text(self) -> str:
        return " ".join(f"{a}{q}" for q, a in enumerate(self.axes) if a != "I")


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    string: PauliString

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")


@dataclass(frozen=True)
class PauliHamiltonian:
    """Weighted sum of Pauli strings; duplicate strings are merged on construction
    keeping the position of their first occurrence."""

    qubit_count: int
    terms: tuple[PauliTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.qubit_count < 1:
            raise ValueError("qubit_count must be positive")
        merged: dict[PauliString, float] = {}
        for t in self.terms:
            if len(t.string) != self.qubit_count:
                raise ValueError(
                    f"string {t.string.label} has length {len(t.string)}, expected {self.qubit_count}"
                )
            merged[t.string] = merged.get(t.string, 0.0) + float(t.coefficient)
        object.__setattr__(
            self, "terms", tuple(PauliTerm(c, s) for s, c in merged.items())
        )

    @classmethod
    def from_dict(cls, n: int, coeffs: dict[str, float]) -> "PauliHamiltonian":
        return cls(n, tuple(PauliTerm(c, PauliString.from_label(k)) for k, c in coeffs.items()))

    def __len__(self) -> int:
        return len(self.terms)

    def __add__(self, other: "PauliHamiltonian") -> "PauliHamiltonian":
        if other.qubit_count != self.qubit_count:
            raise ValueError("qubit counts differ")
        return PauliHamiltonian(self.qubit_count, self.terms + other.terms)

    def __mul__(self, scale: float) -> "PauliHamiltonian":
        return PauliHamiltonian(
            self.qubit_count, tuple(PauliTerm(scale * t.coefficient, t.string) for t in self.terms)
        )

    __rmul__ = __mul__

    def coefficient(self, label: str) -> float:
        key = PauliString.from_label(label)
        for t in self.terms:
            if t.string == key:
                return t.coefficient
        return 0.0

    @property
    def constant(self) -> float:
        return self.coefficient("I" * self.qubit_count)

    def nonidentity_terms(self) -> list[PauliTerm]:
        return [t for t in self.terms if t.string.weight > 0]


_HEADER = re.compile(r"^qubits\s*:\s*(\d+)$")
_OP = re.compile(r"^([XYZ])(\d+)$")


def parse_hamiltonian(text: str) -> PauliHamiltonian:
    """Parse the ``qubits: N`` / ``coeff AX0 AX1 ...`` coefficient format."""
    n = None
    terms: list[PauliTerm] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            if n is not None:
                raise HamiltonianFormatError("repeated qubits header", lineno)
            n = int(m.group(1))
            if n < 1:
                raise HamiltonianFormatError("qubit count must be positive", lineno)
            continue
        if n is None:
            raise HamiltonianFormatError("term before 'qubits: N' header", lineno)
        tokens = line.split()
        try:
            coeff = float(tokens[0])
        except ValueError:
            raise HamiltonianFormatError(f"bad coefficient {tokens[0]!r}", lineno) from None
        if not math.isfinite(coeff):
            raise HamiltonianFormatError("non-finite coefficient", lineno)
        ops: dict[int, str] = {}
        for tok in tokens[1:]:
            om = _OP.match(tok)
            if not om:
                raise HamiltonianFormatError(f"bad Pauli token {tok!r}", lineno)
            axis, q = om.group(1), int(om.group(2))
            if q >= n:
                raise HamiltonianFormatError(f"qubit index {q} >= qubit count {n}", lineno)
            if q in ops:
                raise HamiltonianFormatError(f"qubit {q} assigned twice", lineno)
            ops[q] = axis
        terms.append(PauliTerm(coeff, PauliString.from_ops(ops, n)))
    if n is None:
        raise HamiltonianFormatError("missing 'qubits: N' header")
    return PauliHamiltonian(n, tuple(terms))


def load_hamiltonian(path: str | Path) -> PauliHamiltonian:
    return parse_hamiltonian(Path(path).read_text())


def format_hamiltonian(h: PauliHamiltonian, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines.append(f"qubits: {h.qubit_count}")
    for t in h.terms:
        ops = t.string.ops_text()
        lines.append(f"{t.coefficient!r} {ops}".rstrip())
    return "\n".join(lines) + "\n"


def _basis_index(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


def _parity(x: np.ndarray) -> np.ndarray:
    """Parity of the set bits of each entry."""
    x = x.copy()
    p = np.zeros_like(x)
    while np.any(x):
        p ^= x & 1
        x >>= 1
    return p


def string_action(s: PauliString) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(rows, values)`` with ``P|j> = values[j] |rows[j]>``.

    Per qubit: Z contributes (2b-1), Y contributes i(2b-1) on the input bit b.
    """
    n = len(s)
    j = _basis_index(n)
    flip, sign, ymask = s.masks()
    # (2b-1) over sign qubits = (-1)^(#zeros among them)
    zeros = _parity((~j) & sign)
    vals = np.where(zeros == 1, -1.0, 1.0).astype(complex)
    ny = bin(ymask).count("1")
    vals *= 1j**ny
    return j ^ flip, vals


def sparse_matrix(h: PauliHamiltonian) -> sp.csr_matrix:
    n = h.qubit_count
    dim = 1 << n
    out = sp.csr_matrix((dim, dim), dtype=complex)
    cols = _basis_index(n)
    # group by flip mask so each group is a single permutation pattern
    groups: dict[int, np.ndarray] = {}
    for t in h.terms:
        rows, vals = string_action(t.string)
        flip = t.string.masks()[0]
        groups[flip] = groups.get(flip, np.zeros(dim, complex)) + t.coefficient * vals
    for flip, vals in groups.items():
        out = out + sp.csr_matrix((vals, (cols ^ flip, cols)), shape=(dim, dim))
    return out.tocsr()


def dense_matrix(h: PauliHamiltonian) -> np.ndarray:
    if h.qubit_count > DENSE_MAX_QUBITS:
        raise DimensionGuardError(
            f"{h.qubit_count} qubits exceeds the dense limit of {DENSE_MAX_QUBITS}"
        )
    return sparse_matrix(h).toarray()


def diagonal(h: PauliHamiltonian) -> np.ndarray:
    """Diagonal of the matrix (only I/Z strings contribute)."""
    dim = 1 << h.qubit_count
    d = np.zeros(dim)
    for t in h.terms:
        if t.string.masks()[0] == 0:
            d += t.coefficient * string_action(t.string)[1].real
    return d


def _as_state(state) -> np.ndarray:
    arr = getattr(state, "amplitudes", None)
    if arr is None:
        arr = getattr(state, "entries", None)
    if arr is None:
        arr = np.asarray(state)
    return np.asarray(arr)


def expectation(h: PauliHamiltonian, state, *, imag_tol: float = 1e-10) -> float:
    """<H> on a state vector or a density matrix."""
    arr = _as_state(state)
    dim = 1 << h.qubit_count
    if arr.shape[0] != dim or (arr.ndim == 2 and arr.shape != (dim, dim)):
        raise ValueError(f"state of shape {arr.shape} does not match {h.qubit_count} qubits")
    m = sparse_matrix(h)
    if arr.ndim == 1:
        val = np.vdot(arr, m @ arr)
    else:
        val = (m.multiply(arr.T)).sum()
    scale = max(1.0, sum(abs(t.coefficient) for t in h.terms))
    if abs(val.imag) > imag_tol * scale:
        raise ValueError(f"non-Hermitian expectation residue {val.imag:.3e}")
    return float(val.real)


def ground_energy_exact(h: PauliHamiltonian) -> tuple[float, np.ndarray]:
    n = h.qubit_count
    if n > DENSE_MAX_QUBITS:
        raise DimensionGuardError(f"{n} qubits exceeds the exact-diagonalization limit")
    if n <= 10:
        w, v = np.linalg.eigh(dense_matrix(h))
        vec = v[:, 0]
        e = float(w[0])
    else:
        w, v = spla.eigsh(sparse_matrix(h), k=1, which="SA", tol=1e-12)
        vec, e = v[:, 0], float(w[0])
    # fix the global phase so the largest amplitude is real positive
    k = int(np.argmax(np.abs(vec)))
    vec = vec * np.exp(-1j * np.angle(vec[k]))
    return e, vec / np.linalg.norm(vec)


def spectrum(h: PauliHamiltonian) -> np.ndarray:
    return np.linalg.eigvalsh(dense_matrix(h))


def z_string(n: int, sites: Iterable[int]) -> PauliString:
    return PauliString.from_ops({q: "Z" for q in sites}, n)


def single_ops(n: int, axis: str, coeffs: Sequence[float]) -> list[PauliTerm]:
    return [PauliTerm(float(c), PauliString.from_ops({q: axis}, n)) for q, c in enumerate(coeffs) if c != 0]
