"""Pure-state and Lindblad propagation, bitstring sampling and readout errors.

Hamiltonians are given in MHz (linear frequency); the Schrodinger equation is
``d psi/dt = -2 pi i H psi`` with ``t`` in microseconds. Dephasing rates are
plain rates in 1/us so that a coherence decays as ``exp(-gamma t / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * np.pi
PURE_MAX_QUBITS = 14
LINDBLAD_MAX_QUBITS = 10
# step halvings allowed per Lindblad segment before the positivity check fails
LINDBLAD_MAX_HALVINGS = 4
# retry threshold, an order below the -1e-8 density-matrix invariant
EIG_TOL = 1e-9


class NormDriftError(RuntimeError):
    pass


class PositivityError(RuntimeError):
    pass


class GuardError(ValueError):
    pass


@dataclass(frozen=True)
class QuantumState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim != 1 or a.size & (a.size - 1):
            raise ValueError("amplitudes must be a vector of length 2^N")
        if abs(np.linalg.norm(a) - 1.0) > 1e-6:
            raise ValueError("state is not normalized")
        object.__setattr__(self, "amplitudes", a)

    @property
    def qubit_count(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @classmethod
    def basis(cls, n: int, index: int = 0) -> "QuantumState":
        a = np.zeros(1 << n, complex)
        a[index] = 1.0
        return cls(a)

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.entries, dtype=complex)
        if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] & (r.shape[0] - 1):
            raise ValueError("density matrix must be 2^N x 2^N")
        object.__setattr__(self, "entries", r)

    @property
    def qubit_count(self) -> int:
        return self.entries.shape[0].bit_length() - 1

    @classmethod
    def from_state(cls, psi) -> "DensityMatrix":
        a = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi)
        return cls(np.outer(a, a.conj()))

    def probabilities(self) -> np.ndarray:
        p = np.clip(np.real(np.diag(self.entries)), 0.0, None)
        return p / p.sum()

    def check(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8) -> None:
        r = self.entries
        herm = np.abs(r - r.conj().T).max()
        tr = abs(np.trace(r) - 1.0)
        lam = np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min()
        if herm > herm_tol or tr > trace_tol:
            raise ValueError(f"invalid density matrix (hermiticity {herm:.2e}, trace {tr:.2e})")
        if lam < -eig_tol:
            raise PositivityError(f"negative eigenvalue {lam:.2e}")


@dataclass(frozen=True)
class EvolutionSettings:
    step: float = 1e-3
    record_times: tuple[float, ...] = ()
    norm_tolerance: float = 1e-6

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        rt = tuple(float(x) for x in self.record_times)
        if any(b < a for a, b in zip(rt, rt[1:])):
            raise ValueError("record_times must be sorted")
        object.__setattr__(self, "record_times", rt)


@dataclass(frozen=True)
class NoiseSpec:
    gamma: float = 0.0
    eps: float = 0.0
    eps_prime: float = 0.0
    shots: int = 150

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        for p in (self.eps, self.eps_prime):
            if not 0.0 <= p <= 1.0:
                raise ValueError("readout error probabilities must lie in [0, 1]")
        if self.shots < 1:
            raise ValueError("shots must be at least 1")

    @classmethod
    def device_default(cls) -> "NoiseSpec":
        return cls(gamma=0.02, eps=0.03, eps_prime=0.03, shots=150)

    @property
    def is_noiseless(self) -> bool:
        return self.gamma == 0 and self.eps == 0 and self.eps_prime == 0


@dataclass(frozen=True)
class ShotRecord:
    """Sampled bitstrings; bit ``q`` of each word is the outcome of qubit ``q``."""

    qubit_count: int
    bitstrings: np.ndarray
    seed: int | None = None
    basis: object | None = None

    def __post_init__(self):
        b = np.asarray(self.bitstrings, dtype=np.int64)
        if b.ndim != 1:
            raise ValueError("bitstrings must be a 1D array of integers")
        if b.size and (b.min() < 0 or b.max() >= 1 << self.qubit_count):
            raise ValueError("bitstring outside the register")
        object.__setattr__(self, "bitstrings", b)

    @property
    def shots(self) -> int:
        return int(self.bitstrings.size)

    def bits(self) -> np.ndarray:
        """(shots, N) array of 0/1 outcomes."""
        q = np.arange(self.qubit_count)
        return (self.bitstrings[:, None] >> q) & 1


class TimeDependentHamiltonian:
    """``H(t) = static + sum_k f_k(t) O_k``.

    ``static`` and every ``O_k`` are either a 1D array (a diagonal operator) or
    a sparse matrix. Coefficient functions return MHz.
    """

    def __init__(
        self,
        qubit_count: int,
        static=None,
        drives: Sequence[tuple[Callable[[float], float], object]] = (),
        horizon: float | None = None,
    ):
        self.qubit_count = qubit_count
        self.dim = 1 << qubit_count
        diag = np.zeros(self.dim)
        offdiag = None
        if static is not None:
            if sp.issparse(static) or (isinstance(static, np.ndarray) and static.ndim == 2):
                offdiag = sp.csr_matrix(static)
            else:
                diag = diag + np.asarray(static, float)
        self.static_diag = diag
        self.static_off = offdiag
        self.diag_drives: list[tuple[Callable, np.ndarray]] = []
        self.op_drives: list[tuple[Callable, sp.csr_matrix]] = []
        for f, op in drives:
            if sp.issparse(op) or (isinstance(op, np.ndarray) and op.ndim == 2):
                self.op_drives.append((f, sp.csr_matrix(op)))
            else:
                self.diag_drives.append((f, np.asarray(op, float)))
        self.horizon = horizon
        self._dense_ops = None

    def diagonal_at(self, t: float) -> np.ndarray:
        d = self.static_diag.copy()
        for f, v in self.diag_drives:
            c = f(t)
            if c:
                d += c * v
        return d

    def tabulate(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Diagonals ``(T, dim)`` and off-diagonal drive coefficients ``(T, n_ops)``
        at every time in ``times``."""
        times = np.asarray(times, float)
        d = np.broadcast_to(self.static_diag, (times.size, self.dim)).copy()
        for f, v in self.diag_drives:
            d += np.broadcast_to(f(times), times.shape)[:, None] * v
        c = np.zeros((times.size, len(self.op_drives)))
        for k, (f, _) in enumerate(self.op_drives):
            c[:, k] = np.broadcast_to(f(times), times.shape)
        return d, c

    def _apply_tab(self, d: np.ndarray, c: np.ndarray, psi: np.ndarray) -> np.ndarray:
        out = d * psi
        if self.static_off is not None:
            out = out + self.static_off @ psi
        for ck, (_, op) in zip(c, self.op_drives):
            if ck:
                out = out + ck * (op @ psi)
        return out

    def apply(self, t: float, psi: np.ndarray) -> np.ndarray:
        """``H(t) @ psi``; ``psi`` may be a vector or a matrix of column vectors."""
        d = self.diagonal_at(t)
        out = d[:, None] * psi if psi.ndim == 2 else d * psi
        if self.static_off is not None:
            out = out + self.static_off @ psi
        for f, op in self.op_drives:
            c = f(t)
            if c:
                out = out + c * (op @ psi)
        return out

    def matrix(self, t: float) -> sp.csr_matrix:
        m = sp.diags(self.diagonal_at(t)).tocsr()
        if self.static_off is not None:
            m = m + self.static_off
        for f, op in self.op_drives:
            c = f(t)
            if c:
                m = m + c * op
        return m.tocsr()

    def dense(self, t: float) -> np.ndarray:
        if self._dense_ops is None:
            off = np.zeros((self.dim, self.dim), complex)
            if self.static_off is not None:
                off += self.static_off.toarray()
            self._dense_ops = (off, [(f, op.toarray()) for f, op in self.op_drives])
        off, ops = self._dense_ops
        m = off.copy()
        m[np.diag_indices(self.dim)] += self.diagonal_at(t)
        for f, op in ops:
            c = f(t)
            if c:
                m += c * op
        return m


def _time_grid(horizon: float, step: float, record_times: Sequence[float]):
    """Uniform steps of at most ``step`` whose grid contains every record time."""
    marks = sorted({0.0, float(horizon), *[float(x) for x in record_times]})
    if marks[0] < 0 or marks[-1] > horizon + 1e-12:
        raise ValueError("record times must lie within [0, horizon]")
    segments = []
    for a, b in zip(marks, marks[1:]):
        if b - a <= 1e-15:
            continue
        n = max(1, int(np.ceil((b - a) / step - 1e-9)))
        segments.append((a, b, n))
    return segments


def evolve_pure(
    hamiltonian: TimeDependentHamiltonian,
    psi0: QuantumState,
    horizon: float,
    settings: EvolutionSettings = EvolutionSettings(),
    observables: dict[str, Callable[[np.ndarray], float]] | None = None,
):
    """Fixed-step RK4 integration of the Schrodinger equation.

    Returns the final state and, if ``settings.record_times`` is non-empty, a
    list of ``(time, state)`` pairs (or ``(time, name, value)`` rows when
    ``observables`` is given).
    """
    if hamiltonian.qubit_count > PURE_MAX_QUBITS:
        raise GuardError(f"pure-state guard: {hamiltonian.qubit_count} > {PURE_MAX_QUBITS} qubits")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    psi = np.array(psi0.amplitudes, complex)
    if psi.size != hamiltonian.dim:
        raise ValueError("state dimension does not match the Hamiltonian")

    records = []
    want = set(settings.record_times)

    def record(t, y):
        if observables is None:
            records.append((t, QuantumState(y / np.linalg.norm(y))))
        else:
            for name, fn in observables.items():
                records.append((t, name, float(fn(y))))

    if 0.0 in want:
        record(0.0, psi)
    for a, b, n in _time_grid(horizon, settings.step, settings.record_times):
        h = (b - a) / n
        # coefficients at every RK4 stage time: a + (h/2) * j, j = 0..2n
        dd, cc = hamiltonian.tabulate(a + 0.5 * h * np.arange(2 * n + 1))
        ham = hamiltonian._apply_tab

        def f(d, c, y):
            return -1j * TWO_PI * ham(d, c, y)

        for k in range(n):
            i = 2 * k
            k1 = f(dd[i], cc[i], psi)
            k2 = f(dd[i + 1], cc[i + 1], psi + 0.5 * h * k1)
            k3 = f(dd[i + 1], cc[i + 1], psi + 0.5 * h * k2)
            k4 = f(dd[i + 2], cc[i + 2], psi + h * k3)
            psi = psi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        drift = abs(np.linalg.norm(psi) - 1.0)
        if drift > settings.norm_tolerance:
            raise NormDriftError(f"norm drift {drift:.2e} at t={b:.4f} us; reduce the step")
        if b in want:
            record(b, psi)
    final = QuantumState(psi / np.linalg.norm(psi))
    return (final, records) if settings.record_times else final


def evolve_piecewise_constant(
    segments: Sequence[tuple[float, np.ndarray]], psi0: QuantumState
) -> QuantumState:
    """Exact propagation through constant Hamiltonians ``[(duration, H), ...]``."""
    psi = np.array(psi0.amplitudes, complex)
    for dt, h in segments:
        if dt <= 0:
            continue
        w, v = np.linalg.eigh(h)
        psi = v @ (np.exp(-1j * TWO_PI * w * dt) * (v.conj().T @ psi))
    return QuantumState(psi / np.linalg.norm(psi))


def _rk4_segment(hamiltonian, rhs, rho, a, b, nsteps):
    h = (b - a) / nsteps
    dd, cc = hamiltonian.tabulate(a + 0.5 * h * np.arange(2 * nsteps + 1))
    for k in range(nsteps):
        i = 2 * k
        k1 = rhs(dd[i], cc[i], rho)
        k2 = rhs(dd[i + 1], cc[i + 1], rho + 0.5 * h * k1)
        k3 = rhs(dd[i + 1], cc[i + 1], rho + 0.5 * h * k2)
        k4 = rhs(dd[i + 2], cc[i + 2], rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def evolve_lindblad(
    hamiltonian: TimeDependentHamiltonian,
    rho0: DensityMatrix,
    noise: NoiseSpec,
    horizon: float,
    settings: EvolutionSettings = EvolutionSettings(),
):
    """RK4 on the master equation with local dephasing jump operators ``sqrt(gamma) n_i``.

    For ``L_i = sqrt(gamma) n_i`` the dissipator reduces to
    ``gamma * (sum_i n_i rho n_i - (1/2){N_i, rho})`` which is diagonal in the
    computational basis: element ``(a, b)`` decays at rate
    ``gamma/2 * Hamming(a, b)``.
    """
    n = hamiltonian.qubit_count
    if n > LINDBLAD_MAX_QUBITS:
        raise GuardError(f"Lindblad guard: {n} > {LINDBLAD_MAX_QUBITS} qubits")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rho = np.array(rho0.entries, complex)
    dim = hamiltonian.dim
    idx = np.arange(dim)
    hamming = np.zeros((dim, dim))
    for q in range(n):
        b = (idx >> q) & 1
        hamming += b[:, None] != b[None, :]
    damp = 0.5 * noise.gamma * hamming
    ops = [op.toarray() for _, op in hamiltonian.op_drives]
    static_off = hamiltonian.static_off.toarray() if hamiltonian.static_off is not None else None

    def rhs(d, c, r):
        out = (d[:, None] - d[None, :]) * r
        if static_off is not None:
            out += static_off @ r - r @ static_off
        for ck, op in zip(c, ops):
            if ck:
                out += ck * (op @ r - r @ op)
        return -1j * TWO_PI * out - damp * r

    records = []
    want = set(settings.record_times)
    if 0.0 in want:
        records.append((0.0, DensityMatrix(rho.copy())))
    for a, b, nsteps in _time_grid(horizon, settings.step, settings.record_times):
        start = rho
        for _ in range(LINDBLAD_MAX_HALVINGS + 1):
            rho = _rk4_segment(hamiltonian, rhs, start, a, b, nsteps)
            rho = 0.5 * (rho + rho.conj().T)
            lowest = float(np.linalg.eigvalsh(rho).min())
            if lowest >= -EIG_TOL:
                break
            # RK4 on a nearly pure state leaves small negative eigenvalues
            # when 2 pi |H| h is not small: halve the step and redo the segment
            nsteps *= 2
        dm = DensityMatrix(rho)
        try:
            dm.check(herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-6)
        except PositivityError as exc:
            raise PositivityError(f"{exc} at t={b:.4f} us; reduce the step") from None
        if b in want:
            records.append((b, DensityMatrix(rho.copy())))
    final = DensityMatrix(rho)
    return (final, records) if settings.record_times else final


def fidelity(a, b) -> float:
    """Fidelity between two pure states, or a pure state and a density matrix."""
    if isinstance(a, DensityMatrix) and isinstance(b, QuantumState):
        a, b = b, a
    if isinstance(b, DensityMatrix):
        v = a.amplitudes
        return float(np.real(v.conj() @ b.entries @ v))
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def sample_bitstrings(state, shots: int, seed=None) -> ShotRecord:
    if shots < 1:
        raise ValueError("shots must be at least 1")
    p = state.probabilities()
    rng = np.random.default_rng(seed)
    draws = rng.choice(p.size, size=shots, p=p)
    return ShotRecord(state.qubit_count, draws, seed=seed)


def apply_spam(record: ShotRecord, eps: float, eps_prime: float, seed=None) -> ShotRecord:
    """Flip 0->1 with probability ``eps`` and 1->0 with probability ``eps_prime``."""
    for p in (eps, eps_prime):
        if not 0.0 <= p <= 1.0:
            raise ValueError("readout error probabilities must lie in [0, 1]")
    if eps == 0 and eps_prime == 0:
        return record
    rng = np.random.default_rng(seed)
    bits = record.bits()
    u = rng.random(bits.shape)
    flip = np.where(bits == 0, u < eps, u < eps_prime)
    bits = bits ^ flip.astype(np.int64)
    words = (bits << np.arange(record.qubit_count)).sum(axis=1)
    return ShotRecord(record.qubit_count, words, seed=record.seed, basis=record.basis)


def correlators_from_shots(record: ShotRecord) -> tuple[np.ndarray, np.ndarray]:
    """Per-site <Z_i> and pairwise <Z_i Z_j> estimated from spins ``2b - 1``."""
    if record.shots == 0:
        raise ValueError("empty shot record")
    s = 2.0 * record.bits() - 1.0
    m = s.mean(axis=0)
    c = (s.T @ s) / record.shots
    return m, c


def write_trajectory_csv(path, rows, header: str | None = None) -> None:
    """Rows of ``(time_us, observable_name, value)``."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        fh.write("time_us,observable_name,value\n")
        for t, name, value in rows:
            fh.write(f"{t:.6f},{name},{value:.12g}\n")
