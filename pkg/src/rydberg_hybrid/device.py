"""Rydberg resource Hamiltonians, atom registers, waveforms and program builders.

Ising mode::

    H(t) = sum_{i<j} C6 / r_ij^6 n_i n_j + Omega(t)/2 sum_i X_i - sum_i delta_i(t) n_i

XY mode::

    H(t) = sum_{i<j} C3 / r_ij^3 (X_i X_j + Y_i Y_j) + Omega(t)/2 sum_i X_i - sum_i delta_i(t) n_i

All values are MHz (linear frequency) and times are microseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dynamics import TimeDependentHamiltonian


class BoundsError(ValueError):
    """A waveform or register violates a device limit."""


@dataclass(frozen=True)
class DeviceConstants:
    c6_over_h: float = 1947e3
    c3_over_h: float = 3220.0
    rabi_max: float = 2.5
    min_ramp: float = 0.05
    repetition_rate: float = 3.0
    min_distance: float = 4.0
    detuning_max: float | None = None

    def __post_init__(self):
        for name in ("c6_over_h", "c3_over_h", "rabi_max", "min_ramp", "repetition_rate", "min_distance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def with_(self, **kw) -> "DeviceConstants":
        d = self.__dict__.copy()
        d.update(kw)
        return DeviceConstants(**d)


@dataclass(frozen=True)
class AtomRegister:
    positions: np.ndarray
    min_distance: float = 4.0

    def __post_init__(self):
        p = np.array(self.positions, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(p)):
            raise BoundsError("non-finite atom coordinates")
        object.__setattr__(self, "positions", p)
        if len(p) > 1:
            d = self.distances()
            dmin = d[np.triu_indices(len(p), 1)].min()
            if dmin < self.min_distance - 1e-9:
                raise BoundsError(f"atoms closer than {self.min_distance} um (found {dmin:.3f})")

    def __len__(self) -> int:
        return len(self.positions)

    def __eq__(self, other) -> bool:
        return isinstance(other, AtomRegister) and np.array_equal(self.positions, other.positions)

    def __hash__(self):
        return hash(self.positions.tobytes())

    def distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt((diff**2).sum(-1))

    @classmethod
    def square(cls, nx: int, ny: int, spacing: float, **kw) -> "AtomRegister":
        pts = [(spacing * x, spacing * y) for y in range(ny) for x in range(nx)]
        return cls(np.array(pts), **kw)

    def to_dict(self) -> dict:
        return {"positions_um": self.positions.tolist()}


def interaction_matrix(register: AtomRegister, constants: DeviceConstants, power: int = 6) -> np.ndarray:
    """Pairwise C6/r^6 (or C3/r^3 for ``power=3``) with zero diagonal."""
    d = register.distances()
    c = constants.c6_over_h if power == 6 else constants.c3_over_h
    with np.errstate(divide="ignore"):
        v = c / d**power
    np.fill_diagonal(v, 0.0)
    return v


@dataclass(frozen=True)
class Waveform:
    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bp = tuple((float(t), float(v)) for t, v in self.breakpoints)
        if not bp:
            raise ValueError("waveform needs at least one breakpoint")
        ts = [t for t, _ in bp]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("breakpoint times must be non-decreasing")
        if ts[0] < 0 or not all(np.isfinite(v) for _, v in bp):
            raise ValueError("breakpoints must have t >= 0 and finite values")
        object.__setattr__(self, "breakpoints", bp)

    @classmethod
    def constant(cls, value: float, horizon: float) -> "Waveform":
        return cls(((0.0, value), (horizon, value)))

    @classmethod
    def ramp(cls, start: float, end: float, horizon: float) -> "Waveform":
        return cls(((0.0, start), (horizon, end)))

    @classmethod
    def piecewise_constant(cls, labels: Sequence[float], values: Sequence[float], horizon: float) -> "Waveform":
        """Steps with values[k] on [labels[k-1], labels[k]); jumps are encoded as
        repeated breakpoint times."""
        edges = [0.0, *labels, horizon]
        bp = []
        for k, v in enumerate(values):
            bp += [(edges[k], v), (edges[k + 1], v)]
        return cls(tuple(bp))

    @property
    def horizon(self) -> float:
        return self.breakpoints[-1][0]

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.breakpoints])

    def __call__(self, t):
        if np.ndim(t) > 0:
            return self._at_array(np.asarray(t, float))
        bp = self.breakpoints
        if len(bp) == 1 or t <= bp[0][0]:
            return bp[0][1]
        if t >= bp[-1][0]:
            return bp[-1][1]
        # right-continuous at jumps: use the last breakpoint with time <= t
        ts = [b[0] for b in bp]
        k = int(np.searchsorted(ts, t, side="right")) - 1
        t0, v0 = bp[k]
        t1, v1 = bp[k + 1]
        if t1 == t0:
            return v1
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    def _at_array(self, t: np.ndarray) -> np.ndarray:
        ts = np.array([b[0] for b in self.breakpoints])
        vs = self.values
        if len(ts) == 1:
            return np.full(t.shape, vs[0])
        k = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        t0, t1, v0, v1 = ts[k], ts[k + 1], vs[k], vs[k + 1]
        width = t1 - t0
        frac = np.divide(t - t0, width, out=np.ones_like(t), where=width > 0)
        out = v0 + (v1 - v0) * np.clip(frac, 0.0, 1.0)
        out[t <= ts[0]] = vs[0]
        out[t >= ts[-1]] = vs[-1]
        return out

    def to_list(self) -> list:
        return [list(b) for b in self.breakpoints]


@dataclass(frozen=True)
class DriveProgram:
    omega: Waveform
    deltas: tuple[Waveform, ...]
    horizon: float

    def __post_init__(self):
        if isinstance(self.deltas, Waveform):
            object.__setattr__(self, "deltas", (self.deltas,))
        else:
            object.__setattr__(self, "deltas", tuple(self.deltas))
        for w in (self.omega, *self.deltas):
            if abs(w.horizon - self.horizon) > 1e-9:
                raise ValueError("all waveforms must span the program horizon")

    @property
    def is_global(self) -> bool:
        return len(self.deltas) == 1

    def delta_values(self, t: float, n: int) -> np.ndarray:
        if self.is_global:
            return np.full(n, self.deltas[0](t))
        return np.array([w(t) for w in self.deltas])

    def validate(self, constants: DeviceConstants, n: int | None = None) -> None:
        if np.abs(self.omega.values).max() > constants.rabi_max + 1e-12:
            raise BoundsError(
                f"Rabi amplitude {np.abs(self.omega.values).max():.4g} MHz exceeds rabi_max {constants.rabi_max}"
            )
        if np.any(self.omega.values < -1e-12):
            raise BoundsError("Rabi amplitude must be non-negative")
        if constants.detuning_max is not None:
            for w in self.deltas:
                if np.abs(w.values).max() > constants.detuning_max + 1e-12:
                    raise BoundsError("detuning exceeds detuning_max")
        if n is not None and not self.is_global and len(self.deltas) != n:
            raise ValueError(f"{len(self.deltas)} detuning channels for {n} atoms")

    def to_dict(self) -> dict:
        return {
            "horizon_us": self.horizon,
            "omega_mhz": self.omega.to_list(),
            "deltas_mhz": [w.to_list() for w in self.deltas],
        }


def save_register_program(path, register: AtomRegister, program: DriveProgram | None = None) -> None:
    doc = {"register": register.to_dict()}
    if program is not None:
        doc["program"] = program.to_dict()
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_register_program(path, min_distance: float = 4.0):
    doc = json.loads(Path(path).read_text())
    reg = AtomRegister(np.array(doc["register"]["positions_um"]), min_distance=min_distance)
    prog = None
    if "program" in doc:
        p = doc["program"]
        prog = DriveProgram(
            Waveform(tuple(map(tuple, p["omega_mhz"]))),
            tuple(Waveform(tuple(map(tuple, w))) for w in p["deltas_mhz"]),
            p["horizon_us"],
        )
    return reg, prog


def _bits(n: int) -> np.ndarray:
    return ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(float)


def x_sum_operator(n: int) -> sp.csr_matrix:
    dim = 1 << n
    j = np.arange(dim)
    rows = np.concatenate([j ^ (1 << q) for q in range(n)])
    cols = np.tile(j, n)
    return sp.csr_matrix((np.ones(n * dim), (rows, cols)), shape=(dim, dim))


def _flip_flop(n: int, couplings: np.ndarray) -> sp.csr_matrix:
    """sum_{i<j} c_ij (X_i X_j + Y_i Y_j) = sum_{i<j} 2 c_ij (|01><10| + |10><01|)."""
    dim = 1 << n
    j = np.arange(dim)
    rows, cols, vals = [], [], []
    for a in range(n):
        for b in range(a + 1, n):
            c = couplings[a, b]
            if c == 0:
                continue
            differ = ((j >> a) & 1) != ((j >> b) & 1)
            src = j[differ]
            rows.append(src ^ ((1 << a) | (1 << b)))
            cols.append(src)
            vals.append(np.full(src.size, 2.0 * c))
    if not rows:
        return sp.csr_matrix((dim, dim))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )


def ising_diagonal(v: np.ndarray) -> np.ndarray:
    """Diagonal of sum_{i<j} v_ij n_i n_j in the computational basis."""
    n = len(v)
    b = _bits(n)
    return 0.5 * np.einsum("ki,ij,kj->k", b, v, b)


def _drive_terms(n: int, program: DriveProgram):
    b = _bits(n)
    drives = [(lambda t, w=program.omega: 0.5 * w(t), x_sum_operator(n))]
    if program.is_global:
        drives.append((lambda t, w=program.deltas[0]: -w(t), b.sum(axis=1)))
    else:
        for i, w in enumerate(program.deltas):
            drives.append((lambda t, w=w: -w(t), b[:, i].copy()))
    return drives


def ising_hamiltonian(
    register: AtomRegister, constants: DeviceConstants, program: DriveProgram, *, validate: bool = True
) -> TimeDependentHamiltonian:
    n = len(register)
    if validate:
        program.validate(constants, n)
    v = interaction_matrix(register, constants)
    return TimeDependentHamiltonian(n, ising_diagonal(v), _drive_terms(n, program), horizon=program.horizon)


def xy_hamiltonian(
    register: AtomRegister, constants: DeviceConstants, program: DriveProgram, *, validate: bool = True
) -> TimeDependentHamiltonian:
    n = len(register)
    if validate:
        program.validate(constants, n)
    c = interaction_matrix(register, constants, power=3)
    return TimeDependentHamiltonian(n, _flip_flop(n, c), _drive_terms(n, program), horizon=program.horizon)


def blockade_radius(omega: float, constants: DeviceConstants) -> float:
    if omega <= 0:
        raise ValueError("omega must be positive")
    return (constants.c6_over_h / omega) ** (1.0 / 6.0)


def anneal_endpoint_detunings(v: np.ndarray, j_bar: float, m_bar: float, z: Sequence[float]) -> np.ndarray:
    """delta_i = (1/2) sum_j V_ij + 4 J_bar m_bar z_i.

    With ``V = -8 J`` this makes the final device Hamiltonian equal, up to a
    constant and a global spin flip of the X sign, to minus the spin-cluster
    Hamiltonian with mean field ``h_i = 2 z_i J_bar m_bar``.
    """
    return 0.5 * v.sum(axis=1) + 4.0 * j_bar * m_bar * np.asarray(z, float)


def linear_anneal_program(
    register: AtomRegister,
    constants: DeviceConstants,
    U: float,
    J: np.ndarray,
    m_bar: float,
    z: Sequence[float],
    tau_max: float = 4.0,
    delta_start: float = 5.0,
    nn_pairs: Sequence[tuple[int, int]] | None = None,
) -> DriveProgram:
    """Linear ramp of Omega from 0 to U/2 and of each delta_i from ``delta_start``
    to its endpoint, targeting the most excited state of the device."""
    if tau_max <= 0:
        raise ValueError("tau_max must be positive")
    if U / 2 > constants.rabi_max + 1e-12:
        raise BoundsError(f"U/2 = {U / 2:.4g} MHz exceeds rabi_max {constants.rabi_max}")
    J = np.asarray(J, float)
    if nn_pairs is None:
        nn_pairs = [(i, j) for i in range(len(J)) for j in range(i + 1, len(J)) if J[i, j] != 0]
    j_bar = float(np.mean([J[i, j] for i, j in nn_pairs])) if nn_pairs else 0.0
    v = interaction_matrix(register, constants)
    ends = anneal_endpoint_detunings(v, j_bar, m_bar, z)
    if not np.all(np.isfinite(ends)):
        raise BoundsError("non-finite detuning endpoint")
    omega = Waveform.ramp(0.0, U / 2, tau_max)
    deltas = tuple(Waveform.ramp(delta_start, float(e), tau_max) for e in ends)
    prog = DriveProgram(omega, deltas, tau_max)
    prog.validate(constants, len(register))
    return prog


def quench_program(
    register: AtomRegister,
    constants: DeviceConstants,
    U_f: float,
    tau_ramp: float,
    hold: float,
    deltas: Sequence[float],
) -> DriveProgram:
    """Omega ramps 0 -> U_f/2 over ``tau_ramp`` and holds; detunings stay at ``deltas``."""
    if tau_ramp < constants.min_ramp - 1e-12:
        raise BoundsError(f"tau_ramp {tau_ramp} below min_ramp {constants.min_ramp}")
    horizon = tau_ramp + hold
    omega = Waveform(((0.0, 0.0), (tau_ramp, U_f / 2), (horizon, U_f / 2)))
    dw = tuple(Waveform.constant(float(d), horizon) for d in deltas)
    prog = DriveProgram(omega, dw, horizon)
    prog.validate(constants, len(register))
    return prog


def wall_clock_estimate(total_shots: int, constants: DeviceConstants) -> float:
    if total_shots < 0:
        raise ValueError("shot count must be non-negative")
    return total_shots / constants.repetition_rate
