"""Derandomized Pauli measurement planning and hit-based energy estimation.

A measurement basis assigns one of X, Y, Z to every qubit. It *hits* a Pauli
string when it agrees with the string on the string's support, so a single
batch of shots in that basis estimates every term it hits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import DensityMatrix, QuantumState, ShotRecord, apply_spam, sample_bitstrings
from .paulialg import PauliHamiltonian, PauliString

BASIS_AXES = ("X", "Y", "Z")
_AXIS_CODE = {"I": 0, "X": 1, "Y": 2, "Z": 3}


@dataclass(frozen=True)
class MeasurementBasis:
    axes: tuple[str, ...]

    def __post_init__(self):
        axes = tuple(self.axes)
        if not axes:
            raise ValueError("empty basis")
        for a in axes:
            if a not in BASIS_AXES:
                raise ValueError(f"basis axis must be X, Y or Z, got {a!r}")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def from_label(cls, label: str) -> "MeasurementBasis":
        return cls(tuple(label))

    @property
    def label(self) -> str:
        return "".join(self.axes)

    def __len__(self) -> int:
        return len(self.axes)


@dataclass(frozen=True)
class MeasurementPlan:
    """Distinct bases with their shot counts.

    ``multiplicity`` records how often the greedy pass produced each basis;
    ``uncovered`` lists term labels that no basis hits.
    """

    bases: tuple[MeasurementBasis, ...]
    repetitions: tuple[int, ...]
    multiplicity: tuple[int, ...] = ()
    uncovered: tuple[str, ...] = ()
    score: float = float("nan")

    def __post_init__(self):
        if len(self.bases) != len(self.repetitions):
            raise ValueError("one repetition count per basis")
        if any(r < 0 for r in self.repetitions):
            raise ValueError("negative repetition count")

    @property
    def total_shots(self) -> int:
        return int(sum(self.repetitions))

    @property
    def qubit_count(self) -> int:
        return len(self.bases[0]) if self.bases else 0

    def to_text(self) -> str:
        lines = []
        for b, r in zip(self.bases, self.repetitions):
            lines.append(f"shots: {r}")
            lines.append(b.label)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MeasurementPlan":
        bases, reps = [], []
        pending = None
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("shots:"):
                pending = int(line.split(":", 1)[1])
                continue
            if pending is None:
                raise ValueError(f"basis {line!r} is not preceded by 'shots: n'")
            bases.append(MeasurementBasis.from_label(line))
            reps.append(pending)
            pending = None
        return cls(tuple(bases), tuple(reps))


def hits(basis: MeasurementBasis | str, observable: PauliString | str) -> bool:
    b = basis.axes if isinstance(basis, MeasurementBasis) else tuple(basis)
    o = observable.axes if isinstance(observable, PauliString) else tuple(observable)
    if len(b) != len(o):
        raise ValueError("basis and observable lengths differ")
    return all(oa == "I" or oa == ba for oa, ba in zip(o, b))


def hoeffding_shots(eps: float, delta: float) -> int:
    """Smallest N with 2 exp(-N eps^2 / 2) <= delta."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    val = (2.0 / eps**2) * math.log(2.0 / delta)
    # guard against 4.000000000001 style round-off on exact identities
    return int(math.ceil(val - 1e-9))


def _term_table(h: PauliHamiltonian):
    """Integer axis codes and |coefficients| of the non-identity terms."""
    terms = [t for t in h.nonidentity_terms() if t.coefficient != 0.0]
    codes = np.array([[_AXIS_CODE[a] for a in t.string.axes] for t in terms], dtype=np.int8)
    coeffs = np.array([abs(t.coefficient) for t in terms])
    return terms, codes.reshape(len(terms), h.qubit_count), coeffs


def _rates(coeffs: np.ndarray, eps: float) -> np.ndarray:
    """Per-term rates eps_p^2 / 2 with eps_p^2 = eps^2 max|c| / |c_p|."""
    return 0.5 * eps**2 * coeffs.max() / coeffs


def _basis_hits(codes: np.ndarray, basis_codes: np.ndarray) -> np.ndarray:
    return np.all((codes == 0) | (codes == basis_codes[None, :]), axis=1)


def greedy_derandomize(
    h: PauliHamiltonian,
    budget: int,
    eps_target: float,
    shots: int | None = None,
) -> MeasurementPlan:
    """Greedy choice of ``budget`` measurement bases.

    Each qubit of each basis is fixed in turn to the axis minimising
    ``sum_p exp(-(eps_p^2 / 2) V_p)`` where ``V_p`` is the expected number of
    bases hitting term p (unassigned qubits match with probability 1/3) and
    ``eps_p = eps_target |c_p| / max |c|``. Ties go to X, then Y, then Z.

    While some term is still unhit, a basis is instead built to cover it: the
    qubits of the largest unhit term are pinned to its axes and the rest chosen
    to maximise the expected number of newly hit terms. Every basis of this
    phase hits a new term, so full coverage needs at most as many bases as
    there are distinct terms.

    The resulting list is collapsed to distinct bases; ``shots`` (default
    ``budget``) is split in proportion to multiplicity, remainder to the
    earliest bases.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if eps_target <= 0:
        raise ValueError("eps_target must be positive")
    n = h.qubit_count
    terms, codes, coeffs = _term_table(h)
    if not terms:
        basis = MeasurementBasis(("Z",) * n)
        return MeasurementPlan((basis,), (shots or budget,), (budget,), (), 0.0)
    a = _rates(coeffs, eps_target)
    weight = (codes != 0).sum(axis=1)
    third = 3.0 ** (-weight)
    done = np.zeros(len(terms))
    chosen: list[np.ndarray] = []
    rest = [(codes[:, q + 1 :] != 0).sum(axis=1) for q in range(n)]
    covered = np.zeros(len(terms), bool)
    for m in range(budget):
        future = (budget - m - 1) * third
        cur = np.zeros(n, dtype=np.int8)
        alive = np.ones(len(terms), bool)  # matched on all assigned qubits so far
        # coverage phase: pin the largest unhit term, then fill greedily for
        # the expected number of newly hit terms
        cover = not covered.all()
        if cover:
            lead = int(np.flatnonzero(~covered)[np.argmax(coeffs[~covered])])
        for q in range(n):
            best_axis, best_score, best_alive = 0, np.inf, alive
            for axis in (1, 2, 3):
                if cover and codes[lead, q] != 0 and axis != codes[lead, q]:
                    continue
                ok = alive & ((codes[:, q] == 0) | (codes[:, q] == axis))
                expect = ok * 3.0 ** (-rest[q])
                if cover:
                    s = -float(expect[~covered].sum())
                else:
                    # log of the score, so saturated terms do not underflow
                    x = -a * (done + future + expect)
                    mx = x.max()
                    s = float(mx + np.log(np.exp(x - mx).sum()))
                if s < best_score - 1e-12 * max(1.0, abs(s)):
                    best_axis, best_score, best_alive = axis, s, ok
            cur[q] = best_axis
            alive = best_alive
        done += alive
        covered |= alive
        chosen.append(cur)
    score = float(np.exp(-a * done).sum())
    # collapse to distinct bases, keeping first-appearance order
    order: dict[bytes, int] = {}
    counts: list[int] = []
    arrays: list[np.ndarray] = []
    for c in chosen:
        key = c.tobytes()
        if key not in order:
            order[key] = len(arrays)
            arrays.append(c)
            counts.append(0)
        counts[order[key]] += 1
    letters = "IXYZ"
    bases = tuple(MeasurementBasis(tuple(letters[k] for k in c)) for c in arrays)
    total = budget if shots is None else int(shots)
    reps = allocate_shots(counts, total)
    uncovered = tuple(t.string.label for t, ok in zip(terms, covered) if not ok)
    return MeasurementPlan(bases, tuple(reps), tuple(counts), uncovered, score)


def allocate_shots(weights: Sequence[int], total: int) -> list[int]:
    """Floor of the proportional share, leftovers to the earliest entries."""
    w = np.asarray(weights, float)
    if total < 0:
        raise ValueError("total shots must be non-negative")
    share = np.floor(total * w / w.sum()).astype(int)
    left = total - int(share.sum())
    for i in range(left):
        share[i % len(share)] += 1
    return [int(s) for s in share]


def uniform_plan(h: PauliHamiltonian, shots_per_term: int) -> MeasurementPlan:
    """One basis per non-identity term (identity slots read out in Z)."""
    terms, codes, _ = _term_table(h)
    bases = tuple(MeasurementBasis(tuple(a if a != "I" else "Z" for a in t.string.axes)) for t in terms)
    return MeasurementPlan(bases, (shots_per_term,) * len(bases), (1,) * len(bases))


def confidence_score(h: PauliHamiltonian, bases: Sequence[MeasurementBasis], eps_target: float) -> float:
    """The greedy objective evaluated on a complete list of bases."""
    terms, codes, coeffs = _term_table(h)
    v = np.zeros(len(terms))
    for b in bases:
        v += _basis_hits(codes, np.array([_AXIS_CODE[a] for a in b.axes]))
    return float(np.exp(-_rates(coeffs, eps_target) * v).sum())


def random_plan_score(h: PauliHamiltonian, budget: int, eps_target: float) -> float:
    """Expected objective of ``budget`` uniformly random bases.

    Hits of independent random bases are Bernoulli(3^-w), so the expectation
    factorises per basis.
    """
    terms, codes, coeffs = _term_table(h)
    a = _rates(coeffs, eps_target)
    p = 3.0 ** (-(codes != 0).sum(axis=1))
    return float(((1 - p + p * np.exp(-a)) ** budget).sum())


# ------------------------------------------------------------------ measurement


def _rotation(axis: str) -> np.ndarray:
    """Unitary R with R A R^dag = diag(-1, +1) in the package convention."""
    mats = {
        "X": np.array([[0, 1], [1, 0]], complex),
        "Y": np.array([[0, 1j], [-1j, 0]], complex),
        "Z": np.diag([-1.0, 1.0]).astype(complex),
    }
    w, v = np.linalg.eigh(mats[axis])
    return v.conj().T  # rows: eigenvectors for -1 then +1


def rotate_to_basis(state, basis: MeasurementBasis):
    """State (vector or density matrix) expressed in the eigenbasis of ``basis``."""
    n = len(basis)
    is_rho = isinstance(state, DensityMatrix) or (not isinstance(state, QuantumState) and np.ndim(state) == 2)
    arr = np.asarray(state.entries if isinstance(state, DensityMatrix) else getattr(state, "amplitudes", state), complex)
    if arr.shape[0] != 1 << n:
        raise ValueError("state does not match basis length")
    # reshape so axis k corresponds to qubit n-1-k (qubit 0 is the last axis)
    if not is_rho:
        t = arr.reshape((2,) * n)
        for q, a in enumerate(basis.axes):
            if a == "Z":
                continue
            ax = n - 1 - q
            t = np.moveaxis(np.tensordot(_rotation(a), t, axes=([1], [ax])), 0, ax)
        return QuantumState(t.reshape(-1))
    t = arr.reshape((2,) * (2 * n))
    for q, a in enumerate(basis.axes):
        if a == "Z":
            continue
        r = _rotation(a)
        ax = n - 1 - q
        t = np.moveaxis(np.tensordot(r, t, axes=([1], [ax])), 0, ax)
        t = np.moveaxis(np.tensordot(r.conj(), t, axes=([1], [n + ax])), 0, n + ax)
    return DensityMatrix(t.reshape(1 << n, 1 << n))


def measure_plan(
    state,
    plan: MeasurementPlan,
    seed=0,
    eps: float = 0.0,
    eps_prime: float = 0.0,
) -> list[ShotRecord]:
    """Sample every basis of the plan, optionally with readout flips."""
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    kids = ss.spawn(2 * len(plan.bases))
    out = []
    for k, (b, r) in enumerate(zip(plan.bases, plan.repetitions)):
        if r == 0:
            out.append(ShotRecord(len(b), np.zeros(0, np.int64), 0, b.label))
            continue
        rec = sample_bitstrings(rotate_to_basis(state, b), r, kids[2 * k])
        if eps or eps_prime:
            rec = apply_spam(rec, eps, eps_prime, kids[2 * k + 1])
        out.append(ShotRecord(rec.qubit_count, rec.bitstrings, rec.seed, b.label))
    return out


@dataclass(frozen=True)
class EnergyEstimate:
    energy: float
    omegas: dict[str, float] = field(repr=False)
    hit_counts: dict[str, int] = field(repr=False)
    unhit: tuple[str, ...] = ()

    def __float__(self) -> float:
        return self.energy


def estimate_energy(h: PauliHamiltonian, plan: MeasurementPlan, records: Sequence[ShotRecord]) -> EnergyEstimate:
    """Constant + sum_p c_p omega_p with omega_p the mean outcome product over
    every shot whose basis hits term p."""
    if len(records) != len(plan.bases):
        raise ValueError("need one shot record per plan basis")
    if not records or all(r.shots == 0 for r in records):
        raise ValueError("no shots recorded")
    terms, codes, _ = _term_table(h)
    sums = np.zeros(len(terms))
    counts = np.zeros(len(terms), dtype=np.int64)
    for b, rec in zip(plan.bases, records):
        if rec.shots == 0:
            continue
        bc = np.array([_AXIS_CODE[a] for a in b.axes])
        hit = _basis_hits(codes, bc)
        if not hit.any():
            continue
        spins = 2 * rec.bits().astype(np.int64) - 1  # (shots, n)
        for p in np.flatnonzero(hit):
            sup = np.flatnonzero(codes[p] != 0)
            sums[p] += spins[:, sup].prod(axis=1).sum()
            counts[p] += rec.shots
    energy = h.constant
    omegas, hc, unhit = {}, {}, []
    for p, t in enumerate(terms):
        lab = t.string.label
        hc[lab] = int(counts[p])
        if counts[p] == 0:
            unhit.append(lab)
            continue
        omegas[lab] = float(sums[p] / counts[p])
        energy += t.coefficient * omegas[lab]
    return EnergyEstimate(float(energy), omegas, hc, tuple(unhit))


def estimate_state_energy(
    h: PauliHamiltonian,
    state,
    plan: MeasurementPlan,
    seed=0,
    eps: float = 0.0,
    eps_prime: float = 0.0,
) -> EnergyEstimate:
    return estimate_energy(h, plan, measure_plan(state, plan, seed, eps, eps_prime))


def estimate_per_term(h: PauliHamiltonian, state, shots_per_term: int, seed=0) -> EnergyEstimate:
    """Naive estimation: every term measured in its own basis, shots not shared."""
    terms, _, _ = _term_table(h)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    kids = ss.spawn(len(terms))
    energy = h.constant
    omegas, counts = {}, {}
    for t, kid in zip(terms, kids):
        basis = MeasurementBasis(tuple(a if a != "I" else "Z" for a in t.string.axes))
        rec = sample_bitstrings(rotate_to_basis(state, basis), shots_per_term, kid)
        sup = sorted(t.string.support)
        w = float((2 * rec.bits()[:, sup] - 1).prod(axis=1).mean())
        omegas[t.string.label] = w
        counts[t.string.label] = shots_per_term
        energy += t.coefficient * w
    return EnergyEstimate(float(energy), omegas, counts, ())
