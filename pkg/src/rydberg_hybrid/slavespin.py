"""Slave-spin cluster mean-field solver for the half-filled Hubbard model.

The spin cluster Hamiltonian is::

    H_C = sum_{i != j} J_ij Z_i Z_j + U/4 sum_i X_i + sum_i h_i Z_i,
    h_i = 2 z_i Jbar mbar,   Jbar = mean of J over nearest-neighbour bonds,

with the double sum running over ordered pairs, so each bond enters with
weight 2 J_ij. ``J_ij = 2 t_ij Re G_ij`` where ``G`` is the per-spin one-body
density matrix of the renormalized free-fermion problem ``Q_ij = t_ij <Z_i Z_j>``
(with ``t_ij = -t`` on bonds).

Two spin solvers are provided: exact diagonalization and an emulated Rydberg
anneal that targets the most excited state of the device Hamiltonian.
"""

from __future__ import annotations

import concurrent.futures as cf
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse.linalg as spla

from . import device as dev
from .dynamics import (
    DensityMatrix,
    EvolutionSettings,
    GuardError,
    NoiseSpec,
    QuantumState,
    apply_spam,
    correlators_from_shots,
    evolve_lindblad,
    evolve_pure,
    sample_bitstrings,
)
from .embedding import EmbeddingProblem, optimize_positions, r_init
from .paulialg import PauliHamiltonian, PauliString, PauliTerm, sparse_matrix

COORDINATION = {"square": 4, "triangular": 6}
EXACT_MAX_QUBITS = 14
ANNEAL_MAX_QUBITS = 10


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


# ---------------------------------------------------------------- lattice


@dataclass(frozen=True)
class LatticeSpec:
    """``square``: an nx by ny open cluster. ``triangular``: a triangle-shaped
    cluster of nx*ny sites (6 or 10 in practice), labelled row by row."""

    kind: str = "square"
    nx: int = 2
    ny: int = 2
    t: float = 1.0

    def __post_init__(self):
        if self.kind not in COORDINATION:
            raise ValueError(f"unsupported lattice kind {self.kind!r}")
        if self.nx * self.ny < 2:
            raise ValueError("cluster needs at least two sites")
        if self.t <= 0:
            raise ValueError("hopping magnitude must be positive")

    @property
    def n_sites(self) -> int:
        return self.nx * self.ny


@dataclass(frozen=True)
class ClusterModel:
    hopping: np.ndarray
    nn_pairs: tuple[tuple[int, int], ...]
    z: np.ndarray
    coords: np.ndarray
    coordination: int

    @property
    def n(self) -> int:
        return len(self.hopping)


def build_cluster(spec: LatticeSpec) -> ClusterModel:
    if spec.kind == "square":
        coords = np.array([(x, y) for y in range(spec.ny) for x in range(spec.nx)], float)
        pairs = []
        for y in range(spec.ny):
            for x in range(spec.nx):
                i = x + spec.nx * y
                if x + 1 < spec.nx:
                    pairs.append((i, i + 1))
                if y + 1 < spec.ny:
                    pairs.append((i, i + spec.nx))
    elif spec.kind == "triangular":
        n = spec.n_sites
        rows = int(round((math.sqrt(8 * n + 1) - 1) / 2))
        if rows * (rows + 1) // 2 != n:
            raise ValueError(f"triangular cluster size {n} is not a triangular number")
        coords, label = [], {}
        for r in range(rows):
            for c in range(r + 1):
                label[(r, c)] = len(coords)
                coords.append((c - 0.5 * r, -r * math.sqrt(3) / 2))
        coords = np.array(coords)
        pairs = []
        for (r, c), i in label.items():
            for dr, dc in ((0, 1), (1, 0), (1, 1)):
                j = label.get((r + dr, c + dc))
                if j is not None:
                    pairs.append((i, j))
    else:  # pragma: no cover - guarded by LatticeSpec
        raise ValueError(spec.kind)
    n = len(coords)
    hop = np.zeros((n, n))
    for i, j in pairs:
        hop[i, j] = hop[j, i] = -spec.t
    deg = (hop != 0).sum(axis=1)
    z = COORDINATION[spec.kind] - deg
    return ClusterModel(hop, tuple(sorted(pairs)), z.astype(float), coords, COORDINATION[spec.kind])


# ---------------------------------------------------------------- fermions


def free_fermion_density(Q: np.ndarray, degeneracy_tol: float = 1e-9) -> tuple[np.ndarray, dict]:
    """Per-spin one-body density matrix ``G_ij = <f_i^dag f_j>`` at half filling.

    N/2 of the N single-particle modes are filled. A degenerate shell straddling
    the Fermi level is filled uniformly (each of its modes gets the same
    fractional occupation); this is the zero-temperature limit of a
    grand-canonical ensemble with the chemical potential in the middle of the
    shell and keeps G basis independent.
    """
    Q = np.asarray(Q)
    if not np.allclose(Q, Q.conj().T, atol=1e-12):
        raise ValueError("Q must be Hermitian")
    n = len(Q)
    w, L = np.linalg.eigh(Q)
    n_occ = n / 2.0
    occ = np.zeros(n)
    e_f = w[int(math.ceil(n_occ)) - 1] if n_occ >= 1 else w[0]
    below = w < e_f - degeneracy_tol
    shell = np.abs(w - e_f) <= degeneracy_tol
    occ[below] = 1.0
    remaining = n_occ - below.sum()
    degenerate = bool(shell.sum() > remaining + 1e-12 or abs(remaining - round(remaining)) > 1e-12)
    occ[shell] = remaining / shell.sum()
    G = (L.conj() * occ) @ L.T
    return G, {"degenerate_shell": degenerate, "eigenvalues": w, "occupations": occ}


def spin_coupling(hopping: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``J_ij = 2 t_ij Re G_ij`` (the factor 2 sums the two spin species)."""
    hopping = np.asarray(hopping, float)
    G = np.asarray(G)
    if hopping.shape != G.shape:
        raise ValueError("hopping and G shapes differ")
    J = 2.0 * hopping * np.real(G)
    return 0.5 * (J + J.T)


def mean_coupling(J: np.ndarray, nn_pairs: Sequence[tuple[int, int]]) -> float:
    return float(np.mean([J[i, j] for i, j in nn_pairs])) if nn_pairs else 0.0


def mean_fields(J: np.ndarray, m_bar: float, cluster: ClusterModel) -> np.ndarray:
    return 2.0 * cluster.z * mean_coupling(J, cluster.nn_pairs) * m_bar


def spin_cluster_hamiltonian(J: np.ndarray, U: float, m_bar: float, cluster: ClusterModel) -> PauliHamiltonian:
    if U < 0:
        raise ValueError("U must be non-negative")
    n = cluster.n
    terms = []
    for i in range(n):
        for j in range(i + 1, n):
            if J[i, j] != 0:
                terms.append(PauliTerm(2.0 * J[i, j], PauliString.from_ops({i: "Z", j: "Z"}, n)))
    for i, h in enumerate(mean_fields(J, m_bar, cluster)):
        if h != 0:
            terms.append(PauliTerm(float(h), PauliString.from_ops({i: "Z"}, n)))
    if U != 0:
        for i in range(n):
            terms.append(PauliTerm(U / 4.0, PauliString.from_ops({i: "X"}, n)))
    return PauliHamiltonian(n, tuple(terms))


def _spins(n: int) -> np.ndarray:
    return 2.0 * ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1) - 1.0


def correlators_from_probabilities(p: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    s = _spins(n)
    return p @ s, (s * p[:, None]).T @ s


def ground_state(h: PauliHamiltonian) -> tuple[np.ndarray, np.ndarray]:
    """Lowest eigenvalues and ground vector (real Hamiltonians only)."""
    m = sparse_matrix(h)
    if h.qubit_count <= 10:
        w, v = np.linalg.eigh(m.toarray().real)
        return w, v[:, 0]
    w, v = spla.eigsh(m.real, k=2, which="SA", tol=1e-12)
    order = np.argsort(w)
    return w[order], v[:, order[0]]


# ---------------------------------------------------------------- backends


@dataclass(frozen=True)
class ExactBackend:
    name: str = "exact"


@dataclass(frozen=True)
class AnnealBackend:
    """Emulated Rydberg anneal.

    ``sampling=None`` samples shots only when the noise spec has readout errors
    or dephasing; a noiseless run then uses the exact Born probabilities.
    """

    noise: NoiseSpec = NoiseSpec()
    tau_max: float = 4.0
    delta_start: float = 5.0
    constants: dev.DeviceConstants = dev.DeviceConstants()
    step: float = 1e-3
    sampling: bool | None = None
    embed: bool = True
    embed_evals: int = 3000
    embed_restarts: int = 4
    coupling_factor: float = 8.0
    name: str = "anneal"

    @property
    def samples(self) -> bool:
        return (not self.noise.is_noiseless) if self.sampling is None else self.sampling


@dataclass
class SpinSolution:
    m_sites: np.ndarray
    C: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def solve_spin_exact(J, U, m_bar, cluster: ClusterModel) -> SpinSolution:
    if cluster.n > EXACT_MAX_QUBITS:
        raise GuardError(f"exact backend limited to {EXACT_MAX_QUBITS} sites")
    h = spin_cluster_hamiltonian(J, U, m_bar, cluster)
    w, v = ground_state(h)
    p = np.abs(v) ** 2
    m, C = correlators_from_probabilities(p, cluster.n)
    gap = float(w[1] - w[0]) if len(w) > 1 else float("nan")
    return SpinSolution(m, C, {"energy": float(w[0]), "gap": gap})


def device_register(J: np.ndarray, cluster: ClusterModel, backend: AnnealBackend, seed=0):
    """Register realizing ``C6/r^6 = -coupling_factor * J``."""
    target = -backend.coupling_factor * np.asarray(J, float)
    target = 0.5 * (target + target.T)
    np.fill_diagonal(target, 0.0)
    a = r_init(J, backend.constants, backend.coupling_factor)
    lo = backend.constants.min_distance
    init = cluster.coords * a
    init = init - init.min(axis=0) + 10.0
    if not backend.embed:
        return dev.AtomRegister(init, min_distance=lo), None
    problem = EmbeddingProblem(np.clip(target, 0, None), backend.constants, bounds=(0.0, 10.0 + init.max() + 40.0), min_distance=lo)
    res = optimize_positions(problem, seed=seed, max_evals=backend.embed_evals, initial=init, restarts=backend.embed_restarts)
    return res.positions, res


def solve_spin_anneal(
    J,
    U,
    m_bar,
    cluster: ClusterModel,
    backend: AnnealBackend,
    seed=None,
    register: dev.AtomRegister | None = None,
    validate: bool = False,
) -> SpinSolution:
    """Anneal towards the most excited state of the device Hamiltonian.

    The run uses the gauge with a negative mean magnetization so that the
    target state at weak coupling is close to |g...g>, the initial state; the
    returned magnetizations are flipped back to the positive gauge.
    """
    n = cluster.n
    if n > ANNEAL_MAX_QUBITS and backend.noise.gamma > 0:
        raise GuardError(f"noisy anneal limited to {ANNEAL_MAX_QUBITS} sites")
    if register is None:
        register, _ = device_register(J, cluster, backend)
    m_gauge = -abs(m_bar)
    prog = dev.linear_anneal_program(
        register, backend.constants, U, J, m_gauge, cluster.z, backend.tau_max, backend.delta_start, cluster.nn_pairs
    )
    ham = dev.ising_hamiltonian(register, backend.constants, prog)
    psi0 = QuantumState.basis(n, 0)
    settings = EvolutionSettings(step=backend.step)
    if backend.noise.gamma > 0:
        state = evolve_lindblad(ham, DensityMatrix.from_state(psi0), backend.noise, backend.tau_max, settings)
    else:
        state = evolve_pure(ham, psi0, backend.tau_max, settings)
    diag: dict = {}
    if validate:
        hf = ham.dense(backend.tau_max)
        w, v = np.linalg.eigh(hf)
        top = QuantumState(v[:, -1])
        flip = _spins(n).prod(axis=1)  # global Z string, maps device frame to spin frame
        h_target = spin_cluster_hamiltonian(J, U, m_gauge, cluster)
        _, g = ground_state(h_target)
        target = QuantumState(flip * g / np.linalg.norm(g))
        if isinstance(state, QuantumState):
            diag["fidelity_device"] = float(abs(np.vdot(top.amplitudes, state.amplitudes)) ** 2)
            diag["fidelity_target"] = float(abs(np.vdot(target.amplitudes, state.amplitudes)) ** 2)
        else:
            r = state.entries
            diag["fidelity_device"] = float(np.real(top.amplitudes.conj() @ r @ top.amplitudes))
            diag["fidelity_target"] = float(np.real(target.amplitudes.conj() @ r @ target.amplitudes))
    if backend.samples:
        ss = as_seed_sequence(seed)
        s1, s2 = ss.spawn(2)
        rec = sample_bitstrings(state, backend.noise.shots, np.random.default_rng(s1))
        rec = apply_spam(rec, backend.noise.eps, backend.noise.eps_prime, np.random.default_rng(s2))
        m, C = correlators_from_shots(rec)
        diag["shots"] = backend.noise.shots
    else:
        m, C = correlators_from_probabilities(state.probabilities(), n)
        diag["shots"] = 0
    return SpinSolution(-m, C, diag)


def solve_spin(J, U, m_bar, cluster, backend, seed=None, register=None, validate=False) -> SpinSolution:
    if isinstance(backend, ExactBackend):
        return solve_spin_exact(J, U, m_bar, cluster)
    return solve_spin_anneal(J, U, m_bar, cluster, backend, seed=seed, register=register, validate=validate)


# ---------------------------------------------------------------- self-consistency


@dataclass(frozen=True)
class SSMFSettings:
    k: int = 5
    eta: float = 0.01
    m0: float = 0.5
    backend: ExactBackend | AnnealBackend = ExactBackend()
    validate: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0.0 < self.m0 < 1.0:
            raise ValueError("m0 must lie strictly inside (0, 1); 0 and 1 are stationary points")


@dataclass
class SSMFState:
    Q: np.ndarray
    J: np.ndarray
    m_bar: float
    Z: float
    g: float
    converged: bool
    inner_iters: int
    outer_iters: int
    Z_err: float = 0.0
    m_sites: np.ndarray | None = None
    C: np.ndarray | None = None
    G: np.ndarray | None = None
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def z_error(m_bar: float, n_sites: int, noise: NoiseSpec | None) -> float:
    """Delta-method error bar on Z = m^2 from shot noise and readout errors."""
    if noise is None or noise.is_noiseless:
        return 0.0
    var = (1.0 - min(m_bar**2, 1.0)) / (n_sites * noise.shots) + ((noise.eps + noise.eps_prime) * m_bar) ** 2
    return float(2.0 * abs(m_bar) * math.sqrt(var))


def run_ssmf(spec: LatticeSpec, U: float, settings: SSMFSettings = SSMFSettings(), seed=0) -> SSMFState:
    cluster = build_cluster(spec)
    n = cluster.n
    backend = settings.backend
    ss = as_seed_sequence(seed)
    Q = cluster.hopping.copy()
    m = settings.m0
    history = []
    inner_total = 0
    last_dm = math.inf
    dQ = math.inf
    outer = 0
    fid = []
    sol = None
    G = None
    J = None
    for outer in range(1, settings.k + 1):
        G, ginfo = free_fermion_density(Q)
        J = spin_coupling(cluster.hopping, G)
        register = None
        if isinstance(backend, AnnealBackend):
            register, _ = device_register(J, cluster, backend, seed=0)
        for inner in range(1, settings.k + 1):
            child = ss.spawn(1)[0]
            sol = solve_spin(J, U, m, cluster, backend, seed=child, register=register, validate=settings.validate)
            m_new = abs(float(np.mean(sol.m_sites)))
            last_dm = abs(m_new - m)
            m = m_new
            inner_total += 1
            if "fidelity_device" in sol.diagnostics:
                fid.append((sol.diagnostics["fidelity_device"], sol.diagnostics["fidelity_target"]))
            history.append({"outer": outer, "inner": inner, "m_bar": m, "dm": last_dm})
            if last_dm < settings.eta:
                break
        Q_new = cluster.hopping * sol.C
        dQ = float(np.linalg.norm(Q_new - Q))
        Q = Q_new
        history.append({"outer": outer, "dQ": dQ})
        if dQ < settings.eta:
            break
    g = float(np.mean([sol.C[i, j] for i, j in cluster.nn_pairs]))
    noise = backend.noise if isinstance(backend, AnnealBackend) and backend.samples else None
    diag = {"degenerate_shell": ginfo["degenerate_shell"]}
    if fid:
        diag["fidelity_device_min"] = min(f[0] for f in fid)
        diag["fidelity_target_min"] = min(f[1] for f in fid)
    return SSMFState(
        Q=Q,
        J=J,
        m_bar=m,
        Z=m * m,
        g=g,
        converged=bool(dQ < settings.eta and last_dm < settings.eta),
        inner_iters=inner_total,
        outer_iters=outer,
        Z_err=z_error(m, n, noise),
        m_sites=np.abs(sol.m_sites) if np.mean(sol.m_sites) >= 0 else -sol.m_sites,
        C=sol.C,
        G=G,
        history=history,
        diagnostics=diag,
    )


@dataclass(frozen=True)
class SweepRow:
    U: float
    Z: float
    Z_err: float
    g: float
    converged: bool
    inner_iters: int
    outer_iters: int
    diagnostics: dict = field(default_factory=dict, compare=False)


def _sweep_point(args):
    spec, U, settings, seed = args
    st = run_ssmf(spec, U, settings, seed)
    return SweepRow(float(U), st.Z, st.Z_err, st.g, st.converged, st.inner_iters, st.outer_iters, st.diagnostics)


def mott_sweep(spec: LatticeSpec, U_grid: Sequence[float], settings: SSMFSettings = SSMFSettings(), seed=0, jobs: int = 1):
    grid = [float(u) for u in U_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("U grid must be sorted")
    seeds = as_seed_sequence(seed).spawn(len(grid))
    tasks = [(spec, u, settings, s) for u, s in zip(grid, seeds)]
    if jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    return rows


def critical_u(rows: Sequence[SweepRow], threshold: float = 0.01) -> float | None:
    """First grid point whose Z falls below ``threshold``."""
    for r in rows:
        if r.Z < threshold:
            return r.U
    return None


def is_monotone(values: Sequence[float], tol: float) -> bool:
    v = np.asarray(values)
    return bool(np.all(np.diff(v) <= tol))


# ---------------------------------------------------------------- quench


@dataclass
class QuenchResult:
    times: np.ndarray
    Z: np.ndarray
    Z_err: np.ndarray
    J: np.ndarray
    G0: np.ndarray
    m0: float
    eigenvalues: np.ndarray | None = None
    lines: np.ndarray | None = None  # (frequency, weight) of the exact line spectrum of Z


def _line_spectrum(w: np.ndarray, v: np.ndarray, psi0: np.ndarray, n: int, keep: float = 1e-6) -> np.ndarray:
    """Frequencies and weights of Z(t) = mbar(t)^2 from the eigen-decomposition.

    mbar(t) = sum_ab c_ab exp(2 pi i (E_a - E_b) t); squaring gives lines at
    sums of two such differences.
    """
    a = v.T @ psi0
    M = v.T @ (np.diag(_spins(n).mean(axis=1)) @ v)
    c = np.conj(a)[:, None] * a[None, :] * M
    dE = w[:, None] - w[None, :]
    mask = np.abs(c) > keep
    f1, c1 = dE[mask], c[mask]
    # merge equal frequencies
    f1r = np.round(f1, 9)
    uf, inv = np.unique(f1r, return_inverse=True)
    cw = np.zeros(uf.size, complex)
    np.add.at(cw, inv, c1)
    sel = np.abs(cw) > keep
    uf, cw = uf[sel], cw[sel]
    F = (uf[:, None] + uf[None, :]).ravel()
    W = (cw[:, None] * cw[None, :]).ravel()
    Fr = np.round(np.abs(F), 9)
    uF, inv = np.unique(Fr, return_inverse=True)
    out = np.zeros(uF.size)
    np.add.at(out, inv, np.abs(W))
    return np.column_stack([uF, out])


def quench_dynamics(
    spec: LatticeSpec,
    U_f: float,
    settings: SSMFSettings = SSMFSettings(),
    horizon: float = 4.0,
    sample_dt: float = 0.02,
    seed=0,
    tau_ramp: float = 0.05,
    lines: bool = False,
) -> QuenchResult:
    """Z(tau) after switching the transverse field from 0 to U_f/4.

    The fermions stay frozen in the U = 0 solution, so J and the boundary
    field are those of the equilibrium state at U = 0 and the initial spin
    state is its (fully polarized) ground state.
    """
    eq = run_ssmf(spec, 0.0, replace(settings, backend=ExactBackend()), seed)
    cluster = build_cluster(spec)
    n = cluster.n
    J, m0 = eq.J, eq.m_bar
    times = np.round(np.arange(0.0, horizon + 1e-9, sample_dt), 12)
    backend = settings.backend
    G0 = eq.G.copy()
    if isinstance(backend, ExactBackend):
        if n > 12:
            raise GuardError("exact quench limited to 12 sites")
        h0 = spin_cluster_hamiltonian(J, 0.0, m0, cluster)
        _, psi0 = ground_state(h0)
        hq = spin_cluster_hamiltonian(J, U_f, m0, cluster)
        w, v = np.linalg.eigh(sparse_matrix(hq).toarray().real)
        a = v.T @ psi0
        phases = np.exp(-2j * np.pi * np.outer(times, w))
        psi_t = (phases * a) @ v.T
        m_t = (np.abs(psi_t) ** 2) @ _spins(n).mean(axis=1)
        Z = m_t**2
        Z_err = np.zeros_like(Z)
        ls = _line_spectrum(w, v, psi0, n) if lines else None
        res = QuenchResult(times, Z, Z_err, J, G0, m0, w, ls)
    else:
        Z, Z_err = _quench_device(J, m0, U_f, cluster, backend, times, horizon, tau_ramp, seed)
        res = QuenchResult(times, Z, Z_err, J, G0, m0)
    # fermions are frozen by construction
    assert np.array_equal(res.G0, eq.G)
    return res


def _quench_device(J, m0, U_f, cluster, backend: AnnealBackend, times, horizon, tau_ramp, seed):
    n = cluster.n
    register, _ = device_register(J, cluster, backend)
    v = dev.interaction_matrix(register, backend.constants)
    j_bar = mean_coupling(J, cluster.nn_pairs)
    deltas = dev.anneal_endpoint_detunings(v, j_bar, -abs(m0), cluster.z)
    hold = horizon - tau_ramp
    prog = dev.quench_program(register, backend.constants, U_f, tau_ramp, hold, deltas)
    ham = dev.ising_hamiltonian(register, backend.constants, prog)
    psi0 = QuantumState.basis(n, 0)
    st = EvolutionSettings(step=backend.step, record_times=tuple(times))
    if backend.noise.gamma > 0:
        _, recs = evolve_lindblad(ham, DensityMatrix.from_state(psi0), backend.noise, horizon, st)
    else:
        _, recs = evolve_pure(ham, psi0, horizon, st)
    seeds = as_seed_sequence(seed).spawn(len(recs))
    Z, Z_err = [], []
    for (t, state), s in zip(recs, seeds):
        if backend.samples:
            s1, s2 = s.spawn(2)
            rec = sample_bitstrings(state, backend.noise.shots, np.random.default_rng(s1))
            rec = apply_spam(rec, backend.noise.eps, backend.noise.eps_prime, np.random.default_rng(s2))
            m, _ = correlators_from_shots(rec)
            mb = float(np.mean(m))
            Z_err.append(z_error(mb, n, backend.noise))
        else:
            m, _ = correlators_from_probabilities(state.probabilities(), n)
            mb = float(np.mean(m))
            Z_err.append(0.0)
        Z.append(mb * mb)
    return np.array(Z), np.array(Z_err)


def dft_spectrum(times: Sequence[float], values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """One-sided amplitude spectrum of a uniformly sampled real series.

    The mean is removed before the transform; the frequency axis is in MHz
    when times are in microseconds, with resolution 1/(n dt).
    """
    t = np.asarray(times, float)
    x = np.asarray(values, float)
    if t.size < 32 or t.size != x.size:
        raise ValueError("need at least 32 uniformly spaced samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-12):
        raise ValueError("sampling is not uniform")
    amp = np.abs(np.fft.rfft(x - x.mean())) * 2.0 / x.size
    freqs = np.fft.rfftfreq(x.size, dt[0])
    return freqs, amp


def spectral_peaks(freqs: np.ndarray, amp: np.ndarray, rel_height: float = 0.1) -> np.ndarray:
    """Indices of local maxima at least ``rel_height`` of the global maximum."""
    from scipy.signal import find_peaks

    padded = np.concatenate([[0.0], amp, [0.0]])
    idx, _ = find_peaks(padded, height=rel_height * amp.max())
    return idx - 1


# ---------------------------------------------------------------- correlation length


def correlation_length(distances: Sequence[float], correlators: Sequence[float], decimals: int = 6):
    """Fit ``log C(l) = a - l / xi`` over the distances with positive C.

    Correlators at equal distance are averaged first. Returns ``(xi, ok)``;
    ``ok`` is False (and xi = 0) when fewer than two positive points remain
    or the fitted slope is not negative.
    """
    d = np.round(np.asarray(distances, float), decimals)
    c = np.asarray(correlators, float)
    ud = np.unique(d)
    cm = np.array([c[d == x].mean() for x in ud])
    pos = cm > 0
    if pos.sum() < 2:
        return 0.0, False
    slope, _ = np.polyfit(ud[pos], np.log(cm[pos]), 1)
    if slope >= 0:
        return float("inf"), False
    return float(-1.0 / slope), True


def connected_correlators(m: np.ndarray, C: np.ndarray, coords: np.ndarray):
    """Pairwise distances and connected correlators C_ij - m_i m_j for i < j."""
    n = len(m)
    iu = np.triu_indices(n, 1)
    d = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))[iu]
    return d, (C - np.outer(m, m))[iu]


def _x_correlators(v: np.ndarray, n: int):
    """<X_i> and <X_i X_j> of a real state vector."""
    idx = np.arange(1 << n)
    mx = np.array([v @ v[idx ^ (1 << i)] for i in range(n)])
    cx = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            cx[i, j] = cx[j, i] = v @ v[idx ^ (1 << i) ^ (1 << j)]
    return mx, cx


@dataclass
class IsingCMFTResult:
    U: np.ndarray
    Z: np.ndarray
    dZdU: np.ndarray
    xi: np.ndarray
    m_bar: np.ndarray


def cmft_ising_standalone(
    sign: str = "ferro",
    U_grid: Sequence[float] = tuple(np.linspace(0.0, 4.0, 81)),
    nx: int = 3,
    ny: int = 3,
    axis: str = "z",
    m0: float = 0.5,
    field_sign: float = -1.0,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> IsingCMFTResult:
    """Self-consistent transverse-field Ising cluster on an nx by ny square patch.

    ``H = sum_<ij> J Z_i Z_j + field_sign * mbar sum_i Z_i + U sum_i X_i`` with
    J = -1 (ferro) or +1 (antiferro). ``mbar`` is iterated to its fixed point;
    Z = mbar^2, dZ/dU by central differences and xi from the connected
    correlators along ``axis`` ('z' or 'x').
    """
    if sign not in ("ferro", "antiferro"):
        raise ValueError("sign must be 'ferro' or 'antiferro'")
    Jv = -1.0 if sign == "ferro" else 1.0
    cl = build_cluster(LatticeSpec("square", nx, ny, 1.0))
    n = cl.n
    s = _spins(n)
    zz = sum(Jv * s[:, i] * s[:, j] for i, j in cl.nn_pairs)
    zsum = s.sum(axis=1)
    xs = sparse_matrix(PauliHamiltonian(n, tuple(PauliTerm(1.0, PauliString.from_ops({i: "X"}, n)) for i in range(n))))
    xs = xs.real.toarray()
    Us = np.asarray(U_grid, float)
    Zs, xis, ms = [], [], []
    m = m0
    for U in Us:
        # continuation: start from the previous grid point's fixed point
        m = m if abs(m) > 1e-3 else m0
        for _ in range(max_iter):
            H = U * xs
            H[np.diag_indices_from(H)] += zz + field_sign * m * zsum
            w, v = np.linalg.eigh(H)
            vec = v[:, 0]
            p = vec**2
            m_new = float(p @ zsum) / n
            if abs(m_new - m) < tol:
                m = m_new
                break
            m = m_new
        if axis == "z":
            mi, C = correlators_from_probabilities(p, n)
        else:
            mi, C = _x_correlators(vec, n)
        d, cc = connected_correlators(mi, C, cl.coords)
        xi, _ = correlation_length(d, cc)
        Zs.append(m * m)
        xis.append(xi)
        ms.append(m)
    Zs = np.array(Zs)
    return IsingCMFTResult(Us, Zs, np.gradient(Zs, Us), np.array(xis), np.array(ms))
