"""Digital-analog VQE: piecewise-constant global pulses on an Ising register,
iterative time-label splitting and shot-budgeted derandomized estimation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import differential_evolution, minimize

from . import derand
from .device import AtomRegister, DeviceConstants, DriveProgram, Waveform, _bits, ising_diagonal, interaction_matrix, x_sum_operator
from .dynamics import TWO_PI, QuantumState, evolve_piecewise_constant
from .paulialg import PauliHamiltonian, dense_matrix, expectation, ground_energy_exact


class BudgetExhausted(RuntimeError):
    pass


def relative_error(e_est: float, e_exact: float) -> float:
    if e_exact == 0:
        raise ZeroDivisionError("exact energy is zero")
    return abs(e_exact - e_est) / abs(e_exact)


# ------------------------------------------------------------------ pulses


@dataclass(frozen=True)
class PulseParams:
    """Global Omega and delta, constant on the intervals cut by ``time_labels``."""

    time_labels: tuple[float, ...]
    omegas: tuple[float, ...]
    deltas: tuple[float, ...]
    t_tot: float
    min_gap: float = 0.016

    def __post_init__(self):
        labels = tuple(float(x) for x in self.time_labels)
        object.__setattr__(self, "time_labels", labels)
        object.__setattr__(self, "omegas", tuple(float(x) for x in self.omegas))
        object.__setattr__(self, "deltas", tuple(float(x) for x in self.deltas))
        if self.t_tot < 0:
            raise ValueError("t_tot must be non-negative")
        k = len(labels) + 1
        if len(self.omegas) != k or len(self.deltas) != k:
            raise ValueError(f"{len(labels)} labels need {k} values per channel")
        edges = self.edges
        if np.any(np.diff(edges) < self.min_gap - 1e-12) and self.t_tot > 0 and labels:
            raise ValueError("time labels closer than min_gap")

    @property
    def n_intervals(self) -> int:
        return len(self.omegas)

    @property
    def edges(self) -> np.ndarray:
        return np.array((0.0, *self.time_labels, self.t_tot))

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.edges)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.omegas, self.deltas])

    def with_vector(self, x: Sequence[float]) -> "PulseParams":
        k = self.n_intervals
        return replace(self, omegas=tuple(x[:k]), deltas=tuple(x[k:]))

    def program(self) -> DriveProgram:
        return DriveProgram(
            Waveform.piecewise_constant(self.time_labels, self.omegas, self.t_tot),
            (Waveform.piecewise_constant(self.time_labels, self.deltas, self.t_tot),),
            self.t_tot,
        )

    def to_dict(self) -> dict:
        return {
            "time_labels_us": list(self.time_labels),
            "omega_mhz": list(self.omegas),
            "delta_mhz": list(self.deltas),
            "t_tot_us": self.t_tot,
        }


def split_time_label(
    params: PulseParams, rng: np.random.Generator, min_gap: float | None = None, max_retries: int = 1000
) -> tuple[PulseParams, bool]:
    """Insert one random label; both halves inherit the parent values.

    Returns ``(params, saturated)``; when no draw respects ``min_gap`` within
    ``max_retries`` the input is returned unchanged with ``saturated=True``.
    """
    gap = params.min_gap if min_gap is None else min_gap
    edges = params.edges
    for _ in range(max_retries):
        t = float(rng.uniform(0.0, params.t_tot))
        i = int(np.searchsorted(edges, t, side="right")) - 1
        i = min(max(i, 0), params.n_intervals - 1)
        if t - edges[i] < gap or edges[i + 1] - t < gap:
            continue
        labels = list(params.time_labels)
        labels.insert(i, t)
        om = list(params.omegas)
        de = list(params.deltas)
        om.insert(i, om[i])
        de.insert(i, de[i])
        return PulseParams(tuple(labels), tuple(om), tuple(de), params.t_tot, gap), False
    return params, True


# ------------------------------------------------------------------ register model


@dataclass
class IsingModel:
    """Dense blocks of the resource Hamiltonian on a fixed register."""

    register: AtomRegister
    constants: DeviceConstants = field(default_factory=DeviceConstants)

    def __post_init__(self):
        n = len(self.register)
        self.n = n
        self.v_diag = ising_diagonal(interaction_matrix(self.register, self.constants))
        self.x_sum = x_sum_operator(n).toarray()
        self.n_sum = _bits(n).sum(axis=1)

    def hamiltonian(self, omega: float, delta: float) -> np.ndarray:
        h = 0.5 * omega * self.x_sum
        h[np.diag_indices_from(h)] += self.v_diag - delta * self.n_sum
        return h

    def evolve(self, params: PulseParams, initial: int = 0) -> QuantumState:
        segs = [(dt, self.hamiltonian(o, d)) for dt, o, d in zip(params.durations, params.omegas, params.deltas)]
        return evolve_piecewise_constant(segs, QuantumState.basis(self.n, initial))


# ------------------------------------------------------------------ configuration


@dataclass(frozen=True)
class VqeConfig:
    shot_budget: int = 350_000
    omega_bounds: tuple[float, float] = (0.0, 2.0)
    delta_bounds: tuple[float, float] = (-2.0, 2.0)
    t_tot: float = 0.25
    min_gap: float = 0.016
    evals_per_iter: int = 20
    optimizer: str = "powell"
    eps_target: float = 0.05
    delta_conf: float = 0.05
    score_eps: float = 0.9
    shots_per_estimate: int | None = None
    initial_state: int = 0
    spam: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    # fraction of the Rabi range used for the random starting pulse
    omega_init_frac: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.omega_init_frac <= 1.0:
            raise ValueError("omega_init_frac must lie in (0, 1]")
        if self.optimizer not in ("powell", "nelder-mead"):
            raise ValueError("optimizer must be 'powell' or 'nelder-mead'")
        for lo, hi in (self.omega_bounds, self.delta_bounds):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError("bounds must be finite and ordered")
        if self.omega_bounds[0] < 0:
            raise ValueError("Rabi frequency bound must be non-negative")

    def estimate_cost(self) -> int:
        """Shots per energy evaluation: the Hoeffding count for (eps_target, delta_conf)
        unless set explicitly."""
        if self.shots_per_estimate is not None:
            return int(self.shots_per_estimate)
        return derand.hoeffding_shots(self.eps_target, self.delta_conf)


@dataclass
class VqeRun:
    history: list[tuple[int, PulseParams, float]] = field(default_factory=list)
    best_energy: float = float("inf")
    best_params: PulseParams | None = None
    best_trace: list[float] = field(default_factory=list)
    shots_spent: int = 0
    plan: derand.MeasurementPlan | None = None

    def record(self, shots: int, params: PulseParams, energy: float) -> None:
        self.shots_spent += shots
        self.history.append((self.shots_spent, params, energy))
        if energy < self.best_energy:
            self.best_energy, self.best_params = energy, params
        self.best_trace.append(self.best_energy)


class Estimator:
    """Derandomized energy estimates with a fixed plan and a seeded stream."""

    def __init__(self, h: PauliHamiltonian, config: VqeConfig, plan: derand.MeasurementPlan | None = None):
        self.h = h
        self.config = config
        cost = config.estimate_cost()
        self.plan = plan or derand.greedy_derandomize(h, cost, config.score_eps)
        self._seeds = np.random.SeedSequence([config.seed, 7])

    def __call__(self, state) -> tuple[float, int]:
        (child,) = self._seeds.spawn(1)
        eps, eps_prime = self.config.spam
        est = derand.estimate_state_energy(self.h, state, self.plan, child, eps, eps_prime)
        return est.energy, self.plan.total_shots


def evaluate_energy(
    params: PulseParams, h: PauliHamiltonian, model: IsingModel, estimator: Estimator, config: VqeConfig
) -> tuple[float, int]:
    _check_bounds(params, config)
    state = model.evolve(params, config.initial_state)
    return estimator(state)


def _check_bounds(params: PulseParams, config: VqeConfig) -> None:
    lo, hi = config.omega_bounds
    if min(params.omegas) < lo - 1e-12 or max(params.omegas) > hi + 1e-12:
        raise ValueError("Rabi frequency outside bounds")
    lo, hi = config.delta_bounds
    if min(params.deltas) < lo - 1e-12 or max(params.deltas) > hi + 1e-12:
        raise ValueError("detuning outside bounds")


def initial_params(config: VqeConfig, rng: np.random.Generator) -> PulseParams:
    lo, hi = config.omega_bounds
    om = rng.uniform(lo, lo + config.omega_init_frac * (hi - lo))
    de = rng.uniform(*config.delta_bounds)
    return PulseParams((), (om,), (de,), config.t_tot, config.min_gap)


def _clip_vector(x: np.ndarray, k: int, config: VqeConfig) -> np.ndarray:
    x = np.array(x, float)
    x[:k] = np.clip(x[:k], *config.omega_bounds)
    x[k:] = np.clip(x[k:], *config.delta_bounds)
    return x


def vqe_optimize(
    h: PauliHamiltonian,
    register: AtomRegister,
    config: VqeConfig = VqeConfig(),
    constants: DeviceConstants | None = None,
    params0: PulseParams | None = None,
) -> VqeRun:
    """Alternate label splitting and a bounded derivative-free inner search
    until the shot budget is spent."""
    model = IsingModel(register, constants or DeviceConstants())
    estimator = Estimator(h, config)
    run = VqeRun(plan=estimator.plan)
    cost = estimator.plan.total_shots
    if cost > config.shot_budget:
        raise ValueError("budget below a single energy estimate")
    rng = np.random.default_rng(config.seed)
    params = params0 or initial_params(config, rng)

    def objective(x, template: PulseParams):
        if run.shots_spent + cost > config.shot_budget:
            raise BudgetExhausted
        p = template.with_vector(_clip_vector(x, template.n_intervals, config))
        e, shots = evaluate_energy(p, h, model, estimator, config)
        run.record(shots, p, e)
        return e

    objective(params.vector(), params)
    first = True
    while run.shots_spent + cost <= config.shot_budget:
        if not first:
            # restart each iteration from the best point, then add a label
            params = run.best_params
            params, _ = split_time_label(params, rng, config.min_gap)
        first = False
        k = params.n_intervals
        bounds = [config.omega_bounds] * k + [config.delta_bounds] * k
        try:
            if config.optimizer == "powell":
                minimize(
                    objective,
                    params.vector(),
                    args=(params,),
                    method="Powell",
                    bounds=bounds,
                    options={"maxfev": config.evals_per_iter, "xtol": 1e-3, "ftol": 1e-6},
                )
            else:
                minimize(
                    objective,
                    params.vector(),
                    args=(params,),
                    method="Nelder-Mead",
                    bounds=bounds,
                    options={"maxfev": config.evals_per_iter},
                )
        except BudgetExhausted:
            break
    return run


# ------------------------------------------------------------------ product-state scan


def scan_product_states(
    h: PauliHamiltonian,
    register: AtomRegister,
    candidates: Sequence[int] | None = None,
    config: VqeConfig = VqeConfig(),
    constants: DeviceConstants | None = None,
    e_exact: float | None = None,
) -> list[tuple[int, float, float]]:
    """One inner optimization step from each candidate product state.

    The step is evaluated with noiseless expectations (a classical
    pre-processing pass). Returns ``(index, error_before, error_after)``
    sorted by the post-step error.
    """
    n = h.qubit_count
    if candidates is None:
        if n > 10:
            raise ValueError("exhaustive scan limited to 10 qubits; pass candidates")
        candidates = range(1 << n)
    model = IsingModel(register, constants or DeviceConstants())
    if e_exact is None:
        e_exact = ground_energy_exact(h)[0]
    hm = dense_matrix(h)
    rng = np.random.default_rng(config.seed)
    p0 = initial_params(config, rng)
    k = p0.n_intervals
    bounds = [config.omega_bounds] * k + [config.delta_bounds] * k
    out = []
    for idx in candidates:
        before = float(hm[idx, idx].real)

        def f(x):
            psi = model.evolve(p0.with_vector(_clip_vector(x, k, config)), idx).amplitudes
            return float(np.vdot(psi, hm @ psi).real)

        res = minimize(f, p0.vector(), method="Powell", bounds=bounds, options={"maxfev": config.evals_per_iter})
        after = min(float(res.fun), before)
        out.append((int(idx), relative_error(before, e_exact), relative_error(after, e_exact)))
    out.sort(key=lambda r: (r[2], r[0]))
    return out


# ------------------------------------------------------------------ H2 XY-UCC


def sector_diagnostic(h: PauliHamiltonian) -> float:
    """Norm of the matrix block coupling span{|01>,|10>} to its complement."""
    if h.qubit_count != 2:
        raise ValueError("two-qubit Hamiltonian expected")
    m = dense_matrix(h)
    inside = [1, 2]
    outside = [0, 3]
    return float(np.abs(m[np.ix_(outside, inside)]).max())


def xy_sector_state(delta0: float, delta1: float, t: float, coupling: float, initial: int = 1) -> np.ndarray:
    """exp(-2 pi i t (delta0 Z0/2 + delta1 Z1/2 + c (XX + YY))) |initial>.

    ``initial`` is the basis index (1 = qubit 0 excited). Z is diag(-1, +1)
    per qubit, so only the sector block is non-trivial.
    """
    z = np.array([-1.0, 1.0])
    d = 0.5 * delta0 * np.tile(z, 2) + 0.5 * delta1 * np.repeat(z, 2)
    h = np.diag(d).astype(complex)
    h[1, 2] = h[2, 1] = 2.0 * coupling
    psi0 = np.zeros(4, complex)
    psi0[initial] = 1.0
    return expm(-1j * TWO_PI * t * h) @ psi0


@dataclass
class XYRun(VqeRun):
    max_leakage: float = 0.0
    sector_coupling: float = 0.0
    best_x: np.ndarray | None = None


def xy_ucc_h2(
    h_eff: PauliHamiltonian,
    shot_budget: int = 36_500,
    seed: int = 0,
    coupling: float = 3220.0 / 10.0**3,
    shots_per_estimate: int = 400,
    delta_bound: float = 2.0,
    t_bound: float = 1.0,
    popsize: int = 5,
    maxiter: int = 4,
    leakage_samples: int = 8,
) -> XYRun:
    """Differential-evolution search over (delta0, delta1, t) for the XY-mode ansatz.

    ``coupling`` is C3/r^3 of the atom pair in MHz (default: 10 um spacing).
    Energies are derandomized estimates with ``shots_per_estimate`` shots each.
    """
    if h_eff.qubit_count != 2:
        raise ValueError("two-qubit effective Hamiltonian expected")
    diag = sector_diagnostic(h_eff)
    cfg = VqeConfig(shot_budget=shot_budget, shots_per_estimate=shots_per_estimate, seed=seed)
    est = Estimator(h_eff, cfg)
    run = XYRun(plan=est.plan)
    run.sector_coupling = diag
    cost = est.plan.total_shots
    if cost > shot_budget:
        raise ValueError("budget below a single energy estimate")
    sector = np.zeros(4, bool)
    sector[[1, 2]] = True
    best_x = {"x": None}

    def energy(x):
        if run.shots_spent + cost > shot_budget:
            raise BudgetExhausted
        d0, d1, t = x
        for tt in np.linspace(0.0, t, leakage_samples):
            psi = xy_sector_state(d0, d1, tt, coupling)
            run.max_leakage = max(run.max_leakage, float(np.linalg.norm(psi[~sector])))
        psi = xy_sector_state(d0, d1, t, coupling)
        e, shots = est(QuantumState(psi))
        before = run.best_energy
        run.record(shots, PulseParams((), (0.0,), (0.0,), float(t)), e)
        if run.best_energy < before:
            best_x["x"] = np.array(x, float)
        return e

    bounds = [(-delta_bound, delta_bound)] * 2 + [(0.0, t_bound)]
    try:
        differential_evolution(
            energy, bounds, popsize=popsize, maxiter=maxiter, seed=seed, tol=0.0, polish=False, init="latinhypercube"
        )
    except BudgetExhausted:
        pass
    run.best_x = best_x["x"]
    return run


# ------------------------------------------------------------------ alternating pulses


def _phase_drive(n: int, phi: float) -> np.ndarray:
    """sum_i (e^{i phi} |0><1|_i + h.c.) on the register."""
    dim = 1 << n
    j = np.arange(dim)
    m = np.zeros((dim, dim), complex)
    for q in range(n):
        excited = ((j >> q) & 1) == 1
        src = j[excited]
        m[src ^ (1 << q), src] += np.exp(1j * phi)
        m[src, src ^ (1 << q)] += np.exp(-1j * phi)
    return m


def alternating_pulse_ansatz(
    h: PauliHamiltonian,
    register: AtomRegister,
    layers: int,
    params: Sequence[float],
    variant: str = "A",
    omega: float = 1.0,
    delta: float = 1.0,
    constants: DeviceConstants | None = None,
    shots_per_term: int | None = None,
    seed=0,
    initial: int = 0,
) -> tuple[float, int]:
    """Layered constant pulses.

    Variant ``A``: ``params = (t_a^1..t_a^L, t_b^1..t_b^L)`` applying
    ``U_a U_b`` per layer, with ``H_a`` driven and detuned and ``H_b`` driven
    only. Variant ``B``: ``params = (t^1..t^L, phi^1..phi^L)`` on a single
    phase-controlled drive. With ``shots_per_term`` the energy is estimated
    term by term, otherwise the exact expectation is returned with zero shots.
    """
    if layers < 1:
        raise ValueError("need at least one layer")
    p = np.asarray(params, float)
    if p.size != 2 * layers:
        raise ValueError(f"expected {2 * layers} parameters")
    model = IsingModel(register, constants or DeviceConstants())
    if omega < 0 or omega > model.constants.rabi_max:
        raise ValueError("Rabi frequency outside device bounds")
    segs = []
    if variant == "A":
        if np.any(p < 0):
            raise ValueError("durations must be non-negative")
        ha = model.hamiltonian(omega, delta)
        hb = model.hamiltonian(omega, 0.0)
        for ta, tb in zip(p[:layers], p[layers:]):
            # U_a U_b acting on the state: U_b first
            segs += [(tb, hb), (ta, ha)]
    elif variant == "B":
        ts, phis = p[:layers], p[layers:]
        if np.any(ts < 0):
            raise ValueError("durations must be non-negative")
        base = np.diag(model.v_diag).astype(complex)
        for t, phi in zip(ts, phis):
            segs.append((t, base + 0.5 * omega * _phase_drive(model.n, phi)))
    else:
        raise ValueError("variant must be 'A' or 'B'")
    state = evolve_piecewise_constant(segs, QuantumState.basis(model.n, initial))
    if shots_per_term is None:
        return expectation(h, state), 0
    est = derand.estimate_per_term(h, state, shots_per_term, seed)
    return est.energy, shots_per_term * len(h.nonidentity_terms())


def product_state_energies(h: PauliHamiltonian) -> np.ndarray:
    """Diagonal energies of every computational product state."""
    return np.real(np.diag(dense_matrix(h)))

