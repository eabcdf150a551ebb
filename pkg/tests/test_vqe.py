import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_hybrid.device import AtomRegister
from rydberg_hybrid.dynamics import QuantumState
from rydberg_hybrid.paulialg import PauliHamiltonian, expectation, ground_energy_exact
from rydberg_hybrid.vqe import (
    Estimator,
    IsingModel,
    PulseParams,
    VqeConfig,
    alternating_pulse_ansatz,
    evaluate_energy,
    initial_params,
    product_state_energies,
    relative_error,
    scan_product_states,
    sector_diagnostic,
    split_time_label,
    vqe_optimize,
    xy_sector_state,
    xy_ucc_h2,
)

REG2 = AtomRegister.square(2, 1, 8.0)


def test_relative_error_examples():
    assert relative_error(-1.05, -1.0) == pytest.approx(0.05)
    assert relative_error(-2.0, -2.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        relative_error(1.0, 0.0)


def test_pulse_params_validation():
    with pytest.raises(ValueError):
        PulseParams((0.5,), (1.0,), (0.0,), 1.0)
    with pytest.raises(ValueError):
        PulseParams((0.5, 0.51), (1.0,) * 3, (0.0,) * 3, 1.0)


def test_split_neutral_waveform():
    rng = np.random.default_rng(3)
    p = PulseParams((1.0, 2.5), (0.3, 1.2, 0.7), (-1.0, 0.5, 1.5), 4.0)
    q, sat = split_time_label(p, rng)
    assert not sat and q.n_intervals == 4
    t = np.linspace(0, 4.0, 4001)
    for a, b in zip((p.program().omega, *p.program().deltas), (q.program().omega, *q.program().deltas)):
        assert np.array_equal(a(t), b(t))
    model = IsingModel(AtomRegister.square(3, 1, 7.0))
    assert np.allclose(model.evolve(p).amplitudes, model.evolve(q).amplitudes, atol=1e-12)


def test_split_saturation():
    p = PulseParams((), (1.0,), (0.0,), 0.03)
    q, sat = split_time_label(p, np.random.default_rng(0), min_gap=0.016, max_retries=50)
    assert sat and q == p


def test_repeated_splits_respect_gap():
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        p = PulseParams((), (1.0,), (0.5,), 4.0)
        for _ in range(10):
            p, sat = split_time_label(p, rng, 0.016)
            assert not sat
        assert p.n_intervals == 11
        assert np.diff(p.edges).min() >= 0.016
        assert len(set(p.omegas)) == 1


def test_initial_params_in_bounds():
    cfg = VqeConfig()
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = initial_params(cfg, rng)
        assert 0 <= p.omegas[0] <= 2 and -2 <= p.deltas[0] <= 2 and p.n_intervals == 1
    with pytest.raises(ValueError):
        VqeConfig(omega_bounds=(0.0, np.inf))


def test_zero_duration_energy_of_initial_state():
    h = PauliHamiltonian.from_dict(3, {"ZII": 0.4, "IZI": 0.4, "IIZ": 0.4})
    reg = AtomRegister.square(3, 1, 7.0)
    cfg = VqeConfig(shots_per_estimate=200)
    e, shots = evaluate_energy(PulseParams((), (1.0,), (0.5,), 0.0), h, IsingModel(reg), Estimator(h, cfg), cfg)
    assert e == pytest.approx(-3 * 0.4) and shots == 200


def test_zz_toy_estimate_within_three_sigma():
    h = PauliHamiltonian.from_dict(2, {"ZZ": 1.0})
    cfg = VqeConfig(shots_per_estimate=2000, seed=2)
    model = IsingModel(REG2)
    p = PulseParams((), (1.3,), (0.4,), 0.6)
    psi = model.evolve(p).amplitudes
    exact = expectation(h, psi)
    e, n = evaluate_energy(p, h, model, Estimator(h, cfg), cfg)
    sigma = np.sqrt(max(1 - exact**2, 1e-12) / n)
    assert abs(e - exact) < 3 * sigma


def test_bounds_violation_rejected():
    h = PauliHamiltonian.from_dict(2, {"ZZ": 1.0})
    cfg = VqeConfig(shots_per_estimate=10)
    with pytest.raises(ValueError):
        evaluate_energy(PulseParams((), (3.0,), (0.0,), 0.1), h, IsingModel(REG2), Estimator(h, cfg), cfg)


def test_single_estimate_budget():
    h = PauliHamiltonian.from_dict(2, {"ZZ": 1.0, "XI": 0.3})
    cfg = VqeConfig(shot_budget=500, shots_per_estimate=500)
    run = vqe_optimize(h, REG2, cfg)
    assert len(run.history) == 1 and run.best_energy == run.history[0][2]
    with pytest.raises(ValueError):
        vqe_optimize(h, REG2, VqeConfig(shot_budget=100, shots_per_estimate=500))


def test_budget_accounting_and_monotone_best():
    h = PauliHamiltonian.from_dict(2, {"ZZ": 0.5, "XI": 0.3, "IX": 0.3})
    cfg = VqeConfig(shot_budget=20_000, shots_per_estimate=300, seed=5)
    run = vqe_optimize(h, REG2, cfg)
    cum = [c for c, _, _ in run.history]
    assert cum == [300 * (i + 1) for i in range(len(cum))]
    assert run.shots_spent == cum[-1] <= cfg.shot_budget
    assert cfg.shot_budget - run.shots_spent < 300
    assert run.best_energy == min(e for _, _, e in run.history)
    assert all(b >= a for a, b in zip(run.best_trace[1:], run.best_trace))
    assert max(p.n_intervals for _, p, _ in run.history) > 1


def test_seeded_determinism():
    h = PauliHamiltonian.from_dict(2, {"ZZ": 0.5, "XI": 0.3})
    cfg = VqeConfig(shot_budget=6000, shots_per_estimate=200, seed=9)
    a, b = vqe_optimize(h, REG2, cfg), vqe_optimize(h, REG2, cfg)
    assert [(c, p, e) for c, p, e in a.history] == [(c, p, e) for c, p, e in b.history]


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1), st.floats(0.05, 1.0))
@settings(max_examples=50)
def test_xy_sector_closed_form(d0, d1, t, c):
    psi = xy_sector_state(d0, d1, t, c)
    delta = 0.5 * (d0 - d1)
    w = np.hypot(delta, 2 * c)
    p_stay = 1 - (2 * c / w) ** 2 * np.sin(2 * np.pi * w * t) ** 2
    assert abs(abs(psi[1]) ** 2 - p_stay) < 1e-10
    assert np.linalg.norm(psi[[0, 3]]) < 1e-12


@given(st.floats(-2, 2), st.floats(0, 1))
def test_xy_symmetric_detuning_without_coupling_is_frozen(d, t):
    psi = xy_sector_state(d, d, t, 0.0)
    assert abs(abs(psi[1]) ** 2 - 1) < 1e-12


def test_xy_flat_landscape_in_sector():
    g3 = 0.3
    h = PauliHamiltonian.from_dict(2, {"ZZ": g3})
    assert sector_diagnostic(h) == 0.0
    run = xy_ucc_h2(h, shot_budget=4000, shots_per_estimate=400)
    assert run.best_energy == pytest.approx(-g3)
    assert all(e == pytest.approx(-g3) for _, _, e in run.history)
    assert run.max_leakage < 1e-10


def test_xy_sector_diagnostic_flags_breaking_terms():
    h = PauliHamiltonian.from_dict(2, {"XI": 0.2, "ZZ": 1.0})
    assert sector_diagnostic(h) > 0


def test_alternating_zero_durations():
    reg = AtomRegister.square(3, 1, 7.0)
    h = PauliHamiltonian.from_dict(3, {"ZZI": 0.5, "IXX": 0.2, "ZII": -0.3})
    init = 5
    for variant in ("A", "B"):
        e, n = alternating_pulse_ansatz(h, reg, 2, [0, 0, 0, 0], variant=variant, initial=init)
        assert e == pytest.approx(product_state_energies(h)[init]) and n == 0
    e, n = alternating_pulse_ansatz(h, reg, 1, [0, 0], shots_per_term=100)
    assert n == 300
    with pytest.raises(ValueError):
        alternating_pulse_ansatz(h, reg, 1, [-1, 0])
    with pytest.raises(ValueError):
        alternating_pulse_ansatz(h, reg, 1, [0.1, 0.1], omega=9.0)


def test_scan_diagonal_ground_state_has_zero_error():
    h = PauliHamiltonian.from_dict(3, {"ZII": 0.5, "IZI": -0.7, "IIZ": 0.2, "ZZI": 0.1})
    e0 = ground_energy_exact(h)[0]
    g = int(np.argmin(product_state_energies(h)))
    rows = scan_product_states(h, AtomRegister.square(3, 1, 7.0), config=VqeConfig(seed=1))
    before = {i: b for i, b, _ in rows}
    assert before[g] == pytest.approx(0.0, abs=1e-12)
    assert [r[2] for r in rows] == sorted(r[2] for r in rows)
    assert abs(product_state_energies(h)[g] - e0) < 1e-12


def test_scan_best_beats_vacuum(lih):
    reg = AtomRegister.square(3, 2, 8.0)
    rows = scan_product_states(lih, reg, config=VqeConfig(seed=0))
    after = {i: a for i, _, a in rows}
    assert rows[0][2] < after[0]
