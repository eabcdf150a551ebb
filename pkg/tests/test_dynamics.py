import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_hybrid import device as dev
from rydberg_hybrid.dynamics import (
    DensityMatrix,
    EvolutionSettings,
    GuardError,
    NoiseSpec,
    NormDriftError,
    QuantumState,
    ShotRecord,
    TimeDependentHamiltonian,
    apply_spam,
    correlators_from_shots,
    evolve_lindblad,
    evolve_pure,
    fidelity,
    sample_bitstrings,
    write_trajectory_csv,
)

C = dev.DeviceConstants()


def rabi_hamiltonian(omega, n=1, static=None):
    return TimeDependentHamiltonian(n, static, [(lambda t: 0.5 * omega, dev.x_sum_operator(n))])


def pair_program(omega, delta, horizon):
    return dev.DriveProgram(dev.Waveform.constant(omega, horizon), dev.Waveform.constant(delta, horizon), horizon)


def test_pi_pulse():
    omega = 1.3
    psi = evolve_pure(rabi_hamiltonian(omega), QuantumState.basis(1, 0), 1 / (2 * omega))
    assert fidelity(psi, QuantumState.basis(1, 1)) > 1 - 1e-6


def test_blockaded_pair_oscillates_at_sqrt2_omega():
    reg = dev.AtomRegister(np.array([[0.0, 0.0], [4.0, 0.0]]))
    omega = 1.0
    period = 1 / (np.sqrt(2) * omega)
    ham = dev.ising_hamiltonian(reg, C, pair_program(omega, 0.0, period))
    times = (0.5 * period, period)
    _, rec = evolve_pure(ham, QuantumState.basis(2, 0), period, EvolutionSettings(step=1e-4, record_times=times))
    half, full = rec[0][1].probabilities(), rec[1][1].probabilities()
    # blockade leakage into |rr> scales as (omega / V)^2
    assert half[0] < 1e-3 and abs(half[1] - 0.5) < 1e-3 and abs(half[2] - 0.5) < 1e-3
    assert full[0] > 1 - 1e-3


def test_zero_drive_is_stationary():
    reg = dev.AtomRegister.square(2, 2, 6.0)
    ham = dev.ising_hamiltonian(reg, C, pair_program(0.0, 0.0, 1.0))
    psi = evolve_pure(ham, QuantumState.basis(4, 0), 1.0)
    assert fidelity(psi, QuantumState.basis(4, 0)) > 1 - 1e-12


def test_norm_drift_guard():
    # 1 GHz drive with a 10 ns step diverges
    with pytest.raises(NormDriftError):
        evolve_pure(rabi_hamiltonian(1000.0), QuantumState.basis(1, 0), 0.1, EvolutionSettings(step=1e-2))


def test_unitarity_and_energy_over_4us():
    reg = dev.AtomRegister.square(2, 2, 7.0)
    prog = pair_program(1.5, 0.7, 4.0)
    ham = dev.ising_hamiltonian(reg, C, prog)
    rt = tuple(np.linspace(0.5, 4.0, 8))
    fin, rec = evolve_pure(ham, QuantumState.basis(4, 0), 4.0, EvolutionSettings(record_times=rt))
    h = ham.dense(0.0)
    e0 = np.real(np.vdot(QuantumState.basis(4, 0).amplitudes, h @ QuantumState.basis(4, 0).amplitudes))
    for _, s in rec:
        assert abs(np.linalg.norm(s.amplitudes) - 1) < 1e-6
        e = np.real(np.vdot(s.amplitudes, h @ s.amplitudes))
        assert abs(e - e0) < 1e-6 * max(1.0, abs(e0))


def test_step_halving():
    reg = dev.AtomRegister.square(2, 1, 7.0)
    prog = dev.DriveProgram(dev.Waveform.ramp(0.0, 2.0, 2.0), dev.Waveform.ramp(-3.0, 3.0, 2.0), 2.0)
    ham = dev.ising_hamiltonian(reg, C, prog)
    a = evolve_pure(ham, QuantumState.basis(2, 0), 2.0, EvolutionSettings(step=1e-3))
    b = evolve_pure(ham, QuantumState.basis(2, 0), 2.0, EvolutionSettings(step=5e-4))
    assert 1 - fidelity(a, b) < 1e-8


def test_single_qubit_dephasing_closed_form():
    gamma = 0.5
    tau = 1 / gamma
    plus = QuantumState(np.array([1, 1]) / np.sqrt(2))
    rho = evolve_lindblad(TimeDependentHamiltonian(1), DensityMatrix.from_state(plus), NoiseSpec(gamma=gamma), tau)
    expected = 0.5 * np.exp(-gamma * tau / 2)
    assert abs(abs(rho.entries[0, 1]) - expected) < 0.01 * expected


def test_lindblad_closed_system_limit():
    reg = dev.AtomRegister.square(2, 1, 8.0)
    prog = dev.DriveProgram(dev.Waveform.ramp(0.0, 2.0, 1.0), dev.Waveform.constant(0.4, 1.0), 1.0)
    ham = dev.ising_hamiltonian(reg, C, prog)
    psi = evolve_pure(ham, QuantumState.basis(2, 0), 1.0)
    rho = evolve_lindblad(ham, DensityMatrix.from_state(QuantumState.basis(2, 0)), NoiseSpec(), 1.0)
    assert fidelity(psi, rho) > 1 - 1e-8


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(-2.0, 2.0))
@settings(max_examples=10, deadline=None)
def test_lindblad_invariants(gamma, omega, delta):
    reg = dev.AtomRegister.square(2, 1, 7.0)
    ham = dev.ising_hamiltonian(reg, C, pair_program(omega, delta, 1.0))
    rt = tuple(np.linspace(0.1, 1.0, 10))
    _, rec = evolve_lindblad(
        ham, DensityMatrix.from_state(QuantumState.basis(2, 0)), NoiseSpec(gamma=gamma), 1.0, EvolutionSettings(record_times=rt)
    )
    purity = [1.0]
    for _, r in rec:
        m = r.entries
        assert np.abs(m - m.conj().T).max() < 1e-10
        assert abs(np.trace(m).real - 1) < 1e-8
        assert np.linalg.eigvalsh(m).min() > -1e-8
        purity.append(np.real(np.trace(m @ m)))
    assert np.all(np.diff(purity) < 1e-8)


def test_lindblad_guard():
    with pytest.raises(GuardError):
        evolve_lindblad(TimeDependentHamiltonian(11), None, NoiseSpec(gamma=0.1), 1.0)


def test_sampling_deterministic_outcome():
    rec = sample_bitstrings(QuantumState.basis(2, 3), 100, seed=1)
    assert rec.shots == 100
    assert np.all(rec.bits() == 1)


def test_bell_sampling():
    bell = QuantumState(np.array([1, 0, 0, 1]) / np.sqrt(2))
    rec = sample_bitstrings(bell, 10**6, seed=3)
    counts = np.bincount(rec.bitstrings, minlength=4) / 1e6
    assert abs(counts[0] - 0.5) < 0.005 and abs(counts[3] - 0.5) < 0.005
    assert counts[1] == 0 and counts[2] == 0


def test_mixed_state_sampling():
    rec = sample_bitstrings(DensityMatrix(np.eye(2) / 2), 10**6, seed=4)
    assert abs(rec.bits().mean() - 0.5) < 0.005


def test_sampling_seeded_determinism():
    psi = QuantumState(np.array([0.6, 0.8j]))
    a = sample_bitstrings(psi, 500, seed=9)
    b = sample_bitstrings(psi, 500, seed=9)
    assert np.array_equal(a.bitstrings, b.bitstrings)


def test_spam():
    zeros = ShotRecord(10, np.zeros(10**4, dtype=np.int64))
    assert apply_spam(zeros, 0.0, 0.0, seed=1) is zeros
    noisy = apply_spam(zeros, 0.03, 0.0, seed=2)
    assert abs(noisy.bits().mean() - 0.03) < 0.002
    assert np.all(apply_spam(zeros, 1.0, 0.0, seed=3).bits() == 1)
    ones = ShotRecord(2, np.full(1000, 3))
    assert np.all(apply_spam(ones, 1.0, 0.0, seed=4).bits() == 1)
    assert np.all(apply_spam(ones, 0.0, 1.0, seed=4).bits() == 0)
    with pytest.raises(ValueError):
        apply_spam(zeros, 1.5, 0.0)


def test_correlators_from_shots():
    m, c = correlators_from_shots(ShotRecord(2, np.full(100, 3)))
    assert np.allclose(m, 1) and c[0, 1] == 1
    m, c = correlators_from_shots(ShotRecord(2, np.array([1, 2] * 50)))
    assert np.allclose(m, 0) and c[0, 1] == -1 and np.allclose(c, c.T)


def test_trajectory_csv(tmp_path):
    p = tmp_path / "traj.csv"
    write_trajectory_csv(p, [(0.0, "Z", 1.0), (0.5, "Z", 0.25)])
    lines = p.read_text().splitlines()
    assert lines[0] == "time_us,observable_name,value"
    time, name, value = lines[-1].split(",")
    assert float(time) == 0.5 and name == "Z" and float(value) == 0.25
