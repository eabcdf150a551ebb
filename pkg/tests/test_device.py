import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_hybrid import device as dev
from rydberg_hybrid.dynamics import EvolutionSettings, QuantumState, evolve_pure, fidelity

C = dev.DeviceConstants()


def const_program(omega, delta, horizon, n=None):
    d = dev.Waveform.constant(delta, horizon)
    return dev.DriveProgram(dev.Waveform.constant(omega, horizon), d if n is None else (d,) * n, horizon)


def test_pair_coefficient_at_8um():
    reg = dev.AtomRegister(np.array([[0.0, 0.0], [8.0, 0.0]]))
    v = dev.interaction_matrix(reg, C)
    assert abs(v[0, 1] - 1947e3 / 8**6) < 1e-12
    assert abs(v[0, 1] - 7.43) < 0.01


@given(st.floats(5.0, 20.0), st.floats(0.0, 2 * np.pi))
def test_r6_law(r, theta):
    pts = np.array([[0.0, 0.0], [r * np.cos(theta), r * np.sin(theta)], [0.0, 2 * r]])
    v1 = dev.interaction_matrix(dev.AtomRegister(pts), C)
    v2 = dev.interaction_matrix(dev.AtomRegister(2 * pts), C)
    assert np.allclose(v1, v1.T) and np.all(np.diag(v1) == 0)
    assert np.allclose(v1 / 64, v2, rtol=1e-12)


def test_zero_drive_is_diagonal():
    reg = dev.AtomRegister.square(2, 2, 6.0)
    m = dev.ising_hamiltonian(reg, C, const_program(0.0, 0.0, 1.0)).dense(0.5)
    assert np.count_nonzero(m - np.diag(np.diag(m))) == 0


def test_ising_hamiltonian_matches_projector_oracle():
    reg = dev.AtomRegister(np.array([[0.0, 0.0], [7.0, 0.0], [3.0, 6.0]]))
    om, de = 1.3, -0.4
    m = dev.ising_hamiltonian(reg, C, const_program(om, de, 1.0)).dense(0.2)
    x = np.array([[0, 1], [1, 0]])
    nop = np.diag([0.0, 1.0])
    eye = np.eye(2)

    def site(op, q):
        ops = [eye] * 3
        ops[q] = op
        return np.kron(np.kron(ops[2], ops[1]), ops[0])

    v = dev.interaction_matrix(reg, C)
    ref = sum(0.5 * om * site(x, q) - de * site(nop, q) for q in range(3))
    ref = ref + sum(v[i, j] * site(nop, i) @ site(nop, j) for i in range(3) for j in range(i + 1, 3))
    assert np.abs(m - ref).max() < 1e-12


def test_xy_pair_transfer_time():
    reg = dev.AtomRegister(np.array([[0.0, 0.0], [10.0, 0.0]]))
    c3 = C.c3_over_h / 10.0**3
    tau = 1 / (8 * c3)
    ham = dev.xy_hamiltonian(reg, C, const_program(0.0, 0.0, tau))
    psi = evolve_pure(ham, QuantumState.basis(2, 1), tau, EvolutionSettings(step=1e-4))
    assert fidelity(psi, QuantumState.basis(2, 2)) > 1 - 1e-6


def test_xy_conserves_excitation_number():
    reg = dev.AtomRegister(np.array([[0.0, 0.0], [9.0, 0.0], [0.0, 11.0]]))
    prog = dev.DriveProgram(
        dev.Waveform.constant(0.0, 1.0), tuple(dev.Waveform.constant(d, 1.0) for d in (0.3, -0.2, 0.9)), 1.0
    )
    m = dev.xy_hamiltonian(reg, C, prog).dense(0.5)
    nsum = np.diag(((np.arange(8)[:, None] >> np.arange(3)) & 1).sum(1).astype(float))
    assert np.abs(m @ nsum - nsum @ m).max() < 1e-12


def test_blockade_radius():
    assert abs(dev.blockade_radius(1947e3, C) - 1.0) < 1e-12
    assert abs(dev.blockade_radius(1.0 / 64, C) / dev.blockade_radius(1.0, C) - 2.0) < 1e-12
    assert abs(dev.blockade_radius(1.0, C) - 11.2) < 0.05
    with pytest.raises(ValueError):
        dev.blockade_radius(0.0, C)


def test_wall_clock():
    assert abs(dev.wall_clock_estimate(350000, C) / 3600 - 32.4) < 0.05
    assert dev.wall_clock_estimate(0, C) == 0
    assert dev.wall_clock_estimate(2500, C.with_(repetition_rate=5.0)) == 500


def test_register_guards():
    with pytest.raises(dev.BoundsError):
        dev.AtomRegister(np.array([[0.0, 0.0], [3.0, 0.0]]))
    with pytest.raises(dev.BoundsError):
        dev.AtomRegister(np.array([[0.0, np.nan], [10.0, 0.0]]))


def test_rabi_bound_fails_loudly():
    reg = dev.AtomRegister.square(2, 1, 8.0)
    with pytest.raises(dev.BoundsError):
        dev.ising_hamiltonian(reg, C, const_program(3.0, 0.0, 1.0))


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(-5, 5)), min_size=1, max_size=6))
def test_waveform_breakpoints_and_midpoints(segments):
    t = np.cumsum([0.0] + [d for d, _ in segments])
    vals = [v for _, v in segments] + [segments[-1][1]]
    w = dev.Waveform(tuple(zip(t, vals)))
    for k in range(len(t)):
        assert w(t[k]) == vals[k]
    for k in range(len(t) - 1):
        mid = 0.5 * (t[k] + t[k + 1])
        assert abs(w(mid) - 0.5 * (vals[k] + vals[k + 1])) < 1e-12
    # vectorized evaluation agrees with scalar evaluation
    ts = np.linspace(0, t[-1], 37)
    assert np.allclose(w(ts), [w(float(x)) for x in ts], rtol=0, atol=1e-12)


def test_piecewise_constant_is_right_continuous():
    w = dev.Waveform.piecewise_constant([0.4], [1.0, 2.0], 1.0)
    assert w(0.39) == 1.0 and w(0.4) == 2.0 and w(1.0) == 2.0


def test_anneal_program_endpoints():
    reg = dev.AtomRegister.square(3, 2, 9.0)
    rng = np.random.default_rng(0)
    J = -np.abs(rng.normal(size=(6, 6)))
    J = 0.5 * (J + J.T)
    np.fill_diagonal(J, 0)
    z = np.array([2, 1, 2, 2, 1, 2], float)
    prog = dev.linear_anneal_program(reg, C, 3.0, J, 0.4, z, tau_max=4.0, delta_start=5.0)
    v = dev.interaction_matrix(reg, C)
    pairs = [(i, j) for i in range(6) for j in range(i + 1, 6)]
    jbar = np.mean([J[i, j] for i, j in pairs])
    expected = 0.5 * v.sum(axis=1) + 4 * jbar * 0.4 * z
    assert np.array_equal(prog.delta_values(4.0, 6), expected)
    assert prog.omega(4.0) == 1.5 and prog.omega(0.0) == 0.0
    assert np.all(prog.delta_values(0.0, 6) == 5.0)


def test_anneal_bulk_site_endpoint():
    reg = dev.AtomRegister.square(3, 3, 9.0)
    J = np.zeros((9, 9))
    J[0, 1] = J[1, 0] = -0.2
    z = np.ones(9)
    z[4] = 0
    prog = dev.linear_anneal_program(reg, C, 2.0, J, 0.7, z)
    v = dev.interaction_matrix(reg, C)
    assert prog.delta_values(4.0, 9)[4] == 0.5 * v[4].sum()


def test_zero_u_anneal_leaves_ground_state():
    reg = dev.AtomRegister.square(2, 2, 8.0)
    J = -0.1 * (np.ones((4, 4)) - np.eye(4))
    prog = dev.linear_anneal_program(reg, C, 0.0, J, 0.5, np.full(4, 2.0))
    assert np.all(prog.omega.values == 0)
    psi = evolve_pure(dev.ising_hamiltonian(reg, C, prog), QuantumState.basis(4, 0), 4.0)
    assert fidelity(psi, QuantumState.basis(4, 0)) > 1 - 1e-12


def test_quench_program():
    reg = dev.AtomRegister.square(2, 1, 8.0)
    prog = dev.quench_program(reg, C, 4.0, 0.05, 1.0, [0.1, 0.2])
    assert prog.omega(0.0) == 0 and prog.omega(0.05) == 2.0 and prog.omega(1.05) == 2.0
    with pytest.raises(dev.BoundsError):
        dev.quench_program(reg, C, 4.0, 0.01, 1.0, [0.1, 0.2])
    flat = dev.quench_program(reg, C, 0.0, 0.05, 1.0, [0.0, 0.0])
    assert np.all(flat.omega.values == 0)


def test_register_program_roundtrip(tmp_path):
    reg = dev.AtomRegister(np.array([[0.0, 0.0], [7.5, 1.25]]))
    prog = const_program(1.0, -0.5, 2.0)
    p = tmp_path / "rp.json"
    dev.save_register_program(p, reg, prog)
    reg2, prog2 = dev.load_register_program(p)
    assert reg2 == reg and prog2 == prog
