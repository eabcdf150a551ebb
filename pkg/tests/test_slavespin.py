from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_hybrid.dynamics import NoiseSpec
from rydberg_hybrid.slavespin import (
    AnnealBackend,
    ExactBackend,
    LatticeSpec,
    SSMFSettings,
    build_cluster,
    cmft_ising_standalone,
    correlation_length,
    critical_u,
    dft_spectrum,
    free_fermion_density,
    ground_state,
    is_monotone,
    mott_sweep,
    quench_dynamics,
    run_ssmf,
    solve_spin,
    spectral_peaks,
    spin_cluster_hamiltonian,
    spin_coupling,
)


def fock_density(Q, tol=1e-9):
    """<c_i^dag c_j> of one spin species from the spinful Fock space.

    Averaged over the degenerate ground manifold of the half-filled,
    spin-balanced sector (the zero-temperature canonical limit).
    """
    n = len(Q)
    modes = 2 * n
    a = np.array([[0, 1], [0, 0]], float)
    z = np.diag([1.0, -1.0])
    eye = np.eye(2)
    ann = []
    for k in range(modes):
        ops = [z] * k + [a] + [eye] * (modes - k - 1)
        ann.append(reduce(np.kron, ops))
    cre = [x.T for x in ann]
    up = range(n)
    dn = range(n, 2 * n)
    H = sum(Q[i, j] * (cre[s0 + i] @ ann[s0 + j]) for s0 in (0, n) for i in range(n) for j in range(n))
    n_up = sum(cre[k] @ ann[k] for k in up)
    n_dn = sum(cre[k] @ ann[k] for k in dn)
    sector = np.where((np.isclose(np.diag(n_up), n / 2)) & (np.isclose(np.diag(n_dn), n / 2)))[0]
    w, v = np.linalg.eigh(H[np.ix_(sector, sector)])
    ground = v[:, w < w[0] + tol]
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            op = (cre[i] @ ann[j])[np.ix_(sector, sector)]
            G[i, j] = np.trace(ground.T @ op @ ground) / ground.shape[1]
    return G


def test_cluster_geometry():
    sq = build_cluster(LatticeSpec("square", 2, 2))
    assert np.all(sq.z == 2) and len(sq.nn_pairs) == 4
    big = build_cluster(LatticeSpec("square", 4, 3))
    assert sorted(np.where(big.z == 0)[0]) == [5, 6]
    tri = build_cluster(LatticeSpec("triangular", 3, 2))
    assert list((tri.hopping != 0).sum(axis=1)) == [2, 4, 4, 2, 4, 2]
    with pytest.raises(ValueError):
        LatticeSpec("hexagonal")


def test_two_site_bonding_orbital():
    G, info = free_fermion_density(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    assert np.allclose(G, 0.5)
    J = spin_coupling(np.array([[0.0, -1.0], [-1.0, 0.0]]), G)
    assert abs(J[0, 1] + 1.0) < 1e-12 and J[0, 0] == 0.0


def test_square_density_matches_fock_oracle():
    cl = build_cluster(LatticeSpec("square", 2, 2))
    G, info = free_fermion_density(cl.hopping)
    assert info["degenerate_shell"]
    assert np.abs(G - fock_density(cl.hopping)).max() < 1e-10
    assert np.allclose(np.diag(G), 0.5, atol=1e-14)


@given(st.integers(0, 10**6))
@settings(max_examples=10, deadline=None)
def test_random_density_matches_fock_oracle(seed):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(4, 4))
    Q = Q + Q.T
    G, _ = free_fermion_density(Q)
    assert np.abs(G - fock_density(Q)).max() < 1e-10


def test_spin_coupling_symmetry():
    cl = build_cluster(LatticeSpec("square", 2, 2))
    G, _ = free_fermion_density(cl.hopping)
    J = spin_coupling(cl.hopping, G)
    vals = [J[i, j] for i, j in cl.nn_pairs]
    assert np.ptp(vals) < 1e-12 and vals[0] < 0
    assert J[0, 3] == 0.0


def test_classical_and_decoupled_limits():
    cl = build_cluster(LatticeSpec("square", 2, 2))
    J = -0.3 * (cl.hopping != 0)
    sol = solve_spin(J, 0.0, 1.0, cl, ExactBackend())
    assert np.allclose(np.abs(sol.m_sites), 1.0)
    sol = solve_spin(np.zeros((4, 4)), 2.0, 0.5, cl, ExactBackend())
    assert np.allclose(sol.m_sites, 0.0, atol=1e-12)


def test_small_u_ground_state_is_ordered():
    cl = build_cluster(LatticeSpec("square", 2, 2))
    G, _ = free_fermion_density(cl.hopping)
    J = spin_coupling(cl.hopping, G)
    sol = solve_spin(J, 0.1, 0.9, cl, ExactBackend())
    assert abs(np.mean(sol.m_sites)) >= 0.95


def test_spin_hamiltonian_coefficients():
    cl = build_cluster(LatticeSpec("square", 2, 1))
    J = np.array([[0.0, -0.25], [-0.25, 0.0]])
    h = spin_cluster_hamiltonian(J, 2.0, 0.5, cl)
    # ordered-pair sum: each bond enters with 2 J
    assert h.coefficient("ZZ") == -0.5
    assert h.coefficient("XI") == 0.5
    # h_i = 2 z_i Jbar mbar with z_i = 3 on a two-site square patch
    assert h.coefficient("ZI") == 2 * 3 * -0.25 * 0.5
    with pytest.raises(ValueError):
        spin_cluster_hamiltonian(J, -1.0, 0.5, cl)


def test_settings_reject_trivial_fixed_points():
    for m0 in (0.0, 1.0):
        with pytest.raises(ValueError):
            SSMFSettings(m0=m0)


def test_ssmf_limits():
    spec = LatticeSpec("square", 2, 2, 1.0)
    st0 = run_ssmf(spec, 0.0)
    assert st0.Z == 1.0 and st0.converged
    assert st0.inner_iters <= 2 and st0.outer_iters == 1
    big = run_ssmf(spec, 4 * 13.5)
    assert big.Z < 0.01
    assert 0 <= big.Z <= 1 and -1 <= big.g <= 1
    assert big.Z == big.m_bar**2


def test_particle_hole_symmetry_along_iterations():
    spec = LatticeSpec("square", 3, 2, 1.0)
    st_ = run_ssmf(spec, 6.0)
    assert np.allclose(np.diag(st_.G), 0.5, atol=1e-12)
    G, _ = free_fermion_density(st_.Q)
    assert np.allclose(np.diag(G), 0.5, atol=1e-12)


def test_fixed_point_independent_of_m0():
    spec = LatticeSpec("square", 3, 2, 1.0)
    for U in (4.0, 8.0, 11.0):
        Zs = [run_ssmf(spec, U, SSMFSettings(m0=m0)).Z for m0 in (0.1, 0.5, 0.9)]
        assert np.ptp(Zs) < 0.01


def test_mott_sweep_n4():
    spec = LatticeSpec("square", 2, 2, 1.0)
    rows = mott_sweep(spec, np.linspace(0, 20, 11))
    Z = [r.Z for r in rows]
    assert is_monotone(Z, 0.01)
    assert critical_u(rows) is not None
    with pytest.raises(ValueError):
        mott_sweep(spec, [2.0, 1.0])


def test_sweep_parallel_matches_serial():
    spec = LatticeSpec("square", 2, 2, 1.0)
    grid = [0.0, 5.0, 10.0]
    assert mott_sweep(spec, grid, jobs=1) == mott_sweep(spec, grid, jobs=2)


def test_ssmf_k1_flags_unconverged_near_critical():
    spec = LatticeSpec("square", 2, 2, 1.0)
    st_ = run_ssmf(spec, 9.0, SSMFSettings(k=1))
    assert not st_.converged


def test_noisy_anneal_small_u_keeps_order():
    cl = build_cluster(LatticeSpec("square", 2, 2, 1 / 3))
    G, _ = free_fermion_density(cl.hopping)
    J = spin_coupling(cl.hopping, G)
    be = AnnealBackend(noise=NoiseSpec.device_default())
    sol = solve_spin(J, 0.3, 0.9, cl, be, seed=5)
    assert np.mean(sol.m_sites) > 0.6
    assert sol.diagnostics["shots"] == 150


def test_zero_u_anneal_only_spam_flips():
    cl = build_cluster(LatticeSpec("square", 2, 2, 1 / 3))
    G, _ = free_fermion_density(cl.hopping)
    J = spin_coupling(cl.hopping, G)
    clean = solve_spin(J, 0.0, 0.9, cl, AnnealBackend(sampling=True), seed=1)
    assert np.allclose(clean.m_sites, 1.0)
    noisy = solve_spin(J, 0.0, 0.9, cl, AnnealBackend(noise=NoiseSpec(eps=0.03, eps_prime=0.03)), seed=1)
    assert 0.8 < np.mean(noisy.m_sites) < 1.0


def test_dephasing_flattens_anneal():
    cl = build_cluster(LatticeSpec("square", 2, 2, 1 / 3))
    G, _ = free_fermion_density(cl.hopping)
    J = spin_coupling(cl.hopping, G)
    for U in (2.0, 4.0):
        lo = solve_spin(J, U, 0.5, cl, AnnealBackend(noise=NoiseSpec(gamma=0.02), sampling=False))
        hi = solve_spin(J, U, 0.5, cl, AnnealBackend(noise=NoiseSpec(gamma=0.5), sampling=False))
        assert np.mean(hi.m_sites) < np.mean(lo.m_sites) - 0.04
        assert hi.C[0, 1] < lo.C[0, 1] - 0.04


def test_quench_zero_field_is_static():
    r = quench_dynamics(LatticeSpec("square", 2, 2, 1.0), 0.0, horizon=1.0)
    assert np.allclose(r.Z, 1.0)
    assert len(r.times) == 51


def test_quench_fermions_frozen():
    spec = LatticeSpec("square", 2, 2, 1.0)
    r = quench_dynamics(spec, 8.0, horizon=1.0)
    eq = run_ssmf(spec, 0.0)
    assert np.array_equal(r.G0, eq.G) and np.array_equal(r.J, eq.J)


def test_dft_tone():
    t = np.arange(0, 4.0, 0.02)
    f, a = dft_spectrum(t, np.cos(2 * np.pi * 5.0 * t))
    assert abs(f[np.argmax(a)] - 5.0) <= 0.25
    assert list(f[spectral_peaks(f, a)]) == [5.0]
    with pytest.raises(ValueError):
        dft_spectrum(t[:10], t[:10])


@given(st.floats(0.5, 5.0))
def test_correlation_length_of_exponential(xi):
    ell = np.arange(1, 6, dtype=float)
    est, ok = correlation_length(ell, np.exp(-ell / xi))
    assert ok and abs(est - xi) < 1e-6 * xi


def test_correlation_length_degenerate_inputs():
    assert correlation_length([1, 2], [0.1, -0.1]) == (0.0, False)
    assert correlation_length([1, 2], [0.1, 0.2])[1] is False


def test_ising_ferro_zero_field():
    r = cmft_ising_standalone("ferro", U_grid=[0.0, 0.5])
    assert abs(r.Z[0] - 1.0) < 1e-12
    with pytest.raises(ValueError):
        cmft_ising_standalone("other")


def test_ground_state_helper():
    cl = build_cluster(LatticeSpec("square", 2, 2))
    h = spin_cluster_hamiltonian(-0.2 * (cl.hopping != 0), 1.0, 0.5, cl)
    w, v = ground_state(h)
    assert abs(np.linalg.norm(v) - 1) < 1e-12 and w[0] <= w[1]
