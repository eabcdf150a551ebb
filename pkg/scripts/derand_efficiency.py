"""Estimation error against shots for derandomized and per-term measurement.

Uses the exact ground state of the given Hamiltonian, so only the estimator
error is measured.

    python scripts/derand_efficiency.py data/lih_1.5A.ham
"""

import argparse

import numpy as np

from rydberg_hybrid import derand
from rydberg_hybrid.paulialg import ground_energy_exact, load_hamiltonian


def main():
    p = argparse.ArgumentParser()
    p.add_argument("hamiltonian")
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--score-eps", type=float, default=0.9)
    a = p.parse_args()

    h = load_hamiltonian(a.hamiltonian)
    e0, psi = ground_energy_exact(h)
    n_terms = len(h.nonidentity_terms())
    print("method      shots  bases  median_err  p90_err")
    for m in (50, 100, 200, 400, 800, 1600, 3200):
        plan = derand.greedy_derandomize(h, m, a.score_eps)
        est = [derand.estimate_state_energy(h, psi, plan, seed=s).energy for s in np.random.SeedSequence(m).spawn(a.repeats)]
        err = np.abs(np.array(est) - e0) / abs(e0)
        print(f"derand  {plan.total_shots:9d}  {len(plan.bases):5d}  {np.median(err):10.4f}  {np.quantile(err, 0.9):7.4f}")
    for k in (5, 20, 50, 200, 1000):
        est = [derand.estimate_per_term(h, psi, k, seed=s).energy for s in np.random.SeedSequence(k).spawn(a.repeats)]
        err = np.abs(np.array(est) - e0) / abs(e0)
        print(f"uniform {k * n_terms:9d}  {n_terms:5d}  {np.median(err):10.4f}  {np.quantile(err, 0.9):7.4f}")


if __name__ == "__main__":
    main()
