"""Full VQE pipeline (embedding, product-state scan, pulse optimization) over seeds.

    python scripts/vqe_molecules.py data/lih_1.5A.ham --seeds 0 1 2 3 4
"""

import argparse
import dataclasses
import time
import warnings

import numpy as np

from rydberg_hybrid import embedding, vqe
from rydberg_hybrid.paulialg import expectation, ground_energy_exact, load_hamiltonian


def main():
    p = argparse.ArgumentParser()
    p.add_argument("hamiltonian")
    p.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    p.add_argument("--budget", type=int, default=350_000)
    p.add_argument("--t-tot", type=float, default=0.25)
    p.add_argument("--embed-seed", type=int, default=0)
    a = p.parse_args()

    h = load_hamiltonian(a.hamiltonian)
    e0 = ground_energy_exact(h)[0]
    prob = embedding.EmbeddingProblem(
        embedding.chemistry_target_matrix(h), scale=10.0, mode="chemistry-score", bounds=(0.0, 60.0)
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        reg = embedding.optimize_positions(prob, seed=a.embed_seed, max_evals=3000).positions
    print(f"exact ground energy {e0:.8f}; register (um):\n{np.round(reg.positions, 2)}")
    print("seed  init  est_error  state_error  shots  intervals  time_s")
    for s in a.seeds:
        t0 = time.time()
        cfg = vqe.VqeConfig(seed=s, shot_budget=a.budget, t_tot=a.t_tot)
        scan = vqe.scan_product_states(h, reg, config=cfg, e_exact=e0)
        cfg = dataclasses.replace(cfg, initial_state=scan[0][0])
        run = vqe.vqe_optimize(h, reg, cfg)
        psi = vqe.IsingModel(reg).evolve(run.best_params, cfg.initial_state)
        print(
            f"{s:4d}  {cfg.initial_state:4d}  {vqe.relative_error(run.best_energy, e0):9.4f}  "
            f"{vqe.relative_error(expectation(h, psi), e0):11.4f}  {run.shots_spent:6d}  "
            f"{run.best_params.n_intervals:9d}  {time.time() - t0:6.1f}"
        )


if __name__ == "__main__":
    main()
