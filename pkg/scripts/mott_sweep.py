"""Z(U) for the exact and annealing backends on a square cluster.

    python scripts/mott_sweep.py --nx 2 --ny 2 --t 0.3333 --umax 5 --points 20 --noise
"""

import argparse
import warnings

import numpy as np

from rydberg_hybrid.dynamics import NoiseSpec
from rydberg_hybrid.slavespin import AnnealBackend, LatticeSpec, SSMFSettings, critical_u, mott_sweep


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--nx", type=int, default=2)
    p.add_argument("--ny", type=int, default=2)
    p.add_argument("--t", type=float, default=1 / 3)
    p.add_argument("--umax", type=float, default=5.0)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--anneal", action="store_true", help="add a noiseless anneal column")
    p.add_argument("--noise", action="store_true", help="add a noisy anneal column")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sweep.csv")
    a = p.parse_args()

    spec = LatticeSpec("square", a.nx, a.ny, a.t)
    grid = np.linspace(0.0, a.umax, a.points)
    cols = {"exact": mott_sweep(spec, grid)}
    warnings.simplefilter("ignore", RuntimeWarning)
    if a.anneal:
        cols["anneal"] = mott_sweep(spec, grid, SSMFSettings(backend=AnnealBackend()), seed=a.seed)
    if a.noise:
        be = AnnealBackend(noise=NoiseSpec.device_default())
        cols["noisy"] = mott_sweep(spec, grid, SSMFSettings(backend=be), seed=a.seed)
    names = list(cols)
    with open(a.out, "w") as fh:
        fh.write("U_MHz," + ",".join(f"Z_{n}" for n in names) + "\n")
        for i, u in enumerate(grid):
            fh.write(f"{u:.6f}," + ",".join(f"{cols[n][i].Z:.6f}" for n in names) + "\n")
    for n in names:
        print(f"{n}: U_c = {critical_u(cols[n])}")
    print(open(a.out).read())


if __name__ == "__main__":
    main()
