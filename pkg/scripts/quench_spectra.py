"""Z(tau) after an interaction quench and its DFT, with the exact line spectrum.

    python scripts/quench_spectra.py --uf 2 13 25
"""

import argparse

import numpy as np

from rydberg_hybrid.slavespin import LatticeSpec, dft_spectrum, quench_dynamics, spectral_peaks


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--nx", type=int, default=3)
    p.add_argument("--ny", type=int, default=2)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--uf", type=float, nargs="+", default=[2.0, 13.0, 25.0])
    p.add_argument("--horizon", type=float, default=4.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--lines", type=int, default=6, help="strongest exact lines to list")
    a = p.parse_args()

    spec = LatticeSpec("square", a.nx, a.ny, a.t)
    for uf in a.uf:
        r = quench_dynamics(spec, uf, horizon=a.horizon, sample_dt=a.dt, lines=True)
        f, amp = dft_spectrum(r.times[:-1], r.Z[:-1])
        np.savetxt(f"quench_Uf{uf:g}.csv", np.column_stack([r.times, r.Z]), delimiter=",", header="tau_us,Z")
        np.savetxt(f"spectrum_Uf{uf:g}.csv", np.column_stack([f, amp]), delimiter=",", header="f_MHz,amplitude")
        pk = spectral_peaks(f, amp)
        top = r.lines[np.argsort(r.lines[:, 1])[::-1][: a.lines]]
        print(f"U_f = {uf:g} MHz: mean Z {r.Z.mean():.3f}")
        print("  DFT peaks (MHz, rel. amplitude):", [(round(float(f[i]), 2), round(float(amp[i] / amp.max()), 3)) for i in pk])
        print("  strongest exact lines (MHz, weight):", [(round(float(x), 3), round(float(w), 4)) for x, w in top if x > 0])


if __name__ == "__main__":
    main()
