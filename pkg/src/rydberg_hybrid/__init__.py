"""Desk-scale emulation of an analog Rydberg processor and two hybrid
algorithms built on it: a slave-spin cluster mean-field Hubbard solver and
a digital-analog variational eigensolver for Pauli-sum Hamiltonians.

Units: every energy, rate and drive amplitude is a linear frequency in MHz
and every time is in microseconds. Propagators multiply by 2*pi.

Spin convention: bit 1 is the Rydberg state |r>, with Z|r> = +|r> and
n = (1 + Z) / 2.
"""

__version__ = "0.1.0"
