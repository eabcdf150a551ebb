"""Atom-position optimization so that C6/r^6 reproduces a target coupling matrix."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .device import AtomRegister, DeviceConstants, interaction_matrix
from .paulialg import PauliHamiltonian

MODES = ("chemistry-score", "slavespin-cost")


@dataclass(frozen=True)
class EmbeddingProblem:
    target: np.ndarray
    constants: DeviceConstants = DeviceConstants()
    bounds: tuple[float, float] = (0.0, 100.0)
    min_distance: float = 4.0
    mode: str = "slavespin-cost"
    scale: float = 1.0

    def __post_init__(self):
        t = np.array(self.target, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("target must be a square matrix")
        if not np.allclose(t, t.T) or np.any(np.diag(t) != 0):
            raise ValueError("target must be symmetric with zero diagonal")
        if self.bounds[1] <= self.bounds[0]:
            raise ValueError("degenerate coordinate box")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        object.__setattr__(self, "target", t)

    @property
    def n(self) -> int:
        return len(self.target)

    def residual(self, positions: np.ndarray) -> float:
        """Score (chemistry) or D (slave-spin) for the given coordinates.

        Both depend on pairwise distances only.
        """
        p = np.asarray(positions, float).reshape(-1, 2)
        diff = p[:, None, :] - p[None, :, :]
        r2 = (diff**2).sum(-1)
        iu = np.triu_indices(self.n, 1)
        with np.errstate(divide="ignore"):
            v = self.constants.c6_over_h / r2[iu] ** 3
        dev = v - self.scale * self.target[iu]
        s = float((dev**2).sum())
        return s if self.mode == "chemistry-score" else float(np.sqrt(s))


@dataclass(frozen=True)
class EmbeddingResult:
    positions: AtomRegister
    residual: float
    evaluations: int
    exhausted: bool = False
    initial_residual: float = float("nan")
    log: tuple[tuple[int, float], ...] = field(default=(), repr=False)


def chemistry_target_matrix(h: PauliHamiltonian) -> np.ndarray:
    """Positive two-body ZZ coefficients, everything else zero."""
    n = h.qubit_count
    out = np.zeros((n, n))
    for t in h.terms:
        sup = sorted(t.string.support)
        if len(sup) == 2 and all(t.string.axes[q] == "Z" for q in sup) and t.coefficient > 0:
            i, j = sup
            out[i, j] = out[j, i] = t.coefficient
    return out


def r_init(J: np.ndarray, constants: DeviceConstants, factor: float = 4.0) -> float:
    """max over nonzero entries of (C6 / |factor J_ij|)^(1/6)."""
    J = np.asarray(J, float)
    nz = np.abs(J[J != 0])
    if nz.size == 0:
        raise ValueError("coupling matrix has no nonzero entry")
    return float(np.max((constants.c6_over_h / (factor * nz)) ** (1.0 / 6.0)))


def _penalty(problem: EmbeddingProblem, x: np.ndarray) -> float:
    p = x.reshape(-1, 2)
    lo, hi = problem.bounds
    pen = np.sum(np.clip(lo - p, 0, None) ** 2) + np.sum(np.clip(p - hi, 0, None) ** 2)
    d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))
    iu = np.triu_indices(len(p), 1)
    pen += np.sum(np.clip(problem.min_distance - d[iu], 0, None) ** 2)
    return float(pen)


def _feasible(problem: EmbeddingProblem, x: np.ndarray) -> bool:
    return _penalty(problem, x) == 0.0


def default_initial_positions(problem: EmbeddingProblem, rng: np.random.Generator) -> np.ndarray:
    """Atoms on a loose square grid centred in the box, spaced from the target's
    strongest coupling."""
    nz = np.abs(problem.target[problem.target != 0])
    if nz.size:
        a = (problem.constants.c6_over_h / (problem.scale * nz.max())) ** (1 / 6)
    else:
        a = 2 * problem.min_distance
    a = max(a, 1.5 * problem.min_distance)
    side = int(np.ceil(np.sqrt(problem.n)))
    pts = np.array([(a * (k % side), a * (k // side)) for k in range(problem.n)], float)
    centre = 0.5 * (problem.bounds[0] + problem.bounds[1])
    return pts - pts.mean(axis=0) + centre


class _BudgetSpent(Exception):
    pass


def optimize_positions(
    problem: EmbeddingProblem,
    seed: int = 0,
    max_evals: int = 4000,
    initial: np.ndarray | None = None,
    restarts: int = 8,
    jitter: float = 0.5,
) -> EmbeddingResult:
    """Multi-start Nelder-Mead on the flattened coordinates.

    Restart 0 starts from ``initial`` (or a default grid); the others perturb
    it with seeded Gaussian noise of ``jitter`` um. Constraint violations are
    handled with a quadratic penalty and the returned positions are always
    feasible.
    """
    if problem.n < 2:
        raise ValueError("need at least two atoms")
    rng = np.random.default_rng(seed)
    x0 = np.asarray(initial if initial is not None else default_initial_positions(problem, rng), float).ravel()
    if not _feasible(problem, x0):
        raise ValueError("initial positions violate the box or the minimum distance")
    init_res = problem.residual(x0)
    scale = max(init_res, 1e-12)
    log: list[tuple[int, float]] = [(0, init_res)]
    evals = 0
    best_x, best_r = x0.copy(), init_res

    def cost(x):
        nonlocal evals, best_x, best_r
        if evals >= max_evals:
            raise _BudgetSpent
        evals += 1
        pen = _penalty(problem, x)
        r = problem.residual(x)
        if pen == 0.0 and r < best_r:
            best_x, best_r = x.copy(), r
            log.append((evals, r))
        return r + 1e3 * scale * pen

    exhausted = False
    per_start = max(1, max_evals // max(1, restarts))
    for k in range(max(1, restarts)):
        if evals >= max_evals:
            exhausted = True
            break
        start = x0 if k == 0 else x0 + rng.normal(0.0, jitter, size=x0.shape)
        if not _feasible(problem, start):
            start = x0
        try:
            res = minimize(
                cost,
                start,
                method="Nelder-Mead",
                options={"maxfev": per_start, "xatol": 1e-10, "fatol": 1e-14 * scale, "adaptive": True},
            )
            if res.status != 0:
                exhausted = True
            # polish the best point found so far
            if k == 0:
                minimize(
                    cost,
                    best_x,
                    method="Nelder-Mead",
                    options={"maxfev": per_start, "xatol": 1e-12, "fatol": 1e-16 * scale, "adaptive": True},
                )
        except _BudgetSpent:
            exhausted = True
            break
    if exhausted:
        warnings.warn("embedding optimizer hit its evaluation cap; returning best-so-far", RuntimeWarning)
    reg = AtomRegister(best_x.reshape(-1, 2), min_distance=problem.min_distance)
    return EmbeddingResult(reg, float(best_r), evals, exhausted, init_res, tuple(log))


def realized_target_error(register: AtomRegister, target: np.ndarray, constants: DeviceConstants) -> float:
    v = interaction_matrix(register, constants)
    iu = np.triu_indices(len(target), 1)
    return float(np.sqrt(((v - target)[iu] ** 2).sum()))


# triangular clusters with row-by-row site labelling: row k holds k+1 sites
def _triangle_rows(n_sites: int) -> int:
    rows = int(round((np.sqrt(8 * n_sites + 1) - 1) / 2))
    if rows * (rows + 1) // 2 != n_sites:
        raise ValueError(f"{n_sites} is not a triangular cluster size")
    return rows


def triangular_lattice_coords(n_sites: int) -> np.ndarray:
    rows = _triangle_rows(n_sites)
    pts = []
    for r in range(rows):
        for c in range(r + 1):
            pts.append((c - 0.5 * r, -r * np.sqrt(3) / 2))
    return np.array(pts)


def parameterized_embedding_triangular(
    alpha: float,
    beta: float,
    cluster: int,
    J: np.ndarray,
    constants: DeviceConstants = DeviceConstants(),
    min_distance: float = 4.0,
    factor: float = 4.0,
) -> tuple[AtomRegister, float]:
    """Two-parameter triangular geometry.

    The bulk of the cluster is a triangular lattice of spacing ``beta``; each of
    the three corner atoms is moved along the outward bisector so that its two
    bonds have length ``alpha``. Returns the register and the L1 residual
    ``sum_{i != j} |C6/r^6 + factor J_ij|``.
    """
    if cluster not in (6, 10):
        raise ValueError("cluster must have 6 or 10 sites")
    if min(alpha, beta) < min_distance:
        raise ValueError("alpha and beta must exceed the minimum distance")
    base = triangular_lattice_coords(cluster) * beta
    rows = _triangle_rows(cluster)
    corners = [0, rows * (rows - 1) // 2, cluster - 1]
    centroid = base.mean(axis=0)
    pos = base.copy()
    half = beta / 2
    if alpha <= half:
        raise ValueError("alpha must exceed beta/2 for the corner bisector construction")
    for c in corners:
        # the two neighbours of a corner sit at distance beta from each other
        u = base[c] - centroid
        u /= np.linalg.norm(u)
        mid = base[c] - u * (beta * np.sqrt(3) / 2)
        pos[c] = mid + u * np.sqrt(alpha**2 - half**2)
    reg = AtomRegister(pos, min_distance=min_distance)
    v = interaction_matrix(reg, constants)
    res = float(np.abs(v + factor * np.asarray(J, float))[~np.eye(cluster, dtype=bool)].sum())
    return reg, res


def optimize_triangular(
    J: np.ndarray, cluster: int, constants: DeviceConstants = DeviceConstants(), factor: float = 4.0
) -> tuple[float, float, AtomRegister, float]:
    """Nelder-Mead over (alpha, beta), started from r_init for both."""
    r0 = r_init(J, constants, factor)

    def f(x):
        try:
            return parameterized_embedding_triangular(x[0], x[1], cluster, J, constants, factor=factor)[1]
        except ValueError:
            return 1e9

    res = minimize(f, [r0, r0], method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-12})
    a, b = res.x
    reg, r = parameterized_embedding_triangular(a, b, cluster, J, constants, factor=factor)
    return float(a), float(b), reg, r
