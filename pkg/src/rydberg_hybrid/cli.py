"""Batch entry point: ``python -m rydberg_hybrid <command> [--config cfg.toml] ...``.

Every emitted file starts with a ``#`` header holding the SHA-256 of the
effective configuration and the seed, so reruns can be compared byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import csv
import hashlib
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np
import tomli

from . import derand, embedding, slavespin, vqe
from .device import BoundsError, DeviceConstants
from .dynamics import GuardError, NoiseSpec
from .paulialg import DimensionGuardError, HamiltonianFormatError, expectation, ground_energy_exact, load_hamiltonian

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_NONCONVERGED = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# defaults follow the headline settings of each experiment
DEFAULTS: dict[str, dict] = {
    "lattice": {"kind": "square", "nx": 2, "ny": 2, "t_mhz": 1.0 / 3.0},
    "sweep": {"u_min_mhz": 0.0, "u_max_mhz": 5.0, "points": 20, "k": 5, "eta": 0.01, "m0": 0.5},
    "noise": {"gamma_mhz": 0.02, "eps": 0.03, "eps_prime": 0.03, "shots": 150},
    "device": {"tau_max_us": 4.0, "delta_start_mhz": 5.0, "rabi_max_mhz": 2.5, "c6_mhz_um6": 1947e3, "c3_mhz_um3": 3220.0},
    "quench": {
        "nx": 3,
        "ny": 2,
        "t_mhz": 1.0,
        "u_f_mhz": [2.0, 13.0, 25.0],
        "horizon_us": 4.0,
        "sample_dt_us": 0.02,
        "tau_ramp_us": 0.05,
    },
    "vqe": {
        "hamiltonian": "data/lih_1.5A.ham",
        "shot_budget": 350000,
        "t_tot_us": 0.25,
        "eps_target": 0.05,
        "shots_per_estimate": 0,
        "evals_per_iter": 20,
        "optimizer": "powell",
        "scan_initial": True,
        "initial_state": 0,
        "embed_scale_mhz_per_ha": 10.0,
        "embed_evals": 3000,
    },
    "embed": {"hamiltonian": "data/lih_1.5A.ham", "scale_mhz_per_ha": 10.0, "max_evals": 3000, "box_um": 60.0},
    "derand": {"hamiltonian": "data/lih_1.5A.ham", "budget": 2951, "score_eps": 0.9, "shots": 0},
    "ising": {"signs": ["ferro", "antiferro"], "u_min": 0.05, "u_max": 4.0, "points": 80},
    "oracle": {"hamiltonian": "data/lih_1.5A.ham"},
}

COMMANDS = {
    "hubbard-sweep": ("lattice", "sweep", "noise", "device"),
    "hubbard-quench": ("quench", "noise", "device"),
    "vqe": ("vqe", "noise"),
    "embed": ("embed",),
    "derand-plan": ("derand",),
    "ising-cmft": ("ising",),
    "oracle-ed": ("oracle",),
}


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            user = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for section, values in user.items():
        if section not in cfg:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, val in values.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            cfg[section][key] = _coerce(f"{section}.{key}", cfg[section][key], val)
    return cfg


def _coerce(name: str, ref, val):
    if isinstance(ref, bool):
        ok = isinstance(val, bool)
    elif isinstance(ref, int):
        ok = isinstance(val, int) and not isinstance(val, bool)
    elif isinstance(ref, float):
        ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        val = float(val) if ok else val
    else:
        ok = isinstance(val, type(ref))
    if not ok:
        raise ConfigError(f"{name} must be of type {type(ref).__name__}")
    return val


_REPO_ROOT = Path(__file__).resolve().parents[2]


def resolve_path(path: str, config_path: str | None = None) -> Path:
    """Relative paths are tried against the working directory, the config
    file's directory and the repository root, in that order."""
    p = Path(path)
    if p.is_absolute():
        return p
    bases = [Path.cwd()]
    if config_path:
        bases.append(Path(config_path).resolve().parent)
    bases.append(_REPO_ROOT)
    for b in bases:
        if (b / p).exists():
            return b / p
    raise FileNotFoundError(f"{path} not found")


def config_hash(cfg: dict, extra: dict) -> str:
    blob = json.dumps({"config": cfg, "run": extra}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


class Emitter:
    def __init__(self, out: Path, digest: str, seed: int, command: str):
        self.out = out
        self.header = f"# rydberg_hybrid {command} config_sha256={digest} seed={seed}"
        out.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def csv(self, name: str, columns: list[str], rows) -> Path:
        buf = io.StringIO()
        buf.write(self.header + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        return self._write(name, buf.getvalue())

    def json(self, name: str, payload: dict) -> Path:
        body = {"_header": self.header, **payload}
        return self._write(name, json.dumps(body, indent=2, sort_keys=True, default=_json_default) + "\n")

    def text(self, name: str, body: str) -> Path:
        return self._write(name, self.header + "\n" + body)

    def _write(self, name: str, text: str) -> Path:
        p = self.out / name
        p.write_text(text)
        self.written.append(p)
        return p


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(bool(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _noise(cfg: dict, on: bool) -> NoiseSpec:
    if not on:
        return NoiseSpec()
    n = cfg["noise"]
    return NoiseSpec(n["gamma_mhz"], n["eps"], n["eps_prime"], int(n["shots"]))


def _constants(cfg: dict) -> DeviceConstants:
    d = cfg["device"]
    return DeviceConstants(c6_over_h=d["c6_mhz_um6"], c3_over_h=d["c3_mhz_um3"], rabi_max=d["rabi_max_mhz"])


def _backend(cfg: dict, args):
    if args.backend == "exact":
        return slavespin.ExactBackend()
    d = cfg["device"]
    return slavespin.AnnealBackend(
        noise=_noise(cfg, args.noise == "on"),
        tau_max=d["tau_max_us"],
        delta_start=d["delta_start_mhz"],
        constants=_constants(cfg),
    )


# ------------------------------------------------------------------ commands


def cmd_hubbard_sweep(cfg, args, em: Emitter) -> int:
    lat, sw = cfg["lattice"], cfg["sweep"]
    spec = slavespin.LatticeSpec(lat["kind"], int(lat["nx"]), int(lat["ny"]), float(lat["t_mhz"]))
    settings = slavespin.SSMFSettings(int(sw["k"]), float(sw["eta"]), float(sw["m0"]), _backend(cfg, args))
    grid = np.linspace(sw["u_min_mhz"], sw["u_max_mhz"], int(sw["points"]))
    rows = slavespin.mott_sweep(spec, grid, settings, seed=args.seed, jobs=args.jobs)
    em.csv(
        "sweep.csv",
        ["U_MHz", "Z", "Z_err", "g", "converged", "inner_iters", "outer_iters"],
        [(r.U, r.Z, r.Z_err, r.g, r.converged, r.inner_iters, r.outer_iters) for r in rows],
    )
    uc = slavespin.critical_u(rows)
    em.json(
        "summary.json",
        {
            "U_c_MHz": uc,
            "monotone": slavespin.is_monotone([r.Z for r in rows], 0.01),
            "unconverged_U_MHz": [r.U for r in rows if not r.converged],
            "backend": args.backend,
            "noise": args.noise,
        },
    )
    return EXIT_OK if all(r.converged for r in rows) else EXIT_NONCONVERGED


def cmd_hubbard_quench(cfg, args, em: Emitter) -> int:
    q = cfg["quench"]
    spec = slavespin.LatticeSpec("square", int(q["nx"]), int(q["ny"]), float(q["t_mhz"]))
    settings = slavespin.SSMFSettings(backend=_backend(cfg, args))
    summary = {}
    for uf in q["u_f_mhz"]:
        res = slavespin.quench_dynamics(
            spec, float(uf), settings, q["horizon_us"], q["sample_dt_us"], seed=args.seed, tau_ramp=q["tau_ramp_us"]
        )
        tag = f"{float(uf):g}"
        em.csv(f"quench_Uf{tag}.csv", ["tau_us", "Z", "Z_err"], zip(res.times, res.Z, res.Z_err))
        # the last sample closes the window; the transform uses the periodic part
        f, a = slavespin.dft_spectrum(res.times[:-1], res.Z[:-1])
        em.csv(f"spectrum_Uf{tag}.csv", ["f_MHz", "amplitude"], zip(f, a))
        pk = slavespin.spectral_peaks(f, a)
        summary[tag] = {"peak_MHz": [float(f[i]) for i in pk], "dominant_MHz": float(f[np.argmax(a)])}
    em.json("summary.json", summary)
    return EXIT_OK


def _embed(h, scale, evals, seed, box=60.0):
    target = embedding.chemistry_target_matrix(h)
    prob = embedding.EmbeddingProblem(target, scale=scale, mode="chemistry-score", bounds=(0.0, box))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return embedding.optimize_positions(prob, seed=seed, max_evals=evals)


def cmd_vqe(cfg, args, em: Emitter) -> int:
    v = cfg["vqe"]
    h = load_hamiltonian(resolve_path(v["hamiltonian"], args.config))
    e0 = ground_energy_exact(h)[0]
    emb = _embed(h, v["embed_scale_mhz_per_ha"], int(v["embed_evals"]), args.seed)
    conf = vqe.VqeConfig(
        shot_budget=int(v["shot_budget"]),
        t_tot=float(v["t_tot_us"]),
        eps_target=float(v["eps_target"]),
        shots_per_estimate=int(v["shots_per_estimate"]) or None,
        evals_per_iter=int(v["evals_per_iter"]),
        optimizer=v["optimizer"],
        initial_state=int(v["initial_state"]),
        spam=(cfg["noise"]["eps"], cfg["noise"]["eps_prime"]) if args.noise == "on" else (0.0, 0.0),
        seed=args.seed,
    )
    scan = None
    if v["scan_initial"]:
        scan = vqe.scan_product_states(h, emb.positions, config=conf, e_exact=e0)
        conf = dataclasses.replace(conf, initial_state=scan[0][0])
    run = vqe.vqe_optimize(h, emb.positions, conf)
    em.csv(
        "vqe_log.csv",
        ["cum_shots", "energy", "rel_error", "n_intervals"],
        [(s, e, vqe.relative_error(e, e0), p.n_intervals) for s, p, e in run.history],
    )
    em.json(
        "best_params.json",
        {
            "params": run.best_params.to_dict(),
            "best_energy": run.best_energy,
            "exact_energy": e0,
            "rel_error": vqe.relative_error(run.best_energy, e0),
            "initial_state": conf.initial_state,
            "register_um": emb.positions.positions,
            "shots_spent": run.shots_spent,
        },
    )
    return EXIT_OK


def cmd_embed(cfg, args, em: Emitter) -> int:
    e = cfg["embed"]
    h = load_hamiltonian(resolve_path(e["hamiltonian"], args.config))
    res = _embed(h, e["scale_mhz_per_ha"], int(e["max_evals"]), args.seed, e["box_um"])
    em.csv("register.csv", ["atom", "x_um", "y_um"], [(i, x, y) for i, (x, y) in enumerate(res.positions.positions)])
    em.json(
        "embedding.json",
        {"residual": res.residual, "initial_residual": res.initial_residual, "evaluations": res.evaluations,
         "exhausted": res.exhausted},
    )
    return EXIT_OK


def cmd_derand_plan(cfg, args, em: Emitter) -> int:
    d = cfg["derand"]
    h = load_hamiltonian(resolve_path(d["hamiltonian"], args.config))
    plan = derand.greedy_derandomize(h, int(d["budget"]), float(d["score_eps"]), int(d["shots"]) or None)
    em.text("plan.txt", plan.to_text())
    em.json(
        "plan.json",
        {"distinct_bases": len(plan.bases), "total_shots": plan.total_shots, "uncovered": list(plan.uncovered),
         "score": plan.score},
    )
    return EXIT_OK


def cmd_ising_cmft(cfg, args, em: Emitter) -> int:
    c = cfg["ising"]
    grid = np.linspace(c["u_min"], c["u_max"], int(c["points"]))
    summary = {}
    for sign in c["signs"]:
        res = slavespin.cmft_ising_standalone(sign, grid)
        em.csv(f"ising_{sign}.csv", ["U", "Z", "dZdU", "xi", "m_bar"], zip(res.U, res.Z, res.dZdU, res.xi, res.m_bar))
        xi = np.where(np.isfinite(res.xi), res.xi, np.nan)
        k = int(np.nanargmax(xi))
        summary[sign] = {"xi_peak": float(xi[k]), "U_at_xi_peak": float(grid[k]),
                         "U_at_dZdU_extremum": float(grid[int(np.argmax(np.abs(res.dZdU)))])}
    em.json("summary.json", summary)
    return EXIT_OK


def cmd_oracle_ed(cfg, args, em: Emitter) -> int:
    h = load_hamiltonian(resolve_path(cfg["oracle"]["hamiltonian"], args.config))
    e, vec = ground_energy_exact(h)
    em.json("oracle.json", {"ground_energy": e, "expectation_on_vector": expectation(h, vec), "terms": len(h)})
    return EXIT_OK


HANDLERS = {
    "hubbard-sweep": cmd_hubbard_sweep,
    "hubbard-quench": cmd_hubbard_quench,
    "vqe": cmd_vqe,
    "embed": cmd_embed,
    "derand-plan": cmd_derand_plan,
    "ising-cmft": cmd_ising_cmft,
    "oracle-ed": cmd_oracle_ed,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rydberg_hybrid", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(HANDLERS))
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="results")
    p.add_argument("--backend", choices=("exact", "anneal"), default="exact")
    p.add_argument("--noise", choices=("on", "off"), default="off")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = load_config(args.config)
        used = {s: cfg[s] for s in COMMANDS[args.command]}
        run = {"command": args.command, "backend": args.backend, "noise": args.noise}
        em = Emitter(Path(args.out), config_hash(used, run), args.seed, args.command)
        return HANDLERS[args.command](cfg, args, em)
    except (ConfigError, HamiltonianFormatError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GuardError, DimensionGuardError, BoundsError) as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
