"""Command-line driver: ``fsqd {dmrg,encode,run,sparsity,oracle-check}``.

Every command writes one run directory holding ``config.yaml`` (the resolved
configuration), ``log.txt`` and its data files. Data files depend only on
the configuration and seeds, so reruns reproduce them byte for byte.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .circuit import EncodeTrajectory, encode, encode_projector_unitary
from .config import ExperimentConfig, load_config
from .dmrg import ground_state
from .errors import NumericalError, ValidationError
from .mps import ising_mpo
from .oracle import dense_apply_circuit, ising_ground_state
from .pipeline import IsingModel, dmrg_config, exact_energy, prepare_protocol, run_seed
from .serialize import atomic_write, load_mps, save_circuit, save_mps
from .sparsity import (
    WeightDistribution,
    distribution_from_csv,
    fit_gini_scaling,
    load_distribution_binary,
    lorenz,
    lorenz_csv,
    sparsity_report,
)
from .sqd import results_csv, results_jsonl

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

log = logging.getLogger("fsqd")


# --------------------------------------------------------------------------
# helpers


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _json(obj: Any) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _trajectory_csv(traj: EncodeTrajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "fidelity", "infidelity_per_site"])
    for i, (f, inf) in enumerate(zip(traj.fidelities, traj.infidelity_per_site)):
        w.writerow([i, repr(float(f)), repr(float(inf))])
    return buf.getvalue()


class RunContext:
    """Run directory, logging and the parallel map used by a command."""

    def __init__(self, command: str, cfg: ExperimentConfig, out_dir: str | None, threads: int, extra: str = ""):
        snapshot = cfg.to_yaml()
        if out_dir is None:
            digest = hashlib.sha256((command + "\n" + extra + "\n" + snapshot).encode()).hexdigest()[:10]
            out_dir = str(Path("runs") / f"{command}-{digest}")
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.threads = max(1, int(threads))
        self.cfg = cfg
        atomic_write(self.dir / "config.yaml", snapshot)
        self._handler = logging.FileHandler(self.dir / "log.txt", mode="w")
        self._handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root = logging.getLogger("fsqd")
        root.setLevel(logging.INFO)
        root.addHandler(self._handler)
        log.info("fsqd %s command %s -> %s", __version__, command, self.dir)
        self._t0 = time.perf_counter()

    def write(self, name: str, data: str | bytes) -> Path:
        path = self.dir / name
        atomic_write(path, data)
        log.info("wrote %s", path)
        return path

    def map(self, fn: Callable, items: Sequence) -> list:
        if self.threads == 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def close(self) -> None:
        log.info("finished in %.2f s", time.perf_counter() - self._t0)
        logging.getLogger("fsqd").removeHandler(self._handler)
        self._handler.close()


# --------------------------------------------------------------------------
# commands


def cmd_dmrg(cfg: ExperimentConfig, args, ctx: RunContext) -> dict:
    m = cfg.model
    h = ising_mpo(m.n, m.J, m.hx, m.hz)
    seed = args.seed if args.seed is not None else 0
    res = ground_state(h, dmrg_config(cfg), seed=seed)
    save_mps(ctx.dir / "state.mps", res.state)
    summary = {
        "n": m.n,
        "J": m.J,
        "hx": m.hx,
        "hz": m.hz,
        "max_bond": cfg.dmrg.max_bond,
        "seed": seed,
        "energy": res.energy,
        "energy_per_site": res.energy / m.n,
        "converged": res.converged,
        "sweep_energies": res.sweep_energies,
        "bond_dims": res.state.bond_dims,
    }
    ctx.write("summary.json", _json(summary))
    log.info("E/n = %.10f (converged=%s)", res.energy / m.n, res.converged)
    return summary


def cmd_encode(cfg: ExperimentConfig, args, ctx: RunContext) -> dict:
    target = load_mps(args.target).normalized()
    input_state = load_mps(args.input).normalized() if args.input else None
    enc = cfg.encoder
    seed = args.seed if args.seed is not None else 0
    if enc.mode == "projector":
        circuit, traj = encode_projector_unitary(target, enc.projector_layers, enc.n_iters, enc.tol, seed=seed)
        layers = enc.projector_layers
    else:
        circuit, traj = encode(target, input_state, enc.layers, enc.n_iters, enc.tol, seed=seed)
        layers = enc.layers
    save_circuit(ctx.dir / "circuit.bin", circuit)
    ctx.write("trajectory.csv", _trajectory_csv(traj))
    summary = {
        "mode": enc.mode,
        "n": target.n,
        "layers": layers,
        "iterations": traj.iterations,
        "converged": traj.converged,
        "final_fidelity": traj.final_fidelity,
        "final_infidelity_per_site": traj.infidelity_per_site[-1],
    }
    ctx.write("summary.json", _json(summary))
    return summary


def cmd_run(cfg: ExperimentConfig, args, ctx: RunContext) -> dict:
    p = cfg.protocol
    model = IsingModel(cfg.model.n, cfg.model.J, cfg.model.hx, cfg.model.hz)
    seeds = [args.seed] if args.seed is not None else list(p.seeds)
    e_exact, e_source = exact_energy(model, cfg.dmrg.exact_bond)
    log.info("E_exact/n = %.12f from %s", e_exact / model.n, e_source)
    prep = prepare_protocol(cfg)
    log.info("prepared %s: sampler %s, hamiltonian %s", prep.kind, prep.sampler_id, prep.hamiltonian_id)
    if prep.filter_circuit is not None:
        save_circuit(ctx.dir / "filter_circuit.bin", prep.filter_circuit)
    for name, traj in prep.trajectories.items():
        ctx.write(f"trajectory_{name}.csv", _trajectory_csv(traj))

    runs = ctx.map(lambda s: run_seed(cfg, prep, e_exact, s), seeds)
    all_results = [r for run in runs for r in run.results]
    ctx.write("results.csv", results_csv(all_results, prep.sampler_id, prep.hamiltonian_id))
    ctx.write("results.jsonl", results_jsonl(all_results, prep.sampler_id, prep.hamiltonian_id))
    taus = [run.tau for run in runs if run.tau is not None]
    summary = {
        "protocol": prep.kind,
        "sampler_id": prep.sampler_id,
        "hamiltonian_id": prep.hamiltonian_id,
        "n": model.n,
        "e_exact": e_exact,
        "e_exact_source": e_source,
        "n_r_cap": p.resolved_n_r_cap(model.n),
        "force_include_zero": prep.force_include_zero,
        "seeds": [run.summary(model.n) for run in runs],
        "tau_mean": float(np.mean(taus)) if taus else None,
        "diagnostics": prep.diagnostics,
    }
    ctx.write("fits.json", _json(summary))
    return summary


def _series_state(cfg: ExperimentConfig, n: int) -> tuple[np.ndarray, dict]:
    m = cfg.model
    _, vec = ising_ground_state(n, m.J, m.hx, m.hz)
    info: dict[str, Any] = {"n": n}
    sp = cfg.sparsity
    if sp.layers:
        gs = ground_state(ising_mpo(n, m.J, m.hx, m.hz), dmrg_config(cfg)).state
        circuit, traj = encode(gs, layers=sp.layers, n_iters=sp.n_iters, tol=cfg.encoder.tol)
        vec = dense_apply_circuit(circuit, vec, adjoint=True)
        info["filter_fidelity"] = traj.final_fidelity
    return vec, info


def cmd_sparsity(cfg: ExperimentConfig, args, ctx: RunContext) -> dict:
    sp = cfg.sparsity
    if args.state or args.distribution:
        if args.state:
            w = WeightDistribution.from_mps(load_mps(args.state).normalized())
        elif str(args.distribution).endswith(".npy"):
            w = load_distribution_binary(args.distribution)
        else:
            w = distribution_from_csv(Path(args.distribution).read_text())
        rep = sparsity_report(w, sp.epsilons_tilde, sp.eta)
        ctx.write("report.json", rep.to_text())
        ctx.write("lorenz.csv", lorenz_csv(lorenz(w), sp.lorenz_points))
        return json.loads(rep.to_text())

    def one(n: int) -> tuple[dict, object]:
        vec, info = _series_state(cfg, n)
        w = WeightDistribution.from_amplitudes(vec)
        rep = sparsity_report(w, sp.epsilons_tilde, sp.eta)
        info.update(json.loads(rep.to_text()))
        return info, rep

    out = ctx.map(one, list(sp.sizes))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "gini", "log2_one_minus_gini_N", "estimator"])
    for info, _ in out:
        writer.writerow([info["n"], repr(info["gini"]), repr(math.log2(info["one_minus_gini_times_N"])), info["estimator"]])
    ctx.write("gini_series.csv", buf.getvalue())
    ctx.write("reports.jsonl", "".join(json.dumps(_jsonable(info), sort_keys=True) + "\n" for info, _ in out))
    summary: dict[str, Any] = {"layers": sp.layers, "sizes": list(sp.sizes)}
    if len(out) >= 3:
        fit = fit_gini_scaling((info["n"], info["gini"]) for info, _ in out)
        summary.update({"g": fit.g, "c": fit.c, "residuals": list(fit.residuals)})
    ctx.write("gini_fit.json", _json(summary))
    return summary


def cmd_oracle_check(cfg: ExperimentConfig, args, ctx: RunContext) -> dict:
    from .verify import oracle_checks

    seed = args.seed if args.seed is not None else 0
    o = cfg.oracle
    checks = oracle_checks(o.n, o.bond, seed, cfg.model.J, cfg.model.hx, cfg.model.hz)
    failed = [c for c in checks if c["error"] > o.tol]
    report = {"n": o.n, "bond": o.bond, "seed": seed, "tol": o.tol, "checks": checks, "passed": not failed}
    ctx.write("oracle_report.json", _json(report))
    if failed:
        names = ", ".join(c["name"] for c in failed)
        raise NumericalError(f"oracle mismatch above {o.tol:g}: {names}")
    return report


COMMANDS = {
    "dmrg": cmd_dmrg,
    "encode": cmd_encode,
    "run": cmd_run,
    "sparsity": cmd_sparsity,
    "oracle-check": cmd_oracle_check,
}


# --------------------------------------------------------------------------
# argument parsing


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    # Subcommands repeat the global flags so they may follow the command name;
    # SUPPRESS keeps an absent flag from overwriting one given before it.
    def default(value):
        return argparse.SUPPRESS if suppress else value

    p.add_argument("--config", default=default(None), help="YAML configuration file")
    p.add_argument("--seed", type=int, default=default(None), help="seed override")
    p.add_argument("--threads", type=int, default=default(1), help="worker threads")
    p.add_argument("--out-dir", default=default(None), help="run directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsqd", description="Filtered sample-based diagonalization experiments.")
    parser.add_argument("--version", action="version", version=f"fsqd {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dmrg", help="ground state of the Ising chain")
    _global_flags(p, suppress=True)

    p = sub.add_parser("encode", help="encode a target MPS into a brick-wall circuit")
    _global_flags(p, suppress=True)
    p.add_argument("--target", required=True, help="target MPS file (.mps binary or .json)")
    p.add_argument("--input", default=None, help="input MPS file (default |0...0>)")

    p = sub.add_parser("run", help="SQD / FSQD benchmark over a shot schedule")
    _global_flags(p, suppress=True)

    p = sub.add_parser("sparsity", help="Gini and resource-bound analysis")
    _global_flags(p, suppress=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--state", default=None, help="MPS file to analyse")
    g.add_argument("--distribution", default=None, help="weight distribution (.csv or .npy)")

    p = sub.add_parser("oracle-check", help="compare tensor-network routines with dense references")
    _global_flags(p, suppress=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    ctx = None
    try:
        text = Path(args.config).read_text() if args.config else None
        cfg = load_config(text)
        extra = json.dumps({k: v for k, v in sorted(vars(args).items()) if k not in ("out_dir", "threads")}, default=str)
        ctx = RunContext(args.command, cfg, args.out_dir, args.threads, extra)
        COMMANDS[args.command](cfg, args, ctx)
        print(ctx.dir)
        return EXIT_OK
    except ValidationError as exc:
        print(f"fsqd: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"fsqd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"fsqd: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        if ctx is not None:
            ctx.close()


if __name__ == "__main__":
    sys.exit(main())
