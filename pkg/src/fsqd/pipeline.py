"""End-to-end experiment assembly: model, reference energy, filter circuit,
filtered Hamiltonian, sampler states and variance evaluators."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .circuit import (
    BrickwallCircuit,
    EncodeTrajectory,
    apply_circuit,
    conjugate_mpo,
    encode,
    encode_projector_unitary,
)
from .config import ExperimentConfig
from .dmrg import DmrgConfig, ground_state
from .errors import ValidationError
from .mps import MPO, MPS, ising_mpo, mpo_expectation_raw, mpo_square, project_out_zero, zero_state
from .oracle import MAX_MATRIX_SITES, MAX_STATE_SITES, dense_apply_circuit, ising_ground_state, ising_matvec
from .sqd import (
    SampledSubspace,
    SqdResult,
    VarianceFit,
    energy_variance,
    fit_decay_exponent,
    run_protocol,
    statevector_variance,
    variance_extrapolate,
)

log = logging.getLogger(__name__)

VarianceFn = Callable[[SampledSubspace, np.ndarray], float]


@dataclass(frozen=True)
class IsingModel:
    """Open chain ``-J sum ZZ - hx sum X - hz sum Z``."""

    n: int
    J: float = 1.0
    hx: float = 1.0
    hz: float = 0.05

    def mpo(self) -> MPO:
        return ising_mpo(self.n, self.J, self.hx, self.hz)

    @property
    def label(self) -> str:
        return f"ising-n{self.n}-J{self.J:g}-hx{self.hx:g}-hz{self.hz:g}"

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return ising_matvec(v, self.n, self.J, self.hx, self.hz)


def exact_energy(model: IsingModel, exact_bond: int = 64, seed: int = 0) -> tuple[float, str]:
    """Reference ground energy: exact diagonalisation up to 14 sites, high-bond DMRG above."""
    if model.n <= MAX_MATRIX_SITES:
        e, _ = ising_ground_state(model.n, model.J, model.hx, model.hz)
        return e, "exact-diagonalization"
    res = ground_state(model.mpo(), DmrgConfig(max_bond=exact_bond, n_sweeps=30), seed=seed)
    return res.energy, f"dmrg-chi{exact_bond}"


def dmrg_config(cfg: ExperimentConfig) -> DmrgConfig:
    d = cfg.dmrg
    return DmrgConfig(
        max_bond=d.max_bond,
        n_sweeps=d.n_sweeps,
        convergence_tol=d.convergence_tol,
        lanczos_dim=d.lanczos_dim,
        noise=d.noise,
    )


@dataclass
class PreparedProtocol:
    """Everything ``run_protocol`` needs for one experiment, plus provenance."""

    kind: str
    hamiltonian: MPO
    hamiltonian_id: str
    sampler: MPS
    sampler_id: str
    force_include_zero: bool
    anchor_energy: float | None
    filter_circuit: BrickwallCircuit | None = None
    variance: VarianceFn | None = None
    trajectories: dict[str, EncodeTrajectory] = field(default_factory=dict)
    diagnostics: dict[str, object] = field(default_factory=dict)


def _variance_fn(
    cfg: ExperimentConfig, model: IsingModel, h: MPO, circuit: BrickwallCircuit | None
) -> VarianceFn | None:
    p = cfg.protocol
    if not p.variance:
        return None
    route = p.variance_route
    if route == "auto":
        route = "statevector" if model.n <= MAX_STATE_SITES else "mpo"
    if route == "statevector":
        if model.n > MAX_STATE_SITES:
            raise ValidationError(f"statevector variance needs n <= {MAX_STATE_SITES}")
        # <nu|U^dag H U|nu> moments are those of H in the rotated vector U|nu>.
        transform = None if circuit is None else (lambda v: dense_apply_circuit(circuit, v))
        return lambda basis, nu0: statevector_variance(basis, nu0, model.matvec, transform)
    h_sq = mpo_square(h, p.h_sq_bond)
    log.info("H^2 bond dimensions %s, discarded %s", h_sq.bond_dims, h_sq.discarded)
    return lambda basis, nu0: energy_variance(h, h_sq, basis, nu0)


def prepare_protocol(cfg: ExperimentConfig, dmrg_seed: int = 0) -> PreparedProtocol:
    """Build the Hamiltonian and sampler selected by ``cfg.protocol``."""
    p, enc = cfg.protocol, cfg.encoder
    model = IsingModel(cfg.model.n, cfg.model.J, cfg.model.hx, cfg.model.hz)
    n_r_cap = p.resolved_n_r_cap(model.n)
    if n_r_cap > p.dense_cap and not p.iterative_eigensolver:
        raise ValidationError(
            f"N_R cap {n_r_cap} exceeds the dense eigensolver cap {p.dense_cap}; "
            "enable protocol.iterative_eigensolver or lower the cap"
        )
    h = model.mpo()
    gs = ground_state(h, dmrg_config(cfg), seed=dmrg_seed)
    diag: dict[str, object] = {"dmrg_energy": gs.energy, "dmrg_converged": gs.converged}
    trajectories: dict[str, EncodeTrajectory] = {}

    if p.source == "ground":
        source, source_id = gs.state, f"dmrg-chi{cfg.dmrg.max_bond}"
    else:
        prep, traj = encode(gs.state, layers=enc.prep_layers, n_iters=enc.n_iters, tol=enc.tol)
        trajectories["preparation"] = traj
        source = apply_circuit(prep, zero_state(model.n)).normalized()
        source_id = f"encoded-{enc.prep_layers}layer"
        diag["preparation_fidelity"] = traj.final_fidelity

    if p.kind == "sqd":
        return PreparedProtocol(
            kind=p.kind,
            hamiltonian=h,
            hamiltonian_id=model.label,
            sampler=source,
            sampler_id=source_id,
            force_include_zero=p.resolved_force_zero(),
            anchor_energy=None,
            variance=_variance_fn(cfg, model, h, None),
            trajectories=trajectories,
            diagnostics=diag,
        )

    circuit, traj = encode(gs.state, layers=enc.layers, n_iters=enc.n_iters, tol=enc.tol)
    trajectories["filter"] = traj
    diag["filter_fidelity"] = traj.final_fidelity
    diag["filter_iterations"] = traj.iterations
    h_f, discarded = conjugate_mpo(h, circuit, max_bond=p.filtered_mpo_bond)
    diag["filtered_mpo_bonds"] = h_f.bond_dims
    diag["filtered_mpo_discarded_per_sublayer"] = list(discarded)
    filtered = apply_circuit(circuit, source, adjoint=True, max_bond=p.sampler_bond).normalized()

    if p.kind == "fsqd-direct":
        sampler, sampler_id = filtered, f"filtered-{source_id}"
    elif p.kind == "fsqd-projected":
        sampler, removed = project_out_zero(filtered, p.sampler_bond)
        sampler_id = f"projected-{source_id}"
        diag["removed_zero_weight"] = removed
    else:
        approx = ground_state(h, DmrgConfig(max_bond=enc.projector_bond), seed=dmrg_seed).state
        approx_f = apply_circuit(circuit, approx, adjoint=True, max_bond=p.sampler_bond).normalized()
        projector, ptraj = encode_projector_unitary(approx_f, enc.projector_layers, enc.n_iters, enc.tol)
        trajectories["projector"] = ptraj
        diag["projector_fidelity"] = ptraj.final_fidelity
        sampler = apply_circuit(projector, filtered, max_bond=p.sampler_bond).normalized()
        sampler_id = f"unitary-projector{enc.projector_layers}-chi{enc.projector_bond}-{source_id}"

    anchor = float(mpo_expectation_raw(zero_state(model.n), h_f).real)
    diag["anchor_energy"] = anchor
    diag["sampler_bonds"] = sampler.bond_dims
    return PreparedProtocol(
        kind=p.kind,
        hamiltonian=h_f,
        hamiltonian_id=f"filtered{enc.layers}-chi{p.filtered_mpo_bond}-{model.label}",
        sampler=sampler,
        sampler_id=sampler_id,
        force_include_zero=p.resolved_force_zero(),
        anchor_energy=anchor,
        filter_circuit=circuit,
        variance=_variance_fn(cfg, model, h_f, circuit),
        trajectories=trajectories,
        diagnostics=diag,
    )


@dataclass
class SeedRun:
    """Results of one seed together with its fits."""

    seed: int
    results: list[SqdResult]
    tau: float | None
    tau_err: float | None
    variance_fit: VarianceFit | None

    def summary(self, n: int) -> dict:
        out: dict[str, object] = {"seed": self.seed, "tau": self.tau, "tau_err": self.tau_err}
        if self.variance_fit is not None:
            vf = self.variance_fit
            out.update(
                {
                    "extrapolation_order": vf.order,
                    "epsilon0": vf.epsilon0,
                    "epsilon0_per_site": vf.epsilon0 / n,
                    "epsilon0_stderr": vf.stderr,
                    "coefficients": list(vf.coefficients),
                }
            )
        return out


def run_seed(cfg: ExperimentConfig, prep: PreparedProtocol, e_exact: float, seed: int) -> SeedRun:
    """Run the shot schedule for one seed and fit the decay exponent and variance curve."""
    p = cfg.protocol
    n = cfg.model.n
    results = run_protocol(
        prep.hamiltonian,
        prep.sampler,
        p.shot_schedule,
        p.resolved_n_r_cap(n),
        seed,
        force_include_zero=prep.force_include_zero,
        e_exact=e_exact,
        cumulative=p.cumulative,
        variance=prep.variance,
        dense_cap=p.dense_cap,
        anchor_energy=prep.anchor_energy,
    )
    try:
        tau, tau_err = fit_decay_exponent(((r.n_shots, r.epsilon) for r in results), n, p.fit_min_shots)
    except ValidationError as exc:
        log.warning("decay-exponent fit skipped: %s", exc)
        tau = tau_err = None
    vfit = None
    if prep.variance is not None:
        pts = [(r.variance, r.epsilon) for r in results if r.variance is not None]
        try:
            vfit = variance_extrapolate(pts, p.extrapolation_order)
        except ValidationError as exc:
            log.warning("variance extrapolation skipped: %s", exc)
    return SeedRun(seed, results, tau, tau_err, vfit)
