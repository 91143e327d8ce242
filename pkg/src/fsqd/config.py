"""Experiment configuration: a nested YAML document mapped onto dataclasses.

Every key is optional; missing keys take the defaults below. Unknown keys
are rejected so that typos cannot silently fall back to a default.

.. code-block:: yaml

    model: {n: 20, J: 1.0, hx: 1.0, hz: 0.05}
    dmrg: {max_bond: 20, n_sweeps: 20, exact_bond: 64}
    encoder: {layers: 2, n_iters: 2000, tol: 1.0e-12, prep_layers: 3,
              projector_layers: 2, projector_bond: 6}
    protocol:
      kind: fsqd-projected          # sqd | fsqd-direct | fsqd-projected | fsqd-unitary-projector
      source: ground                # ground (DMRG MPS) | encoded (circuit-prepared MPS)
      shot_schedule: [10, 22, 46, 100, 215, 464, 1000, 2154, 4642, 10000, 21544, 46416, 100000]
      n_r_cap: null                 # null: 5000 for n <= 20, 8000 above
      seeds: [1]
      force_include_zero: null      # null: true for the fsqd kinds, false for sqd
    sparsity: {sizes: [8, 10, 12, 14, 16, 18, 20], layers: 0}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np
import yaml

from .errors import ValidationError

PROTOCOLS = ("sqd", "fsqd-direct", "fsqd-projected", "fsqd-unitary-projector")
SOURCES = ("ground", "encoded")


def default_schedule() -> list[int]:
    """Thirteen log-spaced shot counts from 10 to 10^5."""
    return [int(round(x)) for x in np.logspace(1, 5, 13)]


@dataclass
class ModelConfig:
    n: int = 20
    J: float = 1.0
    hx: float = 1.0
    hz: float = 0.05

    def validate(self) -> None:
        if self.n < 2:
            raise ValidationError(f"model.n must be >= 2, got {self.n}")


@dataclass
class DmrgSection:
    max_bond: int = 20
    n_sweeps: int = 20
    convergence_tol: float | None = None
    lanczos_dim: int = 8
    noise: float = 0.0
    exact_bond: int = 64  # bond cap of the reference DMRG used for E_exact above the dense cap

    def validate(self) -> None:
        if self.max_bond < 1 or self.exact_bond < 1:
            raise ValidationError("dmrg bond caps must be >= 1")
        if self.n_sweeps < 1:
            raise ValidationError("dmrg.n_sweeps must be >= 1")
        if self.convergence_tol is not None and self.convergence_tol <= 0:
            raise ValidationError("dmrg.convergence_tol must be positive")


@dataclass
class EncoderSection:
    layers: int = 2
    n_iters: int = 2000
    tol: float = 1e-12
    prep_layers: int = 3  # layers of the circuit that prepares the 'encoded' source state
    projector_layers: int = 2
    projector_bond: int = 6  # bond cap of the low-accuracy state defining the projector target
    mode: str = "state"  # state | projector (cmd encode only)

    def validate(self) -> None:
        for name in ("layers", "prep_layers", "projector_layers"):
            if getattr(self, name) not in (1, 2, 3):
                raise ValidationError(f"encoder.{name} must be 1, 2 or 3")
        if self.n_iters < 1:
            raise ValidationError("encoder.n_iters must be >= 1")
        if self.tol < 0:
            raise ValidationError("encoder.tol must be non-negative")
        if self.projector_bond < 1:
            raise ValidationError("encoder.projector_bond must be >= 1")
        if self.mode not in ("state", "projector"):
            raise ValidationError("encoder.mode must be 'state' or 'projector'")


@dataclass
class ProtocolSection:
    kind: str = "fsqd-projected"
    source: str = "ground"
    shot_schedule: list[int] = field(default_factory=default_schedule)
    n_r_cap: int | None = None
    seeds: list[int] = field(default_factory=lambda: [1])
    force_include_zero: bool | None = None
    cumulative: bool = True
    filtered_mpo_bond: int = 50
    sampler_bond: int = 128
    dense_cap: int = 1000
    iterative_eigensolver: bool = True
    variance: bool = True
    variance_route: str = "auto"  # auto | statevector | mpo
    h_sq_bond: int = 200
    extrapolation_order: int = 2
    fit_min_shots: int = 1000

    def validate(self) -> None:
        if self.kind not in PROTOCOLS:
            raise ValidationError(f"protocol.kind must be one of {PROTOCOLS}, got {self.kind!r}")
        if self.source not in SOURCES:
            raise ValidationError(f"protocol.source must be one of {SOURCES}, got {self.source!r}")
        sched = list(self.shot_schedule)
        if not sched or sched[0] < 1 or any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValidationError("protocol.shot_schedule must be positive and strictly increasing")
        if not self.seeds:
            raise ValidationError("protocol.seeds must be non-empty")
        if self.n_r_cap is not None and self.n_r_cap < 1:
            raise ValidationError("protocol.n_r_cap must be >= 1")
        if self.variance_route not in ("auto", "statevector", "mpo"):
            raise ValidationError("protocol.variance_route must be auto, statevector or mpo")
        if self.extrapolation_order not in (1, 2):
            raise ValidationError("protocol.extrapolation_order must be 1 or 2")
        for name in ("filtered_mpo_bond", "sampler_bond", "dense_cap", "h_sq_bond"):
            if getattr(self, name) < 1:
                raise ValidationError(f"protocol.{name} must be >= 1")

    def resolved_n_r_cap(self, n: int) -> int:
        if self.n_r_cap is not None:
            return self.n_r_cap
        return 5000 if n <= 20 else 8000

    def resolved_force_zero(self) -> bool:
        if self.force_include_zero is not None:
            return self.force_include_zero
        return self.kind != "sqd"


@dataclass
class SparsitySection:
    sizes: list[int] = field(default_factory=lambda: [8, 10, 12, 14, 16, 18, 20])
    layers: int = 0  # 0: plain ground states; otherwise filter with a circuit of this depth
    n_iters: int = 200
    epsilons_tilde: list[float] = field(default_factory=lambda: [0.3, 0.1, 0.03])
    eta: float = 0.01
    lorenz_points: int = 4096

    def validate(self) -> None:
        if any(s < 2 or s > 24 for s in self.sizes):
            raise ValidationError("sparsity.sizes must lie in [2, 24]")
        if self.layers not in (0, 1, 2, 3):
            raise ValidationError("sparsity.layers must be 0, 1, 2 or 3")
        if not 0 < self.eta < 1:
            raise ValidationError("sparsity.eta must lie in (0, 1)")
        if any(not 0 < e < 1 for e in self.epsilons_tilde):
            raise ValidationError("sparsity.epsilons_tilde entries must lie in (0, 1)")


@dataclass
class OracleSection:
    n: int = 8
    bond: int = 4
    tol: float = 1e-9

    def validate(self) -> None:
        if not 2 <= self.n <= 10:
            raise ValidationError("oracle.n must lie in [2, 10]")


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    dmrg: DmrgSection = field(default_factory=DmrgSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    sparsity: SparsitySection = field(default_factory=SparsitySection)
    oracle: OracleSection = field(default_factory=OracleSection)

    def validate(self) -> "ExperimentConfig":
        for f in fields(self):
            getattr(self, f.name).validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)


_SECTION_TYPES = {
    "model": ModelConfig,
    "dmrg": DmrgSection,
    "encoder": EncoderSection,
    "protocol": ProtocolSection,
    "sparsity": SparsitySection,
    "oracle": OracleSection,
}


def _build_section(cls, data: Any, name: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ValidationError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown keys in {name!r}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ValidationError(f"bad section {name!r}: {exc}") from None


def config_from_dict(data: dict[str, Any] | None) -> ExperimentConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ValidationError("configuration root must be a mapping")
    unknown = set(data) - set(_SECTION_TYPES)
    if unknown:
        raise ValidationError(f"unknown configuration sections: {sorted(unknown)}")
    kwargs = {name: _build_section(cls, data.get(name), name) for name, cls in _SECTION_TYPES.items()}
    return ExperimentConfig(**kwargs).validate()


def load_config(text: str | None) -> ExperimentConfig:
    """Parse a YAML document (``None`` gives the defaults)."""
    if text is None:
        return ExperimentConfig().validate()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"configuration is not valid YAML: {exc}") from None
    return config_from_dict(data)
