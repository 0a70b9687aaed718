"""End-to-end protocol runs: prepare, evolve for t1 or t2, score fidelity."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .analytic import QutritLabelState, target_entangled, target_transfer
from .hamiltonian import HamiltonianSpec, Variant, build_terms
from .hilbert import (COUPLER, DensityMatrix, PureState, excitation_subspace,
                      fidelity_pure, standard_space)
from .lindblad import DissipatorSet, EvolutionResult, evolve_static, integrate
from .model import SystemParams, schedule, validate_regime

SUMMARY_COLUMNS = ("kind", "model", "b", "g12_fraction", "alpha", "fidelity", "t_op_ns",
                   "max_photon_expectation", "converged")


class Model(str, enum.Enum):
    IDEAL_UNITARY = "ideal"
    FULL_UNITARY = "full"
    FULL_LINDBLAD = "lindblad"
    EFFECTIVE = "effective"


class RegimeError(ValueError):
    """Parameters fail the dispersive-regime checks and no override was given."""


@dataclass(frozen=True)
class IntegratorSettings:
    dt: float = 0.01          # ns, upper bound on the RK4 step
    sample_every: int = 100
    truncation: int = 3       # Fock levels per cavity
    reduce_sector: bool = True
    store: str = "final"
    backend: str = "compiled"
    regime_threshold: float = 5.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.truncation < 3:
            raise ValueError("cavity truncation must keep at least 3 Fock levels")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


@dataclass
class ProtocolRun:
    kind: str
    model: Model
    params: SystemParams
    fidelity: float
    t_op: float
    evolution: EvolutionResult
    alpha: complex | None = None
    beta: complex | None = None

    @property
    def converged(self) -> bool:
        return self.evolution.converged

    @property
    def max_photons(self) -> float:
        return self.evolution.max_photons

    @property
    def final_state(self) -> DensityMatrix:
        return self.evolution.final_state

    def coupler_population(self, level: int) -> float:
        return self.final_state.population(COUPLER, level)

    def summary_row(self) -> dict:
        alpha = "" if self.alpha is None else _format_amplitude(self.alpha)
        return {
            "kind": self.kind,
            "model": self.model.value,
            "b": repr(round(self.params.b, 12)),
            "g12_fraction": repr(round(self.params.g12_fraction, 12)),
            "alpha": alpha,
            "fidelity": repr(self.fidelity),
            "t_op_ns": repr(self.t_op),
            "max_photon_expectation": repr(self.max_photons),
            "converged": "true" if self.converged else "false",
        }


def _format_amplitude(z: complex) -> str:
    z = complex(z)
    return repr(z.real) if z.imag == 0 else repr(z)


def _check_regime(params: SystemParams, settings: IntegratorSettings, override: bool) -> None:
    report = validate_regime(params, settings.regime_threshold)
    if not report.passed and not override:
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        raise RegimeError(f"regime checks failed ({failed}); pass override_regime=True "
                          f"to run anyway")


def evolve_model(params: SystemParams, model: Model, psi0: PureState, t_final: float,
                 settings: IntegratorSettings) -> EvolutionResult:
    model = Model(model)
    space = psi0.space
    rho0 = psi0.density_matrix()
    subspace = None
    if settings.reduce_sector:
        populated = np.flatnonzero(np.abs(psi0.amplitudes) > 0)
        top = int(space.level_table[populated].sum(axis=1).max())
        subspace = excitation_subspace(space, top)
    if model is Model.EFFECTIVE:
        terms = build_terms(HamiltonianSpec(params, space, Variant.EFFECTIVE))
        return evolve_static(terms, rho0, t_final, subspace=subspace)
    variant = Variant.IDEAL if model is Model.IDEAL_UNITARY else Variant.FULL
    terms = build_terms(HamiltonianSpec(params, space, variant))
    if model is Model.FULL_LINDBLAD:
        dissipators = DissipatorSet.from_params(params, space)
    else:
        dissipators = DissipatorSet()
    return integrate(terms, dissipators, rho0, t_final, settings.dt, settings.sample_every,
                     subspace=subspace, store=settings.store, backend=settings.backend)


def _run(kind, params, model, initial: QutritLabelState, target: QutritLabelState,
         t_op, settings, override_regime, alpha=None, beta=None) -> ProtocolRun:
    settings = settings or IntegratorSettings()
    _check_regime(params, settings, override_regime)
    space = standard_space(settings.truncation)
    evolution = evolve_model(params, model, initial.to_pure_state(space), t_op, settings)
    fidelity = fidelity_pure(target.to_pure_state(space), evolution.final_state)
    return ProtocolRun(kind, Model(model), params, fidelity, t_op, evolution, alpha, beta)


def run_entanglement(params: SystemParams, model: Model = Model.FULL_LINDBLAD,
                     settings: IntegratorSettings | None = None, *,
                     override_regime: bool = False) -> ProtocolRun:
    """Start in |110> with empty cavities, evolve for t1, compare with the entangled target."""
    t1 = schedule(params).t1
    return _run("entanglement", params, model, QutritLabelState.ket(1, 1, 0),
                target_entangled(), t1, settings, override_regime)


def run_transfer(params: SystemParams, model: Model = Model.FULL_LINDBLAD,
                 alpha: complex = 1.0, beta: complex | None = None,
                 settings: IntegratorSettings | None = None, *,
                 override_regime: bool = False) -> ProtocolRun:
    """Move alpha|0> + beta|1> from qutrit 1 to qutrit 2 in time t2.

    ``beta`` defaults to the real root sqrt(1 - |alpha|^2).
    """
    if beta is None:
        beta = math.sqrt(max(0.0, 1.0 - abs(alpha) ** 2))
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1.0) > 1e-10:
        raise ValueError(f"|alpha|^2 + |beta|^2 must be 1, got {abs(alpha)**2 + abs(beta)**2}")
    initial = QutritLabelState({(0, 0, 0): alpha, (1, 0, 0): beta})
    t2 = schedule(params).t2
    return _run("transfer", params, model, initial, target_transfer(alpha, beta), t2,
                settings, override_regime, alpha, beta)
