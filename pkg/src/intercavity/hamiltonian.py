"""Interaction-picture Hamiltonians of the two-cavity, three-qutrit device.

Every variant is assembled as

    H(t) = static + sum_f (exp(i f t) A_f + h.c.)

so integrators only multiply a handful of fixed matrices by scalar phases.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .hilbert import (CAVITIES, CAVITY1, CAVITY2, COUPLER, QUTRIT1, QUTRIT2,
                      HilbertSpace, Operator, Subspace, annihilation, embed,
                      projector, transition)
from .model import SystemParams, schedule

DETUNING_MATCH_TOL = 1e-9


class Variant(str, enum.Enum):
    IDEAL = "ideal"                    # qubit-cavity exchange only
    FULL = "full"                      # + |1>-|2> leakage couplings + cavity crosstalk
    EFFECTIVE = "effective"            # static dispersive Hamiltonian, cavities in vacuum
    EFFECTIVE_FULL = "effective_full"  # dispersive form before matching the detunings


@dataclass(frozen=True)
class HamiltonianSpec:
    params: SystemParams
    space: HilbertSpace
    variant: Variant = Variant.FULL

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        dims = self.space.subsystem_dims
        if len(dims) != 5:
            raise ValueError(f"expected (q1, q2, qA, c1, c2) layout, got dims {dims}")
        if self.variant is Variant.FULL and min(dims[:3]) < 3:
            raise ValueError("the full Hamiltonian needs qutrit level |2>")


@dataclass(frozen=True, eq=False)
class HamiltonianTerms:
    """Static matrix plus (frequency, amplitude) pairs; Hermitian by construction."""

    static: np.ndarray
    frequencies: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        static = np.ascontiguousarray(self.static, dtype=complex)
        freqs = np.ascontiguousarray(self.frequencies, dtype=float).reshape(-1)
        d = static.shape[0]
        amps = np.ascontiguousarray(self.amplitudes, dtype=complex).reshape(freqs.size, d, d)
        for a in (static, freqs, amps):
            a.setflags(write=False)
        object.__setattr__(self, "static", static)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def constant(cls, matrix: np.ndarray) -> HamiltonianTerms:
        m = np.asarray(matrix, dtype=complex)
        return cls(m, np.zeros(0), np.zeros((0,) + m.shape, dtype=complex))

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    @property
    def max_frequency(self) -> float:
        return float(np.max(np.abs(self.frequencies), initial=0.0))

    def at(self, t: float) -> np.ndarray:
        phases = np.exp(1j * self.frequencies * t)
        osc = np.tensordot(phases, self.amplitudes, axes=1)
        return self.static + osc + osc.conj().T

    def restricted(self, subspace: Subspace) -> HamiltonianTerms:
        return HamiltonianTerms(
            subspace.restrict(self.static),
            self.frequencies,
            np.array([subspace.restrict(a) for a in self.amplitudes]).reshape(
                self.frequencies.size, subspace.dim, subspace.dim),
        )

    def matrices(self):
        """Every constituent matrix, including the implicit adjoints."""
        yield self.static
        for a in self.amplitudes:
            yield a
            yield a.conj().T


class _Builder:
    """Accumulates terms keyed by exact frequency."""

    def __init__(self, dim: int):
        self.static = np.zeros((dim, dim), dtype=complex)
        self.osc: dict[float, np.ndarray] = {}

    def add_static(self, matrix):
        self.static += matrix

    def add_oscillating(self, frequency: float, coefficient: float, matrix):
        """Adds coefficient * (exp(i f t) matrix + h.c.)."""
        if coefficient == 0.0:
            return
        half = coefficient * matrix
        if frequency == 0.0:
            # h.c. comes from the adjoint of the same half, never re-derived
            self.static += half + half.conj().T
            return
        key = float(frequency)
        if key in self.osc:
            self.osc[key] = self.osc[key] + half
        else:
            self.osc[key] = half

    def build(self) -> HamiltonianTerms:
        freqs = sorted(self.osc)
        d = self.static.shape[0]
        amps = np.array([self.osc[f] for f in freqs]).reshape(len(freqs), d, d)
        return HamiltonianTerms(self.static, np.array(freqs, dtype=float), amps)


def _local_ops(space: HilbertSpace):
    dims = space.subsystem_dims
    a = [embed(space, c, annihilation(dims[c])).matrix for c in CAVITIES]
    raise_ = [embed(space, q, transition(dims[q], 1, 0)).matrix
              for q in (QUTRIT1, QUTRIT2, COUPLER)]
    return a, raise_


def _check_matched_detunings(params: SystemParams) -> None:
    residual = params.detuning_mismatch()
    if residual > DETUNING_MATCH_TOL:
        raise ValueError(f"effective Hamiltonian assumes delta_j = delta_Aj; "
                         f"relative mismatch {residual:.3g}")


def build_terms(spec: HamiltonianSpec) -> HamiltonianTerms:
    p, space = spec.params, spec.space
    dims = space.subsystem_dims
    builder = _Builder(space.total_dim)
    (a1, a2), (sp1, sp2, spA) = _local_ops(space)
    variant = spec.variant

    if variant in (Variant.IDEAL, Variant.FULL):
        builder.add_oscillating(p.delta1, p.g1, a1 @ sp1)
        builder.add_oscillating(p.delta2, p.g2, a2 @ sp2)
        builder.add_oscillating(p.deltaA1, p.gA1, a1 @ spA)
        builder.add_oscillating(p.deltaA2, p.gA2, a2 @ spA)
    if variant is Variant.FULL:
        s21 = [embed(space, q, transition(dims[q], 2, 1)).matrix
               for q in (QUTRIT1, QUTRIT2, COUPLER)]
        builder.add_oscillating(p.deltat1, p.gt1, a1 @ s21[0])
        builder.add_oscillating(p.deltat2, p.gt2, a2 @ s21[1])
        builder.add_oscillating(p.deltatA1, p.gtA1, a1 @ s21[2])
        builder.add_oscillating(p.deltatA2, p.gtA2, a2 @ s21[2])
        builder.add_oscillating(p.Delta, p.g12, a1 @ a2.conj().T)

    if variant in (Variant.EFFECTIVE, Variant.EFFECTIVE_FULL):
        sch = schedule(p)
        lower_A = spA.conj().T
        n1 = [embed(space, q, projector(dims[q], 1)).matrix for q in (QUTRIT1, QUTRIT2, COUPLER)]
        if variant is Variant.EFFECTIVE:
            _check_matched_detunings(p)
            builder.add_static(sch.phi1 * n1[0] + sch.phi2 * n1[1] + sch.phiA * n1[2])
            builder.add_oscillating(0.0, sch.lambda1, sp1 @ lower_A)
            builder.add_oscillating(0.0, sch.lambda2, sp2 @ lower_A)
        else:
            n0 = [embed(space, q, projector(dims[q], 0)).matrix
                  for q in (QUTRIT1, QUTRIT2, COUPLER)]
            ad_a = [a.conj().T @ a for a in (a1, a2)]
            a_ad = [a @ a.conj().T for a in (a1, a2)]
            shifts = ((p.g1 ** 2 / p.delta1, 0, 0), (p.g2 ** 2 / p.delta2, 1, 1),
                      (p.gA1 ** 2 / p.deltaA1, 2, 0), (p.gA2 ** 2 / p.deltaA2, 2, 1))
            for chi, q, c in shifts:
                builder.add_static(-chi * (n0[q] @ ad_a[c] - n1[q] @ a_ad[c]))
            builder.add_oscillating(p.delta1 - p.deltaA1, sch.lambda1, sp1 @ lower_A)
            builder.add_oscillating(p.delta2 - p.deltaA2, sch.lambda2, sp2 @ lower_A)
    return builder.build()


def hamiltonian_at(spec: HamiltonianSpec, t: float) -> Operator:
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    return Operator(spec.space, build_terms(spec).at(t))


def excitation_number(space: HilbertSpace) -> Operator:
    """Sum of qutrit levels plus cavity photon numbers; conserved by every variant."""
    levels = space.level_table.sum(axis=1)
    return Operator(space, np.diag(levels.astype(complex)))


def photon_number(space: HilbertSpace, cavity: int) -> Operator:
    if cavity not in (CAVITY1, CAVITY2):
        raise ValueError(f"subsystem {cavity} is not a cavity")
    return Operator(space, np.diag(space.level_table[:, cavity].astype(complex)))
