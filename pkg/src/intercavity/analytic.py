"""Closed-form three-qutrit dynamics under the effective Hamiltonian.

Labels ``(i, j, k)`` denote ``|i>_1 |j>_2 |k>_A``. Only the three initial
kets with closed-form evolution rules are covered: ``|000>``, ``|100>`` and
``|110>``. Inputs are combined linearly.

The square root of the population factor ``N = lambda2^2/Lambda^2`` is taken
with the sign of ``lambda2`` (``sqrt N -> lambda2/Lambda``). For positive
couplings this is the ordinary root; for negative detunings the unsigned
root flips the sign of the swapped components and disagrees with the
matrix exponential of the effective Hamiltonian.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.linalg import expm

from .hamiltonian import HamiltonianSpec, Variant, build_terms
from .hilbert import HilbertSpace, PureState, standard_space
from .model import ProtocolSchedule, SystemParams, schedule

logger = logging.getLogger(__name__)

Label = tuple[int, int, int]
COVERED = {(0, 0, 0), (1, 0, 0), (1, 1, 0)}


@dataclass(frozen=True, eq=False)
class QutritLabelState:
    amplitudes: Mapping[Label, complex]

    def __post_init__(self):
        amps = {}
        for label, amp in self.amplitudes.items():
            label = tuple(int(x) for x in label)
            if len(label) != 3 or any(x not in (0, 1, 2) for x in label):
                raise ValueError(f"bad qutrit label {label}")
            if amp != 0:
                amps[label] = amps.get(label, 0j) + complex(amp)
        object.__setattr__(self, "amplitudes", amps)
        if abs(self.norm() - 1.0) > 1e-10:
            raise ValueError(f"state norm {self.norm():.15g} is not 1")

    @classmethod
    def ket(cls, i: int, j: int, k: int) -> QutritLabelState:
        return cls({(i, j, k): 1.0})

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def amplitude(self, label: Label) -> complex:
        return self.amplitudes.get(tuple(label), 0j)

    def overlap(self, other: QutritLabelState) -> complex:
        """<self|other>."""
        return sum(a.conjugate() * other.amplitude(lbl) for lbl, a in self.amplitudes.items())

    def fidelity(self, other: QutritLabelState) -> float:
        return abs(self.overlap(other)) ** 2

    def to_pure_state(self, space: HilbertSpace | None = None) -> PureState:
        """Embed with both cavities in vacuum."""
        space = space or standard_space()
        amps = np.zeros(space.total_dim, dtype=complex)
        extra = (0,) * (space.n_subsystems - 3)
        for label, a in self.amplitudes.items():
            amps[space.index(label + extra)] = a
        return PureState(space, amps)


def _unnormalised(amps: dict[Label, complex]) -> QutritLabelState:
    state = object.__new__(QutritLabelState)
    object.__setattr__(state, "amplitudes", {k: v for k, v in amps.items() if v != 0})
    return state


def evolve_closed_form(initial: QutritLabelState, sched: ProtocolSchedule, t: float, *,
                       signed_root: bool = True) -> QutritLabelState:
    """Apply the closed-form evolution rules at time ``t``.

    The output is not renormalised; a norm defect above 1e-10 is logged.
    ``signed_root=False`` uses the unsigned ``sqrt(N)`` literally.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    outside = set(initial.amplitudes) - COVERED
    if outside:
        raise ValueError(f"no closed-form rule for components {sorted(outside)}")
    if sched.lambda2 == 0:
        raise ValueError("closed form needs lambda2 != 0")

    lam1, lam2, Lam = sched.lambda1, sched.lambda2, sched.Lambda
    N = sched.Nfactor
    root = lam2 / Lam if signed_root else math.sqrt(N)
    r = lam1 / lam2
    c, s = math.cos(Lam * t), math.sin(Lam * t)
    e1 = cmath.exp(-1j * sched.phi1 * t)
    e2 = cmath.exp(-1j * sched.phi2 * t)
    eA = cmath.exp(-1j * sched.phiA * t)

    out: dict[Label, complex] = {}

    def add(label, amp):
        out[label] = out.get(label, 0j) + amp

    for label, amp in initial.amplitudes.items():
        if label == (0, 0, 0):
            add((0, 0, 0), amp)
        elif label == (1, 0, 0):
            add((1, 0, 0), amp * N * e1 * (1 + r * r * c))
            add((0, 1, 0), amp * N * e2 * r * (c - 1))
            add((0, 0, 1), amp * -1j * root * eA * r * s)
        else:
            add((1, 1, 0), amp * e1 * e2 * c)
            add((0, 1, 1), amp * -1j * root * e2 * eA * r * s)
            add((1, 0, 1), amp * -1j * root * e1 * eA * s)

    result = _unnormalised(out)
    defect = abs(result.norm() - 1.0)
    if defect > 1e-10:
        logger.warning("closed-form evolution norm defect %.3g at t = %.6g", defect, t)
    return result


def target_entangled() -> QutritLabelState:
    """-i (|01> + |10>)|1> / sqrt 2: qutrits 1, 2 entangled, coupler excited."""
    a = -1j / math.sqrt(2.0)
    return QutritLabelState({(0, 1, 1): a, (1, 0, 1): a})


def target_transfer(alpha: complex, beta: complex) -> QutritLabelState:
    """|0>(alpha|0> + beta|1>)|0>: qutrit 1's state moved onto qutrit 2."""
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1.0) > 1e-10:
        raise ValueError(f"|alpha|^2 + |beta|^2 must be 1, got {abs(alpha)**2 + abs(beta)**2}")
    return QutritLabelState({(0, 0, 0): alpha, (0, 1, 0): beta})


_QUBIT_SPACE = HilbertSpace((2, 2, 2, 2, 2))


def _qutrit_block(params: SystemParams):
    """Effective Hamiltonian on the 8 qubit labels (cavities in vacuum)."""
    space = _QUBIT_SPACE
    terms = build_terms(HamiltonianSpec(params, space, Variant.EFFECTIVE))
    h = terms.at(0.0)
    labels = [(i, j, k) for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    idx = [space.index(lbl + (0, 0)) for lbl in labels]
    return labels, h[np.ix_(idx, idx)]


def evolve_matrix_exponential(initial: QutritLabelState, params: SystemParams,
                              t: float) -> QutritLabelState:
    """exp(-i H_eff t) applied to ``initial`` (qubit levels only)."""
    labels, h = _qutrit_block(params)
    if any(max(lbl) > 1 for lbl in initial.amplitudes):
        raise ValueError("matrix-exponential oracle covers qubit levels 0, 1 only")
    vec = np.array([initial.amplitude(lbl) for lbl in labels])
    out = expm(-1j * h * t) @ vec
    return _unnormalised(dict(zip(labels, out)))


def cross_check(initial: QutritLabelState, params: SystemParams, times) -> float:
    """Worst fidelity between the closed form and the matrix exponential over ``times``."""
    sched = schedule(params)
    worst = 1.0
    for t in times:
        a = evolve_closed_form(initial, sched, float(t))
        b = evolve_matrix_exponential(initial, params, float(t))
        f = abs(a.overlap(b)) ** 2 / (a.norm() ** 2 * b.norm() ** 2)
        worst = min(worst, f)
    if worst < 1 - 1e-8:
        logger.warning("closed form disagrees with matrix exponential (fidelity %.12g); "
                       "the matrix exponential is authoritative", worst)
    return worst
