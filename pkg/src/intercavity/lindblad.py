"""Master-equation right-hand side and fixed-step RK4 integration.

The dissipator is the standard Markovian form with ``L[c] = c rho c^dag -
c^dag c rho/2 - rho c^dag c/2``. Dephasing channels use the same sandwich
with a level projector and the bare rate (no square root), so a dephasing
rate gamma damps the affected coherences at gamma/2.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import _kernels
from .hamiltonian import HamiltonianSpec, HamiltonianTerms, build_terms
from .hilbert import (CAVITIES, COUPLER, QUTRIT1, QUTRIT2, DensityMatrix,
                      HilbertSpace, Operator, Subspace, annihilation, embed,
                      projector, spectral_floor, transition)
from .model import SystemParams

logger = logging.getLogger(__name__)

MAX_PHASE_PER_STEP = 0.1
TRACE_FLAG = 1e-6
FLOOR_FLAG = -1e-6

HamiltonianLike = Union[HamiltonianSpec, HamiltonianTerms]


@dataclass(frozen=True, eq=False)
class DissipatorSet:
    """Collapse channels ``(c, rate)`` and dephasing channels ``(projector, rate)``."""

    collapse: tuple[tuple[Operator, float], ...] = ()
    dephasing: tuple[tuple[Operator, float], ...] = ()

    def __post_init__(self):
        for kind in ("collapse", "dephasing"):
            pairs = tuple((op, float(rate)) for op, rate in getattr(self, kind))
            for op, rate in pairs:
                if rate < 0 or not math.isfinite(rate):
                    raise ValueError(f"{kind} rate must be finite and >= 0, got {rate}")
            object.__setattr__(self, kind, pairs)

    @property
    def empty(self) -> bool:
        return all(rate == 0.0 for _, rate in self.collapse + self.dephasing)

    def channels(self):
        """All channels as (operator matrix, rate); dephasing has the same algebraic form."""
        for op, rate in self.collapse + self.dephasing:
            yield op.matrix, rate

    @classmethod
    def from_params(cls, params: SystemParams, space: HilbertSpace) -> DissipatorSet:
        r = params.rates
        dims = space.subsystem_dims
        collapse, dephasing = [], []
        for cav, kappa in zip(CAVITIES, r.kappa):
            collapse.append((embed(space, cav, annihilation(dims[cav])), kappa))
        for n, q in enumerate((QUTRIT1, QUTRIT2, COUPLER)):
            d = dims[q]
            collapse.append((embed(space, q, transition(d, 1, 0).T), r.gamma[n]))
            dephasing.append((embed(space, q, projector(d, 1)), r.gamma_phi1[n]))
            if d >= 3:
                collapse.append((embed(space, q, transition(d, 2, 1).T), r.gamma21[n]))
                collapse.append((embed(space, q, transition(d, 2, 0).T), r.gamma20[n]))
                dephasing.append((embed(space, q, projector(d, 2)), r.gamma_phi2[n]))
            elif max(r.gamma21[n], r.gamma20[n], r.gamma_phi2[n]) > 0:
                raise ValueError(f"qutrit {n} has no level |2> but its rates are nonzero")
        return cls(tuple(collapse), tuple(dephasing))


def _terms(hamiltonian: HamiltonianLike) -> HamiltonianTerms:
    if isinstance(hamiltonian, HamiltonianSpec):
        return build_terms(hamiltonian)
    return hamiltonian


def _dense_rhs(h: np.ndarray, channels, rho: np.ndarray) -> np.ndarray:
    out = -1j * (h @ rho - rho @ h)
    for c, rate in channels:
        if rate == 0.0:
            continue
        cd = c.conj().T
        cdc = cd @ c
        out += rate * (c @ rho @ cd - 0.5 * (cdc @ rho) - 0.5 * (rho @ cdc))
    return out


def master_rhs(hamiltonian: HamiltonianLike, dissipators: DissipatorSet, t: float,
               rho) -> np.ndarray:
    """Time derivative of ``rho`` at time ``t`` (plain dense numpy)."""
    terms = _terms(hamiltonian)
    r = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if r.shape != (terms.dim, terms.dim):
        raise ValueError(f"rho has shape {r.shape}, Hamiltonian has dim {terms.dim}")
    for op, _ in dissipators.collapse + dissipators.dephasing:
        if op.matrix.shape != r.shape:
            raise ValueError(f"dissipator shape {op.matrix.shape} does not match rho {r.shape}")
    return _dense_rhs(terms.at(t), dissipators.channels(), r)


@dataclass
class EvolutionResult:
    times: np.ndarray
    monitors: dict[str, np.ndarray]
    states: list[DensityMatrix]
    state_times: list[float]
    dt: float
    n_steps: int
    max_photons: float = 0.0
    converged: bool = True
    failure: str | None = None
    cavity_labels: tuple[str, ...] = field(default_factory=tuple)

    @property
    def final_state(self) -> DensityMatrix:
        if not self.states or not math.isclose(self.state_times[-1], self.times[-1]):
            raise ValueError("final state was not stored")
        return self.states[-1]

    def write_trace_csv(self, path) -> None:
        columns = ["trace_dev", "herm_defect", "spectral_floor", "n_exc"]
        columns += [f"n_photons_{c}" for c in self.cavity_labels]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["time_ns"] + columns)
            for i, t in enumerate(self.times):
                writer.writerow([repr(float(t))] + [repr(float(self.monitors[c][i]))
                                                    for c in columns])


def _trusted_density(space: HilbertSpace, rho: np.ndarray) -> DensityMatrix:
    # skips validation so non-converged states can still be inspected
    dm = object.__new__(DensityMatrix)
    object.__setattr__(dm, "space", space)
    r = np.array(rho, dtype=complex)
    r.setflags(write=False)
    object.__setattr__(dm, "rho", r)
    return dm


def _coo_jumps(channels):
    ptr, rows, cols, vals = [0], [], [], []
    for c, rate in channels:
        if rate == 0.0:
            continue
        scaled = math.sqrt(rate) * c
        r, cidx = np.nonzero(scaled)
        rows.extend(r.tolist())
        cols.extend(cidx.tolist())
        vals.extend(scaled[r, cidx].tolist())
        ptr.append(len(rows))
    return (np.array(ptr, dtype=np.int64), np.array(rows, dtype=np.int64),
            np.array(cols, dtype=np.int64), np.array(vals, dtype=np.complex128))


def _restrict_problem(terms: HamiltonianTerms, dissipators: DissipatorSet,
                      subspace: Subspace | None):
    channels = [(c, rate) for c, rate in dissipators.channels() if rate != 0.0]
    if subspace is None:
        return terms, channels
    for m in terms.matrices():
        if not subspace.is_invariant_under(m):
            raise ValueError("Hamiltonian couples the chosen subspace to its complement")
    for c, _ in channels:
        if not subspace.is_invariant_under(c):
            raise ValueError("a jump operator maps the chosen subspace out of itself")
        cdc = c.conj().T @ c
        if not subspace.is_invariant_under(cdc) or not subspace.is_invariant_under(cdc.conj().T):
            raise ValueError("a decay term couples the chosen subspace to its complement")
    return (terms.restricted(subspace),
            [(subspace.restrict(c), rate) for c, rate in channels])


def integrate(hamiltonian: HamiltonianLike, dissipators: DissipatorSet, rho0: DensityMatrix,
              t_final: float, dt: float, sample_every: int = 100, *,
              subspace: Subspace | None = None, store: str = "final",
              cavities: Sequence[int] | None = None, override_step_check: bool = False,
              backend: str = "compiled") -> EvolutionResult:
    """Fixed-step RK4 solution of the master equation from ``t = 0``.

    ``dt`` is an upper bound: the step is shrunk so an integer number of
    steps lands exactly on ``t_final``. Each step is followed by
    ``rho <- (rho + rho^dag)/2``; the trace is never renormalised so its
    drift remains a convergence diagnostic.

    Args:
        subspace: restrict the dynamics to this subspace. It must be invariant
            under every Hamiltonian term and jump operator, which makes the
            restriction exact; stored states are lifted back to the full space.
        store: ``"final"``, ``"samples"`` (every monitor sample) or ``"none"``.
        cavities: subsystem indices whose photon numbers are monitored;
            defaults to both cavities of the standard five-subsystem layout.
        backend: ``"compiled"`` (numba kernel) or ``"numpy"`` (reference).
    """
    terms = _terms(hamiltonian)
    space = rho0.space
    if terms.dim != space.total_dim:
        raise ValueError(f"Hamiltonian dim {terms.dim} != state dim {space.total_dim}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_final < 0:
        raise ValueError(f"t_final must be >= 0, got {t_final}")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    if store not in ("final", "samples", "none"):
        raise ValueError(f"unknown store mode {store!r}")
    phase_per_step = dt * terms.max_frequency
    if phase_per_step > MAX_PHASE_PER_STEP and not override_step_check:
        raise ValueError(f"dt = {dt} ns advances the fastest phase by {phase_per_step:.3f} rad "
                         f"per step (limit {MAX_PHASE_PER_STEP})")

    n_steps = max(1, math.ceil(t_final / dt * (1 - 1e-12))) if t_final > 0 else 0
    h = t_final / n_steps if n_steps else 0.0

    if cavities is None:
        cavities = CAVITIES if space.n_subsystems == 5 else ()
    cavity_labels = tuple(f"c{i + 1}" for i in range(len(cavities)))

    work_terms, channels = _restrict_problem(terms, dissipators, subspace)
    if subspace is not None:
        if not subspace.contains(rho0.rho):
            raise ValueError("initial state has weight outside the chosen subspace")
        rho = subspace.restrict(rho0.rho)
        table = space.level_table[subspace.indices]
        lift = subspace.lift
    else:
        rho = np.array(rho0.rho, dtype=complex)
        table = space.level_table
        lift = lambda m: m  # noqa: E731
    d = rho.shape[0]

    diag_obs = np.vstack([np.ones(d), table.sum(axis=1)] + [table[:, c] for c in cavities])
    diag_obs = np.ascontiguousarray(diag_obs, dtype=float)
    record = np.zeros((n_steps + 1, diag_obs.shape[0]))
    record[0] = diag_obs @ np.real(np.diag(rho))

    if backend == "compiled":
        decay = sum((0.5 * c.conj().T @ c * rate for c, rate in channels),
                    np.zeros((d, d), dtype=complex))
        g_static = np.ascontiguousarray(-1j * work_terms.static - decay)
        freqs = np.ascontiguousarray(work_terms.frequencies)
        amps = np.ascontiguousarray(work_terms.amplitudes)
        jumps = _coo_jumps(channels)

        def advance(state, step0, count):
            return _kernels.rk4_steps(state, 0.0, h, step0, count, g_static, freqs,
                                      amps, *jumps, diag_obs, record)
    elif backend == "numpy":
        def rhs(t, r):
            return _dense_rhs(work_terms.at(t), channels, r)

        def advance(state, step0, count):
            cur = state.copy()
            worst = 0.0
            for s in range(step0, step0 + count):
                t = s * h
                k1 = rhs(t, cur)
                k2 = rhs(t + 0.5 * h, cur + 0.5 * h * k1)
                k3 = rhs(t + 0.5 * h, cur + 0.5 * h * k2)
                k4 = rhs(t + h, cur + h * k3)
                cur = cur + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                worst = max(worst, float(np.max(np.abs(cur - cur.conj().T))))
                cur = 0.5 * (cur + cur.conj().T)
                record[s + 1] = diag_obs @ np.real(np.diag(cur))
            return cur, worst
    else:
        raise ValueError(f"unknown backend {backend!r}")

    sample_steps = list(range(0, n_steps + 1, sample_every))
    if sample_steps[-1] != n_steps:
        sample_steps.append(n_steps)

    monitors = {k: [] for k in ("trace_dev", "herm_defect", "spectral_floor", "n_exc")}
    for label in cavity_labels:
        monitors[f"n_photons_{label}"] = []
    states, state_times = [], []
    converged, failure = True, None
    defect = 0.0
    done = 0
    for step in sample_steps:
        if step > done:
            rho, defect = advance(rho, done, step - done)
            done = step
            if defect > 1e-10:
                logger.debug("Hermiticity defect %.3g removed before t = %.6g", defect, step * h)
        t = step * h
        if not np.all(np.isfinite(rho)):
            converged, failure = False, f"non-finite state at t = {t:.6g} ns"
            break
        row = record[step]
        trace_dev = abs(np.trace(rho) - 1.0)
        floor = spectral_floor(rho)
        monitors["trace_dev"].append(trace_dev)
        monitors["herm_defect"].append(defect)
        monitors["spectral_floor"].append(floor)
        monitors["n_exc"].append(row[1])
        for k, label in enumerate(cavity_labels):
            monitors[f"n_photons_{label}"].append(row[2 + k])
        if converged and (trace_dev > TRACE_FLAG or floor < FLOOR_FLAG):
            converged = False
            failure = (f"trace deviation {trace_dev:.3g} / spectral floor {floor:.3g} "
                       f"at t = {t:.6g} ns")
            logger.warning("integration flagged non-converged: %s", failure)
        if store == "samples" or (store == "final" and step == n_steps):
            states.append(_trusted_density(space, lift(rho)))
            state_times.append(t)

    n_samples = len(monitors["trace_dev"])
    times = np.array([s * h for s in sample_steps[:n_samples]])
    photons = record[: done + 1, 2:].sum(axis=1) if cavities else np.zeros(1)
    return EvolutionResult(
        times=times,
        monitors={k: np.asarray(v, dtype=float) for k, v in monitors.items()},
        states=states,
        state_times=state_times,
        dt=h,
        n_steps=n_steps,
        max_photons=float(np.max(photons)),
        converged=converged,
        failure=failure,
        cavity_labels=cavity_labels,
    )


def evolve_static(terms: HamiltonianTerms, rho0: DensityMatrix, t_final: float, *,
                  subspace: Subspace | None = None,
                  cavities: Sequence[int] | None = None) -> EvolutionResult:
    """Exact unitary evolution under a time-independent Hamiltonian (matrix exponential)."""
    from scipy.linalg import expm

    if terms.frequencies.size:
        raise ValueError("evolve_static needs a time-independent Hamiltonian")
    space = rho0.space
    if cavities is None:
        cavities = CAVITIES if space.n_subsystems == 5 else ()
    cavity_labels = tuple(f"c{i + 1}" for i in range(len(cavities)))
    if subspace is not None:
        work, _ = _restrict_problem(terms, DissipatorSet(), subspace)
        if not subspace.contains(rho0.rho):
            raise ValueError("initial state has weight outside the chosen subspace")
        r0 = subspace.restrict(rho0.rho)
        table = space.level_table[subspace.indices]
        lift = subspace.lift
    else:
        work, r0, table = terms, np.array(rho0.rho), space.level_table
        lift = lambda m: m  # noqa: E731
    u = expm(-1j * work.static * t_final)
    r1 = u @ r0 @ u.conj().T
    r1 = 0.5 * (r1 + r1.conj().T)

    monitors = {k: [] for k in ("trace_dev", "herm_defect", "spectral_floor", "n_exc")}
    for label in cavity_labels:
        monitors[f"n_photons_{label}"] = []
    for r in (r0, r1):
        diag = np.real(np.diag(r))
        monitors["trace_dev"].append(abs(np.trace(r) - 1.0))
        monitors["herm_defect"].append(0.0)
        monitors["spectral_floor"].append(spectral_floor(r))
        monitors["n_exc"].append(float(diag @ table.sum(axis=1)))
        for c, label in zip(cavities, cavity_labels):
            monitors[f"n_photons_{label}"].append(float(diag @ table[:, c]))
    photons = [sum(monitors[f"n_photons_{lbl}"][i] for lbl in cavity_labels) for i in (0, 1)]
    return EvolutionResult(
        times=np.array([0.0, t_final]),
        monitors={k: np.asarray(v, dtype=float) for k, v in monitors.items()},
        states=[_trusted_density(space, lift(r1))],
        state_times=[t_final],
        dt=t_final,
        n_steps=1,
        max_photons=float(max(photons)),
        cavity_labels=cavity_labels,
    )
