"""Composite Hilbert spaces of qutrits and truncated cavity modes.

Basis states are indexed row-major in the mixed radix given by
``subsystem_dims``: for the standard layout ``(q1, q2, qA, c1, c2)`` the ket
``|i j k; n1 n2>`` sits at ``np.ravel_multi_index((i, j, k, n1, n2), dims)``.
Everything is dense; the default space has 3**5 = 243 states.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

QUTRIT1, QUTRIT2, COUPLER, CAVITY1, CAVITY2 = range(5)
QUTRITS = (QUTRIT1, QUTRIT2, COUPLER)
CAVITIES = (CAVITY1, CAVITY2)

TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
NORM_TOL = 1e-10


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class HilbertSpace:
    """Tensor product of finite-dimensional subsystems."""

    subsystem_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.subsystem_dims)
        if not dims:
            raise ValueError("a Hilbert space needs at least one subsystem")
        for i, d in enumerate(dims):
            if d < 2:
                raise ValueError(f"subsystem {i} has dimension {d}; need >= 2")
        object.__setattr__(self, "subsystem_dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.subsystem_dims))

    @property
    def n_subsystems(self) -> int:
        return len(self.subsystem_dims)

    def index(self, levels: Sequence[int]) -> int:
        """Computational index of the product basis ket ``|levels>``."""
        if len(levels) != self.n_subsystems:
            raise ValueError(
                f"expected {self.n_subsystems} levels, got {len(levels)}")
        return int(np.ravel_multi_index(tuple(levels), self.subsystem_dims))

    def levels(self, index: int) -> tuple[int, ...]:
        return tuple(int(n) for n in np.unravel_index(index, self.subsystem_dims))

    @cached_property
    def level_table(self) -> np.ndarray:
        """(total_dim, n_subsystems) integer table of basis-state levels."""
        grids = np.indices(self.subsystem_dims).reshape(self.n_subsystems, -1)
        return _frozen(grids.T.copy())

    def identity(self) -> Operator:
        return Operator(self, np.eye(self.total_dim, dtype=complex))

    def basis_state(self, levels: Sequence[int]) -> PureState:
        amps = np.zeros(self.total_dim, dtype=complex)
        amps[self.index(levels)] = 1.0
        return PureState(self, amps)


def standard_space(truncation: int = 3, qutrit_levels: int = 3) -> HilbertSpace:
    """Space ordered (qutrit 1, qutrit 2, coupler A, cavity 1, cavity 2).

    ``truncation`` is the number of Fock levels kept per cavity (max photons + 1).
    """
    return HilbertSpace((qutrit_levels,) * 3 + (truncation,) * 2)


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense linear operator on a :class:`HilbertSpace`."""

    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        n = self.space.total_dim
        if m.shape != (n, n):
            raise ValueError(f"operator shape {m.shape} does not match dim {n}")
        object.__setattr__(self, "matrix", _frozen(m))

    def _check(self, other: Operator) -> None:
        if other.space != self.space:
            raise ValueError("operators live on different spaces")

    def dag(self) -> Operator:
        return Operator(self.space, self.matrix.conj().T)

    def __matmul__(self, other: Operator) -> Operator:
        self._check(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def __add__(self, other: Operator) -> Operator:
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: Operator) -> Operator:
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> Operator:
        return Operator(self.space, scalar * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> Operator:
        return Operator(self.space, -self.matrix)

    def apply(self, psi: PureState) -> np.ndarray:
        """Raw image vector (not renormalised, may be zero)."""
        if psi.space != self.space:
            raise ValueError("state and operator live on different spaces")
        return self.matrix @ psi.amplitudes

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def expect(self, rho: DensityMatrix) -> complex:
        if rho.space != self.space:
            raise ValueError("state and operator live on different spaces")
        return complex(np.trace(self.matrix @ rho.rho))


@dataclass(frozen=True, eq=False)
class PureState:
    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if v.shape != (self.space.total_dim,):
            raise ValueError(
                f"state has {v.size} amplitudes, space has {self.space.total_dim}")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {norm:.15g} is not 1")
        object.__setattr__(self, "amplitudes", _frozen(v))

    def overlap(self, other: PureState) -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density_matrix(self) -> DensityMatrix:
        return DensityMatrix(self.space, np.outer(self.amplitudes,
                                                  self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpace
    rho: np.ndarray

    def __post_init__(self):
        r = np.array(self.rho, dtype=complex)
        n = self.space.total_dim
        if r.shape != (n, n):
            raise ValueError(f"density matrix shape {r.shape} does not match dim {n}")
        tr = np.trace(r)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr.real:.12g}{tr.imag:+.3g}j is not 1")
        defect = float(np.max(np.abs(r - r.conj().T)))
        if defect > HERMITIAN_TOL:
            raise ValueError(f"density matrix not Hermitian (defect {defect:.3g})")
        object.__setattr__(self, "rho", _frozen(r))

    @classmethod
    def maximally_mixed(cls, space: HilbertSpace) -> DensityMatrix:
        n = space.total_dim
        return cls(space, np.eye(n, dtype=complex) / n)

    def population(self, subsystem: int, level: int) -> float:
        """Reduced population of ``level`` in ``subsystem``."""
        mask = self.space.level_table[:, subsystem] == level
        return float(np.real(np.diag(self.rho)[mask].sum()))


def annihilation(dim: int) -> np.ndarray:
    """Truncated bosonic lowering operator, ``<n-1|a|n> = sqrt(n)``."""
    if dim < 2:
        raise ValueError(f"annihilation operator needs dim >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def transition(dim: int, upper: int, lower: int) -> np.ndarray:
    """The local operator ``|upper><lower|`` (a raising operator)."""
    if not 0 <= lower < upper < dim:
        raise ValueError(
            f"need 0 <= lower < upper < dim, got lower={lower}, upper={upper}, dim={dim}")
    m = np.zeros((dim, dim), dtype=complex)
    m[upper, lower] = 1.0
    return m


def projector(dim: int, level: int) -> np.ndarray:
    if not 0 <= level < dim:
        raise ValueError(f"level {level} outside 0..{dim - 1}")
    m = np.zeros((dim, dim), dtype=complex)
    m[level, level] = 1.0
    return m


def embed(space: HilbertSpace, subsystem_index: int, local_op) -> Operator:
    """Lift a single-subsystem operator to ``1 x ... x local_op x ... x 1``."""
    if not 0 <= subsystem_index < space.n_subsystems:
        raise ValueError(f"no subsystem {subsystem_index} in {space.subsystem_dims}")
    op = np.asarray(local_op, dtype=complex)
    d = space.subsystem_dims[subsystem_index]
    if op.shape != (d, d):
        raise ValueError(
            f"subsystem {subsystem_index} has dim {d}; local operator has shape {op.shape}")
    left = int(np.prod(space.subsystem_dims[:subsystem_index]))
    right = int(np.prod(space.subsystem_dims[subsystem_index + 1:]))
    full = np.kron(np.kron(np.eye(left), op), np.eye(right))
    return Operator(space, full)


def fidelity_pure(target: PureState, rho: DensityMatrix) -> float:
    """``<target|rho|target>``, clamped to [0, 1]."""
    if target.space != rho.space:
        raise ValueError("target and density matrix live on different spaces")
    psi = target.amplitudes
    value = float(np.real(np.vdot(psi, rho.rho @ psi)))
    if value < 0.0 or value > 1.0:
        if value < -TRACE_TOL or value > 1.0 + TRACE_TOL:
            logger.warning("fidelity %.12g outside [0, 1]; clamping", value)
        value = min(max(value, 0.0), 1.0)
    return value


def spectral_floor(rho) -> float:
    """Smallest eigenvalue of a Hermitian density matrix (array or DensityMatrix)."""
    r = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho)
    defect = float(np.max(np.abs(r - r.conj().T)))
    if defect > 1e-8:
        raise ValueError(f"matrix is not Hermitian (defect {defect:.3g})")
    return float(np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0])


@dataclass(frozen=True, eq=False)
class Subspace:
    """Span of a subset of product basis states.

    Dynamics can be restricted to a subspace without approximation when the
    Hamiltonian leaves it invariant and the jump operators map it into itself;
    :meth:`is_invariant_under` checks the matrix blocks that would break this.
    """

    space: HilbertSpace
    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.intp))
        if idx.size == 0 or idx[0] < 0 or idx[-1] >= self.space.total_dim:
            raise ValueError("subspace indices out of range")
        object.__setattr__(self, "indices", _frozen(idx))

    @property
    def dim(self) -> int:
        return int(self.indices.size)

    @cached_property
    def complement(self) -> np.ndarray:
        mask = np.ones(self.space.total_dim, dtype=bool)
        mask[self.indices] = False
        return _frozen(np.flatnonzero(mask))

    def restrict(self, matrix: np.ndarray) -> np.ndarray:
        m = np.asarray(matrix)
        return np.ascontiguousarray(m[np.ix_(self.indices, self.indices)])

    def restrict_vector(self, vector: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(np.asarray(vector)[self.indices])

    def lift(self, matrix: np.ndarray) -> np.ndarray:
        n = self.space.total_dim
        full = np.zeros((n, n), dtype=complex)
        full[np.ix_(self.indices, self.indices)] = matrix
        return full

    def leakage(self, matrix: np.ndarray) -> float:
        """Largest entry of ``matrix`` mapping the subspace out of itself."""
        if self.complement.size == 0:
            return 0.0
        m = np.asarray(matrix)
        return float(np.max(np.abs(m[np.ix_(self.complement, self.indices)]), initial=0.0))

    def is_invariant_under(self, matrix: np.ndarray, atol: float = 0.0) -> bool:
        return self.leakage(matrix) <= atol

    def contains(self, rho: np.ndarray, atol: float = 0.0) -> bool:
        """True when ``rho`` has no weight outside the subspace."""
        if self.complement.size == 0:
            return True
        r = np.asarray(rho)
        return float(np.max(np.abs(r[self.complement]), initial=0.0)) <= atol


def excitation_subspace(space: HilbertSpace, max_excitation: int) -> Subspace:
    """Basis states whose summed level indices do not exceed ``max_excitation``."""
    totals = space.level_table.sum(axis=1)
    return Subspace(space, np.flatnonzero(totals <= max_excitation))
