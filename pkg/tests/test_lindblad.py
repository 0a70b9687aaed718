import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from intercavity.analytic import QutritLabelState, target_entangled
from intercavity.hamiltonian import HamiltonianSpec, HamiltonianTerms, Variant, build_terms
from intercavity.hilbert import (DensityMatrix, HilbertSpace, Operator, PureState,
                                 annihilation, excitation_subspace, fidelity_pure, projector,
                                 standard_space, transition)
from intercavity.lindblad import DissipatorSet, integrate, master_rhs
from intercavity.model import schedule

SPACE = standard_space()


def _single_mode(kappa, dim=4):
    space = HilbertSpace((dim,))
    diss = DissipatorSet(collapse=((Operator(space, annihilation(dim)), kappa),))
    return space, HamiltonianTerms.constant(np.zeros((dim, dim))), diss


def _liouvillian(h, channels):
    d = h.shape[0]
    eye = np.eye(d)
    # column-stacking vec: vec(A X B) = (B^T kron A) vec(X)
    L = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for c, rate in channels:
        cdc = c.conj().T @ c
        L += rate * (np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye))
    return L


def test_zero_generator():
    space = HilbertSpace((2, 3))
    rho = DensityMatrix.maximally_mixed(space)
    out = master_rhs(HamiltonianTerms.constant(np.zeros((6, 6))), DissipatorSet(), 0.0, rho)
    assert np.abs(out).max() == 0
    res = integrate(HamiltonianTerms.constant(np.zeros((6, 6))), DissipatorSet(), rho, 3.0, 0.1)
    np.testing.assert_array_equal(res.final_state.rho, rho.rho)


def test_single_mode_decay_rate():
    space, h, diss = _single_mode(0.3)
    rho = space.basis_state((1,)).density_matrix()
    d = master_rhs(h, diss, 0.0, rho)
    n = np.diag(np.arange(4))
    assert np.trace(n @ d).real == pytest.approx(-0.3, abs=1e-14)


def test_single_mode_decay_curve():
    kappa = 0.3
    space, h, diss = _single_mode(kappa)
    rho = space.basis_state((1,)).density_matrix()
    res = integrate(h, diss, rho, 10.0, 0.01, 10, cavities=(0,))
    expected = np.exp(-kappa * res.times)
    assert np.max(np.abs(res.monitors["n_photons_c1"] - expected)) <= 1e-6


def test_dephasing_halves_coherence_rate():
    space = HilbertSpace((3,))
    gphi = 0.2
    diss = DissipatorSet(dephasing=((Operator(space, projector(3, 1)), gphi),))
    psi = PureState(space, np.array([1, 1, 0]) / math.sqrt(2))
    h = HamiltonianTerms.constant(np.zeros((3, 3)))
    d = master_rhs(h, diss, 0.0, psi.density_matrix())
    assert d[0, 1] == pytest.approx(-0.5 * gphi * 0.5)
    assert np.abs(np.diag(d)).max() == 0
    res = integrate(h, diss, psi.density_matrix(), 4.0, 0.01)
    assert res.final_state.rho[0, 1].real == pytest.approx(0.5 * math.exp(-gphi * 4.0 / 2),
                                                           abs=1e-9)


def _damped_rabi_error(dt):
    space = HilbertSpace((2,))
    omega, gamma = 2 * math.pi * 1.0, 0.5
    h = 0.5 * omega * np.array([[0, 1], [1, 0]], dtype=complex)
    down = transition(2, 1, 0).T
    diss = DissipatorSet(collapse=((Operator(space, down), gamma),))
    rho0 = space.basis_state((1,)).density_matrix()
    res = integrate(HamiltonianTerms.constant(h), diss, rho0, 1.0, dt)
    exact = (expm(_liouvillian(h, [(down, gamma)]) * 1.0) @ rho0.rho.reshape(-1, order="F"))
    return np.abs(res.final_state.rho - exact.reshape(2, 2, order="F")).max()


def test_rk4_order():
    e1, e2 = _damped_rabi_error(0.05), _damped_rabi_error(0.025)
    ratio = e1 / e2
    assert 8.0 <= ratio <= 32.0, ratio


def test_matches_liouvillian_exponential(params11_lossy):
    # small dense problem: 2 qubits coupled to a lossy mode
    space = HilbertSpace((2, 3))
    g = 0.7
    h = g * (np.kron(transition(2, 1, 0), annihilation(3))
             + np.kron(transition(2, 1, 0), annihilation(3)).conj().T)
    chans = [(np.kron(np.eye(2), annihilation(3)), 0.4),
             (np.kron(transition(2, 1, 0).T, np.eye(3)), 0.1)]
    diss = DissipatorSet(collapse=tuple((Operator(space, c), r) for c, r in chans))
    rho0 = space.basis_state((1, 0)).density_matrix()
    res = integrate(HamiltonianTerms.constant(h), diss, rho0, 5.0, 0.005)
    exact = expm(_liouvillian(h, chans) * 5.0) @ rho0.rho.reshape(-1, order="F")
    np.testing.assert_allclose(res.final_state.rho, exact.reshape(6, 6, order="F"), atol=1e-9)


@pytest.fixture(scope="module")
def lossless_full(params11):
    terms = build_terms(HamiltonianSpec(params11, SPACE, Variant.FULL))
    psi = QutritLabelState.ket(1, 1, 0).to_pure_state(SPACE)
    res = integrate(terms, DissipatorSet(), psi.density_matrix(), schedule(params11).t1, 0.01,
                    subspace=excitation_subspace(SPACE, 2))
    return res


def test_lossless_invariants(lossless_full):
    m = lossless_full.monitors
    assert m["trace_dev"].max() <= 1e-8
    assert m["spectral_floor"].min() >= -1e-8
    assert np.abs(m["n_exc"] - 2.0).max() <= 1e-8
    assert len(m["trace_dev"]) == len(lossless_full.times)
    assert lossless_full.converged


def test_lossy_spectral_floor(params11_lossy):
    terms = build_terms(HamiltonianSpec(params11_lossy, SPACE, Variant.FULL))
    diss = DissipatorSet.from_params(params11_lossy, SPACE)
    psi = QutritLabelState.ket(1, 1, 0).to_pure_state(SPACE)
    res = integrate(terms, diss, psi.density_matrix(), schedule(params11_lossy).t1, 0.01,
                    subspace=excitation_subspace(SPACE, 2))
    assert res.monitors["spectral_floor"].min() >= -1e-8
    assert res.monitors["trace_dev"].max() <= 1e-8
    # excitations only leave the system
    assert np.all(np.diff(res.monitors["n_exc"]) <= 1e-12)


def test_ideal_hamiltonian_against_schrodinger_oracle(params11):
    """Lossless ideal run versus an adaptive state-vector solution."""
    terms = build_terms(HamiltonianSpec(params11, SPACE, Variant.IDEAL))
    t1 = schedule(params11).t1
    psi0 = QutritLabelState.ket(1, 1, 0).to_pure_state(SPACE)
    res = integrate(terms, DissipatorSet(), psi0.density_matrix(), t1, 0.01,
                    subspace=excitation_subspace(SPACE, 2))
    target = target_entangled().to_pure_state(SPACE)
    f_rk4 = fidelity_pure(target, res.final_state)

    sub = excitation_subspace(SPACE, 2)
    small = terms.restricted(sub)
    sol = solve_ivp(lambda t, y: -1j * (small.at(t) @ y), (0, t1),
                    sub.restrict_vector(psi0.amplitudes).astype(complex),
                    method="DOP853", rtol=1e-12, atol=1e-12)
    y = sol.y[:, -1]
    f_oracle = abs(np.vdot(sub.restrict_vector(target.amplitudes), y)) ** 2
    assert f_rk4 == pytest.approx(f_oracle, abs=1e-8)
    # second-order dressing by virtual photons bounds the loss by about 3/b^2
    assert f_rk4 >= 1 - 3 / params11.b ** 2


def test_dt_halving_converged(params11_lossy):
    terms = build_terms(HamiltonianSpec(params11_lossy, SPACE, Variant.FULL))
    diss = DissipatorSet.from_params(params11_lossy, SPACE)
    psi = QutritLabelState.ket(1, 1, 0).to_pure_state(SPACE)
    target = target_entangled().to_pure_state(SPACE)
    sub = excitation_subspace(SPACE, 2)
    t1 = schedule(params11_lossy).t1
    f = [fidelity_pure(target, integrate(terms, diss, psi.density_matrix(), t1, dt,
                                         subspace=sub).final_state) for dt in (0.01, 0.005)]
    assert abs(f[0] - f[1]) <= 1e-8


def test_backends_agree(params11_lossy):
    terms = build_terms(HamiltonianSpec(params11_lossy, SPACE, Variant.FULL))
    diss = DissipatorSet.from_params(params11_lossy, SPACE)
    psi = QutritLabelState.ket(1, 1, 0).to_pure_state(SPACE)
    sub = excitation_subspace(SPACE, 2)
    a = integrate(terms, diss, psi.density_matrix(), 2.0, 0.01, subspace=sub)
    b = integrate(terms, diss, psi.density_matrix(), 2.0, 0.01, subspace=sub, backend="numpy")
    np.testing.assert_allclose(a.final_state.rho, b.final_state.rho, atol=1e-13)


def test_sector_reduction_is_exact(params11_lossy):
    terms = build_terms(HamiltonianSpec(params11_lossy, SPACE, Variant.FULL))
    diss = DissipatorSet.from_params(params11_lossy, SPACE)
    psi = QutritLabelState.ket(1, 1, 0).to_pure_state(SPACE)
    full = integrate(terms, diss, psi.density_matrix(), 1.0, 0.01)
    reduced = integrate(terms, diss, psi.density_matrix(), 1.0, 0.01,
                        subspace=excitation_subspace(SPACE, 2))
    np.testing.assert_allclose(full.final_state.rho, reduced.final_state.rho, atol=1e-13)
    assert full.max_photons == pytest.approx(reduced.max_photons, abs=1e-13)


def test_kernel_rhs_matches_reference(params11_lossy):
    from intercavity import _kernels
    from intercavity.lindblad import _coo_jumps
    sub = excitation_subspace(SPACE, 2)
    terms = build_terms(HamiltonianSpec(params11_lossy, SPACE, Variant.FULL)).restricted(sub)
    diss = DissipatorSet.from_params(params11_lossy, SPACE)
    chans = [(sub.restrict(c), r) for c, r in diss.channels() if r > 0]
    rng = np.random.default_rng(3)
    m = rng.normal(size=(21, 21)) + 1j * rng.normal(size=(21, 21))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    decay = sum(0.5 * r * c.conj().T @ c for c, r in chans)
    out = np.empty((21, 21), dtype=complex)
    gen = np.empty_like(out)
    _kernels.master_rhs_kernel(4.2, rho, np.ascontiguousarray(-1j * terms.static - decay),
                               terms.frequencies, terms.amplitudes, *_coo_jumps(chans),
                               gen, out)
    ref = master_rhs(terms, DissipatorSet(tuple((Operator(HilbertSpace((21,)), c), r)
                                                for c, r in chans)), 4.2, rho)
    np.testing.assert_allclose(out, ref, atol=1e-13)


def test_unstable_step_flagged():
    space = HilbertSpace((2,))
    h = 50 * np.array([[0, 1], [1, 0]], dtype=complex)
    rho = space.basis_state((0,)).density_matrix()
    res = integrate(HamiltonianTerms.constant(h), DissipatorSet(), rho, 5.0, 0.1, 1)
    assert not res.converged
    assert res.failure


def test_step_check(params11):
    terms = build_terms(HamiltonianSpec(params11, SPACE, Variant.FULL))
    rho = SPACE.basis_state((0, 0, 0, 0, 0)).density_matrix()
    with pytest.raises(ValueError, match="fastest phase"):
        integrate(terms, DissipatorSet(), rho, 1.0, 0.05)
    res = integrate(terms, DissipatorSet(), rho, 1.0, 0.05, override_step_check=True,
                    subspace=excitation_subspace(SPACE, 0))
    assert res.n_steps == 20


def test_argument_validation():
    space, h, diss = _single_mode(0.1)
    rho = space.basis_state((0,)).density_matrix()
    for kwargs in ({"dt": 0.0}, {"t_final": -1.0}, {"sample_every": 0}, {"store": "all"},
                   {"backend": "gpu"}):
        args = {"t_final": 1.0, "dt": 0.1, **kwargs}
        with pytest.raises(ValueError):
            integrate(h, diss, rho, **args)


def test_step_lands_on_final_time():
    space, h, diss = _single_mode(0.1)
    rho = space.basis_state((1,)).density_matrix()
    res = integrate(h, diss, rho, 1.0, 0.3, store="samples", sample_every=1, cavities=(0,))
    assert res.n_steps == 4
    assert res.times[-1] == pytest.approx(1.0)
    assert len(res.states) == len(res.times)


def test_subspace_must_be_invariant(params11):
    terms = build_terms(HamiltonianSpec(params11, SPACE, Variant.FULL))
    rho = SPACE.basis_state((1, 0, 0, 0, 0)).density_matrix()
    with pytest.raises(ValueError):
        integrate(terms, DissipatorSet(), rho, 1.0, 0.01,
                  subspace=excitation_subspace(SPACE, 0))


def test_trace_csv(tmp_path):
    space, h, diss = _single_mode(0.1)
    rho = space.basis_state((1,)).density_matrix()
    res = integrate(h, diss, rho, 1.0, 0.1, 5, cavities=(0,))
    path = tmp_path / "trace.csv"
    res.write_trace_csv(path)
    lines = path.read_bytes().split(b"\n")
    assert lines[0] == b"time_ns,trace_dev,herm_defect,spectral_floor,n_exc,n_photons_c1"
    assert len([x for x in lines if x]) == len(res.times) + 1


def test_from_params_channels(params11_lossy):
    diss = DissipatorSet.from_params(params11_lossy, SPACE)
    assert len(diss.collapse) == 2 + 3 * 3
    assert len(diss.dephasing) == 6
    with pytest.raises(ValueError):
        DissipatorSet.from_params(params11_lossy, HilbertSpace((2, 2, 2, 3, 3)))
