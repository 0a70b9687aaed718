import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intercavity.model import derive_params
from intercavity.protocol import (SUMMARY_COLUMNS, IntegratorSettings, Model, RegimeError,
                                  run_entanglement, run_transfer)


@settings(max_examples=10, deadline=None)
@given(b=st.floats(6, 25), sign=st.sampled_from([-1.0, 1.0]), ratio=st.floats(1.2, 3.0))
def test_effective_entanglement_exact(b, sign, ratio):
    p = derive_params(b, sign * 0.5, sign * 0.5 * ratio, 6.5)
    run = run_entanglement(p, Model.EFFECTIVE)
    assert run.fidelity == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("alpha", [0.0, 0.3, 1 / math.sqrt(2), 0.9, -0.6])
def test_effective_transfer_exact(params11, alpha):
    run = run_transfer(params11, Model.EFFECTIVE, alpha)
    assert run.fidelity == pytest.approx(1.0, abs=1e-8)


def test_complex_amplitudes(params11):
    alpha, beta = 0.6j, 0.8 * complex(math.cos(0.3), math.sin(0.3))
    run = run_transfer(params11, Model.EFFECTIVE, alpha, beta)
    assert run.fidelity == pytest.approx(1.0, abs=1e-8)
    assert run.summary_row()["alpha"] == repr(0.6j)


@pytest.mark.parametrize("model", [Model.IDEAL_UNITARY, Model.FULL_UNITARY, Model.EFFECTIVE])
def test_ground_state_transfer_is_trivial(params11, model):
    run = run_transfer(params11, model, alpha=1.0)
    assert run.fidelity == pytest.approx(1.0, abs=1e-6)


def test_model_ordering(params11, params11_lossy):
    eff = run_entanglement(params11, Model.EFFECTIVE).fidelity
    full = run_entanglement(params11, Model.FULL_UNITARY).fidelity
    lossy = run_entanglement(params11_lossy, Model.FULL_LINDBLAD).fidelity
    assert eff >= full >= lossy
    assert 0.9 < lossy < 1.0


def test_lindblad_run_diagnostics(params11_lossy):
    run = run_entanglement(params11_lossy, Model.FULL_LINDBLAD)
    assert run.converged
    assert run.t_op == pytest.approx(60.5)
    assert 0 < run.max_photons < 0.05
    assert run.coupler_population(1) > 0.9
    row = run.summary_row()
    assert tuple(row) == SUMMARY_COLUMNS
    assert row["converged"] == "true"
    assert row["alpha"] == ""


def test_crosstalk_effect_is_small(params11_lossy):
    f0 = run_entanglement(params11_lossy.with_g12(0.0)).fidelity
    f2 = run_entanglement(params11_lossy).fidelity
    assert abs(f0 - f2) <= 0.01


def test_truncation_beyond_three_changes_nothing(params11_lossy):
    a = run_entanglement(params11_lossy, settings=IntegratorSettings(truncation=3))
    b = run_entanglement(params11_lossy, settings=IntegratorSettings(truncation=4))
    assert a.fidelity == pytest.approx(b.fidelity, abs=1e-12)


def test_backends_give_same_fidelity(params11_lossy):
    a = run_transfer(params11_lossy, alpha=0.5)
    b = run_transfer(params11_lossy, alpha=0.5, settings=IntegratorSettings(backend="numpy"))
    assert a.fidelity == pytest.approx(b.fidelity, abs=1e-12)


def test_regime_gate():
    p = derive_params(4.0, -0.5, -1.0, 6.5)
    with pytest.raises(RegimeError):
        run_entanglement(p, Model.EFFECTIVE)
    run = run_entanglement(p, Model.EFFECTIVE, override_regime=True)
    assert run.fidelity == pytest.approx(1.0, abs=1e-8)


def test_settings_validation():
    with pytest.raises(ValueError):
        IntegratorSettings(truncation=2)
    with pytest.raises(ValueError):
        IntegratorSettings(dt=0)
    with pytest.raises(ValueError):
        IntegratorSettings(sample_every=0)


def test_transfer_amplitude_validation(params11):
    with pytest.raises(ValueError):
        run_transfer(params11, Model.EFFECTIVE, 0.6, 0.6)


def test_fidelity_bounds(params11_lossy):
    run = run_transfer(params11_lossy, alpha=0.0)
    assert 0.0 <= run.fidelity <= 1.0
