import math

import numpy as np
import pytest

from ionphase import fock, protocol as pr
from ionphase.fock import HilbertConfig, JointState
from ionphase.noise import NoiseModel, dephasing_step, heating_step, noisy_evolution
from conftest import random_density


def trace_distance(a, b):
    return 0.5 * np.abs(np.linalg.eigvalsh(a - b)).sum()


def short_protocol():
    rounds = [{"t1p": 20.0, "t3": 30.0, "r": 0.2, "beta": -0.5}]
    return pr.build_cubic_protocol(rounds)


def test_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(heating_rate=-1)
    with pytest.raises(ValueError):
        NoiseModel(coherence_time=0)
    with pytest.raises(ValueError):
        NoiseModel(step=0)
    with pytest.raises(ValueError):
        NoiseModel(heating_rate=1e6, step=1.0)
    assert NoiseModel().is_trivial
    assert NoiseModel(coherence_time=50).dephase_rate == pytest.approx(20.0)
    assert NoiseModel.from_dict({"coherence_time": None}).is_trivial


def test_heating_zero_rate_is_identity(rng):
    rho = random_density(10, 3, rng)
    np.testing.assert_array_equal(heating_step(rho, NoiseModel()), rho)


def test_heating_on_vacuum():
    p = 1e-3
    model = NoiseModel(heating_rate=p * 1e6, step=1.0)
    rho = np.zeros((6, 6), complex)
    rho[0, 0] = 1
    out = heating_step(rho, model)
    assert out[0, 0].real == pytest.approx(1 - p)
    assert out[1, 1].real == pytest.approx(p)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-15)


def test_heating_on_single_phonon():
    p = 0.02
    model = NoiseModel(heating_rate=p * 1e6, step=1.0)
    rho = np.zeros((6, 6), complex)
    rho[1, 1] = 1
    # hand application of the two Kraus terms
    k0 = math.sqrt(1 - p) * np.eye(6)
    k1 = math.sqrt(p) * np.diag(np.sqrt(np.arange(1, 6)), -1)
    raw = k0 @ rho @ k0.T + k1 @ rho @ k1.T
    assert np.trace(raw).real == pytest.approx(1 + p)
    out = heating_step(rho, model)
    assert out[1, 1].real == pytest.approx((1 - p) / (1 + p))
    assert out[2, 2].real == pytest.approx(2 * p / (1 + p))
    np.testing.assert_allclose(out, raw / np.trace(raw), atol=1e-15)


@pytest.mark.parametrize("mode", ["kraus", "lindblad"])
def test_heating_gives_valid_state_and_raises_n(mode, rng):
    model = NoiseModel(heating_rate=5e3, step=1.0, heating_mode=mode)
    rho = random_density(30, 4, rng)
    rho[20:, :] = 0
    rho[:, 20:] = 0
    rho /= np.trace(rho)
    n = np.arange(30)
    prev = np.real(np.trace(np.diag(n) @ rho))
    for _ in range(20):
        rho = heating_step(rho, model)
        w = np.linalg.eigvalsh(rho)
        assert w.min() > -1e-12
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-14)
        cur = np.real(np.trace(np.diag(n) @ rho))
        assert cur >= prev
        prev = cur


def test_dephasing_examples(rng):
    model = NoiseModel(coherence_time=1.0)   # γ = 1000/s
    diag = np.diag([0.5, 0.3, 0.2]).astype(complex)
    np.testing.assert_array_equal(dephasing_step(diag, model, 123.0), diag)
    rho = random_density(3, 3, rng)
    np.testing.assert_array_equal(dephasing_step(rho, model, 0.0), rho)
    out = dephasing_step(rho, model, 2000.0)   # γt = 2
    assert out[0, 1] == pytest.approx(rho[0, 1] * math.exp(-1))
    assert out[0, 2] == pytest.approx(rho[0, 2] * math.exp(-4))
    np.testing.assert_allclose(np.diag(out), np.diag(rho))
    assert np.trace(out) == pytest.approx(np.trace(rho))
    with pytest.raises(ValueError):
        dephasing_step(rho, model, -1.0)


def test_dephasing_preserves_populations_and_positivity(rng):
    model = NoiseModel(coherence_time=0.05)
    rho = random_density(12, 5, rng)
    out = dephasing_step(rho, model, 500.0)
    np.testing.assert_allclose(np.diag(out), np.diag(rho), atol=1e-15)
    assert np.linalg.eigvalsh(out).min() > -1e-12


def test_trivial_model_matches_noiseless(small):
    spec = short_protocol()
    psi = fock.coherent_state(0.3, small)
    rho = noisy_evolution(spec, psi, NoiseModel(), small)
    ref = pr.run_oscillator(spec, psi, small)
    ref = np.outer(ref, ref.conj()) if ref.ndim == 1 else ref
    np.testing.assert_allclose(rho, ref, atol=1e-8)


def test_joint_and_oscillator_paths_agree(small):
    spec = short_protocol()
    model = NoiseModel(heating_rate=200.0, coherence_time=5.0, step=5.0)
    psi = fock.basis(0, small)
    osc = noisy_evolution(spec, psi, model, small)
    joint = noisy_evolution(spec, JointState.product(spec.qubit_init, psi, small),
                            model)
    np.testing.assert_allclose(joint.oscillator(), osc, atol=1e-10)


def test_noisy_protocol_populations_and_n(small):
    spec = short_protocol()
    psi = fock.basis(0, small)
    clean = noisy_evolution(spec, psi, NoiseModel(), small)
    deph = noisy_evolution(spec, psi, NoiseModel(coherence_time=1.0), small)
    heat = noisy_evolution(spec, psi, NoiseModel(heating_rate=1e3), small)
    for rho in (deph, heat):
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
        assert np.linalg.eigvalsh(rho).min() > -1e-10
    n = np.arange(small.dim_fock)
    assert np.real(np.diag(heat)) @ n > np.real(np.diag(clean)) @ n


def test_step_halving_converges(small):
    spec = short_protocol()
    psi = fock.basis(0, small)
    rates = dict(heating_rate=10.0, coherence_time=50.0)
    coarse = noisy_evolution(spec, psi, NoiseModel(step=1.0, **rates), small)
    fine = noisy_evolution(spec, psi, NoiseModel(step=0.5, **rates), small)
    assert trace_distance(coarse, fine) < 1e-4


def test_per_step_and_end_of_block_dephasing_agree(small):
    # the dephasing channel commutes with itself, but not with the unitaries,
    # so the modes differ only at first order in γ·t
    spec = short_protocol()
    psi = fock.basis(0, small)
    a = noisy_evolution(spec, psi, NoiseModel(coherence_time=50.0), small)
    b = noisy_evolution(spec, psi, NoiseModel(coherence_time=50.0, dephase_mode="per-step"), small)
    assert trace_distance(a, b) < 1e-2
