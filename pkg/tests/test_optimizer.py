import json

import numpy as np
import pytest

from ionphase import fock, metrics, optimizer as opt, protocol as pr
from ionphase.fock import HilbertConfig
from ionphase.protocol import TargetGate

SPHERE = opt.SearchSpace(("x", "y", "z"), (-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def test_search_space_defaults_and_validation():
    space = opt.cubic_space(3)
    assert space.dim == 12
    assert space.names[:4] == ("t1p_1", "t3_1", "r_1", "beta_1")
    lo, hi = space.arrays()
    np.testing.assert_array_equal(lo[:4], [0, 0, -2, -5])
    np.testing.assert_array_equal(hi[:4], [300, 300, 2, 2])
    assert opt.cubic_space(1, presqueeze=True).names[0] == "r_pre"
    with pytest.raises(ValueError):
        opt.SearchSpace(("a",), (1.0,), (1.0,))
    with pytest.raises(ValueError):
        opt.SearchSpace(("a", "b"), (0.0,), (1.0,))


def test_de_config_validation():
    with pytest.raises(ValueError):
        opt.DEConfig(population=3)
    with pytest.raises(ValueError):
        opt.DEConfig(crossover=0.0)
    with pytest.raises(ValueError):
        opt.DEConfig(mutation=(0.5, 2.5))
    assert opt.DEConfig(population=10, per_dimension=True).size(4) == 40


def test_sphere_reaches_minimum():
    res = opt.differential_evolution(sphere, SPHERE, opt.DEConfig(seed=3, max_iters=200))
    assert res.fun < 1e-6
    assert res.generations <= 200


def test_seeded_runs_are_identical():
    cfg = opt.DEConfig(seed=11, max_iters=30)
    a = opt.differential_evolution(sphere, SPHERE, cfg)
    b = opt.differential_evolution(sphere, SPHERE, cfg)
    assert a.history == b.history
    np.testing.assert_array_equal(a.x, b.x)
    c = opt.differential_evolution(sphere, SPHERE, opt.DEConfig(seed=12, max_iters=30))
    assert c.history != a.history


def test_parallel_matches_serial():
    a = opt.differential_evolution(sphere, SPHERE, opt.DEConfig(seed=5, max_iters=20))
    b = opt.differential_evolution(sphere, SPHERE, opt.DEConfig(seed=5, max_iters=20, workers=4))
    assert a.history == b.history


def test_history_is_monotone_and_bounds_respected():
    seen = []
    space = opt.SearchSpace(("a", "b"), (0.5, -3.0), (2.0, -1.0))

    def f(x):
        seen.append(np.array(x))
        return float((x[0] - 0.5) ** 2 + (x[1] + 1) ** 2)

    res = opt.differential_evolution(f, space, opt.DEConfig(seed=2, max_iters=60))
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    assert all(space.contains(x) for x in seen)
    # the optimum sits on a corner of the box
    np.testing.assert_allclose(res.x, [0.5, -1.0], atol=1e-3)


def test_budget_exhaustion_is_flagged():
    res = opt.differential_evolution(sphere, SPHERE, opt.DEConfig(seed=1, max_iters=3))
    assert not res.converged and "max_iters" in res.message
    assert res.generations == 3


def test_checkpoint_resume_reproduces_full_run(tmp_path):
    full = opt.differential_evolution(sphere, SPHERE, opt.DEConfig(seed=4, max_iters=40))
    ck = tmp_path / "ck.json"
    opt.differential_evolution(sphere, SPHERE, opt.DEConfig(seed=4, max_iters=15), checkpoint=str(ck))
    state = json.loads(ck.read_text())
    assert state["generation"] == 15
    resumed = opt.differential_evolution(sphere, SPHERE, opt.DEConfig(seed=4, max_iters=40),
                                         resume=str(ck))
    assert resumed.history == full.history
    np.testing.assert_array_equal(resumed.x, full.x)


def test_evaluate_identity_against_trivial_target(small):
    obj = opt.Objective(opt.cubic_builder(1), TargetGate(3, 0.0), small)
    assert opt.evaluate(np.zeros(4), obj, opt.cubic_space(1)) == pytest.approx(-1.0, abs=1e-12)


def test_evaluate_identity_against_cubic_target(medium):
    obj = opt.Objective(opt.cubic_builder(1), TargetGate(3, 1.0), medium)
    vac = fock.basis(0, medium)
    expected = metrics.fidelity(vac, pr.target_state(TargetGate(3, 1.0), vac, medium))
    loss = opt.evaluate(np.zeros(4), obj)
    assert loss == pytest.approx(-expected, abs=1e-12)
    assert loss > -1


def test_evaluate_rejects_out_of_bounds(small):
    obj = opt.Objective(opt.cubic_builder(1), TargetGate(3, 0.0), small)
    with pytest.raises(ValueError):
        opt.evaluate([0, 0, 0, 5.0], obj, opt.cubic_space(1))


def test_evaluate_penalizes_leakage():
    cfg = HilbertConfig(24, 4)
    obj = opt.Objective(opt.cubic_builder(1), TargetGate(3, 1.0), cfg)
    assert opt.evaluate([0, 0, 2.0, -5.0], obj) == 1.0


def test_ensemble_weights_are_normalized(small):
    obj = opt.Objective(opt.cubic_builder(1), TargetGate(3, 0.0), small,
                        inputs=(opt.InputState(0.0, weight=2), opt.InputState(0.5j, weight=6)),
                        kind="ensemble-average")
    assert [i.weight for i in obj.inputs] == [0.25, 0.75]
    assert obj.fidelity(np.zeros(4)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        opt.Objective(opt.cubic_builder(1), TargetGate(3, 0.0), small, kind="bogus")


def test_table1_vector_round_trip(medium):
    spec = opt.cubic_builder(3)(opt.table1_vector())
    ref = pr.table1_protocol()
    # squeezing durations are not search parameters; the builder leaves them at zero
    t2 = sum(rd["t2"] for rd in pr.TABLE1_ROUNDS)
    assert spec.total_time == pytest.approx(ref.total_time - t2)
    vac = fock.basis(0, medium)
    np.testing.assert_allclose(pr.run_oscillator(spec, vac, medium, check_leakage=False),
                               pr.run_oscillator(ref, vac, medium, check_leakage=False), atol=1e-12)


def test_perturbation_zero_magnitude():
    calls = []

    def f(x):
        calls.append(x.copy())
        return 1.0 - float(np.sum(x ** 2))

    x0 = np.array([0.1, 0.2, 0.3])
    stats = opt.perturbation_study(x0, 0.0, 7, f)
    assert stats["min"] == stats["max"] == stats["unperturbed"]
    assert stats["mean"] == pytest.approx(stats["unperturbed"], abs=1e-15)
    with pytest.raises(ValueError):
        opt.perturbation_study(x0, -0.1, 3, f)


def test_perturbation_respects_magnitude_and_mask():
    x0 = np.array([1.0, 2.0, -3.0])
    seen = []
    opt.perturbation_study(x0, 0.01, 50, lambda x: seen.append(x) or 0.0, mask=[True, False, True])
    seen = np.array(seen[:-1])
    assert np.all(np.abs(seen / x0 - 1) <= 0.01 + 1e-15)
    assert np.all(seen[:, 1] == 2.0)


def test_cubicity_band(medium):
    vac = fock.basis(0, medium)
    band = opt.cubicity_fluctuation_band(TargetGate(3, 1.0), 0.02, vac, medium)
    assert 0.99 < band["plus"] < 1 and 0.99 < band["minus"] < 1
    wide = opt.cubicity_fluctuation_band(TargetGate(3, 1.0), 0.1, vac, medium)
    assert wide["plus"] < band["plus"]
