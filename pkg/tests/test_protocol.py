import math

import numpy as np
import pytest

from ionphase import fock, protocol as pr
from ionphase.fock import HilbertConfig, JointState, TruncationError, make_operators
from ionphase.metrics import fidelity


def zero_rounds(n):
    return [dict(t1p=0.0, t3=0.0, t2=0.0, beta=0.0, r=0.0) for _ in range(n)]


def test_empty_protocol_is_identity(small):
    spec = pr.build_cubic_protocol(zero_rounds(2))
    assert spec.blocks() == []
    psi = fock.coherent_state(0.4, small)
    np.testing.assert_allclose(pr.run_oscillator(spec, psi, small), psi)
    np.testing.assert_allclose(pr.protocol_unitary(spec, small), np.eye(small.dim_fock))
    js = pr.apply_protocol(spec, JointState.product("minus_y", fock.basis(0, small), small))
    assert abs(js.data[small.dim_fock]) == pytest.approx(1 / math.sqrt(2))


def test_round_count_checked():
    with pytest.raises(ValueError):
        pr.build_cubic_protocol(zero_rounds(2), n_rounds=3)
    with pytest.raises(ValueError):
        pr.build_cubic_protocol([])
    with pytest.raises(ValueError):
        pr.build_cubic_protocol([dict(t1p=1.0, t3=1.0)])  # no squeezing given


def test_table1_total_time_and_order():
    spec = pr.table1_protocol()
    assert spec.total_time == pytest.approx(796.95)
    assert spec.n_rounds == 3
    assert [b.kind for b in spec.rounds[0]] == ["D", "U3", "U1p", "S"]
    db = [fock.squeezing_db(b.value.real) for b in spec.blocks() if b.kind == "S"]
    np.testing.assert_allclose(db, [0.08, 4.91, -8.06])


def test_presqueeze_bracket():
    rounds = [dict(t1p=10.0, t3=20.0, r=0.1, beta=-1.0)]
    spec = pr.build_cubic_protocol(rounds, pre_squeeze=0.772)
    blocks = spec.blocks()
    assert blocks[0].kind == "S" and blocks[0].value == 0.772
    assert blocks[-1].kind == "S" and blocks[-1].value == -0.772
    plain = pr.build_cubic_protocol(rounds)
    assert pr.build_cubic_protocol(rounds, pre_squeeze=0.0).blocks() == plain.blocks()


def test_time_additivity_with_displacement_cost():
    rounds = [dict(t1p=10.0, t3=20.0, t2=5.0, r=0.1, beta=-1.0)] * 2
    assert pr.build_cubic_protocol(rounds).total_time == pytest.approx(70.0)
    assert pr.build_cubic_protocol(rounds, displacement_cost=2.5).total_time == pytest.approx(75.0)


def test_sideband_displacement_matches_ideal_at_leading_order():
    c = HilbertConfig(60, 10)
    modes = {1: pr.HamiltonianMode("ld", 1), 3: pr.HamiltonianMode("ld", 1)}
    for sign_init in ("plus_y", "minus_y"):
        for beta in (-0.8, 0.6):
            rounds = [dict(t1p=0.0, t3=0.0, r=0.0, beta=beta)]
            ideal = pr.build_cubic_protocol(rounds, modes=modes, qubit_init=sign_init)
            pulse = pr.build_cubic_protocol(rounds, modes=modes, qubit_init=sign_init,
                                            displacement="sideband")
            assert pulse.rounds[0][0].kind == "U1"
            assert pulse.total_time == pytest.approx(4 * abs(beta) / (0.3 * 0.3))
            a = pr.run_oscillator(ideal, fock.basis(0, c), c)
            b = pr.run_oscillator(pulse, fock.basis(0, c), c)
            assert abs(np.vdot(a, b)) ** 2 == pytest.approx(1.0, abs=1e-10)


def test_qubit_factorizes_exactly():
    c = HilbertConfig(150, 20)
    spec = pr.table1_protocol()
    for label in ("plus_y", "minus_y"):
        spec_l = pr.ProtocolSpec(spec.rounds, spec.system, spec.omegas, spec.phases, spec.modes, label)
        out = pr.apply_protocol(spec_l, JointState.product(label, fock.basis(0, c), c),
                                check_leakage=False)
        q = fock.qubit_state(label)
        overlap = np.vdot(q, out.qubit() @ q).real
        assert 1 - overlap < 1e-10


def test_joint_and_fast_paths_agree():
    c = HilbertConfig(100, 20)
    spec = pr.table1_protocol()
    psi = fock.coherent_state(0.3, c)
    fast = pr.run_oscillator(spec, psi, c, check_leakage=False)
    joint = pr.apply_protocol(spec, JointState.product("minus_y", psi, c), check_leakage=False)
    np.testing.assert_allclose(joint.oscillator(), np.outer(fast, fast.conj()), atol=1e-10)
    u = pr.protocol_unitary(spec, c)
    np.testing.assert_allclose(u @ psi, fast, atol=1e-10)


def test_leakage_aborts_with_block_name(small):
    spec = pr.table1_protocol()
    with pytest.raises(TruncationError, match=r"block \d+ \((U3|U1p|S|D)\)"):
        pr.run_oscillator(spec, fock.basis(0, small), small)


def test_permuting_round_order_changes_fidelity():
    c = HilbertConfig(150, 20)
    spec = pr.table1_protocol()
    tg = pr.TargetGate()
    psi = fock.basis(0, c)
    f0 = fidelity(pr.run_oscillator(spec, psi, c, check_leakage=False), pr.target_state(tg, psi, c))
    swapped = tuple((r[0], r[2], r[1], r[3]) for r in spec.rounds)
    spec2 = pr.ProtocolSpec(swapped, spec.system, spec.omegas, spec.phases, spec.modes, spec.qubit_init)
    f1 = fidelity(pr.run_oscillator(spec2, psi, c, check_leakage=False), pr.target_state(tg, psi, c))
    assert abs(f0 - f1) > 1e-3


def test_quartic_protocol_identity_and_parity():
    c = HilbertConfig(60, 10)
    spec = pr.build_quartic_protocol(0, 0, 0, 0, 0, 0, 0)
    assert spec.blocks() == []
    spec = pr.build_quartic_protocol(0.0, 0.0, 40.0, 0.3, 0.0, 0.0, 0.0)
    out = pr.run_oscillator(spec, fock.basis(0, c), c)
    parity = np.vdot(out, np.exp(1j * np.pi * np.arange(c.dim_fock)) * out).real
    assert parity == pytest.approx(1.0, abs=1e-12)
    assert np.sum(np.abs(out[1::2]) ** 2) < 1e-20
    assert np.sum(np.abs(out[4::4]) ** 2) > 1e-4


def test_quartic_sequence_order():
    spec = pr.build_quartic_protocol(1.0, 0.1, 2.0, 0.2, 0.3, 0.4, -0.5)
    assert [b.kind for b in spec.blocks()] == ["S", "U2", "U4", "R", "S"]
    assert spec.native_basis == "X"


def test_simultaneous_variant():
    c = HilbertConfig(60, 10)
    assert pr.build_simultaneous_variant(0.0).blocks() == []
    with pytest.raises(ValueError):
        pr.build_simultaneous_variant(-1.0)
    spec = pr.build_simultaneous_variant(10.0, beta=-0.5, r=0.1)
    assert [b.kind for b in spec.blocks()] == ["D", "SIM", "S"]
    # with a vanishing third-sideband amplitude the pulse reduces to a plain U1 pulse
    modes = pr.table1_modes()
    only1 = pr.build_simultaneous_variant(10.0, omegas={1: 0.3, 3: 1e-300}, modes=modes)
    u1 = pr.ProtocolSpec(((pr.GateBlock("U1", 10.0),),), modes=modes)
    a = pr.run_oscillator(only1, fock.basis(0, c), c)
    b = pr.run_oscillator(u1, fock.basis(0, c), c)
    assert abs(np.vdot(a, b)) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_ideal_gate_properties():
    c = HilbertConfig(80, 16)
    np.testing.assert_allclose(pr.ideal_gate(pr.TargetGate(3, 0.0), c), np.eye(80))
    ops = make_operators(c)
    u = pr.ideal_gate(pr.TargetGate(3, 0.7, "X"), c)
    assert np.max(np.abs(u.conj().T @ u - np.eye(80))) < 1e-10
    k = c.interior
    assert np.max(np.abs((u @ ops.x_quad - ops.x_quad @ u)[:k, :k])) < 1e-8
    with pytest.raises(ValueError):
        pr.TargetGate(5)


def test_basis_rotation_maps_p_gate_to_x_gate():
    c = HilbertConfig(120, 20)
    psi = fock.basis(0, c)
    gen = pr.target_state(pr.TargetGate(3, 0.3, "P"), psi, c)
    g, t = pr.compare_states(gen, psi, pr.TargetGate(3, 0.3, "X"), c, native_basis="P")
    assert fidelity(g, t) == pytest.approx(1.0, abs=1e-8)


def test_residual_report_exact_and_injected_squeezing():
    c = HilbertConfig(150, 20)
    tg = pr.TargetGate()
    ut = pr.ideal_gate(tg, c)
    rep = pr.residual_report(ut, tg, c)
    assert max(abs(v) for v in rep.coefficients.values()) < 1e-8
    rep = pr.residual_report(ut @ fock.squeezing(0.1, c), tg, c)
    assert rep.quadratic["X^1P^1"] == pytest.approx(0.1, abs=1e-3)
    assert rep.dominant_order == 2
    assert set(rep.quintic) == {f"X^{j}P^{5 - j}" for j in range(6)}


def test_residual_report_rejects_bad_block(small):
    with pytest.raises(ValueError):
        pr.residual_report(np.eye(small.dim_fock), pr.TargetGate(), small, fit_dim=30, block_dim=10)


def test_json_round_trip():
    doc = {"sequence": "cubic", "modes": "table1", "h3": "ld", "pre_squeeze": 0.2,
           "rounds": [{"t1p": 10.0, "t3": 20.0, "t2": 3.0, "beta": -1.0, "r_db": 2.0}]}
    spec = pr.protocol_from_dict(doc)
    assert spec.mode(3).kind == "ld"
    assert spec.total_time == pytest.approx(33.0)
    out = pr.protocol_to_dict(spec)
    assert out["schema_version"] == 1 and out["pre_squeeze"] == 0.2
    assert [b["kind"] for b in out["rounds"][0]] == ["D", "U3", "U1p", "S"]
    assert pr.with_h3_mode(spec, "full").mode(3).kind == "full"
    q = pr.protocol_from_dict({"sequence": "quartic", "quartic": dict(
        t2=1.0, phi2=0.0, t4=2.0, phi4=0.0, theta=0.1, r_pre=0.2, r_post=-0.2)})
    assert q.native_basis == "X"
    tg = pr.target_from_dict({"j": 4, "zeta": 0.25, "basis": "X"})
    assert tg == pr.TargetGate(4, 0.25, "X")
