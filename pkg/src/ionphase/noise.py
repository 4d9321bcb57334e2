"""Motional heating and dephasing interleaved with the protocol's unitary blocks.

Heating uses the two-operator Kraus map K0 = √(1−ṅΔt)·I, K1 = √(ṅΔt)·a†,
renormalized after each step because Σ K†K = I + ṅΔt·n̂. A thermal-bath
Lindblad step (first order, Kraus form) with both a and a† jumps at rate ṅ is available as
``heating_mode="lindblad"``. Dephasing multiplies ρ_nm by
exp(−factor·γ·t·(n−m)²) with γ = 1/T_coh and factor 1/2 by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fock
from .fock import JointState
from .protocol import ProtocolSpec, apply_action, block_action, from_frame, to_frame, _check


@dataclass(frozen=True)
class NoiseModel:
    heating_rate: float = 0.0          # quanta per second
    coherence_time: float = math.inf   # ms
    step: float = 1.0                  # μs
    dephase_mode: str = "end-of-block"
    heating_mode: str = "kraus"
    dephase_factor: float = 0.5

    def __post_init__(self):
        if self.heating_rate < 0:
            raise ValueError("heating_rate must be >= 0")
        if not self.coherence_time > 0:
            raise ValueError("coherence_time must be > 0")
        if not self.step > 0:
            raise ValueError("step must be > 0")
        if self.heating_rate * self.step * 1e-6 >= 0.1:
            raise ValueError("heating_rate * step must be << 1")
        if self.dephase_mode not in ("end-of-block", "per-step"):
            raise ValueError("dephase_mode must be 'end-of-block' or 'per-step'")
        if self.heating_mode not in ("kraus", "lindblad"):
            raise ValueError("heating_mode must be 'kraus' or 'lindblad'")

    @property
    def dephase_rate(self) -> float:
        """γ_φ in 1/s."""
        return 0.0 if math.isinf(self.coherence_time) else 1e3 / self.coherence_time

    @property
    def is_trivial(self) -> bool:
        return self.heating_rate == 0 and self.dephase_rate == 0

    @classmethod
    def from_dict(cls, doc: dict | None) -> "NoiseModel":
        doc = dict(doc or {})
        if doc.get("coherence_time") is None:
            doc["coherence_time"] = math.inf
        return cls(**doc)


def _ladder(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def _kraus_heat(rho: np.ndarray, p: float) -> np.ndarray:
    """(1−p)ρ + p a†ρa on a matrix block (no normalization).

    a†ρa has elements sqrt(m n) ρ_{m−1,n−1} and is built by index shifting.
    """
    n = rho.shape[0]
    s = np.sqrt(np.arange(1, n, dtype=float))
    out = (1 - p) * rho
    out[1:, 1:] += p * (s[:, None] * rho[:-1, :-1] * s[None, :])
    return out


def _lindblad_heat(rho: np.ndarray, rate_dt: float) -> np.ndarray:
    """One step of ṅ(D[a†] + D[a])ρ, first order in ṅΔt.

    Written in Kraus form, K0 = I − (ṅΔt/2)(aa† + a†a) together with the two
    jumps, so the step stays completely positive; heating_step renormalizes.
    """
    n = rho.shape[0]
    a = _ladder(n)
    num = np.arange(n, dtype=float)
    # a a† = n+1 and a† a = n, except that a a† loses the top level when truncated
    aad = np.append(num[1:], 0.0)
    k0 = 1.0 - 0.5 * rate_dt * (aad + num)
    return k0[:, None] * rho * k0[None, :] + rate_dt * (a.T @ rho @ a + a @ rho @ a.T)


def heating_step(rho: np.ndarray, model: NoiseModel, dt: float | None = None) -> np.ndarray:
    """One heating step of length dt (μs) on an oscillator density matrix."""
    dt = model.step if dt is None else dt
    p = model.heating_rate * dt * 1e-6
    if p >= 0.1:
        raise ValueError(f"heating probability per step {p:.3g} is too large")
    if p == 0:
        return np.array(rho, dtype=complex)
    if model.heating_mode == "lindblad":
        out = _lindblad_heat(np.asarray(rho, dtype=complex), p)
    else:
        out = _kraus_heat(np.asarray(rho, dtype=complex), p)
    return out / np.trace(out).real


def dephasing_step(rho: np.ndarray, model: NoiseModel, elapsed: float) -> np.ndarray:
    """Damp coherences by exp(−factor·γ·elapsed·(n−m)²); elapsed in μs."""
    if elapsed < 0:
        raise ValueError("elapsed must be >= 0")
    g = model.dephase_rate * elapsed * 1e-6 * model.dephase_factor
    if g == 0:
        return np.array(rho, dtype=complex)
    n = np.arange(rho.shape[0])
    return rho * np.exp(-g * (n[:, None] - n[None, :]) ** 2)


def _each_block(frame: np.ndarray, fn) -> np.ndarray:
    """Apply an oscillator channel to every σ_y block of a joint density frame."""
    out = np.empty_like(frame)
    for i in range(2):
        for j in range(2):
            out[i, :, j, :] = fn(frame[i, :, j, :])
    return out


def _heat_joint(frame: np.ndarray, model: NoiseModel, dt: float) -> np.ndarray:
    p = model.heating_rate * dt * 1e-6
    if p >= 0.1:
        raise ValueError(f"heating probability per step {p:.3g} is too large")
    if model.heating_mode == "lindblad":
        out = _each_block(frame, lambda b: _lindblad_heat(b, p))
    else:
        out = _each_block(frame, lambda b: _kraus_heat(b, p))
    tr = np.trace(out[0, :, 0, :]).real + np.trace(out[1, :, 1, :]).real
    return out / tr


def noisy_evolution(spec: ProtocolSpec, state, model: NoiseModel,
                    config: fock.HilbertConfig | None = None, check_leakage: bool = True):
    """Run the protocol with heating and dephasing; returns a density matrix.

    Accepts a JointState (returns a JointState) or an oscillator state with the
    qubit in the protocol's σ_y eigenstate (returns an oscillator density).
    Every block with nonzero duration is cut into ⌈duration/step⌉ equal
    sub-steps, each a unitary slice followed by a heating step. Dephasing
    acts once per block on its full duration, or after every sub-step in
    ``per-step`` mode.
    """
    joint = isinstance(state, JointState)
    if joint:
        config = state.hilbert
        n = config.dim_fock
        frame = to_frame(state.density(), n)
    else:
        if config is None:
            raise ValueError("config is required for oscillator-only input")
        rho = fock.to_density(state)
    s = spec.qubit_sign
    for i, block in enumerate(spec.blocks()):
        action = block_action(block, spec, config)
        where = f"{i} ({block.kind})"
        if block.duration == 0 or model.is_trivial:
            if joint:
                frame = apply_action(action, frame)
            else:
                prop, th = action.branch(s)
                rho = prop.apply(th, rho)
        else:
            nsub = max(1, math.ceil(block.duration / model.step - 1e-9))
            dt = block.duration / nsub
            sub = action.scaled(1.0 / nsub)
            if joint:
                us = {sg: sub.branch(sg)[0].unitary(sub.branch(sg)[1]) for sg in (+1, -1)}
            else:
                prop, th = sub.branch(s)
                u = prop.unitary(th)
            for _ in range(nsub):
                if joint:
                    for a_, sa in ((0, +1), (1, -1)):
                        for b_, sb in ((0, +1), (1, -1)):
                            frame[a_, :, b_, :] = us[sa] @ frame[a_, :, b_, :] @ us[sb].conj().T
                    if model.heating_rate:
                        frame = _heat_joint(frame, model, dt)
                    if model.dephase_mode == "per-step" and model.dephase_rate:
                        frame = _each_block(frame, lambda b: dephasing_step(b, model, dt))
                else:
                    rho = u @ rho @ u.conj().T
                    if model.heating_rate:
                        rho = heating_step(rho, model, dt)
                    if model.dephase_mode == "per-step" and model.dephase_rate:
                        rho = dephasing_step(rho, model, dt)
            if model.dephase_mode == "end-of-block" and model.dephase_rate:
                if joint:
                    frame = _each_block(frame, lambda b: dephasing_step(b, model, block.duration))
                else:
                    rho = dephasing_step(rho, model, block.duration)
        if check_leakage:
            if joint:
                _check(frame, config, where, True)
            else:
                fock.check_leakage(rho, config, f"block {where}")
    if joint:
        return JointState(from_frame(frame), config)
    return rho
