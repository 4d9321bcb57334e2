"""Gate sequences built from sideband pulses and ideal Gaussian operations.

Every sideband Hamiltonian here has the form σ_y ⊗ A, so a joint state is
evolved in the σ_y eigenbasis: the |+y⟩ branch sees exp(+itA) and the |−y⟩
branch sees exp(−itA). A qubit prepared in a σ_y eigenstate therefore stays
exactly disentangled from the motion.

Blocks inside a round are listed in application order (first applied first).
The cubic round is D(β) → U3(t3) → U1'(t1') → S(r).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import polar

from . import fock
from .fock import HermitianPropagator, HilbertConfig, TruncationError, make_operators
from .sideband import HamiltonianMode, SystemParams, TwoToneDrive, sideband_coupling

SIDEBAND_KINDS = {"U1": 1, "U1p": 1, "U2": 2, "U3": 3, "U4": 4}
IDEAL_KINDS = ("D", "S", "R")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GateBlock:
    """One operation of a sequence.

    ``duration`` (μs) is the pulse length for sideband kinds and bookkeeping
    time for ideal ones. ``value`` holds β for D, r for S and θ for R.
    ``phi`` overrides the protocol's default drive phase, ``ks`` lists the
    sidebands driven together by a ``SIM`` block.
    """

    kind: str
    duration: float = 0.0
    value: complex = 0.0
    phi: float | None = None
    ks: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in SIDEBAND_KINDS and self.kind not in IDEAL_KINDS and self.kind != "SIM":
            raise ValueError(f"unknown block kind {self.kind!r}")
        if not self.duration >= 0:
            raise ValueError(f"{self.kind}: duration must be >= 0")
        if not np.isfinite(complex(self.value)):
            raise ValueError(f"{self.kind}: parameter must be finite")
        if self.kind == "SIM" and not self.ks:
            raise ValueError("SIM block needs at least one sideband order")

    @property
    def sidebands(self) -> tuple[int, ...]:
        if self.kind == "SIM":
            return self.ks
        if self.kind in SIDEBAND_KINDS:
            return (SIDEBAND_KINDS[self.kind],)
        return ()


@dataclass(frozen=True)
class TargetGate:
    order: int = 3
    zeta: float = 1.0
    basis: str = "P"

    def __post_init__(self):
        if self.order not in (3, 4):
            raise ValueError("only cubic (3) and quartic (4) targets are supported")
        if self.basis not in ("X", "P"):
            raise ValueError("basis must be 'X' or 'P'")
        if not np.isfinite(self.zeta):
            raise ValueError("zeta must be finite")


@dataclass(frozen=True)
class ProtocolSpec:
    rounds: tuple[tuple[GateBlock, ...], ...]
    system: SystemParams = SystemParams()
    omegas: dict = field(default_factory=lambda: {1: 0.3, 3: 0.3})
    phases: dict = field(default_factory=lambda: {1: 0.0, 3: math.pi})
    modes: dict = field(default_factory=dict)
    qubit_init: str = "minus_y"
    pre_squeeze: float = 0.0
    post: tuple[GateBlock, ...] = ()
    native_basis: str = "P"
    name: str = ""

    def __post_init__(self):
        if self.qubit_init not in ("plus_y", "minus_y"):
            raise ValueError("qubit_init must be 'plus_y' or 'minus_y'")

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def blocks(self) -> list[GateBlock]:
        """All blocks in application order, including the pre-squeeze bracket."""
        out = []
        if self.pre_squeeze:
            out.append(GateBlock("S", value=self.pre_squeeze))
        for rnd in self.rounds:
            out.extend(rnd)
        if self.pre_squeeze:
            out.append(GateBlock("S", value=-self.pre_squeeze))
        out.extend(self.post)
        return out

    @property
    def total_time(self) -> float:
        return float(sum(b.duration for b in self.blocks()))

    def mode(self, k: int) -> HamiltonianMode:
        return self.modes.get(k, HamiltonianMode())

    def drive(self, k: int, phi: float | None = None) -> TwoToneDrive:
        if k not in self.omegas:
            raise ValueError(f"no Rabi frequency configured for sideband {k}")
        return TwoToneDrive(k, self.omegas[k], self.phases.get(k, 0.0) if phi is None else phi)

    @property
    def qubit_sign(self) -> int:
        return +1 if self.qubit_init == "plus_y" else -1


# --------------------------------------------------------------------------
# presets


def table1_modes(h3: str = "full") -> dict:
    """Hamiltonian assembly that reproduces the published Table-1 numbers.

    H1 keeps the two displayed terms (η and η³), H3 keeps the printed series
    either in full or only its leading η³ term. Neither carries e^{−η²/2}.
    """
    h1 = HamiltonianMode("ld", order=2, series="printed", prefactor=False)
    if h3 == "full":
        m3 = HamiltonianMode("full", series="printed", prefactor=False)
    elif h3 == "ld":
        m3 = HamiltonianMode("ld", order=1, series="printed", prefactor=False)
    else:
        raise ValueError("h3 must be 'full' or 'ld'")
    return {1: h1, 3: m3}


# Table 1: (t1', t3, t2, β) per round, plus squeezing in dB from its caption.
TABLE1_ROUNDS = (
    dict(t1p=92.35, t3=88.75, t2=13.6, beta=-2.84, r_db=0.08),
    dict(t1p=77.58, t3=119.63, t2=83.9, beta=2.00, r_db=4.91),
    dict(t1p=25.99, t3=157.65, t2=137.5, beta=-2.54, r_db=-8.06),
)


def table1_protocol(h3: str = "full") -> ProtocolSpec:
    return build_cubic_protocol(TABLE1_ROUNDS, modes=table1_modes(h3), name="table1")


# --------------------------------------------------------------------------
# builders


def _round_r(rd: dict) -> float:
    if "r" in rd and rd["r"] is not None:
        return float(rd["r"])
    if "r_db" in rd and rd["r_db"] is not None:
        return fock.r_from_db(rd["r_db"])
    raise ValueError("each round needs a squeezing parameter 'r' or 'r_db'")


def displacement_pulse_time(beta: float, omega1: float, eta: float) -> float:
    """First-sideband pulse length whose leading-order action is D(±β).

    With H1 ≈ (i/4)Ωη σ_y(a† − a), a σ_y = s branch evolves by D(−sΩηt/4).
    """
    return 4 * abs(beta) / (omega1 * eta)


def build_cubic_protocol(rounds, system: SystemParams | None = None, omegas: dict | None = None,
                         phases: dict | None = None, modes: dict | None = None,
                         qubit_init: str = "minus_y", pre_squeeze: float = 0.0,
                         displacement: str = "ideal", displacement_cost: float = 0.0,
                         n_rounds: int | None = None, name: str = "") -> ProtocolSpec:
    """N-round cubic sequence; each round is D(β) → U3 → U1' → S(r).

    ``rounds`` is a list of dicts with keys t1p, t3, t2, beta and r or r_db
    (t1 is optional and only used when ``displacement='sideband'``). With
    ``displacement='sideband'`` the displacement is a first-sideband pulse of
    length 4|β|/(Ω₁η) whose phase is chosen from the sign of β.
    """
    rounds = list(rounds)
    if n_rounds is not None and n_rounds != len(rounds):
        raise ValueError(f"expected {n_rounds} rounds, got {len(rounds)}")
    if not rounds:
        raise ValueError("a protocol needs at least one round")
    system = system or SystemParams()
    omegas = dict(omegas or {1: 0.3, 3: 0.3})
    phases = dict(phases or {1: 0.0, 3: math.pi})
    modes = dict(modes if modes is not None else table1_modes())
    sign = +1 if qubit_init == "plus_y" else -1
    built = []
    for rd in rounds:
        beta = float(np.real(rd.get("beta", 0.0)))
        blocks = []
        if displacement == "ideal":
            if beta or displacement_cost:
                blocks.append(GateBlock("D", duration=displacement_cost, value=beta))
        elif displacement == "sideband":
            if beta:
                t1 = rd.get("t1") or displacement_pulse_time(beta, omegas[1], system.eta)
                # D(−sΩηt/4) has the sign of β when s·β < 0 at φ1; otherwise flip the phase
                phi = phases.get(1, 0.0) + (0.0 if sign * beta < 0 else math.pi)
                blocks.append(GateBlock("U1", duration=t1, phi=phi))
        else:
            raise ValueError("displacement must be 'ideal' or 'sideband'")
        blocks.append(GateBlock("U3", duration=float(rd.get("t3", 0.0))))
        blocks.append(GateBlock("U1p", duration=float(rd.get("t1p", 0.0))))
        blocks.append(GateBlock("S", duration=float(rd.get("t2", 0.0)), value=_round_r(rd)))
        built.append(tuple(b for b in blocks if b.duration or b.value))
    return ProtocolSpec(tuple(built), system, omegas, phases, modes, qubit_init,
                        pre_squeeze, (), "P", name)


def build_quartic_protocol(t2: float, phi2: float, t4: float, phi4: float, theta: float,
                           r_pre: float, r_post: float, system: SystemParams | None = None,
                           omegas: dict | None = None, modes: dict | None = None,
                           qubit_init: str = "minus_y", name: str = "quartic") -> ProtocolSpec:
    """S(r_pre) → U2(t2, φ2) → U4(t4, φ4) → R(θ) → S(r_post)."""
    blocks = (
        GateBlock("S", value=r_pre),
        GateBlock("U2", duration=t2, phi=phi2),
        GateBlock("U4", duration=t4, phi=phi4),
        GateBlock("R", value=theta),
        GateBlock("S", value=r_post),
    )
    blocks = tuple(b for b in blocks if b.duration or b.value)
    return ProtocolSpec((blocks,), system or SystemParams(), dict(omegas or {2: 0.2, 4: 0.8}),
                        {2: 0.0, 4: 0.0}, dict(modes or {}), qubit_init, 0.0, (), "X", name)


def build_simultaneous_variant(t: float, beta: float = 0.0, r: float = 0.0, t2: float = 0.0,
                               system: SystemParams | None = None, omegas: dict | None = None,
                               phases: dict | None = None, modes: dict | None = None,
                               qubit_init: str = "minus_y", name: str = "simultaneous") -> ProtocolSpec:
    """One round D(β) → (H1 + H3 for time t) → S(r)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    blocks = (
        GateBlock("D", value=beta),
        GateBlock("SIM", duration=t, ks=(1, 3)),
        GateBlock("S", duration=t2, value=r),
    )
    blocks = tuple(b for b in blocks if b.duration or b.value)
    return ProtocolSpec((blocks,), system or SystemParams(), dict(omegas or {1: 0.3, 3: 0.3}),
                        dict(phases or {1: 0.0, 3: math.pi}),
                        dict(modes if modes is not None else table1_modes()), qubit_init, 0.0, (),
                        "P", name)


# --------------------------------------------------------------------------
# execution


@functools.lru_cache(maxsize=256)
def _coupling_propagator(drives: tuple, system, modes: tuple, config) -> HermitianPropagator:
    a = sum(sideband_coupling(d, system, m, config) for d, m in zip(drives, modes))
    return HermitianPropagator(a)


@dataclass(frozen=True)
class BlockAction:
    """exp(iθ G) per σ_y branch: (propagator, θ) for s = +1 and s = −1."""

    plus: tuple
    minus: tuple

    def branch(self, s: int) -> tuple:
        return self.plus if s > 0 else self.minus

    def scaled(self, fraction: float) -> "BlockAction":
        return BlockAction((self.plus[0], self.plus[1] * fraction),
                           (self.minus[0], self.minus[1] * fraction))


def block_action(block: GateBlock, spec: ProtocolSpec, config: HilbertConfig) -> BlockAction:
    if block.kind == "D":
        mag, phase = fock._split_beta(block.value)
        prop = fock._displacement_generator(config, phase)
        return BlockAction((prop, mag), (prop, mag))
    if block.kind == "S":
        prop = fock._squeezing_generator(config)
        r = float(np.real(block.value))
        return BlockAction((prop, r), (prop, r))
    if block.kind == "R":
        prop = fock._rotation_generator(config)
        th = float(np.real(block.value))
        return BlockAction((prop, th), (prop, th))
    ks = block.sidebands
    drives = tuple(spec.drive(k, block.phi if block.kind != "SIM" else None) for k in ks)
    modes = tuple(spec.mode(k) for k in ks)
    prop = _coupling_propagator(drives, spec.system, modes, config)
    return BlockAction((prop, block.duration), (prop, -block.duration))


_VQ = np.column_stack([fock.qubit_state("plus_y"), fock.qubit_state("minus_y")])


def to_frame(state: np.ndarray, n: int) -> np.ndarray:
    """Joint state in (g,e) ordering → σ_y-branch components."""
    if state.ndim == 1:
        return _VQ.conj().T @ state.reshape(2, n)
    r = state.reshape(2, n, 2, n)
    return np.einsum("is,iajb,jt->satb", _VQ.conj(), r, _VQ)


def from_frame(frame: np.ndarray) -> np.ndarray:
    if frame.ndim == 2:
        return (_VQ @ frame).reshape(-1)
    n = frame.shape[1]
    return np.einsum("is,satb,jt->iajb", _VQ, frame, _VQ.conj()).reshape(2 * n, 2 * n)


def _signs(frame: np.ndarray) -> list[int]:
    """Branches that carry amplitude (skipping empty ones saves half the work)."""
    if frame.ndim == 2:
        norms = np.linalg.norm(frame, axis=1)
    else:
        norms = np.array([np.linalg.norm(frame[0, :, 0, :]), np.linalg.norm(frame[1, :, 1, :])])
    return [s for s, nrm in zip((+1, -1), norms) if nrm > 0]


def apply_action(action: BlockAction, frame: np.ndarray) -> np.ndarray:
    out = np.zeros_like(frame)
    live = _signs(frame)
    if frame.ndim == 2:
        for i, s in ((0, +1), (1, -1)):
            if s in live:
                prop, th = action.branch(s)
                out[i] = prop.apply(th, frame[i])
        return out
    us = {s: action.branch(s)[0].unitary(action.branch(s)[1]) for s in live}
    for i, s in ((0, +1), (1, -1)):
        for j, t in ((0, +1), (1, -1)):
            if s in live and t in live:
                out[i, :, j, :] = us[s] @ frame[i, :, j, :] @ us[t].conj().T
    return out


def frame_oscillator(frame: np.ndarray) -> np.ndarray:
    """Reduced oscillator state (a density matrix) from frame components."""
    if frame.ndim == 2:
        return sum(np.outer(v, v.conj()) for v in frame)
    return frame[0, :, 0, :] + frame[1, :, 1, :]


def frame_populations(frame: np.ndarray) -> np.ndarray:
    if frame.ndim == 2:
        return np.sum(np.abs(frame) ** 2, axis=0)
    return np.real(np.diag(frame[0, :, 0, :]) + np.diag(frame[1, :, 1, :]))


def _check(frame, config, where, check_leakage):
    if not check_leakage:
        return
    leak = float(np.sum(frame_populations(frame)[config.interior:]))
    if leak > config.leakage_tol:
        raise TruncationError(
            f"buffer population {leak:.3e} after block {where} exceeds leakage_tol="
            f"{config.leakage_tol:g} (dim_fock={config.dim_fock})")


def apply_protocol(spec: ProtocolSpec, state: fock.JointState, noise=None,
                   check_leakage: bool = True) -> fock.JointState:
    """Evolve a joint qubit ⊗ oscillator state through the protocol."""
    if noise is not None:
        from .noise import noisy_evolution
        return noisy_evolution(spec, state, noise, check_leakage=check_leakage)
    config = state.hilbert
    n = config.dim_fock
    frame = to_frame(np.asarray(state.data, dtype=complex), n)
    for i, block in enumerate(spec.blocks()):
        frame = apply_action(block_action(block, spec, config), frame)
        _check(frame, config, f"{i} ({block.kind})", check_leakage)
    return fock.JointState(from_frame(frame), config)


def run_oscillator(spec: ProtocolSpec, psi: np.ndarray, config: HilbertConfig,
                   check_leakage: bool = True) -> np.ndarray:
    """Fast path: qubit in its σ_y eigenstate, returns the oscillator state only.

    Works for vectors and density matrices alike.
    """
    s = spec.qubit_sign
    state = np.asarray(psi, dtype=complex)
    for i, block in enumerate(spec.blocks()):
        prop, th = block_action(block, spec, config).branch(s)
        state = prop.apply(th, state)
        if check_leakage:
            fock.check_leakage(state, config, f"block {i} ({block.kind})")
    return state


def protocol_unitary(spec: ProtocolSpec, config: HilbertConfig) -> np.ndarray:
    """Oscillator unitary of the protocol for the configured qubit eigenstate."""
    s = spec.qubit_sign
    u = np.eye(config.dim_fock, dtype=complex)
    for block in spec.blocks():
        prop, th = block_action(block, spec, config).branch(s)
        u = prop.unitary(th) @ u
    return u


# --------------------------------------------------------------------------
# targets


@functools.lru_cache(maxsize=8)
def _quadrature_eig(config: HilbertConfig, basis: str):
    ops = make_operators(config)
    q = ops.x_quad if basis == "X" else ops.p_quad
    return np.linalg.eigh(q)


@functools.lru_cache(maxsize=32)
def ideal_gate(target: TargetGate, config: HilbertConfig) -> np.ndarray:
    """exp(iζ Q^j) for Q = X or P, built in the eigenbasis of the truncated Q."""
    w, v = _quadrature_eig(config, target.basis)
    if target.zeta == 0:
        u = np.eye(config.dim_fock, dtype=complex)
    else:
        u = (v * np.exp(1j * target.zeta * w ** target.order)) @ v.conj().T
    u.flags.writeable = False
    return u


def target_state(target: TargetGate, psi_in: np.ndarray, config: HilbertConfig) -> np.ndarray:
    u = ideal_gate(target, config)
    if np.ndim(psi_in) == 1:
        return u @ psi_in
    return u @ psi_in @ u.conj().T


def compare_states(generated: np.ndarray, psi_in: np.ndarray, target: TargetGate,
                   config: HilbertConfig, native_basis: str = "P") -> tuple[np.ndarray, np.ndarray]:
    """Generated and target states expressed in the target's basis.

    When the target basis differs from the protocol's native one, the output
    (and the input fed to the ideal gate) is rotated by R(∓π/2), which maps P
    onto X.
    """
    if target.basis == native_basis:
        return generated, target_state(target, psi_in, config)
    theta = -math.pi / 2 if native_basis == "P" else math.pi / 2
    gen = fock.apply_rotation(theta, generated, config)
    rin = fock.apply_rotation(theta, psi_in, config)
    return gen, target_state(target, rin, config)


# --------------------------------------------------------------------------
# residual analysis


def _weyl_basis(max_order: int, ops) -> tuple[list[tuple[int, int]], list[np.ndarray]]:
    """Weyl-symmetrized monomials W(X^j P^k) with j + k ≤ max_order.

    For each degree d, (cosθ X + sinθ P)^d = Σ_j C(d,j) cos^jθ sin^{d−j}θ W(X^j P^{d−j});
    sampling d+1 angles and solving recovers the individual monomials.
    """
    labels, mats = [], []
    x, p = ops.x_quad, ops.p_quad
    for d in range(max_order + 1):
        angles = np.pi * (np.arange(d + 1) + 0.5) / (d + 1)
        powers = [np.linalg.matrix_power(np.cos(a) * x + np.sin(a) * p, d) for a in angles]
        coef = np.array([[math.comb(d, j) * np.cos(a) ** j * np.sin(a) ** (d - j)
                          for j in range(d + 1)] for a in angles])
        inv = np.linalg.inv(coef)
        for j in range(d + 1):
            labels.append((j, d - j))
            mats.append(sum(inv[j, i] * powers[i] for i in range(d + 1)))
    return labels, mats


@dataclass
class ResidualReport:
    coefficients: dict          # "X^jP^k" -> coefficient of W(X^j P^k) in the residual generator
    order_norms: dict           # degree -> root-sum-square of that degree's coefficients
    dominant_order: int
    condition_number: float
    fit_residual: float
    quadratic: dict = field(default_factory=dict)
    quintic: dict = field(default_factory=dict)


def residual_report(generated: np.ndarray, target: TargetGate, config: HilbertConfig,
                    max_order: int = 6, fit_dim: int = 20, block_dim: int | None = None,
                    skip_orders: tuple[int, ...] = (0,)) -> ResidualReport:
    """Polynomial decomposition of the residual generator G with U_gen ≈ U_tgt e^{iG}.

    The residual U_tgt† U_gen is compressed to the lowest ``block_dim`` Fock
    levels (default 2·fit_dim), made unitary by polar decomposition and
    log-transformed through its eigenphases. Working on a block keeps the
    eigenphases inside (−π, π] for moderate residuals, which the full
    truncated matrix does not: unbounded generators such as XP + PX wrap at
    high photon number. G is then fitted on the lowest ``fit_dim`` levels by
    least squares onto Weyl-ordered monomials up to ``max_order``. A residual
    S(r) shows up as coefficient r on W(XP). The constant term is a global
    phase and is excluded by default.
    """
    ops = make_operators(config)
    m = int(fit_dim)
    nb = min(config.dim_fock, int(block_dim) if block_dim else 2 * m)
    if not 0 < m <= nb:
        raise ValueError("need 0 < fit_dim <= block_dim")
    u_t = ideal_gate(target, config)
    r = (u_t.conj().T @ np.asarray(generated, dtype=complex))[:nb, :nb]
    r, _ = polar(r)
    w, v = np.linalg.eig(r)
    g = (v * np.angle(w)) @ np.linalg.inv(v)
    g = (g + g.conj().T) / 2
    labels, mats = _weyl_basis(max_order, ops)
    keep = [i for i, (j, k) in enumerate(labels) if j + k not in skip_orders]
    labels = [labels[i] for i in keep]
    design = np.stack([mats[i][:m, :m].reshape(-1) for i in keep], axis=1)
    rhs = g[:m, :m].reshape(-1)
    # real coefficients: stack real and imaginary parts
    a = np.concatenate([design.real, design.imag])
    b = np.concatenate([rhs.real, rhs.imag])
    scale = np.linalg.norm(a, axis=0)
    coef, *_ = np.linalg.lstsq(a / scale, b, rcond=None)
    coef = coef / scale
    cond = float(np.linalg.cond(a / scale))
    resid = float(np.linalg.norm(a @ coef - b) / max(np.linalg.norm(b), 1e-300))
    names = {f"X^{j}P^{k}": float(c) for (j, k), c in zip(labels, coef)}
    norms = {}
    for (j, k), c in zip(labels, coef):
        norms[j + k] = norms.get(j + k, 0.0) + c * c
    norms = {d: float(np.sqrt(v2)) for d, v2 in norms.items()}
    dominant = max(norms, key=norms.get) if norms else 0
    if cond > 1e12:
        raise np.linalg.LinAlgError(f"residual fit is ill-conditioned (condition number {cond:.2e})")
    return ResidualReport(
        coefficients=names, order_norms=norms, dominant_order=int(dominant),
        condition_number=cond, fit_residual=resid,
        quadratic={k: v for k, v in names.items() if _deg(k) == 2},
        quintic={k: v for k, v in names.items() if _deg(k) == 5},
    )


def _deg(label: str) -> int:
    j, k = label[2:].split("P^")
    return int(j) + int(k)


# --------------------------------------------------------------------------
# JSON round trip


def _mode_to_dict(m: HamiltonianMode) -> dict:
    return {"kind": m.kind, "order": m.order, "series": m.series, "prefactor": m.prefactor}


def protocol_from_dict(doc: dict) -> ProtocolSpec:
    """Build a protocol from its JSON document (already schema-validated)."""
    system = SystemParams(eta=doc.get("eta", 0.3), nu=doc.get("nu", 2 * math.pi),
                          rabi_scale=doc.get("rabi_scale", 1.0))
    omegas = {int(k): float(v) for k, v in doc.get("omegas", {"1": 0.3, "3": 0.3}).items()}
    modes_doc = doc.get("modes", "table1")
    if modes_doc == "table1":
        modes = table1_modes(doc.get("h3", "full"))
    else:
        modes = {int(k): HamiltonianMode.parse(v) for k, v in modes_doc.items()}
    seq = doc.get("sequence", "cubic")
    qubit = doc.get("qubit_init", "minus_y")
    if seq == "cubic":
        phases = {int(k): float(v) for k, v in doc.get("phases", {"1": 0.0, "3": math.pi}).items()}
        return build_cubic_protocol(doc["rounds"], system, omegas, phases, modes, qubit,
                                    doc.get("pre_squeeze", 0.0), doc.get("displacement", "ideal"),
                                    doc.get("displacement_cost", 0.0), doc.get("n_rounds"),
                                    doc.get("name", ""))
    if seq == "quartic":
        q = doc["quartic"]
        return build_quartic_protocol(q["t2"], q["phi2"], q["t4"], q["phi4"], q["theta"],
                                      q["r_pre"], q["r_post"], system, omegas, modes, qubit,
                                      doc.get("name", "quartic"))
    if seq == "simultaneous":
        s = doc["simultaneous"]
        phases = {int(k): float(v) for k, v in doc.get("phases", {"1": 0.0, "3": math.pi}).items()}
        return build_simultaneous_variant(s["t"], s.get("beta", 0.0), s.get("r", 0.0),
                                          s.get("t2", 0.0), system, omegas, phases, modes, qubit,
                                          doc.get("name", "simultaneous"))
    raise ValueError(f"unknown sequence {seq!r}")


def target_from_dict(doc: dict | None) -> TargetGate:
    doc = doc or {}
    return TargetGate(order=doc.get("j", 3), zeta=doc.get("zeta", 1.0), basis=doc.get("basis", "P"))


def protocol_to_dict(spec: ProtocolSpec) -> dict:
    """Block-level JSON description (for reports; not reparsed by the builders)."""
    def block(b):
        d = {"kind": b.kind, "duration": b.duration}
        v = complex(b.value)
        if v:
            d["value"] = v.real if v.imag == 0 else [v.real, v.imag]
        if b.phi is not None:
            d["phi"] = b.phi
        if b.ks:
            d["ks"] = list(b.ks)
        return d
    return {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "eta": spec.system.eta,
        "nu": spec.system.nu,
        "omegas": {str(k): v for k, v in spec.omegas.items()},
        "phases": {str(k): v for k, v in spec.phases.items()},
        "modes": {str(k): _mode_to_dict(m) for k, m in spec.modes.items()},
        "qubit_init": spec.qubit_init,
        "pre_squeeze": spec.pre_squeeze,
        "rounds": [[block(b) for b in rnd] for rnd in spec.rounds],
        "total_time": spec.total_time,
    }


def with_h3_mode(spec: ProtocolSpec, h3: str) -> ProtocolSpec:
    """Same protocol with the third-sideband block in full or leading-term form."""
    modes = dict(spec.modes)
    base = spec.mode(3)
    if h3 == "full":
        modes[3] = replace(base, kind="full")
    else:
        modes[3] = replace(base, kind="ld", order=1)
    return replace(spec, modes=modes)
