"""Truncated Fock-space primitives for a qubit coupled to one motional mode.

Conventions used everywhere in the package:

* quadratures X = (a + a†)/√2 and P = (a − a†)/(i√2), so the vacuum has
  Var(X) = Var(P) = 1/2;
* joint states live on qubit ⊗ oscillator with the qubit basis ordered
  (|g⟩, |e⟩);
* unitaries generated by a Hermitian H are U(t) = exp(+i t H), with t in μs
  and frequencies in MHz treated as plain angular rates (Ω t is an angle).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


class TruncationError(RuntimeError):
    """Raised when a state puts too much population into the truncation buffer."""


@dataclass(frozen=True)
class HilbertConfig:
    """Fock truncation and the buffer used to monitor leakage."""

    dim_fock: int = 120
    leakage_buffer: int = 20
    leakage_tol: float = 1e-3

    def __post_init__(self):
        if int(self.dim_fock) != self.dim_fock or self.dim_fock < 16:
            raise ValueError(f"dim_fock must be an integer >= 16, got {self.dim_fock}")
        if not (0 < self.leakage_buffer < self.dim_fock / 2):
            raise ValueError("leakage_buffer must satisfy 0 < buffer < dim_fock/2")
        if not self.leakage_tol > 0:
            raise ValueError("leakage_tol must be positive")

    @property
    def interior(self) -> int:
        """Number of levels below the monitoring buffer."""
        return self.dim_fock - self.leakage_buffer


def _frozen(m: np.ndarray) -> np.ndarray:
    m.flags.writeable = False
    return m


@dataclass(frozen=True)
class OperatorSet:
    config: HilbertConfig
    a: np.ndarray
    a_dag: np.ndarray
    n_op: np.ndarray
    x_quad: np.ndarray
    p_quad: np.ndarray
    sigma_y: np.ndarray
    sigma_plus: np.ndarray
    id_osc: np.ndarray
    id_qubit: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.config.dim_fock


@functools.lru_cache(maxsize=16)
def make_operators(config: HilbertConfig) -> OperatorSet:
    """Build (and cache) the ladder, quadrature and Pauli matrices."""
    n = config.dim_fock
    a = np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)
    a_dag = a.conj().T.copy()
    x = (a + a_dag) / np.sqrt(2)
    p = (a - a_dag) / (1j * np.sqrt(2))
    return OperatorSet(
        config=config,
        a=_frozen(a),
        a_dag=_frozen(a_dag),
        n_op=_frozen(np.diag(np.arange(n, dtype=float)).astype(complex)),
        x_quad=_frozen(x),
        p_quad=_frozen(p),
        # qubit basis (|g>, |e>); sigma_plus = |e><g|
        sigma_y=_frozen(np.array([[0, -1j], [1j, 0]])),
        sigma_plus=_frozen(np.array([[0, 0], [1, 0]], dtype=complex)),
        id_osc=_frozen(np.eye(n, dtype=complex)),
        id_qubit=_frozen(np.eye(2, dtype=complex)),
    )


def basis(n: int, config: HilbertConfig) -> np.ndarray:
    v = np.zeros(config.dim_fock, dtype=complex)
    v[n] = 1.0
    return v


def qubit_state(label: str) -> np.ndarray:
    """Qubit vectors in the (|g>, |e>) ordering.

    ``plus_y`` and ``minus_y`` are the σ_y eigenstates with eigenvalue +1 and
    −1; ``minus_y`` equals (|e⟩ + i|g⟩)/√2.
    """
    s = 1 / np.sqrt(2)
    table = {
        "g": np.array([1, 0], dtype=complex),
        "e": np.array([0, 1], dtype=complex),
        "plus_y": np.array([s, 1j * s]),
        "minus_y": np.array([1j * s, s]),
    }
    try:
        return table[label]
    except KeyError:
        raise ValueError(f"unknown qubit state {label!r}") from None


def is_density(state: np.ndarray) -> bool:
    return np.ndim(state) == 2


def to_density(state: np.ndarray) -> np.ndarray:
    if is_density(state):
        return np.asarray(state, dtype=complex)
    v = np.asarray(state, dtype=complex)
    return np.outer(v, v.conj())


def populations(state: np.ndarray) -> np.ndarray:
    if is_density(state):
        return np.real(np.diag(state))
    return np.abs(state) ** 2


def buffer_population(state: np.ndarray, config: HilbertConfig) -> float:
    """Population in the top ``leakage_buffer`` Fock levels of an oscillator state."""
    return float(np.sum(populations(state)[config.interior:]))


def check_leakage(state: np.ndarray, config: HilbertConfig, where: str = "") -> float:
    leak = buffer_population(state, config)
    if leak > config.leakage_tol:
        at = f" after {where}" if where else ""
        raise TruncationError(
            f"buffer population {leak:.3e}{at} exceeds leakage_tol={config.leakage_tol:g} "
            f"(dim_fock={config.dim_fock}); increase dim_fock"
        )
    return leak


@dataclass
class JointState:
    """Qubit ⊗ oscillator state, either a vector or a density matrix."""

    data: np.ndarray
    hilbert: HilbertConfig

    @property
    def kind(self) -> str:
        return "density-matrix" if self.data.ndim == 2 else "pure-vector"

    @classmethod
    def product(cls, qubit: np.ndarray | str, osc: np.ndarray, hilbert: HilbertConfig) -> "JointState":
        q = qubit_state(qubit) if isinstance(qubit, str) else np.asarray(qubit, dtype=complex)
        osc = np.asarray(osc, dtype=complex)
        if osc.ndim == 1:
            return cls(np.kron(q, osc), hilbert)
        return cls(np.kron(np.outer(q, q.conj()), osc), hilbert)

    def density(self) -> np.ndarray:
        return to_density(self.data)

    def _blocks(self) -> np.ndarray:
        n = self.hilbert.dim_fock
        return self.density().reshape(2, n, 2, n)

    def oscillator(self) -> np.ndarray:
        """Reduced oscillator density matrix."""
        return np.einsum("iaib->ab", self._blocks())

    def qubit(self) -> np.ndarray:
        return np.einsum("iaja->ij", self._blocks())

    def validate(self, tol: float = 1e-10) -> None:
        d = self.data
        if d.ndim == 1:
            if abs(np.linalg.norm(d) - 1) > tol:
                raise ValueError("pure state is not normalized")
            return
        if np.max(np.abs(d - d.conj().T)) > tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(d).real - 1) > tol:
            raise ValueError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(d).min() < -1e-9:
            raise ValueError("density matrix is not positive semidefinite")


def coherent_state(alpha: complex, config: HilbertConfig) -> np.ndarray:
    """Coherent state |α⟩ from its Poisson amplitudes, checked for leakage."""
    n = np.arange(config.dim_fock)
    alpha = complex(alpha)
    if alpha == 0:
        return basis(0, config)
    r, th = abs(alpha), np.angle(alpha)
    amp = np.exp(-r**2 / 2 + n * np.log(r) - 0.5 * gammaln(n + 1)) * np.exp(1j * th * n)
    check_leakage(amp, config, "coherent state preparation")
    return amp / np.linalg.norm(amp)


def thermal_state(nbar: float, config: HilbertConfig) -> np.ndarray:
    """Bose-Einstein diagonal state, renormalized after truncation."""
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    n = np.arange(config.dim_fock)
    if nbar == 0:
        p = (n == 0).astype(float)
    else:
        p = np.exp(n * np.log(nbar / (nbar + 1))) / (nbar + 1)
    check_leakage(p.astype(complex), config, "thermal state preparation")
    return np.diag(p / p.sum()).astype(complex)


class HermitianPropagator:
    """exp(i θ G) for a fixed Hermitian generator G, from one eigendecomposition.

    Reusing the decomposition makes repeated evaluation at different θ cost a
    couple of matrix products, which is what the optimizer loop needs.
    """

    def __init__(self, generator: np.ndarray, atol: float = 1e-9):
        g = np.asarray(generator, dtype=complex)
        scale = max(1.0, float(np.max(np.abs(g))))
        if np.max(np.abs(g - g.conj().T)) > atol * scale:
            raise ValueError("generator is not Hermitian")
        self.evals, self.evecs = np.linalg.eigh((g + g.conj().T) / 2)
        self._evecs_h = self.evecs.conj().T
        self.dim = g.shape[0]

    def unitary(self, theta: float) -> np.ndarray:
        if theta == 0:
            return np.eye(self.dim, dtype=complex)
        return (self.evecs * np.exp(1j * theta * self.evals)) @ self._evecs_h

    def apply(self, theta: float, state: np.ndarray) -> np.ndarray:
        """Apply exp(iθG) to a vector, or conjugate a density matrix."""
        if theta == 0:
            return np.array(state, dtype=complex)
        ph = np.exp(1j * theta * self.evals)
        if np.ndim(state) == 1:
            return self.evecs @ (ph * (self._evecs_h @ state))
        u = (self.evecs * ph) @ self._evecs_h
        return u @ state @ u.conj().T


def evolve_unitary(h: np.ndarray, t: float, sign: int = +1) -> np.ndarray:
    """exp(sign · i t H) via diagonalization of the Hermitian H."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if t == 0:
        return np.eye(np.shape(h)[0], dtype=complex)
    return HermitianPropagator(h).unitary(sign * t)


# Gaussian unitaries. Each is exp(iθG) for a Hermitian G, so they share the
# cached-eigendecomposition path.

@functools.lru_cache(maxsize=64)
def _displacement_generator(config: HilbertConfig, phase: float) -> HermitianPropagator:
    ops = make_operators(config)
    e = np.exp(1j * phase)
    # D(|β|e^{iφ}) = exp(|β| (e^{iφ} a† − e^{−iφ} a)) = exp(i|β| G)
    return HermitianPropagator(-1j * (e * ops.a_dag - e.conjugate() * ops.a))


@functools.lru_cache(maxsize=16)
def _squeezing_generator(config: HilbertConfig) -> HermitianPropagator:
    ops = make_operators(config)
    # S(r) = exp(r (a² − a†²)/2) = exp(i r G)
    return HermitianPropagator(-0.5j * (ops.a @ ops.a - ops.a_dag @ ops.a_dag))


@functools.lru_cache(maxsize=16)
def _rotation_generator(config: HilbertConfig) -> HermitianPropagator:
    return HermitianPropagator(make_operators(config).n_op)


def _split_beta(beta: complex) -> tuple[float, float]:
    beta = complex(beta)
    mag = abs(beta)
    phase = float(np.angle(beta)) if mag else 0.0
    # fold real negative β onto the φ=0 generator so one cache entry serves both
    if abs(abs(phase) - np.pi) < 1e-15:
        return -mag, 0.0
    return mag, round(phase, 15)


def displacement(beta: complex, config: HilbertConfig) -> np.ndarray:
    """D(β) = exp(β a† − β* a)."""
    mag, phase = _split_beta(beta)
    return _displacement_generator(config, phase).unitary(mag)


def apply_displacement(beta: complex, state: np.ndarray, config: HilbertConfig) -> np.ndarray:
    mag, phase = _split_beta(beta)
    return _displacement_generator(config, phase).apply(mag, state)


def squeezing(r: float, config: HilbertConfig) -> np.ndarray:
    """S(r) = exp(r (a² − a†²)/2); r > 0 squeezes X."""
    return _squeezing_generator(config).unitary(float(r))


def apply_squeezing(r: float, state: np.ndarray, config: HilbertConfig) -> np.ndarray:
    return _squeezing_generator(config).apply(float(r), state)


def rotation(theta: float, config: HilbertConfig) -> np.ndarray:
    """R(θ) = exp(iθ n̂), which maps |α⟩ to |α e^{iθ}⟩."""
    return _rotation_generator(config).unitary(float(theta))


def apply_rotation(theta: float, state: np.ndarray, config: HilbertConfig) -> np.ndarray:
    ph = np.exp(1j * float(theta) * np.arange(config.dim_fock))
    if np.ndim(state) == 1:
        return ph * state
    return ph[:, None] * state * ph.conj()[None, :]


def expectation(op: np.ndarray, state: np.ndarray) -> complex:
    if is_density(state):
        return complex(np.trace(op @ state))
    return complex(np.vdot(state, op @ state))


def squeezing_db(r: float) -> float:
    """Quadrature variance reduction 10·log10(e^{2r}) in dB."""
    return float(20 * r / np.log(10))


def r_from_db(db: float) -> float:
    return float(db * np.log(10) / 20)
