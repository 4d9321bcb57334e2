"""Fidelity, phase-space and nonlinear-squeezing diagnostics.

Wigner convention: W(q, p) integrates to one, the vacuum peaks at 1/π, and
a coherent state |α⟩ sits at (q, p) = √2 (Re α, Im α).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import fock
from .fock import HilbertConfig, make_operators


# --------------------------------------------------------------------------
# fidelity


def _check_density(rho: np.ndarray, name: str) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        return rho
    if np.max(np.abs(rho - rho.conj().T)) > 1e-8:
        raise ValueError(f"{name} is not Hermitian")
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -1e-9:
        raise ValueError(f"{name} is not positive semidefinite")
    return rho


def _factor(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    keep = w > 1e-13 * max(w[-1], 1e-300)
    return v[:, keep] * np.sqrt(w[keep])


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann-Jozsa fidelity (Tr√(√σ ρ √σ))²; vectors are treated as pure states."""
    rho = _check_density(rho, "rho")
    sigma = _check_density(sigma, "sigma")
    if rho.shape[0] != sigma.shape[0]:
        raise ValueError("dimension mismatch")
    if rho.ndim == 1 and sigma.ndim == 1:
        f = abs(np.vdot(rho, sigma)) ** 2
    elif rho.ndim == 1:
        f = np.real(np.vdot(rho, sigma @ rho))
    elif sigma.ndim == 1:
        f = np.real(np.vdot(sigma, rho @ sigma))
    else:
        # Tr√(√σ ρ √σ) is the trace norm of A†B for ρ = AA†, σ = BB†; dropping
        # round-off eigenvalues keeps their square roots out of the sum
        f = np.linalg.norm(_factor(rho).conj().T @ _factor(sigma), "nuc") ** 2
    return float(min(max(f, 0.0), 1.0))


# --------------------------------------------------------------------------
# Wigner function


@dataclass
class WignerGrid:
    q_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray        # values[i, j] = W(q_axis[i], p_axis[j])
    normalization_defect: float

    @property
    def dq(self) -> float:
        return float(self.q_axis[1] - self.q_axis[0])

    @property
    def dp(self) -> float:
        return float(self.p_axis[1] - self.p_axis[0])

    def to_csv(self, path) -> None:
        qq, pp = np.meshgrid(self.q_axis, self.p_axis, indexing="ij")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "p", "w"])
            for q, p, v in zip(qq.ravel(), pp.ravel(), self.values.ravel()):
                w.writerow([f"{q:.12g}", f"{p:.12g}", f"{v:.12g}"])

    def to_dict(self) -> dict:
        return {"q_axis": self.q_axis.tolist(), "p_axis": self.p_axis.tolist(),
                "values": self.values.tolist(), "normalization_defect": self.normalization_defect}


def hermite_functions(x: np.ndarray, n: int) -> np.ndarray:
    """Position wavefunctions ⟨x|k⟩ for k < n, shape (len(x), n)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, n))
    out[:, 0] = np.pi ** -0.25 * np.exp(-x**2 / 2)
    if n > 1:
        out[:, 1] = np.sqrt(2) * x * out[:, 0]
    for k in range(1, n - 1):
        out[:, k + 1] = np.sqrt(2 / (k + 1)) * x * out[:, k] - np.sqrt(k / (k + 1)) * out[:, k - 1]
    return out


def _support(dim: int) -> float:
    """Half-width beyond which every Fock state below ``dim`` is negligible."""
    return math.sqrt(2 * dim + 1) + 6.0


def _step_for(dim: int, p_extent: float) -> float:
    # trapezoid over y is exact for band-limited integrands when h < π/(bandwidth/2)
    return 0.8 * math.pi / (math.sqrt(2 * dim + 1) + 3.0 + p_extent)


class _PositionKernel:
    """ρ(x, x') on a uniform x grid, enough to evaluate W anywhere on that grid."""

    def __init__(self, state: np.ndarray, h: float, origin: float, extra: float = 0.0):
        state = np.asarray(state, dtype=complex)
        self.dim = state.shape[0]
        xmax = _support(self.dim) + extra
        i0 = math.floor((-xmax - origin) / h)
        i1 = math.ceil((xmax - origin) / h)
        self.h, self.origin, self.i0 = h, origin, i0
        self.x = origin + h * np.arange(i0, i1 + 1)
        phi = hermite_functions(self.x, self.dim)
        if state.ndim == 1:
            self.psi = phi @ state
            self.rho = None
        else:
            self.psi = None
            self.rho = phi @ state @ phi.T

    def index(self, q: np.ndarray) -> np.ndarray:
        idx = np.rint((np.asarray(q) - self.origin) / self.h).astype(int) - self.i0
        if np.any(idx < 0) or np.any(idx >= self.x.size):
            raise ValueError("evaluation point outside the kernel grid")
        return idx

    def anti_diagonals(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """f[i, j] = ρ(x_i + y_j, x_i − y_j) for y_j = (j − J) h."""
        m = self.x.size
        jj = np.arange(-(m - 1), m)
        up = idx[:, None] + jj[None, :]
        dn = idx[:, None] - jj[None, :]
        ok = (up >= 0) & (up < m) & (dn >= 0) & (dn < m)
        upc, dnc = np.where(ok, up, 0), np.where(ok, dn, 0)
        if self.psi is not None:
            f = self.psi[upc] * self.psi[dnc].conj()
        else:
            f = self.rho[upc, dnc]
        f = np.where(ok, f, 0)
        # drop y columns that are empty for every row
        cols = np.nonzero(ok.any(axis=0))[0]
        return f[:, cols], jj[cols] * self.h


def wigner(state: np.ndarray, q_axis: np.ndarray | None = None, p_axis: np.ndarray | None = None,
           auto_extend: bool = False, boundary_tol: float = 1e-6, max_extent: float = 40.0,
           chunk: int = 64) -> WignerGrid:
    """Wigner function on a rectangular grid.

    Uses W(q,p) = (1/π) ∫ ρ(q+y, q−y) e^{−2ipy} dy with the density kernel
    sampled on a fine position grid built from Hermite functions. The q axis
    must be uniform. With ``auto_extend`` the square window grows until
    |W| on its boundary drops below ``boundary_tol``.
    """
    state = np.asarray(state, dtype=complex)
    if q_axis is None:
        q_axis = np.linspace(-8, 8, 301)
    if p_axis is None:
        p_axis = q_axis
    q_axis, p_axis = np.asarray(q_axis, float), np.asarray(p_axis, float)
    while True:
        grid = _wigner_fixed(state, q_axis, p_axis, chunk)
        edge = max(np.abs(grid.values[[0, -1], :]).max(), np.abs(grid.values[:, [0, -1]]).max())
        if not auto_extend or edge < boundary_tol:
            return grid
        ext = max(abs(q_axis[0]), abs(q_axis[-1])) * 1.25
        if ext > max_extent:
            raise RuntimeError(f"Wigner grid did not converge: boundary |W| = {edge:.2e} at extent {ext / 1.25:.1f}")
        dq = q_axis[1] - q_axis[0]
        n = int(round(2 * ext / dq)) + 1
        q_axis = np.linspace(-ext, ext, n)
        p_axis = q_axis


def _wigner_fixed(state, q_axis, p_axis, chunk) -> WignerGrid:
    dq = float(q_axis[1] - q_axis[0])
    if np.max(np.abs(np.diff(q_axis) - dq)) > 1e-9 * max(1.0, abs(dq)):
        raise ValueError("q_axis must be uniform")
    pmax = float(np.max(np.abs(p_axis)))
    m = max(1, math.ceil(dq / _step_for(state.shape[0], pmax)))
    h = dq / m
    extra = float(np.max(np.abs(q_axis)))
    kern = _PositionKernel(state, h, float(q_axis[0]), extra)
    idx = kern.index(q_axis)
    values = np.empty((q_axis.size, p_axis.size))
    for s in range(0, q_axis.size, chunk):
        f, y = kern.anti_diagonals(idx[s:s + chunk])
        e = np.exp(-2j * np.outer(y, p_axis))
        values[s:s + chunk] = (h / np.pi) * np.real(f @ e)
    dp = float(p_axis[1] - p_axis[0]) if p_axis.size > 1 else 1.0
    defect = abs(float(values.sum() * dq * dp) - 1.0)
    return WignerGrid(q_axis, p_axis, values, defect)


def wigner_parity(state: np.ndarray, q: float, p: float, config: HilbertConfig) -> float:
    """W(q,p) = (1/π) Tr[D(α)† ρ D(α) Π] with α = (q + ip)/√2 (truncated D).

    The 1/π (rather than 2/π) is the Jacobian of d²α = dq dp / 2."""
    alpha = (q + 1j * p) / math.sqrt(2)
    d = fock.displacement(-alpha, config)
    parity = (-1.0) ** np.arange(config.dim_fock)
    if np.ndim(state) == 1:
        v = d @ state
        return float(1 / np.pi * np.sum(parity * np.abs(v) ** 2))
    r = d @ state @ d.conj().T
    return float(1 / np.pi * np.real(np.sum(parity * np.diag(r))))


def negativity_volume(grid: WignerGrid) -> float:
    w = grid.values
    return float(0.5 * np.sum(np.abs(w) - w) * grid.dq * grid.dp)


@dataclass
class LineCut:
    slope: float
    intercept: float
    q: np.ndarray
    p: np.ndarray
    w: np.ndarray

    def rows(self):
        return zip(self.q, self.p, self.w)


def wigner_cut(state: np.ndarray, slope: float = 0.0, intercept: float = 0.0,
               q_range: tuple[float, float] = (-8.0, 8.0), n: int = 401) -> LineCut:
    """W sampled along p = slope·q + intercept.

    Sample abscissae are snapped onto the internal position grid so the
    integral stays exact; they lie exactly on the declared line.
    """
    state = np.asarray(state, dtype=complex)
    q_lo, q_hi = q_range
    qs = np.linspace(q_lo, q_hi, n)
    ps = slope * qs + intercept
    h = _step_for(state.shape[0], float(np.max(np.abs(ps))))
    kern = _PositionKernel(state, h, 0.0, max(abs(q_lo), abs(q_hi)))
    idx = np.unique(kern.index(np.clip(qs, kern.x[0], kern.x[-1])))
    q = kern.x[idx]
    q = q[(q >= q_lo - h) & (q <= q_hi + h)]
    idx = kern.index(q)
    if q.size == 0:
        raise ValueError("cut lies outside the state support")
    p = slope * q + intercept
    f, y = kern.anti_diagonals(idx)
    w = (h / np.pi) * np.real(np.sum(f * np.exp(-2j * p[:, None] * y[None, :]), axis=1))
    return LineCut(slope, intercept, q, p, w)


# --------------------------------------------------------------------------
# nonlinear squeezing


def _variance_ops(j: int, basis: str, config: HilbertConfig):
    """(A, B, c) with O = A + c ξ B, as (dim + j) × dim blocks.

    P-basis gate: O = X − jξ P^{j−1}; X-basis gate: O = P + jξ X^{j−1}.
    For the ideal gate of strength ζ both are minimized at ξ = −ζ.
    The blocks are columns of the untruncated operators, built in a space
    j levels larger, so moments of a state held in ``config`` carry no
    truncation error from the top rows of X and P.
    """
    n = config.dim_fock
    ops = make_operators(HilbertConfig(n + j, config.leakage_buffer, config.leakage_tol))
    if basis == "P":
        a, b, c = ops.x_quad, np.linalg.matrix_power(ops.p_quad, j - 1), -float(j)
    elif basis == "X":
        a, b, c = ops.p_quad, np.linalg.matrix_power(ops.x_quad, j - 1), float(j)
    else:
        raise ValueError("basis must be 'X' or 'P'")
    return a[:, :n], b[:, :n], c


def _moment(state: np.ndarray, left: np.ndarray, right: np.ndarray) -> float:
    """Re⟨L R⟩ for Hermitian L, R given as column blocks (⟨L R⟩ = Tr ρ L_blk† R_blk)."""
    if state.ndim == 1:
        return float(np.real(np.vdot(left @ state, right @ state)))
    return float(np.real(np.trace(state @ (left.conj().T @ right))))


def _mean(state: np.ndarray, op: np.ndarray) -> float:
    n = op.shape[1]
    return float(fock.expectation(op[:n, :], state).real)


def nonlinear_variance(state: np.ndarray, j: int, xi: float, basis: str,
                       config: HilbertConfig) -> float:
    """Var(O) = ⟨O²⟩ − ⟨O⟩² of the nonlinear quadrature for gate order j."""
    v0, v1, v2 = variance_moments(state, j, basis, config)
    return float(v0 + v1 * xi + v2 * xi * xi)


def variance_moments(state: np.ndarray, j: int, basis: str, config: HilbertConfig):
    """Coefficients (v0, v1, v2) with Var(ξ) = v0 + v1 ξ + v2 ξ²."""
    state = np.asarray(state, dtype=complex)
    a, b, c = _variance_ops(j, basis, config)
    ea, eb = _mean(state, a), _mean(state, b)
    v0 = _moment(state, a, a) - ea**2
    cov = 2 * _moment(state, a, b) - 2 * ea * eb
    vb = _moment(state, b, b) - eb**2
    return v0, c * cov, c * c * vb


@dataclass
class VarianceScan:
    j: int
    basis: str
    xi_values: np.ndarray
    variances: np.ndarray
    xi_min: float
    v_min: float

    @property
    def zeta_eff(self) -> float:
        """Effective gate strength; the ideal gate e^{iζQ^j} gives ζ."""
        return -self.xi_min

    def to_dict(self) -> dict:
        return {"j": self.j, "basis": self.basis, "xi_min": self.xi_min, "v_min": self.v_min,
                "zeta_eff": self.zeta_eff}


def minimize_variance(state: np.ndarray, j: int, basis: str, config: HilbertConfig,
                      xi_range: tuple[float, float] = (-3.0, 3.0), n_coarse: int = 121,
                      max_widen: int = 6, xtol: float = 1e-6) -> VarianceScan:
    """Coarse ξ scan followed by golden-section refinement of the bracketing triple."""
    v0, v1, v2 = variance_moments(state, j, basis, config)

    def var(xi):
        return v0 + v1 * xi + v2 * xi * xi

    lo, hi = xi_range
    for _ in range(max_widen + 1):
        xs = np.linspace(lo, hi, n_coarse)
        vs = var(xs)
        i = int(np.argmin(vs))
        if 0 < i < n_coarse - 1:
            break
        width = hi - lo
        lo, hi = lo - width / 2, hi + width / 2
    else:
        raise RuntimeError(f"variance minimum not bracketed within [{lo:g}, {hi:g}]")
    res = optimize.minimize_scalar(var, bracket=(xs[i - 1], xs[i], xs[i + 1]), method="golden",
                                   tol=xtol)
    return VarianceScan(j, basis, xs, np.maximum(vs, 0.0), float(res.x), float(res.fun))


def qng_threshold(xi: float) -> float:
    """Lowest Var(X − 3ξP²) reachable by Gaussian states: 3/2^{5/3}·|3ξ|^{2/3}."""
    return float(3 / 2 ** (5 / 3) * abs(3 * xi) ** (2 / 3))


def classical_threshold(alpha: complex, xi: float = 1.0) -> float:
    """Var(X − 3ξP²) of the coherent state |α⟩: 1/2 + 9ξ²(1/2 + 4 Im(α)²)."""
    return float(0.5 + 9 * xi**2 * (0.5 + 4 * np.imag(alpha) ** 2))


# --------------------------------------------------------------------------
# convergence diagnostics


def density_diff_map(rho_a: np.ndarray, rho_b: np.ndarray, n_max_display: int = 10) -> np.ndarray:
    """|⟨m|ρ_a − ρ_b|n⟩| for m, n < n_max_display, in units of 1e-3."""
    a, b = fock.to_density(rho_a), fock.to_density(rho_b)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    n = n_max_display
    return np.abs(a[:n, :n] - b[:n, :n]) / 1e-3


def effective_cubicity_fit(samples, eta: float, zeta3: float) -> float:
    """Least-squares γ in ζ_eff = ζ₃(1 + γ η² |α|²) from (|α|, ζ_eff) pairs."""
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[0] < 3:
        raise ValueError("need at least three (|alpha|, zeta_eff) samples")
    x = eta**2 * s[:, 0] ** 2
    y = s[:, 1] / zeta3 - 1
    if np.sum(x * x) == 0:
        raise ValueError("degenerate design: all samples at |alpha| = 0")
    return float(np.sum(x * y) / np.sum(x * x))


def to_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj if isinstance(obj, dict) else asdict(obj), fh, indent=2)
