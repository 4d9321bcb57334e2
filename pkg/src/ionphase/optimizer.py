"""Differential-evolution search over protocol parameters.

The optimizer is a plain rand/1/bin scheme with dither: the mutation factor
is redrawn from the configured range each generation. Trial vectors that
leave the box are reflected back in. Selection is greedy, so the best loss
never increases. Candidate losses are evaluated in index order, optionally on a
thread pool, so parallel and serial runs give identical histories.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import fock
from .fock import HilbertConfig, TruncationError
from .metrics import fidelity
from .noise import NoiseModel, noisy_evolution
from .protocol import (ProtocolSpec, TargetGate, build_cubic_protocol, build_quartic_protocol,
                       build_simultaneous_variant, compare_states, ideal_gate, run_oscillator)
from .sideband import SystemParams


@dataclass(frozen=True)
class SearchSpace:
    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if not len(self.names) == len(self.lower) == len(self.upper):
            raise ValueError("names and bounds must have equal length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("each lower bound must be below its upper bound")

    @property
    def dim(self) -> int:
        return len(self.names)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lower, float), np.array(self.upper, float)

    def contains(self, x: np.ndarray) -> bool:
        lo, hi = self.arrays()
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def as_dict(self, x) -> dict:
        return {n: float(v) for n, v in zip(self.names, x)}

    @classmethod
    def from_list(cls, items) -> "SearchSpace":
        names, lo, hi = zip(*[(i["name"], i["lower"], i["upper"]) for i in items])
        return cls(tuple(names), tuple(map(float, lo)), tuple(map(float, hi)))


# default box: pulse times in [0, 300] μs, r in [−2, 2], β in [−5, 2]
ROUND_BOUNDS = (("t1p", 0.0, 300.0), ("t3", 0.0, 300.0), ("r", -2.0, 2.0), ("beta", -5.0, 2.0))


def cubic_space(n_rounds: int, presqueeze: bool = False) -> SearchSpace:
    items = []
    if presqueeze:
        items.append(("r_pre", -2.0, 2.0))
    for l in range(1, n_rounds + 1):
        items += [(f"{name}_{l}", lo, hi) for name, lo, hi in ROUND_BOUNDS]
    names, lo, hi = zip(*items)
    return SearchSpace(names, lo, hi)


def quartic_space() -> SearchSpace:
    tau = 2 * math.pi
    items = [("t2", 0, 300), ("phi2", 0, tau), ("t4", 0, 300), ("phi4", 0, tau),
             ("theta", 0, tau), ("r_pre", -2, 2), ("r_post", -2, 2)]
    names, lo, hi = zip(*items)
    return SearchSpace(names, tuple(map(float, lo)), tuple(map(float, hi)))


def simultaneous_space() -> SearchSpace:
    return SearchSpace(("t", "r", "beta"), (0.0, -2.0, -5.0), (300.0, 2.0, 2.0))


def cubic_builder(n_rounds: int, presqueeze: bool = False, **kwargs) -> Callable[[np.ndarray], ProtocolSpec]:
    """Map a parameter vector (see ``cubic_space``) onto a cubic protocol."""
    def build(x):
        x = list(map(float, x))
        r_pre = x.pop(0) if presqueeze else 0.0
        rounds = [dict(t1p=x[4 * i], t3=x[4 * i + 1], r=x[4 * i + 2], beta=x[4 * i + 3], t2=0.0)
                  for i in range(n_rounds)]
        return build_cubic_protocol(rounds, pre_squeeze=r_pre, **kwargs)
    return build


def quartic_builder(**kwargs) -> Callable[[np.ndarray], ProtocolSpec]:
    def build(x):
        t2, phi2, t4, phi4, theta, r_pre, r_post = map(float, x)
        return build_quartic_protocol(t2, phi2, t4, phi4, theta, r_pre, r_post, **kwargs)
    return build


def simultaneous_builder(**kwargs) -> Callable[[np.ndarray], ProtocolSpec]:
    def build(x):
        t, r, beta = map(float, x)
        return build_simultaneous_variant(t, beta=beta, r=r, **kwargs)
    return build


@dataclass(frozen=True)
class InputState:
    """Coherent (``alpha``) or thermal (``nbar``) input with a weight."""

    alpha: complex = 0.0
    nbar: float | None = None
    weight: float = 1.0

    def build(self, config: HilbertConfig) -> np.ndarray:
        if self.nbar is not None:
            return fock.thermal_state(self.nbar, config)
        return fock.coherent_state(self.alpha, config)


@dataclass
class Objective:
    """Weighted fidelity of a protocol family against an ideal gate."""

    builder: Callable[[np.ndarray], ProtocolSpec]
    target: TargetGate
    config: HilbertConfig
    inputs: Sequence[InputState] = (InputState(),)
    noise: NoiseModel | None = None
    kind: str = "single-state-fidelity"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("single-state-fidelity", "ensemble-average", "thermal-input"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        total = sum(i.weight for i in self.inputs)
        if total <= 0:
            raise ValueError("input weights must sum to a positive number")
        self.inputs = tuple(InputState(i.alpha, i.nbar, i.weight / total) for i in self.inputs)

    def prepared(self):
        if "inputs" not in self._cache:
            self._cache["inputs"] = [(i.build(self.config), i.weight) for i in self.inputs]
        return self._cache["inputs"]

    def fidelity(self, params) -> float:
        spec = self.builder(np.asarray(params, float))
        return protocol_fidelity(spec, self.target, self.config, self.prepared(), self.noise)


def protocol_fidelity(spec: ProtocolSpec, target: TargetGate, config: HilbertConfig,
                      inputs, noise: NoiseModel | None = None, check_leakage: bool = True) -> float:
    total = 0.0
    for psi, w in inputs:
        if noise is not None and not noise.is_trivial:
            gen = noisy_evolution(spec, psi, noise, config, check_leakage=check_leakage)
        else:
            gen = run_oscillator(spec, psi, config, check_leakage=check_leakage)
        g, t = compare_states(gen, psi, target, config, spec.native_basis)
        total += w * fidelity(g, t)
    return total


def evaluate(params, objective: Objective, space: SearchSpace | None = None) -> float:
    """Loss −Σ wᵢ Fᵢ; leakage into the truncation buffer costs +1."""
    x = np.asarray(params, float)
    if space is not None and not space.contains(x):
        raise ValueError("parameters outside the search space")
    try:
        return -objective.fidelity(x)
    except TruncationError:
        return 1.0


@dataclass(frozen=True)
class DEConfig:
    population: int = 40
    mutation: tuple[float, float] = (0.5, 1.0)
    crossover: float = 0.7
    tol: float = 1e-6
    patience: int = 25
    max_iters: int = 1000
    seed: int = 0
    workers: int = 1
    per_dimension: bool = False   # population counts individuals per parameter

    def size(self, dim: int) -> int:
        return self.population * dim if self.per_dimension else self.population

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if not 0 < self.crossover <= 1:
            raise ValueError("crossover must lie in (0, 1]")
        lo, hi = self.mutation
        if not 0 < lo <= hi < 2:
            raise ValueError("mutation range must lie within (0, 2)")


@dataclass
class DEResult:
    x: np.ndarray
    fun: float
    history: list
    generations: int
    nfev: int
    converged: bool
    message: str


def _reflect(v: np.ndarray, lo: np.ndarray, hi: np.ndarray, rng) -> np.ndarray:
    v = np.where(v < lo, 2 * lo - v, v)
    v = np.where(v > hi, 2 * hi - v, v)
    bad = (v < lo) | (v > hi)
    if bad.any():
        v = np.where(bad, lo + rng.random(v.shape) * (hi - lo), v)
    return v


def _evaluate_all(fun, rows, pool):
    if pool is None:
        return np.array([fun(r) for r in rows], float)
    return np.array(list(pool.map(fun, rows)), float)


def _save_checkpoint(path, state: dict) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(state, fh)
    os.replace(tmp, path)


def differential_evolution(fun: Callable[[np.ndarray], float], space: SearchSpace,
                           config: DEConfig = DEConfig(), checkpoint: str | None = None,
                           resume: str | None = None, callback=None) -> DEResult:
    """Minimize ``fun`` over the box ``space``.

    Stops when, for ``patience`` consecutive generations, both the best loss
    and the population-mean loss change by less than ``tol``, or after ``max_iters`` generations (flagged in
    the result). ``checkpoint`` is rewritten after each generation and can be
    passed back as ``resume``.
    """
    lo, hi = space.arrays()
    d = space.dim
    npop = config.size(d)
    rng = np.random.default_rng(config.seed)
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        if resume:
            with open(resume) as fh:
                st = json.load(fh)
            pop = np.array(st["population"], float)
            fit = np.array(st["fitness"], float)
            history = list(st["history"])
            gen0, nfev, stall = st["generation"], st["nfev"], st["stall"]
            prev_mean = st["mean"]
            rng.bit_generator.state = st["rng_state"]
        else:
            pop = lo + rng.random((npop, d)) * (hi - lo)
            fit = _evaluate_all(fun, pop, pool)
            history = [float(fit.min())]
            gen0, nfev, stall = 0, npop, 0
            prev_mean = float(fit.mean())
        converged = False
        gen = gen0
        for gen in range(gen0 + 1, config.max_iters + 1):
            if stall >= config.patience:   # resumed from a finished run
                converged, gen = True, gen - 1
                break
            f = rng.uniform(*config.mutation)
            trial = np.empty_like(pop)
            for i in range(npop):
                choices = rng.choice(npop - 1, 3, replace=False)
                r1, r2, r3 = (c + (c >= i) for c in choices)
                v = _reflect(pop[r1] + f * (pop[r2] - pop[r3]), lo, hi, rng)
                cross = rng.random(d) < config.crossover
                cross[rng.integers(d)] = True
                trial[i] = np.where(cross, v, pop[i])
            tfit = _evaluate_all(fun, trial, pool)
            nfev += npop
            better = tfit <= fit
            pop[better], fit[better] = trial[better], tfit[better]
            best = float(fit.min())
            mean = float(fit.mean())
            stall = stall + 1 if (history[-1] - best < config.tol and abs(prev_mean - mean) < config.tol) else 0
            prev_mean = mean
            history.append(best)
            if checkpoint:
                _save_checkpoint(checkpoint, {
                    "population": pop.tolist(), "fitness": fit.tolist(), "history": history,
                    "generation": gen, "nfev": nfev, "stall": stall, "mean": prev_mean,
                    "rng_state": rng.bit_generator.state, "names": list(space.names)})
            if callback is not None:
                callback(gen, pop[np.argmin(fit)], best)
            if stall >= config.patience:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    i = int(np.argmin(fit))
    msg = "converged" if converged else "max_iters reached; returning best so far"
    return DEResult(pop[i].copy(), float(fit[i]), history, gen, nfev, converged, msg)


def perturbation_study(params, magnitude: float, trials: int,
                       fidelity_fn: Callable[[np.ndarray], float], seed: int = 0,
                       mask: Sequence[bool] | None = None) -> dict:
    """Fidelity statistics under independent uniform relative perturbations.

    Each selected parameter is multiplied by (1 + u), u ~ U(−magnitude, magnitude).
    """
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    rng = np.random.default_rng(seed)
    x0 = np.asarray(params, float)
    sel = np.ones_like(x0, bool) if mask is None else np.asarray(mask, bool)
    fids = []
    for _ in range(trials):
        u = rng.uniform(-magnitude, magnitude, x0.shape)
        fids.append(fidelity_fn(np.where(sel, x0 * (1 + u), x0)))
    fids = np.array(fids)
    return {"trials": trials, "magnitude": magnitude, "min": float(fids.min()),
            "mean": float(fids.mean()), "max": float(fids.max()), "std": float(fids.std()),
            "unperturbed": float(fidelity_fn(x0)), "fidelities": fids.tolist()}


def cubicity_fluctuation_band(target: TargetGate, fraction: float, psi_in: np.ndarray,
                              config: HilbertConfig) -> dict:
    """Fidelity of ideal gates with ζ(1 ± fraction) against the nominal gate."""
    ref = ideal_gate(target, config) @ psi_in
    out = {}
    for sgn, name in ((+1, "plus"), (-1, "minus")):
        t = TargetGate(target.order, target.zeta * (1 + sgn * fraction), target.basis)
        out[name] = fidelity(ideal_gate(t, config) @ psi_in, ref)
    return out


def table1_vector() -> np.ndarray:
    """Table-1 parameters in ``cubic_space(3)`` order (t1p, t3, r, β per round)."""
    from .protocol import TABLE1_ROUNDS
    x = []
    for rd in TABLE1_ROUNDS:
        x += [rd["t1p"], rd["t3"], fock.r_from_db(rd["r_db"]), rd["beta"]]
    return np.array(x)
