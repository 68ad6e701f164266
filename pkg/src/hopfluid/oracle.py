"""Brute-force Markov chain on tiny lattices.

Configurations are integer vectors, one entry per site: ``EMPTY`` (-1) for a
hole or the kinetic quantum ``k`` of the particle sitting there.  They are
enumerated lexicographically with site 0 most significant and
``EMPTY < 0 < 1 < ...``.

The hop matrix couples two configurations that differ by one particle moving
across a bond ``(x, x+1)`` with ``k_right = k_left - w_x``; the coupling is
``lambda * eps * (k_right + 1)`` and the diagonal restores unit row sums.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidRates, TooLarge
from .lattice import LatticeSpec, MeanFieldState, _site_reduced_beta, partition_value

EMPTY = -1
MAX_CONFIGURATIONS = 10**7
# Dense matrices beyond this many configurations are refused (~0.3 GB).
MAX_DENSE = 6000


def enumerate_configurations(spec: LatticeSpec, k_cap: int) -> np.ndarray:
    """All configurations with kinetic quanta up to ``k_cap``, canonical order."""
    if k_cap < 0:
        raise ValueError("k_cap must be non-negative")
    size = (k_cap + 2) ** spec.num_sites
    if size > MAX_CONFIGURATIONS:
        raise TooLarge(f"{size} configurations exceed the guard of {MAX_CONFIGURATIONS}")
    symbols = range(EMPTY, k_cap + 1)
    configs = np.array(list(itertools.product(symbols, repeat=spec.num_sites)), dtype=np.int64)
    return configs.reshape(size, spec.num_sites)


def _index(configs: np.ndarray, k_cap: int) -> np.ndarray:
    base = k_cap + 2
    weights = base ** np.arange(configs.shape[1] - 1, -1, -1)
    return (configs + 1) @ weights


@dataclass(frozen=True)
class TransitionMatrix:
    matrix: np.ndarray
    configs: np.ndarray
    energy: np.ndarray  # E = sum over occupied sites of eps*k + V
    energy_level: np.ndarray  # integer label of E relative to N*V[0]
    count: np.ndarray
    k_cap: int
    epsilon: float

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def min_entry(self) -> float:
        return float(self.matrix.min())

    def block_leakage(self) -> float:
        """Largest coupling between different ``(E, N)`` blocks."""
        different = (self.energy_level[:, None] != self.energy_level[None, :]) | (
            self.count[:, None] != self.count[None, :]
        )
        return float(np.max(np.abs(self.matrix[different]), initial=0.0))


@dataclass(frozen=True)
class ExactDistribution:
    probs: np.ndarray
    configs: np.ndarray
    epsilon: float

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-np.sum(p * np.log(p)))


def build_T(spec: LatticeSpec, k_cap: int) -> TransitionMatrix:
    """Dense symmetric hop matrix on the configurations up to ``k_cap``."""
    eps, lam = spec.energy_quantum, spec.hop_rate
    if 2.0 * lam * eps * (k_cap + 1) > 1.0 + 1e-12:
        raise InvalidRates(
            f"2*lambda*eps*(k_cap+1) = {2 * lam * eps * (k_cap + 1):g} > 1"
        )
    configs = enumerate_configurations(spec, k_cap)
    size = configs.shape[0]
    if size > MAX_DENSE:
        raise TooLarge(f"{size} configurations are too many for a dense matrix")
    occupied = configs != EMPTY
    levels = np.concatenate([[0], np.cumsum(spec.steps)])
    count = occupied.sum(axis=1)
    energy_level = np.where(occupied, configs + levels, 0).sum(axis=1)
    energy = np.where(occupied, eps * configs + spec.potential, 0.0).sum(axis=1)

    T = np.zeros((size, size))
    for bond, w in enumerate(spec.steps):
        k_left = configs[:, bond]
        k_right = k_left - w
        movable = (k_left != EMPTY) & (configs[:, bond + 1] == EMPTY)
        movable &= (k_right >= 0) & (k_right <= k_cap)
        src = np.flatnonzero(movable)
        targets = configs[src].copy()
        targets[:, bond] = EMPTY
        targets[:, bond + 1] = k_right[src]
        dst = _index(targets, k_cap)
        prob = lam * eps * (k_right[src] + 1)
        T[src, dst] = prob
        T[dst, src] = prob
    T[np.diag_indices(size)] = 1.0 - T.sum(axis=1)
    return TransitionMatrix(T, configs, energy, energy_level, count, k_cap, eps)


def evolve_exact(p: ExactDistribution, T: TransitionMatrix, steps: int = 1) -> ExactDistribution:
    if p.probs.shape != (T.size,):
        raise ValueError(f"distribution has {p.probs.size} entries, matrix is {T.size}x{T.size}")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    q = p.probs.copy()
    for _ in range(steps):
        q = T.matrix @ q
    return ExactDistribution(q, p.configs, p.epsilon)


def marginals(p: ExactDistribution) -> MeanFieldState:
    """Site means ``n_x`` and ``K_x = eps * E[k_x]`` of a distribution."""
    occupied = p.configs != EMPTY
    n = p.probs @ occupied
    K = p.epsilon * (p.probs @ np.where(occupied, p.configs, 0))
    return MeanFieldState(n, K)


def site_distributions(state: MeanFieldState, spec: LatticeSpec, k_cap: int) -> np.ndarray:
    """Per-site probabilities over ``(EMPTY, 0, ..., k_cap)``, shape (L, k_cap+2)."""
    state.validate(spec.num_sites)
    x = _site_reduced_beta(state, spec.energy_quantum, k_cap)
    Z = partition_value(x, k_cap)
    k = np.arange(k_cap + 1)
    with np.errstate(invalid="ignore", over="ignore"):
        boltz = np.where(k == 0, 1.0, np.exp(-np.outer(x, k)))
    table = np.empty((spec.num_sites, k_cap + 2))
    table[:, 0] = 1.0 - state.n
    table[:, 1:] = state.n[:, None] * boltz / Z[:, None]
    return table


def project_Q(state: MeanFieldState, spec: LatticeSpec, k_cap: int) -> ExactDistribution:
    """Product of local grand-canonical states with the given means."""
    table = site_distributions(state, spec, k_cap)
    configs = enumerate_configurations(spec, k_cap)
    probs = np.ones(configs.shape[0])
    for site in range(spec.num_sites):
        probs *= table[site, configs[:, site] + 1]
    return ExactDistribution(probs, configs, spec.energy_quantum)


def point_mass(configs: np.ndarray, config, epsilon: float) -> ExactDistribution:
    hits = np.flatnonzero(np.all(configs == np.asarray(config), axis=1))
    if hits.size != 1:
        raise ValueError(f"configuration {config} not in the enumeration")
    probs = np.zeros(configs.shape[0])
    probs[hits[0]] = 1.0
    return ExactDistribution(probs, configs, epsilon)


def _label(config) -> str:
    return " ".join("-" if k == EMPTY else str(int(k)) for k in config)


def dump_matrix_csv(T: TransitionMatrix, path) -> Path:
    """Write ``T`` as CSV; row/column order is the canonical enumeration."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["config"] + [_label(c) for c in T.configs])
        for c, row in zip(T.configs, T.matrix):
            out.writerow([_label(c)] + [repr(float(v)) for v in row])
    return path


def dump_distribution_csv(p: ExactDistribution, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["index", "config", "probability"])
        for i, (c, v) in enumerate(zip(p.configs, p.probs)):
            out.writerow([i, _label(c), repr(float(v))])
    return path
