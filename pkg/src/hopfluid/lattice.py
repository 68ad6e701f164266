"""Mean-field dynamics of the hard-core hopping lattice.

Each site of a 1-D interval holds at most one particle with kinetic energy
``eps * k``, ``k = 0, 1, 2, ...``.  A particle hops to an empty neighbour,
paying any rise in potential out of its kinetic energy; the hop probability
per step is ``lambda * eps * (s + 1)`` where ``s`` is the kinetic quantum on
the right-hand site of the bond (the spare energy of an uphill hop when the
bond rises to the right).

The state is the pair of site means ``(n, K)``.  One step applies the
bistochastic hop matrix to the product of local grand-canonical states and
reads back the new means, which define the next product state.

Two summation modes are supported:

``"finite"``
    The local spectrum is ``k = 0 .. k_max`` with ``k_max`` the largest
    quantum for which ``2 * lambda * eps * (k_max + 1) <= 1``.  Site
    distributions are renormalised over that range and the closure is solved
    exactly for it, so particles, energy and entropy behave exactly as the
    underlying Markov chain dictates.
``"infinite"``
    The spectrum is unbounded and every sum takes its geometric closed form.
    Useful as a cross-check and to mirror the continuum limit; the hop
    probabilities are not bounded, so occupation bounds are not guaranteed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyOrColdSite, InvalidRates, InvalidState, StepTooLarge

SUM_MODES = ("finite", "infinite")

# Spectra up to this size are summed term by term; larger ones use closed forms.
DIRECT_SUM_LIMIT = 256

# Occupations may leave [0, 1] by rounding only.
OCCUPATION_TOL = 1e-12


def k_max(hop_rate: float, energy_quantum: float) -> int:
    """Largest kinetic quantum ``k`` with ``2*lambda*eps*(k+1) <= 1``.

    >>> k_max(0.5, 0.1)
    9
    >>> k_max(0.05, 0.1)
    99
    """
    ratio = 2.0 * hop_rate * energy_quantum
    if not ratio > 0.0:
        raise InvalidRates(f"hop rate and energy quantum must be positive (2*lambda*eps = {ratio})")
    if ratio >= 1.0:
        raise InvalidRates(
            f"2*lambda*eps = {ratio:g} >= 1 leaves no admissible hopping cutoff"
        )
    # Guard against 1/(2*lambda*eps) landing a hair below an integer.
    k = int(math.floor(1.0 / ratio * (1.0 + 1e-12))) - 1
    while k >= 0 and ratio * (k + 1) > 1.0 + 1e-12:
        k -= 1
    return k


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry and rates of a 1-D lattice.

    ``potential`` may be arbitrary reals; it is quantised on construction so
    that ``V[x] - V[0]`` is the nearest integer multiple of ``eps``.  The
    largest shift applied is kept in ``quantization_error``.
    """

    num_sites: int
    spacing: float
    energy_quantum: float
    hop_rate: float
    potential: Optional[np.ndarray] = None
    steps: np.ndarray = field(init=False, repr=False)
    quantization_error: float = field(init=False)

    def __post_init__(self):
        if int(self.num_sites) != self.num_sites or self.num_sites < 2:
            raise InvalidState(f"num_sites must be an integer >= 2, got {self.num_sites}")
        if not self.spacing > 0:
            raise InvalidState(f"spacing must be positive, got {self.spacing}")
        if not self.energy_quantum > 0 or not self.hop_rate > 0:
            raise InvalidRates("energy quantum and hop rate must be positive")
        if k_max(self.hop_rate, self.energy_quantum) < 1:
            raise InvalidRates(
                f"k_max must be >= 1; lambda*eps = {self.hop_rate * self.energy_quantum:g} > 1/4"
            )
        object.__setattr__(self, "num_sites", int(self.num_sites))
        raw = (
            np.zeros(self.num_sites)
            if self.potential is None
            else np.array(self.potential, dtype=float).reshape(-1)
        )
        if raw.shape != (self.num_sites,):
            raise InvalidState(f"potential needs {self.num_sites} values, got {raw.size}")
        if not np.all(np.isfinite(raw)):
            raise InvalidState("potential must be finite")
        levels = np.rint((raw - raw[0]) / self.energy_quantum).astype(np.int64)
        quantized = raw[0] + self.energy_quantum * levels
        steps = np.diff(levels)
        quantized.setflags(write=False)
        steps.setflags(write=False)
        object.__setattr__(self, "potential", quantized)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "quantization_error", float(np.max(np.abs(quantized - raw))))

    @classmethod
    def from_gamma(cls, num_sites, spacing, gamma, hop_rate, potential=None):
        """Build with ``eps = gamma * spacing`` (the diffusion scaling)."""
        return cls(num_sites, spacing, gamma * spacing, hop_rate, potential)

    @property
    def gamma(self) -> float:
        return self.energy_quantum / self.spacing

    @property
    def k_max(self) -> int:
        return k_max(self.hop_rate, self.energy_quantum)

    @property
    def dt(self) -> float:
        """Physical time per step, ``dt = spacing**2``."""
        return self.spacing**2

    @property
    def positions(self) -> np.ndarray:
        """Site centres on ``[0, num_sites * spacing]``."""
        return (np.arange(self.num_sites) + 0.5) * self.spacing

    @property
    def length(self) -> float:
        return self.num_sites * self.spacing


@dataclass(frozen=True)
class MeanFieldState:
    """Site occupation means ``n`` and kinetic-energy means ``K``."""

    n: np.ndarray
    K: np.ndarray
    _closure_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = np.array(self.n, dtype=float).reshape(-1)
        K = np.array(self.K, dtype=float).reshape(-1)
        if n.shape != K.shape:
            raise InvalidState(f"n and K differ in length ({n.size} vs {K.size})")
        n.setflags(write=False)
        K.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "K", K)

    def validate(self, num_sites: Optional[int] = None) -> "MeanFieldState":
        n, K = self.n, self.K
        if num_sites is not None and n.size != num_sites:
            raise InvalidState(f"state has {n.size} sites, lattice has {num_sites}")
        if not (np.all(np.isfinite(n)) and np.all(np.isfinite(K))):
            raise InvalidState("state contains non-finite values")
        if np.any(n < 0) or np.any(n > 1):
            raise InvalidState("occupations must lie in [0, 1]")
        if np.any(K < 0):
            raise InvalidState("kinetic energies must be non-negative")
        if np.any((n == 0) & (K != 0)):
            raise InvalidState("empty sites must carry zero kinetic energy")
        return self


@dataclass(frozen=True)
class SiteClosure:
    """Local grand-canonical parameters recovered from ``(n, K)``."""

    beta: np.ndarray
    theta: np.ndarray
    Z: np.ndarray


# ---------------------------------------------------------------------------
# truncated geometric distribution helpers (x = eps * beta)


def _rpow(x, a):
    """``exp(-a*x)`` with the convention ``0 * inf = 0``."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.exp(-a * x)
    return np.where(a == 0, 1.0, out)


def _cap_value(k_cap):
    return None if k_cap is None or k_cap == math.inf else int(k_cap)


# Below this |x| (k_cap + 1) the truncated moments use their Taylor series.
_SMALL_X = 1e-4


def mean_quanta(x, k_cap=None):
    """Mean of ``k`` under ``exp(-x k)`` on ``0..k_cap`` (``None``: unbounded).

    With a finite cap ``x`` may be zero or negative (negative temperature).
    """
    x = np.asarray(x, dtype=float)
    cap = _cap_value(k_cap)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        mean = np.where(np.isinf(x), 0.0, 1.0 / np.expm1(x))
        if cap is not None:
            tail = (cap + 1) / np.expm1((cap + 1) * x)
            mean = mean - np.where(np.isinf(x), 0.0, tail)
            small = np.abs(x) * (cap + 1) < _SMALL_X
            mean = np.where(small, cap / 2.0 - x * cap * (cap + 2) / 12.0, mean)
    return mean


def _var_quanta(x, cap):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = np.exp(-x)
        om = -np.expm1(-x)
        var = r / om**2
        if cap is not None:
            R = np.exp(-(cap + 1) * x)
            var = var - (cap + 1) ** 2 * R / np.expm1(-(cap + 1) * x) ** 2
            var = np.where(np.abs(x) * (cap + 1) < _SMALL_X, cap * (cap + 2) / 12.0, var)
    return var


def partition_value(x, k_cap=None):
    """``Z = sum_k exp(-x k)`` over the local spectrum."""
    x = np.asarray(x, dtype=float)
    cap = _cap_value(k_cap)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if cap is None:
            Z = -1.0 / np.expm1(-x)
        else:
            Z = np.where(x == 0, cap + 1.0, np.expm1(-(cap + 1) * x) / np.expm1(-x))
    return np.where(np.isinf(x), 1.0, Z)


def reduced_beta(mean, k_cap=None):
    """Solve ``mean_quanta(x, k_cap) = mean`` for ``x = eps*beta``.

    ``mean`` must be positive.  For a finite cap it must also lie below
    ``k_cap``; means above ``k_cap / 2`` give ``x < 0``, the
    negative-temperature states of a bounded spectrum.
    """
    m = np.asarray(mean, dtype=float)
    if np.any(~(m > 0)):
        raise InvalidState("mean kinetic quantum must be positive")
    cap = _cap_value(k_cap)
    if cap is None:
        return np.log1p(1.0 / m)
    if np.any(m >= cap):
        raise InvalidState(
            f"mean kinetic quantum {float(np.max(m)):g} reaches k_cap = {cap}; no state fits"
        )
    # mean(-x) = cap - mean(x): solve on the positive side and reflect.
    flip = m > cap / 2.0
    mm = np.where(flip, cap - m, m)
    x = np.where(mm == cap / 2.0, 0.0, _solve_positive(mm, cap))
    return np.where(flip, -x, x)


def _mean_var_positive(x, cap):
    # mean and variance of k on 0..cap for x > 0, sharing the exponentials
    c1 = cap + 1
    e = np.expm1(x)
    E = np.expm1(c1 * x)
    mean = 1.0 / e - c1 / E
    var = (e + 1.0) / e**2 - c1**2 * (E + 1.0) / E**2
    small = x * c1 < _SMALL_X
    if np.any(small):
        mean = np.where(small, cap / 2.0 - x * cap * (cap + 2) / 12.0, mean)
        var = np.where(small, cap * (cap + 2) / 12.0, var)
    return mean, var


def _solve_positive(m, cap):
    x = np.log1p(1.0 / m)
    lo = np.zeros_like(x)
    hi = x.copy()
    tol = 4 * np.finfo(float).eps
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for _ in range(200):
            mean, var = _mean_var_positive(x, cap)
            f = mean - m
            hi = np.where(f <= 0, x, hi)
            lo = np.where(f > 0, x, lo)
            xn = x + f / var
            bad = ~((xn > lo) & (xn < hi))
            xn = np.where(bad & (f != 0), 0.5 * (lo + hi), np.where(f == 0, x, xn))
            if np.all(np.abs(xn - x) <= tol * np.abs(x)):
                return xn
            x = xn
    return x


def closure_from_means(n, K, epsilon, k_cap=None) -> SiteClosure:
    """Temperature and partition value of the grand-canonical site state.

    With ``k_cap=None`` this is the closed-form inversion
    ``exp(eps*beta) = 1 + eps*n/K``, ``Z = 1 + K/(eps*n)``.  With a finite
    cap the mean of the renormalised distribution is matched exactly.

    Raises
    ------
    EmptyOrColdSite
        If any site has ``n == 0`` or ``K == 0``; those sites have no
        finite temperature and callers handle them as the ``beta -> inf``
        limit.
    """
    n = np.asarray(n, dtype=float)
    K = np.asarray(K, dtype=float)
    if np.any(n <= 0) or np.any(K <= 0):
        raise EmptyOrColdSite("closure needs n > 0 and K > 0 at every site")
    if np.any(n > 1):
        raise InvalidState("occupation above 1")
    x = reduced_beta(K / (epsilon * n), k_cap)
    beta = x / epsilon
    return SiteClosure(beta=beta, theta=1.0 / beta, Z=partition_value(x, k_cap))


def kinetic_from_beta(n, beta, epsilon, k_cap=None):
    """Mean kinetic energy ``K = eps * n * <k>`` of the site state at ``beta``."""
    n = np.asarray(n, dtype=float)
    return epsilon * n * mean_quanta(epsilon * np.asarray(beta, dtype=float), k_cap)


def _site_reduced_beta(state: MeanFieldState, epsilon, cap):
    """``x = eps*beta`` per site; empty and cold sites map to ``inf``."""
    key = (epsilon, cap)
    cached = state._closure_cache.get(key)
    if cached is not None:
        return cached
    n, K = state.n, state.K
    warm = (n > 0) & (K > 0)
    x = np.full(n.shape, np.inf)
    if np.any(warm):
        x[warm] = reduced_beta(K[warm] / (epsilon * n[warm]), cap)
    x.setflags(write=False)
    state._closure_cache[key] = x
    return x


# ---------------------------------------------------------------------------
# moment sums


def _tail_moments(x, a):
    """``sum_{k>=a} k^m exp(-x k)`` for m = 0, 1, 2 (closed forms)."""
    r = np.exp(-x)
    om = -np.expm1(-x)
    ra = _rpow(x, a)
    t0 = ra / om
    t1 = ra * (a / om + r / om**2)
    t2 = ra * (a * a / om + (2 * a + 1) * r / om**2 + 2 * r * r / om**3)
    return t0, t1, t2


def _geometric_moments(x, lo, hi, cap):
    """``sum_{k=lo}^{hi} k^m exp(-x k)`` for m = 0, 1, 2, elementwise.

    ``hi`` may be ``inf``.  Empty ranges give zero.
    """
    x = np.asarray(x, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x, lo, hi = np.broadcast_arrays(x, lo, hi)
    if cap is not None and (cap <= DIRECT_SUM_LIMIT or np.any(x <= 0)):
        k = np.arange(cap + 1, dtype=float)
        w = _rpow(x[..., None], k)
        w = np.where((k >= lo[..., None]) & (k <= hi[..., None]), w, 0.0)
        m = w @ np.stack([np.ones_like(k), k, k * k], axis=1)
        return m[..., 0], m[..., 1], m[..., 2]
    empty = hi < lo
    lo_ = np.where(empty, 0.0, lo)
    a0, a1, a2 = _tail_moments(x, lo_)
    finite_hi = np.isfinite(hi) & ~empty
    top = np.where(finite_hi, hi + 1, 0.0)
    b0, b1, b2 = _tail_moments(x, top)
    out = []
    for a, b in ((a0, b0), (a1, b1), (a2, b2)):
        s = np.where(finite_hi, a - b, a)
        out.append(np.where(empty, 0.0, s))
    return tuple(out)


def weighted_tail_sums(beta, epsilon, a, shift, k_cap, moment):
    """Evaluate ``sum_{k=a}^{k_cap} k^moment (k + 1 - shift) exp(-eps k beta)``.

    ``k_cap`` may be ``None`` or ``math.inf`` for the infinite series, which
    is evaluated in closed form.  ``moment`` is 0 or 1.  ``beta = inf``
    keeps only the ``k = 0`` term.
    """
    if moment not in (0, 1):
        raise ValueError("moment must be 0 or 1")
    if a < 0:
        raise ValueError("lower index must be non-negative")
    cap = _cap_value(k_cap)
    x = epsilon * np.asarray(beta, dtype=float)
    hi = math.inf if cap is None else cap
    g = _geometric_moments(x, a, hi, cap)
    result = g[moment + 1] + (1 - shift) * g[moment]
    return result if np.ndim(result) else float(result)


# ---------------------------------------------------------------------------
# dynamics


@dataclass(frozen=True)
class BondFluxes:
    """Net transfers across each bond ``(x, x+1)`` during one step.

    ``particle``   occupation moved from x to x+1.
    ``kinetic_out`` kinetic energy removed from site x.
    ``kinetic_in``  kinetic energy delivered to site x+1.
    The two kinetic terms differ by ``eps * w * particle``, the potential
    energy picked up on the way.
    """

    particle: np.ndarray
    kinetic_out: np.ndarray
    kinetic_in: np.ndarray

    @property
    def heat(self) -> np.ndarray:
        """Kinetic-energy transfer referred to the bond midpoint."""
        return 0.5 * (self.kinetic_out + self.kinetic_in)

    def energy(self, potential) -> np.ndarray:
        """Total-energy transfer, kinetic plus carried potential energy."""
        return self.kinetic_out + np.asarray(potential)[:-1] * self.particle


def _resolve_cap(spec: LatticeSpec, sum_mode: str, k_cap):
    if sum_mode not in SUM_MODES:
        raise ValueError(f"sum_mode must be one of {SUM_MODES}, got {sum_mode!r}")
    if sum_mode == "infinite":
        return None
    cap = spec.k_max if k_cap is None else int(k_cap)
    if cap < 0 or cap > spec.k_max:
        raise InvalidRates(f"k_cap = {cap} outside [0, k_max = {spec.k_max}]")
    return cap


def bond_fluxes(
    state: MeanFieldState, spec: LatticeSpec, sum_mode: str = "finite", k_cap=None
) -> BondFluxes:
    """Per-bond particle and kinetic-energy transfers for one step."""
    cap = _resolve_cap(spec, sum_mode, k_cap)
    state.validate(spec.num_sites)
    eps = spec.energy_quantum
    x = _site_reduced_beta(state, eps, cap)
    Z = partition_value(x, cap)
    n = state.n
    w = spec.steps.astype(float)

    # s is the kinetic quantum on the right-hand site of the bond.
    s_lo = np.maximum(0.0, -w)
    s_hi = np.full(w.shape, np.inf) if cap is None else cap - np.maximum(w, 0.0)

    g0, g1, g2 = _geometric_moments(x[:-1], s_lo + w, s_hi + w, cap)
    left_rate = g1 + (1 - w) * g0
    left_energy = g2 + (1 - w) * g1
    h0, h1, h2 = _geometric_moments(x[1:], s_lo, s_hi, cap)
    right_rate = h1 + h0
    right_energy = h2 + h1

    forward = n[:-1] * (1.0 - n[1:]) / Z[:-1]
    backward = (1.0 - n[:-1]) * n[1:] / Z[1:]
    rate = spec.hop_rate * eps
    particle = rate * (forward * left_rate - backward * right_rate)
    kinetic_out = rate * eps * (forward * left_energy - backward * (right_energy + w * right_rate))
    kinetic_in = kinetic_out - eps * w * particle
    return BondFluxes(particle, kinetic_out, kinetic_in)


def apply_fluxes(state: MeanFieldState, fluxes: BondFluxes) -> MeanFieldState:
    """New site means after moving the given bond transfers."""
    dn = np.zeros_like(state.n)
    dK = np.zeros_like(state.K)
    dn[:-1] -= fluxes.particle
    dn[1:] += fluxes.particle
    dK[:-1] -= fluxes.kinetic_out
    dK[1:] += fluxes.kinetic_in
    n = state.n + dn
    K = state.K + dK
    if np.any(n < -OCCUPATION_TOL) or np.any(n > 1 + OCCUPATION_TOL):
        worst = float(max(-n.min(), n.max() - 1))
        raise StepTooLarge(f"occupation left [0, 1] by {worst:.3g}; lambda*eps too large")
    n = np.clip(n, 0.0, 1.0)
    K = np.where(n == 0, 0.0, np.maximum(K, 0.0))
    return MeanFieldState(n, K)


def step_mean_field(
    state: MeanFieldState, spec: LatticeSpec, sum_mode: str = "finite", k_cap=None
) -> MeanFieldState:
    """Advance ``(n, K)`` by one time step ``dt = spacing**2``.

    Bonds leaving the interval carry nothing (no-flux boundaries).
    ``k_cap`` overrides the finite spectrum cap (must not exceed ``k_max``).
    """
    return apply_fluxes(state, bond_fluxes(state, spec, sum_mode, k_cap))


def totals(state: MeanFieldState, spec: LatticeSpec):
    """Total particle number and total energy ``sum(K + V n)``."""
    N = float(np.sum(state.n))
    E = float(np.sum(state.K + spec.potential * state.n))
    return N, E


def state_from_profiles(spec: LatticeSpec, n, theta, sum_mode: str = "finite", k_cap=None):
    """Mean-field state with occupations ``n`` and site temperatures ``theta``."""
    cap = _resolve_cap(spec, sum_mode, k_cap)
    n = np.broadcast_to(np.asarray(n, dtype=float), (spec.num_sites,))
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (spec.num_sites,))
    if np.any(theta <= 0):
        raise InvalidState("temperatures must be positive")
    K = kinetic_from_beta(n, 1.0 / theta, spec.energy_quantum, cap)
    return MeanFieldState(n, np.where(n > 0, K, 0.0)).validate(spec.num_sites)


def temperatures(state: MeanFieldState, spec: LatticeSpec, sum_mode: str = "finite", k_cap=None):
    """Site temperatures ``1/beta``; zero at empty or cold sites.

    In finite mode a site whose mean exceeds half the cap has ``beta < 0``
    and so a negative temperature.
    """
    cap = _resolve_cap(spec, sum_mode, k_cap)
    x = _site_reduced_beta(state, spec.energy_quantum, cap)
    with np.errstate(divide="ignore"):
        return np.where(np.isinf(x), 0.0, spec.energy_quantum / x)
