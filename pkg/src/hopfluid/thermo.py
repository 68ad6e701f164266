"""Entropy, thermodynamic forces and the Onsager matrix.

Forces, matrices and entropy production are evaluated on the interior faces
of a :class:`~hopfluid.continuum.ContinuumState`, with the same
arithmetic-mean/central-difference stencil the solver uses for currents.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import entr, xlogy

from .continuum import ContinuumState, compute_currents, face_average, face_gradient, mobility
from .errors import SingularCoord, SingularForce
from .lattice import LatticeSpec, MeanFieldState, _resolve_cap, _site_reduced_beta, partition_value


# ---------------------------------------------------------------------------
# entropy


def site_entropies(state: MeanFieldState, spec: LatticeSpec, sum_mode: str = "finite", k_cap=None) -> np.ndarray:
    """Entropy of each local grand-canonical state.

    ``-(1-n) log(1-n) - n log n + n (log Z + beta K / n)``; the Gibbs part
    vanishes at empty and cold sites.
    """
    cap = _resolve_cap(spec, sum_mode, k_cap)
    state.validate(spec.num_sites)
    n, K = state.n, state.K
    x = _site_reduced_beta(state, spec.energy_quantum, cap)
    warm = np.isfinite(x)
    Z = partition_value(x, cap)
    gibbs = np.zeros_like(n)
    gibbs[warm] = n[warm] * np.log(Z[warm]) + x[warm] * K[warm] / spec.energy_quantum
    return entr(n) + entr(1.0 - n) + gibbs


def entropy_discrete(state: MeanFieldState, spec: LatticeSpec, sum_mode: str = "finite", k_cap=None) -> float:
    return float(np.sum(site_entropies(state, spec, sum_mode, k_cap)))


def entropy_density(s: ContinuumState) -> np.ndarray:
    """``-rho log rho - (rho_m - rho) log(1 - rho/rho_m) + rho log Theta``."""
    return entr(s.rho) + s.rho_m * entr(1.0 - s.rho / s.rho_m) + xlogy(s.rho, s.theta)


def entropy_continuum(s: ContinuumState) -> float:
    return float(s.h * np.sum(entropy_density(s)))


def discrete_entropy_offset(state: MeanFieldState, spec: LatticeSpec) -> float:
    """Constant ``(log l + log eps - 1) N`` separating the discrete and continuum entropies."""
    N = float(np.sum(state.n))
    return (np.log(spec.spacing) + np.log(spec.energy_quantum) - 1.0) * N


# ---------------------------------------------------------------------------
# forces and Onsager form


def _check_interior(s: ContinuumState, exc):
    if np.any(s.rho <= 0) or np.any(s.rho >= s.rho_m) or np.any(~(s.theta > 0)):
        raise exc("needs 0 < rho < rho_m and Theta > 0 in every cell")


def _potential_bracket(s: ContinuumState) -> np.ndarray:
    """``log(rho / (1 - rho/rho_m)) + V/Theta - log Theta`` per cell."""
    return np.log(s.rho / (1.0 - s.rho / s.rho_m)) + s.V / s.theta - np.log(s.theta)


@dataclass(frozen=True)
class OnsagerData:
    """Face-centred forces ``X^c/Theta``, ``X^e/Theta`` and, optionally, ``L``."""

    x: np.ndarray
    force_c: np.ndarray
    force_e: np.ndarray
    L: Optional[np.ndarray] = None  # shape (faces, 2, 2)
    sigma: Optional[np.ndarray] = None

    def currents(self):
        """``(j_c, j_e) = L (force_c, force_e)``."""
        X = np.stack([self.force_c, self.force_e], axis=-1)
        J = np.einsum("fij,fj->fi", self.L, X)
        return J[:, 0], J[:, 1]


def forces(s: ContinuumState) -> OnsagerData:
    _check_interior(s, SingularForce)
    force_c = -face_gradient(_potential_bracket(s), s.h)
    force_e = face_gradient(1.0 / s.theta, s.h)
    return OnsagerData(s.faces[1:-1], force_c, force_e)


def onsager_coefficients(rho, theta, V, rho_m, lam) -> np.ndarray:
    """Symmetric matrix mapping forces to ``(j_c, j_e)``, shape (..., 2, 2)."""
    m = lam * mobility(rho, rho_m)
    lever = V + 2.0 * theta
    L = np.empty(np.shape(rho) + (2, 2))
    L[..., 0, 0] = m * theta
    L[..., 0, 1] = L[..., 1, 0] = m * theta * lever
    L[..., 1, 1] = m * theta * lever**2 + 2.0 * m * theta**3
    return L


def onsager_matrix(s: ContinuumState, lam: float) -> OnsagerData:
    data = forces(s)
    L = onsager_coefficients(face_average(s.rho), face_average(s.theta), face_average(s.V), s.rho_m, lam)
    sigma = _quadratic_form(s, lam, data.force_c, data.force_e)
    return OnsagerData(data.x, data.force_c, data.force_e, L, sigma)


def _quadratic_form(s, lam, fc, fe):
    # X.L.X written as a sum of squares so rounding cannot make it negative.
    theta = face_average(s.theta)
    m = lam * mobility(face_average(s.rho), s.rho_m)
    lever = face_average(s.V) + 2.0 * theta
    return m * theta * (fc + lever * fe) ** 2 + 2.0 * m * theta**3 * fe**2


def entropy_production(s: ContinuumState, lam: float) -> np.ndarray:
    """Entropy production density ``X.L.X`` on interior faces."""
    return onsager_matrix(s, lam).sigma


def entropy_production_rate(s: ContinuumState, lam: float) -> float:
    """``integral sigma dx`` with the face quadrature."""
    return float(s.h * np.sum(entropy_production(s, lam)))


def discrete_entropy_rate(s: ContinuumState, lam: float) -> float:
    """Exact ``dS/dt`` of the semi-discrete scheme, ``sum h (j_c X^c + j_e X^e)/Theta``."""
    data = forces(s)
    cur = compute_currents(s, lam)
    return float(s.h * np.sum(cur.j_c[1:-1] * data.force_c + cur.j_e[1:-1] * data.force_e))


@dataclass(frozen=True)
class CanonicalCoords:
    xi_c: np.ndarray
    xi_e: np.ndarray

    def gradients(self, h):
        return face_gradient(self.xi_c, h), face_gradient(self.xi_e, h)


def canonical_coords(s: ContinuumState) -> CanonicalCoords:
    """``xi^c = -log(rho/(1-rho/rho_m)) + log Theta - V/Theta`` and ``xi^e = 1/Theta``."""
    _check_interior(s, SingularCoord)
    return CanonicalCoords(-_potential_bracket(s), 1.0 / s.theta)


def write_diagnostics_csv(directory, s: ContinuumState, lam: float):
    """Cell file (x, s, xi^c, xi^e) and face file (x, sigma, forces, L)."""
    directory = Path(directory)
    coords = canonical_coords(s)
    data = onsager_matrix(s, lam)
    cells = directory / "diagnostics_cells.csv"
    faces = directory / "diagnostics_faces.csv"
    fmt = "{:.17g}".format
    with cells.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "s_density", "xi_c", "xi_e"])
        for row in zip(s.x, entropy_density(s), coords.xi_c, coords.xi_e):
            out.writerow([fmt(float(v)) for v in row])
    with faces.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "sigma", "force_c", "force_e", "L_cc", "L_ce", "L_ee"])
        for i in range(data.x.size):
            L = data.L[i]
            row = (data.x[i], data.sigma[i], data.force_c[i], data.force_e[i], L[0, 0], L[0, 1], L[1, 1])
            out.writerow([fmt(float(v)) for v in row])
    return cells, faces
