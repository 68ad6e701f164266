"""Finite-volume solver for the continuum density/temperature system.

Cell-centred grid on ``[0, length]``; currents live on the ``N + 1`` faces.
Face values of rho, Theta, V are arithmetic means of the adjoining cells and
face gradients are central differences across the face.  Boundary faces
carry no flux unless a temperature is pinned there (``theta_bc``), in which
case heat (but never particles) crosses them.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BoundsViolated, InvalidState, UnstableStep

# Densities within this much of [0, rho_m] are snapped back; beyond, an error.
RHO_SNAP = 1e-10
# Cells below this fraction of rho_m keep their previous temperature.
RHO_FLOOR = 1e-12
# Largest eigenvalue of the linearised diffusion matrix is (2 + sqrt 2) lambda Theta.
DIFFUSION_FACTOR = 2.0 + math.sqrt(2.0)
DEFAULT_SAFETY = 0.9


def _profile(value, x):
    if callable(value):
        return np.asarray(value(x), dtype=float) * np.ones_like(x)
    return np.broadcast_to(np.asarray(value, dtype=float), x.shape).copy()


@dataclass(frozen=True)
class ContinuumState:
    x: np.ndarray
    h: float
    rho: np.ndarray
    theta: np.ndarray
    rho_m: float = 1.0
    V: Optional[np.ndarray] = None
    t: float = 0.0

    def __post_init__(self):
        arrays = {}
        for name in ("x", "rho", "theta"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            arrays[name] = arr
        V = np.zeros_like(arrays["x"]) if self.V is None else np.array(self.V, dtype=float).reshape(-1)
        V.setflags(write=False)
        arrays["V"] = V
        for name, arr in arrays.items():
            if arr.shape != arrays["x"].shape:
                raise InvalidState(f"{name} has {arr.size} entries, grid has {arrays['x'].size}")
            object.__setattr__(self, name, arr)

    @classmethod
    def on_interval(cls, length, num_cells, rho, theta, V=0.0, rho_m=1.0, t=0.0):
        """Uniform grid of ``num_cells`` cells; profiles may be callables of x."""
        h = length / num_cells
        x = (np.arange(num_cells) + 0.5) * h
        return cls(x, h, _profile(rho, x), _profile(theta, x), rho_m, _profile(V, x), t)

    @property
    def num_cells(self) -> int:
        return self.x.size

    @property
    def faces(self) -> np.ndarray:
        return np.concatenate([self.x - 0.5 * self.h, [self.x[-1] + 0.5 * self.h]])

    @property
    def heat(self) -> np.ndarray:
        return self.rho * self.theta

    def validate(self) -> "ContinuumState":
        if self.num_cells < 2 or not self.h > 0:
            raise InvalidState("need at least two cells of positive width")
        if not np.allclose(np.diff(self.x), self.h, rtol=1e-9, atol=0):
            raise InvalidState("grid must be uniform with spacing h")
        if np.any(self.rho < 0) or np.any(self.rho > self.rho_m):
            raise InvalidState("density outside [0, rho_m]")
        if np.any(~(self.theta > 0)):
            raise InvalidState("temperature must be positive")
        return self


@dataclass(frozen=True)
class CurrentSet:
    """Face currents; index ``f`` is the face left of cell ``f``."""

    j_c: np.ndarray
    j_gamma: np.ndarray
    j_e: np.ndarray


def face_average(a) -> np.ndarray:
    a = np.asarray(a)
    return 0.5 * (a[1:] + a[:-1])


def face_gradient(a, h) -> np.ndarray:
    a = np.asarray(a)
    return (a[1:] - a[:-1]) / h


def mobility(rho, rho_m):
    return rho * (1.0 - rho / rho_m)


def compute_currents(s: ContinuumState, lam: float, theta_bc: Optional[Sequence[float]] = None) -> CurrentSet:
    """Particle, heat and energy currents on every face.

    ``j_c = -lam (Theta rho' + rho (1 - rho/rho_m) (Theta + V)')`` and
    ``j_gamma = 2 (Theta j_c - lam rho (1 - rho/rho_m) Theta Theta')``.
    """
    rho_f = face_average(s.rho)
    theta_f = face_average(s.theta)
    V_f = face_average(s.V)
    mob = mobility(rho_f, s.rho_m)
    d_theta = face_gradient(s.theta, s.h)
    j_c_in = -lam * (theta_f * face_gradient(s.rho, s.h) + mob * (d_theta + face_gradient(s.V, s.h)))
    j_g_in = 2.0 * (theta_f * j_c_in - lam * mob * theta_f * d_theta)

    N = s.num_cells
    j_c = np.zeros(N + 1)
    j_g = np.zeros(N + 1)
    V_faces = np.zeros(N + 1)
    j_c[1:-1] = j_c_in
    j_g[1:-1] = j_g_in
    V_faces[1:-1] = V_f
    if theta_bc is not None:
        # Pinned face temperature via a mirrored ghost cell; particles stay in.
        for face, cell, sign in ((0, 0, -1.0), (N, N - 1, 1.0)):
            tb = theta_bc[0] if face == 0 else theta_bc[1]
            mob_b = mobility(s.rho[cell], s.rho_m)
            grad = sign * 2.0 * (tb - s.theta[cell]) / s.h
            j_g[face] = -2.0 * lam * mob_b * tb * grad
            V_faces[face] = s.V[cell]
    return CurrentSet(j_c, j_g, j_g + V_faces * j_c)


def max_stable_dt(s: ContinuumState, lam: float) -> float:
    """Forward-Euler bound ``h^2 / (2 (2 + sqrt 2) lam max Theta)``."""
    return s.h**2 / (2.0 * DIFFUSION_FACTOR * lam * float(np.max(s.theta)))


def default_dt(s: ContinuumState, lam: float, safety: float = DEFAULT_SAFETY) -> float:
    return safety * max_stable_dt(s, lam)


def _heat_source(j_c, V, h):
    """Cell average of ``-j_c dV/dx`` over the two adjoining faces."""
    work = np.zeros_like(j_c)
    work[1:-1] = j_c[1:-1] * (V[1:] - V[:-1]) / h
    return -0.5 * (work[:-1] + work[1:])


def pde_step(
    s: ContinuumState,
    lam: float,
    dt: Optional[float] = None,
    theta_bc: Optional[Sequence[float]] = None,
) -> ContinuumState:
    """One explicit conservative step of the density and heat equations."""
    limit = max_stable_dt(s, lam)
    if dt is None:
        dt = DEFAULT_SAFETY * limit
    if dt > limit * (1.0 + 1e-12):
        raise UnstableStep(f"dt = {dt:.3e} exceeds the stability bound {limit:.3e}")
    cur = compute_currents(s, lam, theta_bc)
    div_c = (cur.j_c[1:] - cur.j_c[:-1]) / s.h
    div_g = (cur.j_gamma[1:] - cur.j_gamma[:-1]) / s.h
    rho = s.rho - dt * div_c
    heat = s.heat - dt * div_g + dt * _heat_source(cur.j_c, s.V, s.h)

    low = rho < 0
    high = rho > s.rho_m
    if np.any(rho < -RHO_SNAP) or np.any(rho > s.rho_m + RHO_SNAP):
        raise BoundsViolated(
            f"density left [0, rho_m] (min {rho.min():.3e}, max {rho.max():.3e})"
        )
    rho = np.where(low, 0.0, np.where(high, s.rho_m, rho))
    live = rho >= RHO_FLOOR * s.rho_m
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(live, heat / rho, s.theta)
    if np.any(~(theta > 0)):
        raise BoundsViolated("temperature became non-positive")
    return replace(s, rho=rho, theta=theta, t=s.t + dt)


def total_mass(s: ContinuumState) -> float:
    return float(s.h * np.sum(s.rho))


def total_energy(s: ContinuumState) -> float:
    return float(s.h * np.sum(s.rho * (s.theta + s.V)))


def first_law_audit(s: ContinuumState, s_next: ContinuumState) -> float:
    """Absolute change of ``integral rho (Theta + V) dx`` between two states."""
    return abs(total_energy(s_next) - total_energy(s))


def evolve(
    s: ContinuumState,
    lam: float,
    t_end: float,
    dt: Optional[float] = None,
    theta_bc: Optional[Sequence[float]] = None,
    callback: Optional[Callable[[ContinuumState], None]] = None,
) -> ContinuumState:
    """Step to ``t_end``; the last step is shortened to land on it exactly.

    Without ``dt`` the step is re-chosen from the stability bound each time.
    """
    t_end = float(t_end)
    if dt is not None:
        count = max(int(math.ceil((t_end - s.t) / dt - 1e-9)), 0)
        for i in range(count):
            this = t_end - s.t if i == count - 1 else dt
            s = pde_step(s, lam, this, theta_bc)
            if callback is not None:
                callback(s)
        return replace(s, t=t_end) if count else s
    while s.t < t_end:
        step = default_dt(s, lam)
        last = s.t + step * (1.0 + 1e-9) >= t_end
        s = pde_step(s, lam, t_end - s.t if last else step, theta_bc)
        if last:
            s = replace(s, t=t_end)
        if callback is not None:
            callback(s)
    return s


SNAPSHOT_COLUMNS = ("t", "x", "rho", "theta", "V", "j_c", "j_gamma", "j_e")


def write_snapshots_csv(path, states, lam: float, theta_bc=None) -> Path:
    """CSV of cell fields plus face currents averaged to cell centres."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(SNAPSHOT_COLUMNS)
        for s in states:
            cur = compute_currents(s, lam, theta_bc)
            cells = zip(s.x, s.rho, s.theta, s.V, face_average(cur.j_c), face_average(cur.j_gamma), face_average(cur.j_e))
            for row in cells:
                out.writerow([f"{s.t:.17g}"] + [f"{float(v):.17g}" for v in row])
    return path
