"""Randomised invariants checked with hypothesis."""
import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from hopfluid.config import canonical_text, parse_config
from hopfluid.continuum import ContinuumState, pde_step, total_energy, total_mass
from hopfluid.lattice import (
    LatticeSpec,
    closure_from_means,
    kinetic_from_beta,
    state_from_profiles,
    step_mean_field,
    totals,
)
from hopfluid.oracle import build_T
from hopfluid.thermo import entropy_continuum, entropy_discrete, onsager_coefficients

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])

unit = st.floats(0.02, 0.98)
temp = st.floats(0.2, 3.0)


@st.composite
def lattices(draw, max_sites=12):
    L = draw(st.integers(2, max_sites))
    eps = draw(st.sampled_from([0.01, 0.05, 0.1]))
    lam = draw(st.floats(0.01, 1.0))
    steps = draw(st.lists(st.integers(-2, 2), min_size=L - 1, max_size=L - 1))
    V = eps * np.concatenate([[0], np.cumsum(steps)])
    spec = LatticeSpec(L, 1.0, eps, lam, V)
    n = np.array(draw(st.lists(unit, min_size=L, max_size=L)))
    theta = np.array(draw(st.lists(temp, min_size=L, max_size=L)))
    return spec, state_from_profiles(spec, n, theta)


@SETTINGS
@given(lattices())
def test_step_conserves_particles_and_energy(case):
    spec, state = case
    N0, E0 = totals(state, spec)
    N1, E1 = totals(step_mean_field(state, spec), spec)
    assert abs(N1 - N0) <= 1e-12 * max(N0, 1.0)
    assert abs(E1 - E0) <= 1e-12 * max(abs(E0), np.sum(state.K), 1.0)


@SETTINGS
@given(lattices())
def test_step_stays_in_bounds(case):
    spec, state = case
    new = step_mean_field(state, spec)
    assert np.all((new.n >= 0) & (new.n <= 1))
    assert np.all(new.K >= 0)
    assert np.all(new.K <= spec.energy_quantum * spec.k_max * new.n * (1 + 1e-12))


@SETTINGS
@given(lattices())
def test_discrete_entropy_non_decreasing(case):
    spec, state = case
    assert entropy_discrete(step_mean_field(state, spec), spec) >= entropy_discrete(state, spec) - 1e-12


@SETTINGS
@given(st.floats(0.01, 0.99), st.floats(0.05, 20.0), st.sampled_from([0.01, 0.1]), st.integers(1, 400))
def test_closure_round_trip(n, beta, eps, cap):
    K = kinetic_from_beta(n, beta, eps, cap)
    c = closure_from_means(n, K, eps, cap)
    assert np.isclose(float(c.beta), beta, rtol=1e-8, atol=1e-10)


@SETTINGS
@given(st.integers(2, 3), st.floats(0.05, 0.5), st.lists(st.integers(-1, 1), min_size=2, max_size=2),
       st.integers(0, 3))
def test_transition_matrix_bistochastic(L, lam, steps, cap):
    eps = 0.1
    V = eps * np.concatenate([[0], np.cumsum(steps[: L - 1])])
    spec = LatticeSpec(L, 1.0, eps, lam, V)
    cap = min(cap, spec.k_max)
    T = build_T(spec, cap)
    M = T.matrix
    assert np.all(M >= -1e-15)
    assert np.allclose(M.sum(axis=0), 1, atol=1e-12, rtol=0)
    assert np.allclose(M.sum(axis=1), 1, atol=1e-12, rtol=0)
    assert T.block_leakage() == 0


@SETTINGS
@given(st.floats(1e-3, 0.999), st.floats(0.05, 10.0), st.floats(-5.0, 5.0), st.floats(0.5, 3.0),
       st.floats(0.01, 1.0))
def test_onsager_matrix_psd(u, theta, V, rho_m, lam):
    L = onsager_coefficients(np.array([u * rho_m]), np.array([theta]), np.array([V]), rho_m, lam)[0]
    assert L[0, 1] == L[1, 0]
    assert L[0, 0] >= 0 and L[1, 1] >= 0
    det = L[0, 0] * L[1, 1] - L[0, 1] ** 2
    assert det >= -1e-12 * L[1, 1] * L[0, 0]


@SETTINGS
@given(st.lists(st.floats(0.05, 0.95), min_size=4, max_size=24), st.floats(0.5, 2.0), st.floats(0.01, 0.3))
def test_continuum_step_conserves_and_increases_entropy(rho, theta0, lam):
    rho = np.array(rho)
    N = rho.size
    s = ContinuumState.on_interval(1.0, N, rho, lambda x: theta0 * (1 + 0.3 * np.sin(3 * x)),
                                   V=lambda x: 0.2 * x)
    new = pde_step(s, lam)
    assert abs(total_mass(new) - total_mass(s)) <= 1e-13 * total_mass(s)
    assert abs(total_energy(new) - total_energy(s)) <= 1e-12 * abs(total_energy(s)) + 1e-15
    assert entropy_continuum(new) >= entropy_continuum(s) - 1e-12


modes = st.sampled_from(["discrete", "continuum"])


@SETTINGS
@given(modes, st.integers(2, 40), st.floats(0.01, 0.2), st.floats(0.1, 2.0), st.integers(0, 50),
       st.sampled_from(["finite", "infinite"]), st.floats(0.05, 0.95), st.floats(0.1, 3.0))
def test_config_round_trip(mode, sites, hop_rate, gamma, steps, sum_mode, density, theta):
    text = (f"[run]\nmode = {mode}\nsteps = {steps}\nsum_mode = {sum_mode}\n\n"
            f"[lattice]\nsites = {sites}\ngamma = {gamma!r}\nhop_rate = {hop_rate!r}\n\n"
            f"[density]\nkind = constant\nvalue = {density!r}\n\n"
            f"[temperature]\nkind = linear\nleft = {theta!r}\nright = {2 * theta!r}\n")
    cfg = parse_config(text)
    assert parse_config(canonical_text(cfg)) == cfg
