import json

import numpy as np
import pytest

from hopfluid.errors import ConservationViolated, ConvergenceFailure, SecondLawViolated
from hopfluid.experiments import (
    ConvergenceSetup,
    DiscreteAudit,
    ExperimentReport,
    Measurement,
    convergence_study,
    dufour_measurement,
    dufour_ratios,
    flux_consistency,
    lower,
    run_discrete,
    soret_measurement,
    soret_ratios,
    thermal_drift_demo,
    thermostat,
    upper,
    zero_current_profile,
)
from hopfluid.lattice import LatticeSpec, MeanFieldState, state_from_profiles, temperatures

from conftest import random_state


# ---------------------------------------------------------------- reports


def test_measurement_bounds():
    two = Measurement("a", 1.01, 0.0, 1.0, 0.02)
    assert two.passed and two.deviation == pytest.approx(0.01)
    rel = Measurement("b", 1.03, 0.0, 1.0, 0.02, relative=True)
    assert not rel.passed
    assert upper("c", 1e-11, 1e-10).passed and not upper("c", 2e-10, 1e-10).passed
    assert lower("d", 0.95, 0.9).passed and not lower("d", 0.8, 0.9).passed
    assert not Measurement("e", float("nan"), 0.0, 1.0, 1.0).passed


def test_report_json_is_deterministic():
    a = soret_measurement(levels=(8, 16))
    b = soret_measurement(levels=(8, 16))
    assert a.to_json() == b.to_json()
    doc = json.loads(a.to_json())
    assert "runtime_s" not in doc
    assert all("tolerance" in m for m in doc["measurements"])
    assert "runtime_s" in json.loads(a.to_json(include_runtime=True))


def test_report_lookup_and_table(tmp_path):
    r = ExperimentReport("x", {"p": 1})
    r.add("m", 2.0, 0.1, 2.0, 0.5)
    assert r["m"].value == 2.0 and r.passed
    with pytest.raises(KeyError):
        r["missing"]
    assert "m" in r.to_table()
    r.series = {"a": [1.0, 2.0], "b": [0.1, 1 / 3]}
    text = r.write_series_csv(tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "a,b" and float(text[2].split(",")[1]) == 1 / 3


# ---------------------------------------------------------------- audits


def test_run_discrete_audits_every_step(rng):
    spec = LatticeSpec(10, 1.0, 0.05, 0.1, potential=0.05 * rng.integers(-2, 3, 10))
    state = random_state(rng, spec)
    out, chk = run_discrete(state, spec, 50)
    assert chk.frames == 50
    assert chk.max_drift_N <= 1e-12 and chk.max_drift_E <= 1e-12
    assert chk.min_dS >= -1e-12


def test_audit_flags_a_tampered_state(rng):
    spec = LatticeSpec(6, 1.0, 0.05, 0.1)
    state = random_state(rng, spec)
    chk = DiscreteAudit(state, spec)
    with pytest.raises(ConservationViolated):
        chk.check(MeanFieldState(state.n * (1 + 1e-6), state.K))
    # same occupations, almost no heat: N is kept but the entropy collapses
    cold = state_from_profiles(spec, state.n, 1e-3)
    with pytest.raises(SecondLawViolated):
        DiscreteAudit(state, spec, energy=False).check(cold)


# ---------------------------------------------------------------- Soret and Dufour


def test_no_temperature_gradient_no_current():
    spec = LatticeSpec.from_gamma(32, 1 / 32, 1.0, 0.02)
    state = state_from_profiles(spec, 0.3, 1.0)
    from hopfluid.lattice import bond_fluxes

    f = bond_fluxes(state, spec)
    assert np.all(f.particle == 0) and np.all(f.heat == 0)


def test_soret_ratio_tracks_blocking_factor():
    spec = LatticeSpec.from_gamma(64, 1 / 64, 1.0, 0.02)
    for n0 in (0.001, 0.3, 0.6):
        r = soret_ratios(spec, n0, 0.5, 1.5)
        assert np.allclose(r, -0.02 * (1 - n0), rtol=1e-3)


def test_soret_report_passes():
    rep = soret_measurement(levels=(16, 64))
    assert rep.passed, rep.to_table()
    half = rep["ratio[n0=0.5]"]
    assert half.value == pytest.approx(-0.5 * 0.02, rel=0.02)


def test_uniform_density_has_no_dufour_flux():
    spec = LatticeSpec.from_gamma(32, 1 / 32, 1.0, 0.02)
    ratios, f = dufour_ratios(spec, 0.2, 1.0)
    assert ratios.size == 0
    assert np.all(f.particle == 0) and np.all(f.heat == 0)


def test_dufour_factor_approaches_two():
    rep = dufour_measurement(levels=(16, 64, 256))
    assert rep.passed, rep.to_table()
    assert abs(rep["dufour_factor"].value - 2) < 0.01


@pytest.mark.parametrize("L", [16, 64])
def test_lattice_step_matches_continuum_currents(L):
    gap_c, gap_h = flux_consistency(L)
    gap_c2, gap_h2 = flux_consistency(2 * L)
    assert gap_c2 < 0.6 * gap_c and gap_h2 < 0.6 * gap_h


# ---------------------------------------------------------------- convergence


def test_zero_time_has_zero_error():
    rep = convergence_study(levels=(16, 32), setup=ConvergenceSetup(t_end=0.0), reference_cells=64)
    assert rep["finest_error"].value <= 1e-12


def test_small_convergence_study():
    setup = ConvergenceSetup(t_end=0.1)
    rep = convergence_study(levels=(16, 32, 64), setup=setup, reference_cells=256)
    assert np.all(np.diff(rep.series["error"]) < 0)
    assert rep["max_conservation_drift"].passed and rep["entropy_decrease"].passed


def test_non_monotone_errors_raise(monkeypatch):
    import hopfluid.experiments as ex

    original = ex._sample

    def spoiled(ref, setup, x):
        u, th = original(ref, setup, x)
        return (u + 1.0, th) if x.size == 32 else (u, th)

    monkeypatch.setattr(ex, "_sample", spoiled)
    setup = ConvergenceSetup(t_end=0.1)
    kwargs = dict(levels=(16, 32, 64), setup=setup, reference_cells=128, audit=False)
    with pytest.raises(ConvergenceFailure):
        convergence_study(**kwargs)
    rep = convergence_study(raise_on_failure=False, **kwargs)
    assert not rep.passed and not rep["strictly_decreasing"].passed


# ---------------------------------------------------------------- thermal drift


def test_zero_current_profile_uniform_and_monotone():
    assert np.allclose(zero_current_profile(np.full(5, 1.2), 2.0), 0.4)
    theta = np.linspace(0.5, 1.0, 8)
    u = zero_current_profile(theta, 3.0)
    assert u.sum() == pytest.approx(3.0, rel=1e-12)
    assert np.all(np.diff(u) < 0)  # particles drift towards the cold end
    # u/(1-u) * Theta is constant along the profile
    c = u / (1 - u) * theta
    assert np.ptp(c) < 1e-9 * c.mean()


def test_thermostat_resets_end_temperatures():
    spec = LatticeSpec(6, 1 / 6, 1e-3, 0.05)
    state = state_from_profiles(spec, 0.4, 1.0)
    th = temperatures(thermostat(state, spec, 0.5, 2.0), spec)
    assert th[0] == pytest.approx(0.5, rel=1e-10) and th[-1] == pytest.approx(2.0, rel=1e-10)
    assert np.allclose(th[1:-1], 1.0)


def test_uniform_temperature_keeps_uniform_density():
    rep = thermal_drift_demo(num_sites=8, theta_left=0.8, theta_right=0.8, budget=200)
    assert np.allclose(rep.series["n"], 0.5, atol=1e-12)
    assert rep.passed


def test_cold_end_collects_particles():
    rep = thermal_drift_demo(num_sites=8, budget=20000, change_tol=1e-11)
    n = np.asarray(rep.series["n"])
    assert n[0] > n[-1]
    assert rep["particle_drift"].passed
