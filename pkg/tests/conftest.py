import numpy as np
import pytest

from hopfluid.lattice import LatticeSpec, MeanFieldState, state_from_profiles

# criterion id -> (passed, detail), filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(criterion, passed, detail=""):
        ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"AC{criterion}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"AC{key}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_state(rng, spec, cap=None, n_range=(0.05, 0.95), theta_range=(0.5, 2.0)):
    sum_mode = "finite"
    n = rng.uniform(*n_range, spec.num_sites)
    theta = rng.uniform(*theta_range, spec.num_sites)
    return state_from_profiles(spec, n, theta, sum_mode, cap)


def random_potential(rng, num_sites, eps, max_step=2):
    steps = rng.integers(-max_step, max_step + 1, num_sites - 1)
    return eps * np.concatenate([[0], np.cumsum(steps)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
