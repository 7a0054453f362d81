import numpy as np
import pytest

from evenwave import dispersive as dp
from evenwave.errors import DomainError, GridMismatchError
from evenwave.radial import make_grid
from evenwave.threshold import gaussian_potential, pc_project, zero_potential
from evenwave.waveop import PropagatorOracle

TIMES = np.geomspace(6.6, 66.0, 10)


@pytest.fixture(scope="module")
def grid():
    return make_grid(6, 400, 1600)


@pytest.fixture(scope="module")
def free_oracle(grid):
    return PropagatorOracle(grid, zero_potential())


@pytest.fixture(scope="module")
def small():
    # a binding well, so P_c removes a bound state
    g = make_grid(6, 100, 750)
    return g, PropagatorOracle(g, gaussian_potential(-50.0))


def _norm(P, u):
    return np.linalg.norm(P.full.hamiltonian.scaling * u.samples)


def test_evolve_identity_at_zero(small):
    g, P = small
    u = dp.gaussian_data(g)
    assert np.max(np.abs(dp.evolve(P, u, 0.0).samples - u.samples)) <= 1e-12


def test_evolve_unitary(small):
    g, P = small
    u = dp.gaussian_data(g)
    for t in [1.0, 10.0, 100.0]:
        assert _norm(P, dp.evolve(P, u, t)) == pytest.approx(_norm(P, u), rel=1e-9)


def test_evolve_group_law(small):
    g, P = small
    u = dp.gaussian_data(g)
    a = dp.evolve(P, dp.evolve(P, u, 3.0), -7.5)
    b = dp.evolve(P, u, -4.5)
    assert _norm(P, a - b) <= 1e-9 * _norm(P, u)


def test_evolve_grid_mismatch(small):
    _, P = small
    with pytest.raises(GridMismatchError):
        dp.evolve(P, dp.gaussian_data(make_grid(6, 40, 100)), 1.0)


def test_theoretical_slope():
    assert dp.theoretical_slope(np.inf, 6) == -3.0
    assert dp.theoretical_slope(2, 8) == 0.0
    assert dp.theoretical_slope(4, 6) == pytest.approx(-1.5)
    with pytest.raises(DomainError):
        dp.theoretical_slope(1.5, 6)


def test_free_gaussian_slope(grid, free_oracle):
    rep = dp.decay_scan(grid, zero_potential(), dp.gaussian_data(grid), np.inf, TIMES, oracle=free_oracle)
    assert not rep.truncated
    assert rep.fitted_slope == pytest.approx(-3.0, abs=0.02)
    assert rep.theoretical_slope == -3.0
    assert rep.q == 1.0


def test_generic_potential_slope(grid):
    V = gaussian_potential(-0.5)
    rep = dp.decay_scan(grid, V, dp.gaussian_data(grid), np.inf, TIMES)
    assert rep.fitted_slope == pytest.approx(-3.0, abs=0.15)


def test_l2_slope_flat(grid, free_oracle):
    rep = dp.decay_scan(grid, zero_potential(), dp.gaussian_data(grid), 2, TIMES, oracle=free_oracle)
    assert rep.fitted_slope == pytest.approx(0.0, abs=0.01)
    assert rep.q == 2.0


def test_free_gaussian_closed_form():
    # the three-point scheme has a first-order origin error; h = 1/32 keeps it below 1e-3
    g = make_grid(6, 100, 3200)
    rep = dp.decay_scan(g, zero_potential(), dp.gaussian_data(g), np.inf, np.geomspace(5.0, 10.0, 4))
    assert np.max(np.abs(rep.norms / dp.free_gaussian_peak(rep.times, 6) - 1.0)) <= 1e-3


def test_slope_grid_stable():
    T = np.geomspace(6.6, 33.0, 8)
    V = gaussian_potential(-3.0)
    slopes = []
    for n in [800, 1600]:
        g = make_grid(6, 200, n)
        slopes.append(dp.decay_scan(g, V, dp.gaussian_data(g), np.inf, T).fitted_slope)
    assert abs(slopes[0] - slopes[1]) <= 0.05


def test_projection_idempotent_before_evolution(small):
    g, P = small
    u = dp.gaussian_data(g)
    assert P.full.values[0] < 0
    once = dp.decay_scan(g, None, u, np.inf, [5.0, 7.0, 9.0], oracle=P)
    twice = dp.decay_scan(g, None, pc_project(P.full, u), np.inf, [5.0, 7.0, 9.0], oracle=P)
    # rounding in the removed bound component is amplified by the decay of the norm
    assert np.allclose(once.norms, twice.norms, rtol=1e-10, atol=0)


def test_reflection_truncates(small):
    g, P = small
    with pytest.warns(RuntimeWarning, match="truncated"):
        rep = dp.decay_scan(g, None, dp.gaussian_data(g), np.inf, [5.0, 6.0, 7.0, 40.0, 80.0], oracle=P,
                            energy_cutoff=None)
    assert rep.truncated and rep.times.size < 5


def test_scan_domain(small):
    g, P = small
    with pytest.raises(DomainError):
        dp.decay_scan(g, None, dp.gaussian_data(g), np.inf, [1.0, 6.0, 7.0], oracle=P)
    with pytest.raises(DomainError):
        dp.decay_scan(g, None, dp.gaussian_data(g), 1.5, [5.0, 6.0, 7.0], oracle=P)
    with pytest.raises(DomainError):
        dp.decay_scan(g, None, dp.gaussian_data(g), np.inf, [5.0, 6.0], oracle=P)


def test_measurement_invariants():
    with pytest.raises(DomainError):
        dp.DecayMeasurement(2.0, 2.0, np.array([1.0]), np.array([1.0]), 0.0, 0.0, (1, 1), False, np.zeros(1))
    with pytest.raises(DomainError):
        dp.DecayMeasurement(2.0, 2.0, np.array([6.0]), np.array([0.0]), 0.0, 0.0, (6, 6), False, np.zeros(1))
