import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switchocp.model import ProblemSpec
from switchocp.problems import example1_alt, example1_model, get_problem
from switchocp.riccati import Direction
from switchocp.solver import (SolverConfig, Status, fraction_to_boundary, interior_step, migrate_switch_stage,
                              ordering_step, solve, update_iterate)
from switchocp.transcription import GridError, Iterate, build_grid, compute_residuals, linearize, opt_error

CONTINUE = SolverConfig(on_indefinite="continue")


@pytest.fixture(scope="module")
def ex1_run():
    spec = example1_alt()
    return spec, solve(spec, Iterate.initial(spec, [1.0]), CONTINUE)


# -- step size ----------------------------------------------------------------

def test_ftb_no_motion():
    assert fraction_to_boundary([1.0], [0.0], [(0.0, 2.0)], 0.995) == 1.0


def test_ftb_single_constraint():
    assert fraction_to_boundary([1.0], [-2.0], [(0.0, 2.0)], 0.995) == pytest.approx(0.4975)


def test_ftb_both_ratios_exceed_one():
    assert fraction_to_boundary([0.5, 1.0], [0.1, -0.4], [(0.0, 3.0)] * 2, 0.995) == 1.0


@given(t=st.floats(0.01, 1.99), dt=st.floats(-50, 50), gamma=st.floats(0.5, 0.999))
def test_ftb_keeps_strictly_inside(t, dt, gamma):
    a = fraction_to_boundary([t], [dt], [(0.0, 2.0)], gamma)
    assert 0.0 < a <= 1.0
    assert 0.0 < t + a * dt < 2.0


@given(gap=st.floats(1e-3, 1.0), dgap=st.floats(-20, 20))
def test_ordering_cap_keeps_switches_ordered(gap, dgap):
    a = ordering_step([0.5, 0.5 + gap], [0.0, dgap], 0.995)
    assert gap + a * dgap > 0.0


def test_interior_step_survives_rounding_at_bound():
    hi = 1.9999885714285714
    t = np.nextafter(hi, 0.0)
    assert t + fraction_to_boundary([t], [1.0], [(0.0, hi)], 0.995) * 1.0 == hi
    a = interior_step([t], [1.0], [(0.0, hi)], 0.995)
    assert a == 0.0 or t + a < hi


@given(t=st.floats(1e-9, 2.0 - 1e-9), dt=st.floats(-1e3, 1e3))
def test_interior_step_is_admissible(t, dt):
    a = interior_step([t], [dt], [(0.0, 2.0)], 0.995)
    assert 0.0 < t + a * dt < 2.0


def _direction_like(it, scale=0.0, dts=None):
    d = Direction(**{n: scale * np.ones_like(getattr(it, n)) for n in ("x", "u", "lam", "xs", "us", "lams", "ts")})
    if dts is not None:
        d.ts = np.array(dts, dtype=float)
    return d


def test_update_zero_step_is_identity():
    spec = example1_alt()
    it = Iterate.initial(spec, [1.0])
    new = update_iterate(it, _direction_like(it, 1.0), 0.0)
    for n in ("x", "u", "lam", "ts"):
        np.testing.assert_array_equal(getattr(new, n), getattr(it, n))


def test_update_half_step():
    spec = example1_alt()
    it = Iterate.initial(spec, [1.0])
    assert update_iterate(it, _direction_like(it, dts=[-0.4]), 0.5).ts[0] == pytest.approx(0.8)


def test_one_newton_step_solves_lq_problem():
    # a single mode leaves no switching time: the problem is LQ and Newton exact
    spec = ProblemSpec(model=example1_model(), t0=0.0, tf=2.0, N=50, sigma=(1,), x_init=np.array([0.0, 2.0]))
    sol = solve(spec, Iterate.initial(spec, []), SolverConfig(tol=1e-9))
    assert sol.converged and sol.iterations == 1


# -- migration ----------------------------------------------------------------

def test_migration_within_interval():
    spec = example1_alt()
    g = build_grid(spec, [1.0])
    it = Iterate.initial(spec, [1.0 + 0.002])
    g2 = migrate_switch_stage(g, it)
    assert g2.stages == g.stages and g2.offsets[0] == pytest.approx(g.offsets[0] + 0.002)


@pytest.mark.parametrize("shift,expect", [(+1, 88), (-1, 86)])
def test_migration_across_one_boundary(shift, expect):
    spec = example1_alt()
    g = build_grid(spec, [1.0])
    it = Iterate.initial(spec, [1.0 + shift * spec.dtau])
    assert migrate_switch_stage(g, it).stages == (expect,)


def test_migration_collision():
    spec, _ = get_problem("example2")
    g = build_grid(spec, [0.5, 1.0])
    it = Iterate.initial(spec, [0.5, 0.5 + 0.2 * spec.dtau])
    with pytest.raises(GridError):
        migrate_switch_stage(g, it)


# -- solver runs --------------------------------------------------------------

def test_guess_outside_bounds_rejected():
    spec = example1_alt()
    with pytest.raises(ValueError):
        solve(spec, Iterate.initial(spec, [2.0]))


def test_abort_mode_reports_iteration(ex1_run):
    spec, _ = ex1_run
    sol = solve(spec, Iterate.initial(spec, [1.0]))
    assert sol.status is Status.ASSUMPTION_VIOLATED
    assert sol.detail.startswith("iteration 1:")
    assert sol.failed_stage_data is not None


def test_converged_run_properties(ex1_run):
    spec, sol = ex1_run
    assert sol.status is Status.CONVERGED and sol.opt_error <= 1e-8
    recs = sol.log.records
    assert len(recs) == sol.iterations
    # i_s travels from the guess interval to the one holding the optimum
    assert recs[0].stages == [87] and sol.grid.stages == (16,)
    (lo, hi), = spec.bounds()
    assert all(lo < r.ts[0] < hi for r in recs)
    # the terminal phase is convex; earlier iterates need not be
    assert all(r.min_xi_tilde > 0 and not r.indefinite for r in recs[-4:])
    assert sol.log.n_indefinite > 0
    # hamiltonian continuity at the solution
    r = compute_residuals(spec, sol.grid, sol.iterate)
    assert np.abs(r.hbar).max() <= 1e-8


def test_runs_are_deterministic(ex1_run):
    spec, sol = ex1_run
    again = solve(spec, Iterate.initial(spec, [1.0]), CONTINUE)

    def numeric(log):
        return [(r.iter, r.opt_error, r.alpha, r.ts, r.stages, r.min_xi_tilde) for r in log.records]

    assert numeric(again.log) == numeric(sol.log)


@pytest.mark.parametrize("tol", [1e-3, 1e-6, 1e-10])
def test_converged_implies_tolerance(tol):
    spec = example1_alt()
    sol = solve(spec, Iterate.initial(spec, [1.0]), SolverConfig(tol=tol, on_indefinite="continue"))
    if sol.converged:
        assert sol.opt_error <= tol
        assert opt_error(linearize(spec, sol.grid, sol.iterate).res) <= tol


def test_max_iters_status():
    spec = example1_alt()
    sol = solve(spec, Iterate.initial(spec, [1.0]), SolverConfig(max_iters=3, on_indefinite="continue"))
    assert sol.status is Status.MAX_ITERS and sol.iterations == 3


def test_collision_returns_consistent_iterate():
    spec, t = get_problem("example2")
    sol = solve(spec, Iterate.initial(spec, t), CONTINUE)
    if sol.status is Status.GRID_COLLISION:
        # the returned iterate still fits the returned grid
        assert build_grid(spec, sol.iterate.ts) == sol.grid


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1.0)
    with pytest.raises(ValueError):
        SolverConfig(on_indefinite="repair")


def test_log_csv_columns(ex1_run, tmp_path):
    _, sol = ex1_run
    path = tmp_path / "log.csv"
    sol.log.to_csv(path)
    header, first = path.read_text().splitlines()[:2]
    assert header.split(",") == ["iter", "opt_error", "alpha", "t_s_1", "is_1", "t_backward_ns", "t_forward_ns",
                                 "min_xi_tilde", "indefinite"]
    assert float(first.split(",")[1]) == sol.log.records[0].opt_error
