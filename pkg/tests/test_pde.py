"""IMEX gradient-flow stepping, the run loop and its callbacks."""
import numpy as np
import pytest

from chain import LayerConfig, ansatz_data
from compare import compare_runs
from errors import StiffnessError
from grid import GridFunction, stationary_residual
from pde import PdeState, default_dt, run, step
from reduction import solve_bifurcation
from tracking import track

EPS = 0.05
N_GRID = 512


def _wave():
    return GridFunction.from_function(lambda x: 0.5 * np.sin(2 * np.pi * x), N_GRID, EPS)


def test_default_dt_is_diffusive_on_fine_grids(dw):
    u = GridFunction.constant([1.0], N_GRID, EPS)
    dt = default_dt(u, dw)
    assert dt == pytest.approx(10.0 * u.h ** 2 / EPS ** 2)
    fine = GridFunction.constant([1.0], 2 * N_GRID, EPS)
    assert default_dt(fine, dw) == pytest.approx(dt / 4.0)


def test_minimum_is_a_fixed_point(dw):
    state = PdeState.initial(GridFunction.constant([1.0], N_GRID, EPS), dw)
    nxt = step(state, dw)
    assert np.max(np.abs(nxt.u.values - 1.0)) < 1e-12
    assert nxt.t == pytest.approx(state.dt)
    assert nxt.steps == 1 and nxt.rejections == 0


def test_step_rejects_bad_dt(dw):
    state = PdeState.initial(_wave(), dw)
    with pytest.raises(StiffnessError):
        step(state, dw, dt=1e-13)
    with pytest.raises(ValueError):
        step(state, dw, dt=-1.0)


def test_run_without_chain(dw):
    calls = []
    result = run(PdeState.initial(_wave(), dw), dw, t_end=1.0, snapshot_every=0.25,
                 progress_cb=lambda cur, tot: calls.append((cur, tot)))
    assert result.exit_reason == "t_end"
    assert result.final.t == pytest.approx(1.0)
    assert [t for t, _ in result.snapshots] == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert len(result.observers) == 5
    assert calls == [(1, 4), (2, 4), (3, 4), (4, 4)]
    energies = result.observers.get("energy")
    assert np.all(np.diff(energies) <= 1e-12 * abs(energies[0]))
    assert result.summary()["snapshots"] == 5


def test_run_cancel(dw):
    messages = []
    result = run(PdeState.initial(_wave(), dw), dw, t_end=1.0, snapshot_every=0.25,
                 cancel_cb=lambda: True, log_cb=messages.append)
    assert result.exit_reason == "cancelled"
    assert len(result.snapshots) == 1
    assert any("Cancel" in m for m in messages)


@pytest.mark.slow
def test_layered_run_tracks_the_reduced_dynamics(dw, dw_chain):
    cfg = LayerConfig.from_gaps([0.4, 0.6], EPS)
    u0 = ansatz_data(dw_chain, cfg, N_GRID).u
    result = run(PdeState.initial(u0, dw), dw, t_end=20.0, snapshot_every=5.0, chain=dw_chain, guess=cfg)
    assert result.exit_reason == "t_end"
    assert len(result.snapshots) == 5
    assert result.layers.gaps == pytest.approx(cfg.gaps, abs=1e-3)
    assert np.isfinite(result.observers.get("xi1")).all()

    tracked = track(result.snapshots, dw_chain, guess=cfg)
    assert tracked.failure_index is None
    cmp = compare_runs(dw_chain, tracked)
    assert cmp.verdict["samples"] == 5
    assert cmp.verdict["max_rel_err"] < 0.05


def test_run_stops_when_a_gap_starts_below_the_margin(dw, dw_chain):
    cfg = LayerConfig.from_gaps([0.30, 0.70], EPS)
    u0 = ansatz_data(dw_chain, cfg, N_GRID).u
    mu = dw_chain.constants.mu[0]
    result = run(PdeState.initial(u0, dw), dw, t_end=1.0, snapshot_every=0.25, chain=dw_chain,
                 rho=0.31 * mu, guess=LayerConfig.from_gaps([0.33, 0.67], EPS))
    assert result.exit_reason == "boundary"
    assert len(result.snapshots) == 1
    assert result.layers.gaps == pytest.approx([0.30, 0.70], abs=1e-3)


@pytest.mark.slow
def test_attracting_layers_reach_the_boundary(dw, dw_chain):
    cfg = LayerConfig.from_gaps([0.2, 0.8], EPS)
    u0 = ansatz_data(dw_chain, cfg, N_GRID).u
    mu = dw_chain.constants.mu[0]
    result = run(PdeState.initial(u0, dw), dw, t_end=20.0, snapshot_every=0.25, chain=dw_chain,
                 rho=0.18 * mu, guess=cfg)
    assert result.exit_reason == "boundary"
    assert result.final.t < 20.0
    assert 0.1 < result.layers.gaps[0] <= 0.18
    gaps = result.observers.get("min_gap")
    assert np.all(np.diff(gaps) < 1e-4)
    energies = result.observers.get("energy")
    assert np.all(np.diff(energies) <= 1e-12 * abs(energies[0]))


def test_energy_dissipation_identity(dw):
    state = PdeState.initial(_wave(), dw)
    dt = 1e-3
    nxt = step(state, dw, dt=dt)
    rate = (nxt.energy - state.energy) / dt
    f0 = stationary_residual(state.u, dw).norm() ** 2
    f1 = stationary_residual(nxt.u, dw).norm() ** 2
    assert rate == pytest.approx(-0.5 * (f0 + f1), rel=0.05)


def test_stationary_solution_does_not_drift(dw, dw_chain):
    _, u_star, _ = solve_bifurcation(dw_chain, EPS, n=N_GRID)
    result = run(PdeState.initial(u_star, dw), dw, t_end=1.0, snapshot_every=0.5)
    assert result.exit_reason == "t_end"
    assert np.max(np.abs(result.final.u.values - u_star.values)) < 1e-6


@pytest.mark.slow
def test_gap_shrink_rate_is_exponential(dw, dw_chain):
    xs, rates = [], []
    for g0 in (0.3, 0.35, 0.4):
        cfg = LayerConfig.from_gaps([g0, 1.0 - g0], EPS)
        u0 = ansatz_data(dw_chain, cfg, N_GRID).u
        result = run(PdeState.initial(u0, dw), dw, t_end=20.0, snapshot_every=2.0, chain=dw_chain, guess=cfg)
        assert result.exit_reason == "t_end"
        t = np.asarray(result.observers.times)
        gaps = result.observers.get("min_gap")
        late = t >= 6.0
        rates.append(abs(np.polyfit(t[late], gaps[late], 1)[0]))
        xs.append(np.mean(gaps[late]) / EPS)
    slope = np.polyfit(xs, np.log(rates), 1)[0]
    assert slope == pytest.approx(-np.sqrt(2.0), rel=0.1)


@pytest.mark.slow
def test_triple_well_mixed_signs_follow_the_reduced_dynamics(tw, tw_chain):
    eps, n = 0.03, 1024
    cfg = LayerConfig.from_gaps([0.2, 0.32, 0.22, 0.26], eps)
    u0 = ansatz_data(tw_chain, cfg, n).u
    result = run(PdeState.initial(u0, tw), tw, t_end=20.0, snapshot_every=2.0, chain=tw_chain, guess=cfg)
    assert result.exit_reason == "t_end"
    tracked = track(result.snapshots, tw_chain, guess=cfg)
    assert tracked.failure_index is None
    cmp = compare_runs(tw_chain, tracked, min_gap=0.15)
    assert cmp.verdict["max_rel_err"] < 0.05
    assert cmp.verdict["sign_agreement"]
