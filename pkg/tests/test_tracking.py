"""Projection onto the layered manifold and trajectory tracking."""
import numpy as np
import pytest

from chain import LayerConfig, build_ansatz
from errors import OutOfNeighborhoodError
from grid import GridFunction
from tracking import TrackedTrajectory, central_velocity, project, seed_from_peaks, track

EPS = 0.05
N_GRID = 512


@pytest.fixture(scope="module")
def cfg():
    return LayerConfig.from_gaps([0.4, 0.6], EPS)


@pytest.fixture(scope="module")
def u(dw_chain, cfg):
    return build_ansatz(dw_chain, cfg, N_GRID)


def test_seed_from_peaks(dw_chain, cfg, u):
    seed = seed_from_peaks(u, dw_chain)
    assert seed.xi == pytest.approx(cfg.xi, abs=2e-3)


def test_projection_recovers_the_ansatz(dw_chain, cfg, u):
    proj = project(u, dw_chain)
    assert proj.xi == pytest.approx(cfg.xi, abs=1e-8)
    assert proj.w.sup_norm() < 1e-6
    assert proj.diagnostics["residual"] < 1e-9


def test_projection_follows_a_translation(dw_chain, cfg, u):
    s = 0.0123
    proj = project(u.shifted(s), dw_chain)
    assert proj.xi == pytest.approx(cfg.xi + s, abs=1e-8)


def test_projection_across_the_period_boundary(dw_chain, cfg, u):
    proj = project(u.shifted(0.85), dw_chain)
    assert proj.xi == pytest.approx(cfg.shifted(0.85).xi, abs=1e-8)
    assert proj.cfg.gaps == pytest.approx(cfg.gaps, abs=1e-8)


def test_flat_field_is_out_of_neighbourhood(dw_chain):
    flat = GridFunction.constant([1.0], N_GRID, EPS)
    with pytest.raises(OutOfNeighborhoodError):
        project(flat, dw_chain)


def test_central_velocity():
    t = np.linspace(0.0, 1.0, 11)
    xi = np.column_stack([0.2 + 0.5 * t, 0.7 - t])
    v = central_velocity(t, xi, 2)
    assert np.all(np.isnan(v[:2])) and np.all(np.isnan(v[-2:]))
    assert v[2:-2] == pytest.approx(np.tile([0.5, -1.0], (7, 1)))


def test_track_moving_layers(dw_chain, cfg):
    speed = 1e-3
    snaps = [(float(t), build_ansatz(dw_chain, cfg.shifted(speed * t), N_GRID)) for t in range(7)]
    traj = track(snaps, dw_chain, guess=cfg, with_predictions=False)
    assert traj.failure_index is None
    assert traj.xi[:, 0] == pytest.approx(cfg.xi[0] + speed * np.arange(7), abs=1e-8)
    inner = traj.velocity[traj.stride:-traj.stride]
    assert inner == pytest.approx(np.full_like(inner, speed), abs=1e-7)
    assert traj.gaps == pytest.approx(np.tile(cfg.gaps, (7, 1)), abs=1e-8)


def test_track_truncates_on_failure(dw_chain, cfg, u):
    snaps = [(0.0, u), (1.0, u), (2.0, GridFunction.constant([-1.0], N_GRID, EPS)), (3.0, u)]
    traj = track(snaps, dw_chain, guess=cfg, stride=1)
    assert traj.failure_index == 2
    assert len(traj.times) == 2
    assert traj.failure


def test_trajectory_frame_round_trip(dw_chain, cfg, u):
    snaps = [(0.0, u), (1.0, u), (2.0, u)]
    traj = track(snaps, dw_chain, guess=cfg, stride=1)
    frame = traj.to_frame()
    back = TrackedTrajectory.from_frame(frame, EPS)
    assert np.array_equal(back.xi, traj.xi)
    assert np.allclose(back.predicted_ode, traj.predicted_ode)
    assert {"w_l2", "w_w12", "F_l2", "w_ratio", "v_cbar1", "v_ode2"} <= set(frame.columns)


def test_projection_is_idempotent(dw_chain, cfg, u):
    bumped = u + 1e-3 * np.sin(2 * np.pi * u.x)[:, None]
    first = project(bumped, dw_chain, guess=cfg)
    rebuilt = build_ansatz(dw_chain, first.cfg, N_GRID) + first.w
    second = project(rebuilt, dw_chain, guess=first.cfg)
    assert second.xi == pytest.approx(first.xi, abs=1e-12)
    assert np.max(np.abs(second.w.values - first.w.values)) < 1e-12
