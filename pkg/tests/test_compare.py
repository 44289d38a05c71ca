"""Tracked PDE gaps against the reduced ODE."""
import numpy as np
import pytest

import layer_ode
from chain import LayerConfig
from compare import compare, compare_runs, reference_ode
from errors import IncompleteInputError
from tracking import TrackedTrajectory, central_velocity

EPS = 0.05


def _tracked_from(const, traj):
    zeros = np.zeros(len(traj.t))
    pred = np.array([layer_ode.rhs(const, x, EPS) for x in traj.xi])
    return TrackedTrajectory(times=traj.t, xi=traj.xi, w_l2=zeros, w_w12=zeros, residual_l2=zeros,
                             velocity=central_velocity(traj.t, traj.xi, 1), predicted_cbar=pred,
                             predicted_ode=pred, eps=EPS, stride=1)


@pytest.fixture
def tracked(dw_constants):
    cfg = LayerConfig.from_gaps([0.3, 0.7], EPS)
    traj = layer_ode.integrate(dw_constants, cfg, EPS, t_end=50.0, t_eval=np.linspace(0.0, 50.0, 21))
    assert np.all(traj.gaps >= 0.25)
    return _tracked_from(dw_constants, traj)


def test_reduced_trajectory_matches_itself(dw_constants, tracked):
    result = compare_runs(dw_constants, tracked)
    assert result.passed
    assert result.verdict["max_rel_err"] == pytest.approx(0.0, abs=1e-12)
    assert result.verdict["sign_agreement"] is True
    assert result.verdict["samples"] == 21
    assert result.verdict["window"] == pytest.approx([0.0, 50.0])
    assert {"gap_pde1", "gap_ode2", "rel_err1", "v_meas1", "v_cbar2", "v_ode1", "max_rel_err",
            "qualifying"} <= set(result.frame.columns)


def test_faster_dynamics_fail_the_gap_check(dw_constants, tracked):
    fast = reference_ode(dw_constants, tracked, k_scale=3.0)
    result = compare(tracked, fast)
    assert not result.passed
    assert result.verdict["max_rel_err"] > 0.05
    assert ">" in result.verdict["rationale"]


def test_no_qualifying_window(dw_constants, tracked):
    result = compare_runs(dw_constants, tracked, min_gap=0.5)
    assert not result.passed
    assert result.verdict["samples"] == 0
    assert result.verdict["max_rel_err"] is None
    assert not result.frame["qualifying"].any()


def test_single_sample_is_incomplete(dw_constants):
    traj = layer_ode.integrate(dw_constants, [0.25, 0.75], EPS, t_end=1.0, n_out=2)
    one = _tracked_from(dw_constants, traj)
    one = TrackedTrajectory(**{**one.__dict__, "times": one.times[:1], "xi": one.xi[:1]})
    with pytest.raises(IncompleteInputError):
        reference_ode(dw_constants, one)
