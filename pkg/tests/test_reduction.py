"""Slow spectrum, orthogonal correction and stationary layered solutions."""
from types import SimpleNamespace

import numpy as np
import pytest

from chain import LayerConfig, ansatz_data, build_chain, c0
from errors import RefusedByTheoryError
from grid import GridFunction, stationary_residual
from heteroclinic import solve_connection
from potential import skewed_double_well
from reduction import (LinearizedOperator, linearized_spectrum, orthogonal_correction, slow_basis_gram_schmidt,
                       solve_bifurcation, stationary_gaps)

EPS = 0.05
N_GRID = 512


@pytest.fixture(scope="module")
def equal_spec(dw_chain):
    return linearized_spectrum(dw_chain, LayerConfig.from_gaps([1.0, 1.0], EPS), N_GRID)


@pytest.fixture(scope="module")
def skew_cfg():
    return LayerConfig.from_gaps([0.4, 0.6], EPS)


@pytest.fixture(scope="module")
def skew_spec(dw_chain, skew_cfg):
    return linearized_spectrum(dw_chain, skew_cfg, N_GRID)


def test_operator_matvec_matches_dense(dw_chain, skew_cfg):
    u = ansatz_data(dw_chain, skew_cfg, 256).u
    op = LinearizedOperator(u, dw_chain.potential)
    v = np.random.default_rng(0).normal(size=op.size)
    assert op.matvec(v) == pytest.approx(op.dense() @ v, rel=1e-8, abs=1e-8)


def test_slow_spectrum_has_a_gap(dw_chain, equal_spec):
    assert equal_spec.method == "dense"
    assert equal_spec.gap_ratio > 1e4
    assert np.max(np.abs(equal_spec.eigenvalues[:2])) < 1e-4
    # breathing mode of the kink pair: -8 k mu exp(-mu g/eps) / q2
    const = dw_chain.constants
    breathing = -8.0 * const.k[0] * const.mu[0] * np.exp(-const.mu[0] * 0.5 / EPS) / const.q2[0]
    assert equal_spec.eigenvalues[0] == pytest.approx(breathing, rel=0.35)
    assert abs(equal_spec.eigenvalues[1]) < 0.5 * abs(equal_spec.eigenvalues[0])
    # next eigenvalue is the bound state of a single layer, 3/2
    assert equal_spec.lambda_star == pytest.approx(1.5, rel=1e-2)
    assert not equal_spec.warnings


def test_slow_eigenvalues_shrink_with_eps(dw_chain):
    spec = linearized_spectrum(dw_chain, LayerConfig.from_gaps([1.0, 1.0], 0.04), N_GRID)
    assert np.max(np.abs(spec.eigenvalues[:2])) < 1e-5
    assert spec.gap_ratio > 1e4
    assert np.all(spec.alignment > 0.999)


def test_slow_basis_aligns_with_tangents(equal_spec):
    assert np.all(equal_spec.alignment > 0.99)
    assert np.all(equal_spec.eta_norms < 0.1)
    h = 1.0 / N_GRID
    B = equal_spec.basis.reshape(2, -1)
    assert h * B @ B.T == pytest.approx(np.eye(2), abs=1e-10)


def test_slow_basis_can_be_rebuilt(dw_chain, equal_spec):
    rebuilt = slow_basis_gram_schmidt(dw_chain, equal_spec.data.cfg, equal_spec)
    assert np.allclose(rebuilt.basis, equal_spec.basis, atol=1e-12)
    assert rebuilt.eta_norms == pytest.approx(equal_spec.eta_norms, abs=1e-12)


def test_orthogonal_correction_solves_the_split_problem(dw_chain, skew_cfg, skew_spec):
    corr = orthogonal_correction(dw_chain, skew_cfg, skew_spec)
    assert corr.converged
    assert corr.orthogonality < 1e-10
    assert corr.within_bound
    u = skew_spec.data.u
    F0 = stationary_residual(u, dw_chain.potential)
    full = stationary_residual(u + corr.v, dw_chain.potential)
    slow = np.tensordot(corr.c, skew_spec.basis, axes=1)
    assert (full - slow).norm() <= 1e-3 * F0.norm()


def test_correction_coefficients_follow_c0(dw_chain, skew_cfg, skew_spec):
    corr = orthogonal_correction(dw_chain, skew_cfg, skew_spec)
    lead = c0(dw_chain, skew_cfg)
    assert np.all(np.sign(corr.c) == np.sign(lead))
    q = dw_chain.constants.q
    assert abs(np.sum(q * corr.c)) <= 0.05 * np.max(np.abs(q * corr.c))


def test_stationary_gaps_balance_the_couplings(dw_constants):
    from dataclasses import replace
    const = replace(dw_constants, mu_minus=np.array([1.0, 2.0]), mu_plus=np.array([1.0, 2.0]),
                    K_minus=np.array([1.0, 3.0]), K_plus=np.array([2.0, 1.0]))
    chain = SimpleNamespace(constants=const)
    eps = 0.03
    g = stationary_gaps(chain, eps)
    assert np.sum(g) == pytest.approx(1.0)
    balance = np.log(const.k) - const.mu * g / eps
    assert balance == pytest.approx(np.full(2, balance[0]), rel=1e-10)


def test_symmetric_stationary_solution(dw_chain):
    assert stationary_gaps(dw_chain, EPS) == pytest.approx([0.5, 0.5], abs=1e-3)
    cfg, u, report = solve_bifurcation(dw_chain, EPS, n=N_GRID)
    assert cfg.gaps == pytest.approx([0.5, 0.5], abs=1e-3)
    assert report["residual"]["linf"] < 1e-7
    assert report["orbit"]["period_T"] == pytest.approx(1.0 / EPS)
    assert isinstance(u, GridFunction)


def test_stationary_refused_when_signs_alternate(tw_chain):
    with pytest.raises(RefusedByTheoryError) as info:
        solve_bifurcation(tw_chain, 0.03)
    assert info.value.exit_code == 4
    assert info.value.varsigma == [1.0, -1.0, 1.0, -1.0]


@pytest.fixture(scope="module")
def skewed_chain():
    pot = skewed_double_well(1.0)
    return build_chain(pot, [[-1.0], [1.0]], connections={(0, 1): solve_connection(pot, [-1.0], [1.0])})


def test_skewed_well_predicted_spacing_tends_to_e(skewed_chain):
    errs = []
    for eps in (0.04, 0.02, 0.01):
        g = stationary_gaps(skewed_chain, eps)
        errs.append(abs(g[0] / g[1] / np.e - 1.0))
    assert errs[0] < 0.2
    assert errs[1] < 0.1
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.slow
def test_skewed_well_stationary_spacing_tends_to_e(skewed_chain):
    errs = []
    for eps in (0.04, 0.02):
        cfg, _, report = solve_bifurcation(skewed_chain, eps)
        assert report["residual"]["linf"] < 1e-7
        assert cfg.gaps == pytest.approx(stationary_gaps(skewed_chain, eps), abs=2e-2)
        errs.append(abs(cfg.gaps[0] / cfg.gaps[1] / np.e - 1.0))
    assert errs[0] < 0.2
    assert errs[1] < 0.1
    assert errs[1] < errs[0]


@pytest.mark.slow
def test_dihedral_stationary_solution_is_equivariant(dh, dh_chain):
    n = 384
    cfg, u, report = solve_bifurcation(dh_chain, 0.1, n=n)
    assert cfg.gaps == pytest.approx(np.full(3, 1.0 / 3.0), abs=1e-3)
    assert report["residual"]["linf"] < 1e-7
    shifted = np.roll(u.values, -n // 3, axis=0)
    assert np.max(np.abs(shifted - u.values @ dh.rotation.T)) < 1e-6
