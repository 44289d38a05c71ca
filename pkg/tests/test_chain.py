"""Chain constants, layer configurations, the ansatz and the leading-order bifurcation function."""
import numpy as np
import pytest

from chain import (ChainModel, LayerConfig, ansatz_data, build_ansatz, build_chain, c0, cbar, default_rho,
                   existence_condition, leading_energy, residual, rotation_power, tail_products, validate_config)
from errors import ConfigError, DomainError

SQRT2 = np.sqrt(2.0)
EPS = 0.05
N_GRID = 512


def test_double_well_chain_constants(dw_chain):
    const = dw_chain.constants
    assert const.h4
    assert const.varsigma.tolist() == [1.0, 1.0]
    assert const.mu == pytest.approx([SQRT2, SQRT2], rel=1e-3)
    assert const.k == pytest.approx([8.0, 8.0], rel=2e-2)
    assert existence_condition(dw_chain)["exists"] is True


def test_triple_well_chain_fails_existence(tw_chain):
    const = tw_chain.constants
    assert const.h4
    assert const.varsigma.tolist() == [1.0, -1.0, 1.0, -1.0]
    cond = existence_condition(tw_chain)
    assert cond["exists"] is False
    assert "sign" in cond["reason"]


def test_existence_is_indeterminate_without_parallel_tails(dw_constants):
    from dataclasses import replace
    bent = replace(dw_constants, dots=np.array([1.0, 0.5]), varsigma=np.array([1.0, 0.5]), h4=False)
    assert existence_condition(bent)["exists"] is None


def test_chain_rejects_bad_connections(dw, dw_het):
    with pytest.raises(ConfigError):
        build_chain(dw, [[-1.0], [-1.0]], connections={(0, 1): dw_het})
    with pytest.raises(ConfigError):
        ChainModel(dw, [[1.0], [-1.0]], [dw_het, dw_het.reversed()])


def test_build_chain_reuses_reversed_connection(dw_chain, dw_het):
    back = dw_chain.connections[1]
    assert back.diagnostics["derived"] == "reversed"
    assert back.q2 == dw_het.q2


def test_layer_config_gaps():
    cfg = LayerConfig.from_gaps([2.0, 3.0], EPS)
    assert cfg.gaps == pytest.approx([0.4, 0.6])
    assert cfg.xi == pytest.approx([0.2, 0.8])
    moved = cfg.shifted(0.9)
    assert 0.0 <= moved.xi[0] < 1.0
    assert moved.gaps == pytest.approx(cfg.gaps)


def test_validate_config(dw_constants):
    validate_config(dw_constants, LayerConfig.from_gaps([0.5, 0.5], EPS, rho=0.01))
    with pytest.raises(DomainError):
        validate_config(dw_constants, LayerConfig.from_gaps([0.005, 0.995], EPS, rho=0.01))
    with pytest.raises(DomainError):
        validate_config(dw_constants, LayerConfig(np.array([0.1, 0.5, 0.9]), EPS))
    with pytest.raises(DomainError):
        validate_config(dw_constants, LayerConfig(np.array([1.2, 1.5]), EPS))


def test_default_rho(dw_chain):
    assert default_rho(dw_chain) == pytest.approx(0.01 * float(np.min(dw_chain.constants.mu)))


def test_tail_products(dw_constants):
    cfg = LayerConfig.from_gaps([0.4, 0.6], EPS)
    E = tail_products(dw_constants, cfg)
    assert E["E"] == pytest.approx(np.exp(-SQRT2 * np.array([0.4, 0.6]) / EPS))
    assert E["E_minus"] == pytest.approx(E["E"])


def test_c0_hand_evaluation(dw_constants):
    cfg = LayerConfig.from_gaps([0.4, 0.6], EPS)
    E = np.exp(-SQRT2 * cfg.gaps / EPS)
    q = np.sqrt(2.0 * SQRT2 / 3.0)
    expected = 2.0 * np.sqrt(EPS) / q * 8.0 * np.array([E[1] - E[0], E[0] - E[1]])
    assert c0(dw_constants, cfg) == pytest.approx(expected, rel=1e-12)
    # the short plateau (a_1, gap 0.4) shrinks: xi_1 moves left, xi_2 right
    assert c0(dw_constants, cfg)[0] < 0 < c0(dw_constants, cfg)[1]


def test_c0_equal_gaps_and_translation(dw_constants):
    assert c0(dw_constants, LayerConfig.from_gaps([1.0, 1.0], EPS)) == pytest.approx([0.0, 0.0], abs=1e-20)
    cfg = LayerConfig.from_gaps([0.35, 0.65], EPS)
    assert c0(dw_constants, cfg.shifted(0.37)) == pytest.approx(c0(dw_constants, cfg), rel=1e-12)


def test_ansatz_plateaus_and_tangents(dw_chain):
    cfg = LayerConfig.from_gaps([0.4, 0.6], EPS)
    data = ansatz_data(dw_chain, cfg, N_GRID)
    u = data.u
    # plateau centres carry both tails: x = 0 sits 0.2 from two layers, x = 0.5 sits 0.3 from two
    tail = lambda d: 1.0 - np.tanh(d / EPS / SQRT2)  # noqa: E731
    assert u.values[0, 0] == pytest.approx(-1.0 + 2.0 * tail(0.2), abs=1e-6)
    assert u.values[N_GRID // 2, 0] == pytest.approx(1.0 - 2.0 * tail(0.3), abs=1e-6)
    # moving every layer is a translation: sum_j u_xi_j = -u_x
    assert np.max(np.abs(data.u_xi.sum(axis=0) + u.dx().values)) < 1e-4
    assert data.u_xi_norms() == pytest.approx(dw_chain.constants.q / np.sqrt(EPS), rel=1e-3)


def test_build_ansatz_is_translation_covariant(dw_chain):
    cfg = LayerConfig.from_gaps([0.4, 0.6], EPS)
    s = 8.0 / N_GRID
    a = build_ansatz(dw_chain, cfg, N_GRID)
    b = build_ansatz(dw_chain, cfg.shifted(s), N_GRID)
    assert np.max(np.abs(np.roll(a.values, 8, axis=0) - b.values)) < 1e-9


def test_cbar_vanishes_for_equal_gaps(dw_chain):
    cfg = LayerConfig.from_gaps([1.0, 1.0], EPS)
    assert np.max(np.abs(cbar(dw_chain, cfg, N_GRID))) < 2e-8


def test_cbar_tracks_c0(dw_chain):
    cfg = LayerConfig.from_gaps([0.4, 0.6], EPS)
    cb, lead = cbar(dw_chain, cfg, N_GRID), c0(dw_chain, cfg)
    assert np.all(np.sign(cb) == np.sign(lead))
    assert cb == pytest.approx(lead, rel=0.1)


def test_residual_norms(dw_chain):
    cfg = LayerConfig.from_gaps([0.4, 0.6], EPS)
    F, norms = residual(dw_chain, cfg, n=N_GRID)
    assert set(norms) == {"l2", "linf", "w12"}
    assert norms["l2"] <= norms["linf"]
    assert norms["linf"] < 1e-2


def test_leading_energy(dw_constants):
    assert leading_energy(dw_constants, EPS) == pytest.approx(EPS * 4.0 * SQRT2 / 3.0)


def test_rotation_power(dw, dh):
    assert rotation_power(dh, (0, 1), (1, 2)) == 1
    assert rotation_power(dh, (0, 1), (2, 0)) == 2
    assert rotation_power(dh, (0, 1), (1, 0)) is None
    assert rotation_power(dw, (0, 1), (1, 0)) is None


def test_dihedral_chain_is_equivariant(dh, dh_chain):
    assert all(c.diagnostics["derived"] == "transformed" for c in dh_chain.connections[1:])
    const = dh_chain.constants
    assert const.h4
    assert np.all(np.abs(const.varsigma) == 1.0)
    assert np.all(const.varsigma == const.varsigma[0])
    assert existence_condition(dh_chain)["exists"] is True
    assert const.q2 == pytest.approx(np.full(3, const.q2[0]), rel=1e-10)
    # one third of a period carries layer j onto layer j + 1
    n = 384
    u = build_ansatz(dh_chain, LayerConfig([1.0 / 6.0, 0.5, 5.0 / 6.0], 0.1), n)
    shifted = np.roll(u.values, -n // 3, axis=0)
    assert np.max(np.abs(shifted - u.values @ dh.rotation.T)) < 1e-9


def test_cbar_approaches_c0_as_eps_shrinks(dw_chain):
    diffs, rels = [], []
    for eps in (0.08, 0.05, 0.03, 0.02):
        cfg = LayerConfig.from_gaps([0.25, 0.75], eps)
        cb, lead = cbar(dw_chain, cfg), c0(dw_chain, cfg)
        diffs.append(np.max(np.abs(cb - lead)))
        rels.append(diffs[-1] / np.max(np.abs(lead)))
    assert np.all(np.diff(diffs) < 0)
    assert rels[-1] < rels[0]


def test_residual_decays_with_the_gap(dw_chain):
    xs, logs = [], []
    for eps in (0.08, 0.06, 0.05, 0.04):
        _, norms = residual(dw_chain, LayerConfig.from_gaps([1.0, 1.0], eps))
        xs.append(0.5 / eps)
        logs.append(np.log(norms["l2"]))
    # on a plateau the residual is W'''(a) times the product of both tails
    slope = np.polyfit(xs, logs, 1)[0]
    assert slope == pytest.approx(-SQRT2, rel=0.1)
