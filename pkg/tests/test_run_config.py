"""Run-config parsing, validation and hashing."""
import glob
import os

import numpy as np
import pytest

from errors import ConfigError
from run_config import from_dict, load_run_config

BASE = {"potential": {"family": "double_well"}, "chain": {"minima": [0, 1]}}


def test_defaults_are_filled_in():
    rc = from_dict(BASE)
    assert rc.numerics.eps == [0.05]
    assert rc.numerics.rho is None
    assert rc.experiment.k == 2
    assert rc.seed == 0
    resolved = rc.resolved()
    assert set(resolved) == {"potential", "chain", "numerics", "experiment", "seed"}


def test_family_is_normalised_and_eps_may_be_scalar():
    rc = from_dict({"potential": {"family": "Double_Well"}, "numerics": {"eps": 0.02}})
    assert rc.potential.family == "double_well"
    assert rc.numerics.eps == [0.02]


@pytest.mark.parametrize("raw", [
    {"chain": {"minima": [0, 1]}},
    {**BASE, "extra": 1},
    {**BASE, "numerics": {"eps": [0.05], "epsilon": 0.1}},
    {"potential": {"family": "quartic_bowl"}},
    {**BASE, "numerics": {"eps": [1.5]}},
    {**BASE, "numerics": {"n": 8}},
    {**BASE, "experiment": {"xi0": [0.2, 0.7], "gaps0": [0.5, 0.5]}},
    {**BASE, "experiment": {"t_end": -1.0}},
    {**BASE, "chain": {"equivariant": "yes"}},
])
def test_invalid_configs_are_rejected(raw):
    with pytest.raises(ConfigError) as info:
        from_dict(raw)
    assert info.value.exit_code == 2


def test_digest_is_stable_and_sensitive():
    a, b = from_dict(BASE), from_dict(dict(BASE))
    assert a.digest() == b.digest()
    assert len(a.digest()) == 64
    assert from_dict({**BASE, "seed": 1}).digest() != a.digest()


def test_chain_points():
    rc = from_dict(BASE)
    pot = rc.build_potential()
    assert rc.chain_points(pot) == pytest.approx(np.array([[-1.0], [1.0]]))
    coords = from_dict({**BASE, "chain": {"minima": [[-1.0], [1.0], [-1.0], [1.0]]}})
    assert coords.chain_points(pot).shape == (4, 1)
    with pytest.raises(ConfigError):
        from_dict({**BASE, "chain": {"minima": [0, 5]}}).chain_points(pot)
    with pytest.raises(ConfigError):
        from_dict({**BASE, "chain": {"minima": [0]}}).chain_points(pot)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "absent.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("potential: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(str(bad))


def test_shipped_configs_load(root_dir):
    paths = sorted(glob.glob(os.path.join(root_dir, "configs", "*.yaml")))
    assert len(paths) >= 4
    for path in paths:
        rc = load_run_config(path)
        assert rc.source == path
        assert len(rc.chain.minima) >= 2
