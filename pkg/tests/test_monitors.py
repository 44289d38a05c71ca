"""Snapshot scheduling, energy bookkeeping and observer streams."""
import numpy as np
import pytest

from energy_monitor import EnergyMonitor
from observers import ObserverLog
from snapshot_clock import SnapshotClock


def test_snapshot_clock_lands_on_snapshot_times():
    clock = SnapshotClock(every=1.0, t_end=2.5)
    assert clock.count() == 3
    assert clock.next_dt(0.9, 0.5) == pytest.approx(0.1)
    assert clock.next_dt(0.2, 0.5) == 0.5
    assert clock.step(0.5) == (False, False)
    assert clock.step(1.0) == (True, False)
    assert clock.next_time == 2.0
    assert clock.step(2.0) == (True, False)
    assert clock.next_time == 2.5
    assert clock.step(2.5) == (True, True)


def test_snapshot_clock_rejects_bad_intervals():
    with pytest.raises(ValueError):
        SnapshotClock(every=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        SnapshotClock(every=1.0, t_end=1.0, t0=1.0)


def test_energy_monitor_accepts_decrease_and_slack():
    mon = EnergyMonitor(slack=1e-12)
    assert mon.update(0.0, 1.0)
    assert mon.update(0.1, 0.9)
    assert mon.update(0.2, 0.9 + 1e-13)
    assert not mon.update(0.3, 0.95)
    assert not mon.update(0.3, float("nan"))
    s = mon.summary()
    assert s["rejections"] == 2
    assert s["accepted"] == 3
    assert 0.0 < s["max_increase"] <= 1e-12
    assert mon.last == pytest.approx(0.9 + 1e-13)


def test_energy_monitor_reset():
    mon = EnergyMonitor()
    mon.reset(5.0, 2.0)
    assert mon.last == 2.0
    assert mon.tolerance() == pytest.approx(2.0 * mon.slack)
    assert mon.history[-1] == {"t": 5.0, "energy": 2.0, "change": 0.0}


def test_observer_log_aligns_streams():
    obs = ObserverLog(["energy"])
    obs.record(0.0, energy=1.0)
    obs.add_vector(1.0, "xi", [0.2, 0.7], energy=0.5)
    obs.record(2.0, energy=0.25)
    assert len(obs) == 3
    assert np.isnan(obs.get("xi1")[0])
    assert obs.get("xi2")[1] == 0.7
    assert np.isnan(obs.last("xi1"))
    frame = obs.to_frame()
    assert list(frame.columns) == ["t", "energy", "xi1", "xi2"]
    assert frame["energy"].tolist() == [1.0, 0.5, 0.25]
