# pde.py
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from chain import ChainModel, LayerConfig
from config import C_DT, DT_MIN, REACTION_DT_CAP, SOLVER_SLACK
from energy_monitor import EnergyMonitor
from errors import DivergenceError, LayerLabError, StiffnessError
from grid import GridFunction, check_resolution, energy
from observers import ObserverLog
from potential import Potential, max_curvature
from snapshot_clock import SnapshotClock
from tracking import project

log = logging.getLogger(__name__)

ProgressCB = Callable[[int, int], None]
CancelCB = Callable[[], bool]
LogCB = Callable[[str], None]

# ---------- Tunables ----------
CANCEL_CHECK_EVERY = 100     # steps between cancel_cb polls


@dataclass
class PdeState:
    t: float
    u: GridFunction
    energy: float
    dt: float
    steps: int = 0
    rejections: int = 0

    @classmethod
    def initial(cls, u: GridFunction, pot: Potential, dt: Optional[float] = None, t: float = 0.0) -> "PdeState":
        check_resolution(u.n, u.eps)
        return cls(t=t, u=u, energy=energy(u, pot), dt=default_dt(u, pot) if dt is None else float(dt))


def default_dt(u: GridFunction, pot: Potential, c_dt: float = C_DT, reaction_cap: float = REACTION_DT_CAP) -> float:
    """min(c_dt h^2/eps^2, reaction_cap / max |W_uu|) over the minima and the current state."""
    h = u.h
    diffusive = c_dt * h ** 2 / u.eps ** 2
    reactive = reaction_cap / max(max_curvature(pot, u.values), 1e-12)
    return float(min(diffusive, reactive))


def box_bound(pot: Potential) -> float:
    return 2.0 * float(np.max(np.abs(pot.minima))) + 1.0


def _imex_midpoint(u: GridFunction, pot: Potential, dt: float) -> GridFunction:
    """
    Diffusion by the implicit trapezoid (spectral multiplier), reaction by the
    explicit midpoint rule. Second order in dt.
    """
    lam = -(u.eps ** 2) * u._k ** 2
    fft, ifft = np.fft.fft, np.fft.ifft
    U = u.values
    half = np.real(ifft(fft(U - 0.5 * dt * pot.grad(U), axis=0) / (1.0 - 0.5 * dt * lam)[:, None], axis=0))
    rhs = (1.0 + 0.5 * dt * lam)[:, None] * fft(U, axis=0) - dt * fft(pot.grad(half), axis=0)
    return GridFunction(np.real(ifft(rhs / (1.0 - 0.5 * dt * lam)[:, None], axis=0)), u.eps)


def step(state: PdeState, pot: Potential, dt: Optional[float] = None,
         monitor: Optional[EnergyMonitor] = None) -> PdeState:
    """
    One accepted IMEX step. Steps raising the energy by more than the slack are
    rejected and retried with dt halved; the halved dt is kept.
    """
    dt = state.dt if dt is None else float(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    monitor = monitor if monitor is not None else EnergyMonitor()
    if monitor.last is None:
        monitor.reset(state.t, state.energy)
    bound = box_bound(pot)
    rejections = 0
    while True:
        if dt < DT_MIN:
            raise StiffnessError(f"❌ Time step underflow (dt={dt:.3e}) at t={state.t:.6g}",
                                 t=state.t, dt=dt)
        u_new = _imex_midpoint(state.u, pot, dt)
        sup = u_new.sup_norm()
        if not np.isfinite(sup):
            rejections += 1
            dt *= 0.5
            continue
        if sup > bound:
            raise DivergenceError(f"❌ Solution left the well region (|u| = {sup:.3g} > {bound:.3g})",
                                  t=state.t + dt)
        J = energy(u_new, pot)
        if monitor.update(state.t + dt, J):
            break
        rejections += 1
        dt *= 0.5
    return PdeState(t=state.t + dt, u=u_new, energy=J, dt=dt if rejections else state.dt,
                    steps=state.steps + 1, rejections=state.rejections + rejections)


@dataclass
class RunResult:
    snapshots: List[Tuple[float, GridFunction]]
    observers: ObserverLog
    final: PdeState
    exit_reason: str                    # t_end | boundary | projection_failure | cancelled
    monitor: EnergyMonitor
    layers: Optional[LayerConfig] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        return {"exit_reason": self.exit_reason, "t_final": self.final.t, "steps": self.final.steps,
                "rejections": self.final.rejections, "dt_final": self.final.dt,
                "energy_final": self.final.energy, "snapshots": len(self.snapshots),
                "xi_final": None if self.layers is None else self.layers.xi.tolist(),
                "energy_monitor": self.monitor.summary(), **self.details}


def run(state: PdeState, pot: Potential, t_end: float, snapshot_every: float,
        chain: Optional[ChainModel] = None, rho: float = 0.0, guess: Optional[LayerConfig] = None,
        progress_cb: Optional[ProgressCB] = None, cancel_cb: Optional[CancelCB] = None,
        log_cb: Optional[LogCB] = None) -> RunResult:
    """
    Integrate to t_end with fixed-interval snapshots. With a chain attached every
    snapshot is projected on the layered manifold; the run stops when a gap
    reaches rho/mu_j (layer collision) or the projection fails.
    """
    def _log(msg: str):
        if log_cb:
            log_cb(msg)
        else:
            log.info(msg)

    clock = SnapshotClock(snapshot_every, t_end, t0=state.t)
    monitor = EnergyMonitor(SOLVER_SLACK)
    monitor.reset(state.t, state.energy)
    obs = ObserverLog(["energy", "dt"])
    snapshots: List[Tuple[float, GridFunction]] = [(state.t, state.u.copy())]
    total = clock.count()
    layers = guess
    exit_reason = "t_end"
    details: Dict[str, Any] = {}

    def observe(st: PdeState) -> Optional[str]:
        nonlocal layers
        values = {"energy": st.energy, "dt": st.dt}
        if chain is None:
            obs.record(st.t, **values)
            return None
        try:
            # project on the full admissible set; the rho margin is checked below
            proj = project(st.u, chain, guess=layers)
        except LayerLabError as exc:
            obs.record(st.t, **values)
            details["projection_error"] = exc.message
            return "projection_failure"
        layers = proj.cfg
        margin = proj.cfg.gaps - rho / chain.constants.mu
        values.update(min_gap=float(np.min(proj.cfg.gaps)), w_l2=proj.diagnostics["w_l2"],
                      w_w12=proj.diagnostics["w_w12"])
        obs.add_vector(st.t, "xi", proj.cfg.xi, **values)
        return "boundary" if np.min(margin) <= 0 else None

    _log(f"▶️ PDE run: n={state.u.n}, eps={state.u.eps:g}, dt={state.dt:.3e}, t_end={t_end:g}")
    stop = observe(state)
    if stop:
        exit_reason = stop
    while stop is None:
        if cancel_cb and state.steps % CANCEL_CHECK_EVERY == 0 and cancel_cb():
            _log("⏹ Cancel requested; stopping PDE run.")
            exit_reason = "cancelled"
            break
        dt = clock.next_dt(state.t, state.dt)
        st = step(replace(state, dt=dt), pot, monitor=monitor)
        # a clipped landing step must not shrink the working dt
        state = replace(st, dt=state.dt if st.rejections == state.rejections else st.dt)
        due, over = clock.step(state.t)
        if due:
            snapshots.append((state.t, state.u.copy()))
            stop = observe(state)
            if progress_cb:
                progress_cb(clock.index, total)
            if stop:
                exit_reason = stop
                _log(f"⏹ PDE run stopped at t={state.t:.6g}: {stop}")
                break
        if over:
            break

    _log(f"✅ PDE run finished: t={state.t:.6g}, {state.steps} steps, {state.rejections} rejected, "
         f"exit={exit_reason}")
    return RunResult(snapshots=snapshots, observers=obs, final=state, exit_reason=exit_reason,
                     monitor=monitor, layers=layers, details=details)
