# compare.py
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

import layer_ode
from errors import IncompleteInputError
from layer_ode import ReducedTrajectory
from tracking import TrackedTrajectory

# ---------- Tunables ----------
MIN_GAP = 0.25          # qualifying window: every PDE gap at least this wide
REL_TOL = 0.05          # acceptable relative gap error on the window
SIGN_FLOOR = 1e-3       # velocity components below this fraction of the row maximum carry no sign


@dataclass
class Comparison:
    frame: pd.DataFrame
    verdict: Dict[str, Any]

    @property
    def passed(self) -> bool:
        return bool(self.verdict["passed"])


def reference_ode(chain, tracked: TrackedTrajectory, rho: float = 0.0, k_scale: float = 1.0) -> ReducedTrajectory:
    """Reduced ODE started from the first tracked configuration, sampled at the tracked times."""
    t = tracked.times - tracked.times[0]
    if len(t) < 2:
        raise IncompleteInputError("❌ Tracked trajectory has fewer than two samples")
    return layer_ode.integrate(chain, tracked.xi[0], tracked.eps, float(t[-1]), rho=rho, t_eval=t,
                               k_scale=k_scale)


def _on_times(ode: ReducedTrajectory, t: np.ndarray) -> np.ndarray:
    """ODE gaps at times t (NaN beyond the end of the ODE trajectory)."""
    g = ode.gaps
    out = np.full((len(t), g.shape[1]), np.nan)
    inside = t <= ode.t[-1] + 1e-12
    for j in range(g.shape[1]):
        out[inside, j] = np.interp(t[inside], ode.t, g[:, j])
    return out


def _signs_agree(*rows: np.ndarray) -> bool:
    stack = np.vstack(rows)
    if not np.all(np.isfinite(stack)):
        return True
    scale = np.max(np.abs(stack))
    if scale == 0:
        return True
    live = np.all(np.abs(stack) > SIGN_FLOOR * scale, axis=0)
    s = np.sign(stack[:, live])
    return bool(np.all(s == s[0]))


def compare(tracked: TrackedTrajectory, ode: ReducedTrajectory, min_gap: float = MIN_GAP,
            rel_tol: float = REL_TOL) -> Comparison:
    """
    Per-time relative gap errors and the velocity triptych (measured / cbar / ODE),
    plus a verdict on the window where every PDE gap is at least min_gap.
    """
    t = tracked.times - tracked.times[0]
    g_pde = tracked.gaps
    g_ode = _on_times(ode, t)
    rel = np.abs(g_pde - g_ode) / g_pde
    N = tracked.N
    window = np.all(g_pde >= min_gap, axis=1) & np.all(np.isfinite(g_ode), axis=1)

    cols: Dict[str, Any] = {"t": tracked.times}
    for name, arr in (("gap_pde", g_pde), ("gap_ode", g_ode), ("rel_err", rel),
                      ("v_meas", tracked.velocity), ("v_cbar", tracked.predicted_cbar),
                      ("v_ode", tracked.predicted_ode)):
        for j in range(N):
            cols[f"{name}{j + 1}"] = arr[:, j]
    cols["max_rel_err"] = np.max(rel, axis=1)
    cols["qualifying"] = window
    frame = pd.DataFrame(cols)

    rationale = []
    if not np.any(window):
        verdict = {"passed": False, "max_rel_err": None, "sign_agreement": None,
                   "window": [None, None], "samples": 0, "rationale": f"no sample with all gaps >= {min_gap:g}"}
        return Comparison(frame, verdict)

    max_err = float(np.nanmax(rel[window]))
    err_ok = max_err <= rel_tol
    rationale.append(f"max relative gap error {max_err:.3e} {'<=' if err_ok else '>'} {rel_tol:g}")

    vel_rows = [i for i in np.flatnonzero(window) if np.all(np.isfinite(tracked.velocity[i]))]
    sign_ok = all(_signs_agree(tracked.velocity[i], tracked.predicted_cbar[i], tracked.predicted_ode[i])
                  for i in vel_rows)
    if vel_rows:
        rationale.append("velocity signs agree" if sign_ok else "velocity signs disagree")
    else:
        rationale.append("no interior velocity samples on the window")
    if tracked.failure_index is not None:
        rationale.append(f"tracking truncated at sample {tracked.failure_index}")
    if ode.collided:
        rationale.append(f"reduced ODE hit the boundary at t={ode.t_event:.6g}")

    t_win = tracked.times[window]
    verdict = {"passed": bool(err_ok and sign_ok), "max_rel_err": max_err, "sign_agreement": sign_ok,
               "window": [float(t_win[0]), float(t_win[-1])], "samples": int(np.count_nonzero(window)),
               "rationale": " | ".join(rationale)}
    return Comparison(frame, verdict)


def compare_runs(chain, tracked: TrackedTrajectory, rho: float = 0.0, min_gap: float = MIN_GAP,
                 rel_tol: float = REL_TOL, ode: Optional[ReducedTrajectory] = None) -> Comparison:
    return compare(tracked, ode if ode is not None else reference_ode(chain, tracked, rho), min_gap, rel_tol)
