# tracking.py
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.signal import find_peaks

from chain import ChainModel, LayerConfig, ansatz_data, cbar, residual, validate_config
from config import NEIGHBORHOOD_FRAC, PROJ_TOL
from errors import DomainError, LayerLabError, OutOfNeighborhoodError
from grid import GridFunction
import layer_ode

log = logging.getLogger(__name__)

# ---------- Tunables ----------
MAX_PROJ_ITER = 40
PEAK_HEIGHT_FRAC = 0.25     # |u_x| peaks below this fraction of the maximum are ignored
VELOCITY_SIGNAL = 100.0     # stride so that |dxi| ~ VELOCITY_SIGNAL * PROJ_TOL


@dataclass
class Projection:
    cfg: LayerConfig
    w: GridFunction
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def xi(self) -> np.ndarray:
        return self.cfg.xi


def _min_separation(chain: ChainModel) -> float:
    a = chain.minima
    return float(np.min(np.linalg.norm(np.roll(a, -1, axis=0) - a, axis=1)))


def _orthogonality(u: GridFunction, chain: ChainModel, cfg: LayerConfig):
    data = ansatz_data(chain, cfg, u.n)
    w = u - data.u
    norms = data.u_xi_norms()
    G = np.array([w.inner(data.u_xi_fn(j)) for j in range(chain.N)])
    return data, w, G, norms


def seed_from_peaks(u: GridFunction, chain: ChainModel, rho: float = 0.0) -> LayerConfig:
    """
    Interface guess from the maxima of |u_x|: each peak is classified by the
    plateaus on either side, matched to the chain in cyclic order and offset by
    the peak location of its connection profile.
    """
    speed = np.linalg.norm(u.dx().values, axis=1)
    n, N = u.n, chain.N
    top = float(np.max(speed))
    if top <= 0.0 or not np.isfinite(top):
        raise OutOfNeighborhoodError("❌ No interfaces found: u has no gradient")
    # wrap so that peaks at x = 0 are found once
    wrapped = np.concatenate([speed[-n // 2:], speed, speed[:n // 2]])
    min_dist = max(1, int(2 * u.eps * n))
    peaks, _ = find_peaks(wrapped, height=PEAK_HEIGHT_FRAC * top, distance=min_dist)
    peaks = np.unique((peaks - n // 2) % n)
    peaks = peaks[np.argsort(peaks)]
    if len(peaks) != N:
        raise OutOfNeighborhoodError(f"❌ Found {len(peaks)} interfaces, chain has {N}", peaks=peaks.tolist())

    x = u.x
    locs = []
    for p in peaks:
        y0, y1, y2 = speed[(p - 1) % n], speed[p], speed[(p + 1) % n]
        den = y0 - 2 * y1 + y2
        off = 0.0 if den == 0 else 0.5 * (y0 - y2) / den
        locs.append(x[p] + np.clip(off, -1, 1) / n)
    locs = np.asarray(locs)

    # plateau between consecutive peaks
    sep = _min_separation(chain)
    plateau = []
    for k in range(N):
        mid = 0.5 * (locs[k] + locs[(k + 1) % N] + (1.0 if k == N - 1 else 0.0))
        idx = int(round(mid * n)) % n
        d = np.linalg.norm(chain.minima - u.values[idx], axis=1)
        if d.min() > NEIGHBORHOOD_FRAC * sep:
            raise OutOfNeighborhoodError("❌ No plateau near a chain minimum between interfaces",
                                         x=float(mid % 1.0), value=u.values[idx].tolist())
        plateau.append(chain.minima[int(np.argmin(d))])

    # peak k separates plateau[k-1] (left) from plateau[k] (right)
    def matches(r: int) -> bool:
        return all(np.allclose(plateau[(j + r - 1) % N], chain.minima[j])
                   and np.allclose(plateau[(j + r) % N], chain.minima[(j + 1) % N]) for j in range(N))

    for r in range(N):
        if matches(r):
            break
    else:
        raise OutOfNeighborhoodError("❌ Interface sequence does not match the chain",
                                     plateaus=[p.tolist() for p in plateau])

    xi = np.empty(N)
    for j in range(N):
        k = (j + r) % N
        xi[j] = locs[k] - u.eps * chain.connections[j].peak_location
    for j in range(1, N):
        while xi[j] <= xi[j - 1]:
            xi[j] += 1.0
    return LayerConfig(xi, u.eps, rho).normalised()


def project(u: GridFunction, chain: ChainModel, guess: Optional[LayerConfig] = None, rho: float = 0.0,
            tol: float = PROJ_TOL, max_iter: int = MAX_PROJ_ITER) -> Projection:
    """
    u = u^xi + w with <w, u_xi_j> = 0 for every j, by Newton on the N
    orthogonality equations with the analytic Jacobian
      dG_j/dxi_i = -<u_xi_i, u_xi_j> + delta_ij <w, u_xixi_j>.
    """
    cfg = seed_from_peaks(u, chain, rho) if guess is None else LayerConfig(guess.xi, u.eps, rho).normalised()
    try:
        validate_config(chain, cfg)
    except DomainError as exc:
        raise OutOfNeighborhoodError("❌ Projection guess is outside the admissible set", **exc.details) from exc

    trace: List[float] = []
    data, w, G, norms = _orthogonality(u, chain, cfg)
    res = float(np.max(np.abs(G) / norms))
    trace.append(res)
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        U = data.u_xi.reshape(chain.N, -1)
        J = -u.h * (U @ U.T)
        for j in range(chain.N):
            J[j, j] += w.inner(GridFunction(data.u_xixi[j], u.eps))
        try:
            step = np.linalg.solve(J, -G)
        except np.linalg.LinAlgError as exc:
            raise OutOfNeighborhoodError("❌ Singular projection Jacobian", trace=trace) from exc
        lam = 1.0
        while lam >= 1.0 / 64:
            trial = LayerConfig(cfg.xi + lam * step, u.eps, rho)
            try:
                trial = trial.normalised()
                validate_config(chain, trial)
                t_data, t_w, t_G, t_norms = _orthogonality(u, chain, trial)
                t_res = float(np.max(np.abs(t_G) / t_norms))
            except DomainError:
                t_res = np.inf
            if t_res < res or t_res < tol:
                cfg, data, w, G, norms, res = trial, t_data, t_w, t_G, t_norms, t_res
                break
            lam *= 0.5
        else:
            raise OutOfNeighborhoodError("❌ Projection Newton stalled: u is not near the layered manifold",
                                         trace=trace, xi=cfg.xi.tolist())
        trace.append(res)
    if res >= tol:
        raise OutOfNeighborhoodError("❌ Projection did not converge", trace=trace, xi=cfg.xi.tolist())

    sup = w.sup_norm()
    if sup > NEIGHBORHOOD_FRAC * _min_separation(chain):
        raise OutOfNeighborhoodError("❌ u is too far from the layered manifold", w_sup=sup, xi=cfg.xi.tolist())
    diagnostics = {"iterations": it, "residual": res, "trace": trace,
                   "w_l2": w.norm(), "w_w12": w.w12_norm(), "w_sup": sup}
    return Projection(cfg, w, diagnostics)


def _unwrap(prev: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Shift xi by an integer so it is closest to prev (layers crossing x = 0)."""
    return xi + np.round(np.mean(prev - xi))


@dataclass
class TrackedTrajectory:
    """
    Layer positions along a run, unwrapped in time.
      velocity         central differences over `stride` samples (NaN near the ends)
      predicted_cbar   (sqrt(eps)/q_j) cbar_j(xi)
      predicted_ode    reduced-ODE right-hand side at xi
    """
    times: np.ndarray
    xi: np.ndarray
    w_l2: np.ndarray
    w_w12: np.ndarray
    residual_l2: np.ndarray
    velocity: np.ndarray
    predicted_cbar: np.ndarray
    predicted_ode: np.ndarray
    eps: float
    stride: int
    failure_index: Optional[int] = None
    failure: Optional[str] = None

    @property
    def gaps(self) -> np.ndarray:
        prev = np.roll(self.xi, 1, axis=1)
        prev[:, 0] -= 1.0
        return self.xi - prev

    @property
    def N(self) -> int:
        return self.xi.shape[1]

    @classmethod
    def from_frame(cls, df: pd.DataFrame, eps: float, stride: int = 1) -> "TrackedTrajectory":
        N = sum(1 for c in df.columns if c.startswith("xi"))

        def block(name: str) -> np.ndarray:
            return np.column_stack([df[f"{name}{j + 1}"].to_numpy(dtype=float) for j in range(N)])

        return cls(times=df["t"].to_numpy(dtype=float), xi=block("xi"), w_l2=df["w_l2"].to_numpy(dtype=float),
                   w_w12=df["w_w12"].to_numpy(dtype=float), residual_l2=df["F_l2"].to_numpy(dtype=float),
                   velocity=block("v_meas"), predicted_cbar=block("v_cbar"), predicted_ode=block("v_ode"),
                   eps=eps, stride=stride)

    def to_frame(self) -> pd.DataFrame:
        cols: Dict[str, Any] = {"t": self.times}
        g = self.gaps
        for name, arr in (("xi", self.xi), ("gap", g), ("v_meas", self.velocity),
                          ("v_cbar", self.predicted_cbar), ("v_ode", self.predicted_ode)):
            for j in range(self.N):
                cols[f"{name}{j + 1}"] = arr[:, j]
        cols["w_l2"] = self.w_l2
        cols["w_w12"] = self.w_w12
        cols["F_l2"] = self.residual_l2
        with np.errstate(divide="ignore", invalid="ignore"):
            cols["w_ratio"] = self.w_w12 / self.residual_l2
        return pd.DataFrame(cols)


def _stride(times: np.ndarray, xi: np.ndarray) -> int:
    if len(times) < 3:
        return 1
    step = np.median(np.max(np.abs(np.diff(xi, axis=0)), axis=1))
    if step <= 0:
        return 1
    s = int(np.ceil(VELOCITY_SIGNAL * PROJ_TOL / step))
    return int(np.clip(s, 1, (len(times) - 1) // 2))


def central_velocity(times: np.ndarray, xi: np.ndarray, stride: int) -> np.ndarray:
    v = np.full_like(xi, np.nan)
    s = stride
    if len(times) > 2 * s:
        v[s:-s] = (xi[2 * s:] - xi[:-2 * s]) / (times[2 * s:] - times[:-2 * s])[:, None]
    return v


def track(snapshots: Sequence[Tuple[float, GridFunction]], chain: ChainModel,
          guess: Optional[LayerConfig] = None, stride: Optional[int] = None,
          with_predictions: bool = True) -> TrackedTrajectory:
    """
    Sequential projection with warm starts. A failed projection or a jump larger
    than half the smallest gap truncates the trajectory at that sample.
    """
    if not snapshots:
        raise OutOfNeighborhoodError("❌ Nothing to track: empty snapshot list")
    eps = snapshots[0][1].eps
    times, xis, wl2, ww12, fl2 = [], [], [], [], []
    failure_index, failure = None, None
    prev: Optional[LayerConfig] = guess
    prev_xi: Optional[np.ndarray] = None
    for k, (t, u) in enumerate(snapshots):
        try:
            proj = project(u, chain, guess=prev)
        except LayerLabError as exc:
            failure_index, failure = k, exc.message
            log.warning("⚠️ projection failed at t=%.6g: %s", t, exc.message)
            break
        xi = proj.xi if prev_xi is None else _unwrap(prev_xi, proj.xi)
        if prev_xi is not None:
            jump = float(np.max(np.abs(xi - prev_xi)))
            if jump > 0.5 * float(np.min(proj.cfg.gaps)):
                failure_index, failure = k, f"layer jump {jump:.3g} exceeds half the smallest gap"
                log.warning("⚠️ %s at t=%.6g", failure, t)
                break
        _, F_norms = residual(chain, proj.cfg, n=u.n)
        times.append(float(t))
        xis.append(xi)
        wl2.append(proj.diagnostics["w_l2"])
        ww12.append(proj.diagnostics["w_w12"])
        fl2.append(F_norms["l2"])
        prev, prev_xi = proj.cfg, xi

    if not xis:
        raise OutOfNeighborhoodError(f"❌ First snapshot could not be projected: {failure}")
    T = np.asarray(times)
    X = np.asarray(xis)
    s = _stride(T, X) if stride is None else int(stride)
    vel = central_velocity(T, X, s)

    pred_c = np.full_like(X, np.nan)
    pred_o = np.full_like(X, np.nan)
    if with_predictions:
        q = chain.constants.q
        for i, x in enumerate(X):
            cfg = LayerConfig(x, eps, 0.0).normalised()
            pred_c[i] = np.sqrt(eps) / q * cbar(chain, cfg, snapshots[0][1].n)
            pred_o[i] = layer_ode.rhs(chain, cfg, eps)
    return TrackedTrajectory(times=T, xi=X, w_l2=np.asarray(wl2), w_w12=np.asarray(ww12),
                             residual_l2=np.asarray(fl2), velocity=vel, predicted_cbar=pred_c,
                             predicted_ode=pred_o, eps=eps, stride=s,
                             failure_index=failure_index, failure=failure)
