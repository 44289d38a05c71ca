# heteroclinic.py
import json
import logging
from dataclasses import dataclass, replace
from functools import cached_property
from itertools import combinations
from typing import Any, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, spsolve

from config import (EIG0_TOL, EQUI_TOL, H4_ANGLE_DEG, HET_L_FACTOR, HET_POINTS, NEWTON_TOL,
                    PRERELAX_STEPS, SPECTRAL_FLOOR, TAIL_WINDOW, TRIANGLE_RTOL)
from errors import (ConfigError, IncompleteInputError, IncreaseLError, NoConnectionError,
                    NumericalError)
from potential import Potential, max_curvature, nearest_minimum

log = logging.getLogger(__name__)

# ---------- Tunables ----------
MAX_NEWTON_ITER = 60
MIN_DAMPING = 1.0 / 1024
FALLBACK_RELAX_STEPS = 2000
CLAMP_PASSES = 3
MIN_TAIL_POINTS = 8
SWITCH_OFFSET = 5.0       # evaluate() switches to the fitted tail at L - SWITCH_OFFSET/mu


@dataclass(frozen=True)
class TailFit:
    """u - a ~ sign * amplitude * z * exp(-mu |s|) on one side of a connection."""
    side: str
    mu: float
    z: np.ndarray
    amplitude: float
    sign: int
    residual: float
    window: Tuple[float, float]
    angle_deg: float
    eigenvalue: float
    warning: Optional[str] = None

    @property
    def direction(self) -> np.ndarray:
        return self.sign * self.z

    def to_dict(self) -> Dict[str, Any]:
        return {"side": self.side, "mu": self.mu, "z": self.z.tolist(), "amplitude": self.amplitude,
                "sign": self.sign, "residual": self.residual, "window": list(self.window),
                "angle_deg": self.angle_deg, "eigenvalue": self.eigenvalue, "warning": self.warning}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TailFit":
        return cls(side=d["side"], mu=float(d["mu"]), z=np.asarray(d["z"], dtype=float),
                   amplitude=float(d["amplitude"]), sign=int(d["sign"]), residual=float(d["residual"]),
                   window=tuple(d["window"]), angle_deg=float(d["angle_deg"]),
                   eigenvalue=float(d["eigenvalue"]), warning=d.get("warning"))


class Heteroclinic:
    """
    Minimising connection a_minus -> a_plus sampled on a uniform grid over [-L, L],
    clamped at both ends and phase-fixed by |u(0) - a_minus| = |u(0) - a_plus|.
    - profile: Newton solution, shape (n, m)
    - profile_extrapolated: Richardson-corrected profile on the same grid (or None)
    - q2: action, extrapolated when available
    - left / right: TailFit of each end
    - evaluate(s, nu): profile (nu=0) or its derivatives (nu=1, 2) at arbitrary s
    - reversed() / transformed(R): related connections without a new solve
    """

    def __init__(self, a_minus, a_plus, s: np.ndarray, profile: np.ndarray, action: float,
                 left: Optional[TailFit] = None, right: Optional[TailFit] = None,
                 potential: Optional[Potential] = None,
                 profile_extrapolated: Optional[np.ndarray] = None,
                 action_extrapolated: Optional[float] = None,
                 diagnostics: Optional[Dict[str, Any]] = None):
        self.a_minus = np.asarray(a_minus, dtype=float).ravel()
        self.a_plus = np.asarray(a_plus, dtype=float).ravel()
        self.s = np.asarray(s, dtype=float)
        self.profile = np.asarray(profile, dtype=float).reshape(len(self.s), -1)
        self.action = float(action)
        self.left = left
        self.right = right
        self.potential = potential
        self.profile_extrapolated = (None if profile_extrapolated is None
                                     else np.asarray(profile_extrapolated, dtype=float).reshape(self.profile.shape))
        self.action_extrapolated = None if action_extrapolated is None else float(action_extrapolated)
        self.diagnostics: Dict[str, Any] = dict(diagnostics or {})

    # ----- basic geometry -----
    @property
    def n(self) -> int:
        return len(self.s)

    @property
    def dim(self) -> int:
        return self.profile.shape[1]

    @property
    def L(self) -> float:
        return float(self.s[-1])

    @property
    def h(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def q2(self) -> float:
        return self.action_extrapolated if self.action_extrapolated is not None else self.action

    @property
    def best_profile(self) -> np.ndarray:
        return self.profile_extrapolated if self.profile_extrapolated is not None else self.profile

    def tail(self, side: str) -> TailFit:
        fit = self.left if side == "left" else self.right
        if fit is None:
            raise NumericalError(f"❌ Connection has no {side} tail fit")
        return fit

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.s, self.best_profile, axis=0)

    @cached_property
    def peak_location(self) -> float:
        """s where |u'| is largest (parabolic refinement on the grid)."""
        d = np.linalg.norm(self._spline(self.s, 1), axis=1)
        i = int(np.clip(np.argmax(d), 1, self.n - 2))
        y0, y1, y2 = d[i - 1], d[i], d[i + 1]
        den = y0 - 2 * y1 + y2
        off = 0.0 if den == 0 else 0.5 * (y0 - y2) / den
        return float(self.s[i] + np.clip(off, -1, 1) * self.h)

    def _switch(self, fit: TailFit) -> Tuple[float, float]:
        lo, hi = fit.window
        s_sw = float(np.clip(self.L - SWITCH_OFFSET / fit.mu, lo, hi))
        s_sw = min(s_sw, self.L - 8 * self.h)
        return s_sw, max((self.L - s_sw) / 8.0, self.h)

    def evaluate(self, s, nu: int = 0) -> np.ndarray:
        """
        Profile or its derivative at arbitrary s, shape s.shape + (m,).
        Inside the grid a cubic spline is blended into the fitted exponential
        tail past the switch point; outside the grid only the tail is used.
        nu=2 uses u'' = grad W(u) when the potential is attached.
        """
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        if nu == 2 and self.potential is not None:
            return self.potential.grad(self.evaluate(flat, 0)).reshape(s.shape + (self.dim,))
        if self.left is None or self.right is None:
            return self._spline(np.clip(flat, -self.L, self.L), nu).reshape(s.shape + (self.dim,))

        out = np.empty((flat.size, self.dim))
        for side, fit, a, mask in (("left", self.left, self.a_minus, flat < 0),
                                   ("right", self.right, self.a_plus, flat >= 0)):
            if not np.any(mask):
                continue
            x = flat[mask]
            r = np.abs(x)
            sgn = -1.0 if side == "left" else 1.0       # d|s|/ds
            e = np.exp(-fit.mu * r)
            amp = fit.amplitude * fit.direction
            if nu == 0:
                tail = a + e[:, None] * amp
            elif nu == 1:
                tail = (-fit.mu * sgn * e)[:, None] * amp
            else:
                tail = (fit.mu ** 2 * e)[:, None] * amp
            s_sw, w = self._switch(fit)
            inside = r < self.L
            res = tail.copy()
            if np.any(inside):
                xi = x[inside]
                arg = (np.abs(xi) - s_sw) / w
                beta = 0.5 * (1.0 + np.tanh(arg))
                spl = self._spline(xi, nu)
                blend = (1.0 - beta)[:, None] * spl + beta[:, None] * tail[inside]
                if nu >= 1:
                    dbeta = sgn * 0.5 / w / np.cosh(arg) ** 2
                    spl0 = self._spline(xi, 0)
                    tail0 = a + np.exp(-fit.mu * np.abs(xi))[:, None] * amp
                    blend = blend + dbeta[:, None] * (tail0 - spl0)
                res[inside] = blend
            out[mask] = res
        return out.reshape(s.shape + (self.dim,))

    # ----- derived connections -----
    def reversed(self) -> "Heteroclinic":
        """Connection a_plus -> a_minus, s -> -s."""
        def flip(fit: Optional[TailFit], side: str) -> Optional[TailFit]:
            return None if fit is None else replace(fit, side=side)
        ext = None if self.profile_extrapolated is None else self.profile_extrapolated[::-1].copy()
        return Heteroclinic(self.a_plus, self.a_minus, self.s.copy(), self.profile[::-1].copy(), self.action,
                            left=flip(self.right, "left"), right=flip(self.left, "right"),
                            potential=self.potential, profile_extrapolated=ext,
                            action_extrapolated=self.action_extrapolated,
                            diagnostics={**self.diagnostics, "derived": "reversed"})

    def transformed(self, R: np.ndarray) -> "Heteroclinic":
        """Image under an orthogonal map R of R^m that preserves W."""
        R = np.asarray(R, dtype=float)

        def move(fit: Optional[TailFit]) -> Optional[TailFit]:
            if fit is None:
                return None
            z, sign = _orient(R @ fit.z, fit.sign)
            return replace(fit, z=z, sign=sign)

        ext = None if self.profile_extrapolated is None else self.profile_extrapolated @ R.T
        return Heteroclinic(R @ self.a_minus, R @ self.a_plus, self.s.copy(), self.profile @ R.T, self.action,
                            left=move(self.left), right=move(self.right), potential=self.potential,
                            profile_extrapolated=ext, action_extrapolated=self.action_extrapolated,
                            diagnostics={**self.diagnostics, "derived": "transformed"})

    # ----- export -----
    def metadata(self) -> Dict[str, Any]:
        return {
            "a_minus": self.a_minus.tolist(), "a_plus": self.a_plus.tolist(),
            "L": self.L, "n": self.n, "action": self.action,
            "action_extrapolated": self.action_extrapolated,
            "left": None if self.left is None else self.left.to_dict(),
            "right": None if self.right is None else self.right.to_dict(),
            "diagnostics": _plain(self.diagnostics),
        }

    def to_frame(self) -> pd.DataFrame:
        cols = {"s": self.s}
        for c in range(self.dim):
            cols[f"u{c}"] = self.profile[:, c]
        if self.profile_extrapolated is not None:
            for c in range(self.dim):
                cols[f"u{c}_extrapolated"] = self.profile_extrapolated[:, c]
        return pd.DataFrame(cols)

    def __repr__(self) -> str:
        return (f"Heteroclinic({self.a_minus.tolist()} -> {self.a_plus.tolist()}, "
                f"n={self.n}, L={self.L:.3g}, q2={self.q2:.9g})")


def save_npz(het: Heteroclinic, path: str) -> None:
    arrays = {"s": het.s, "profile": het.profile}
    if het.profile_extrapolated is not None:
        arrays["profile_extrapolated"] = het.profile_extrapolated
    np.savez(path, meta=np.array(json.dumps(het.metadata(), sort_keys=True)), **arrays)


def load_npz(path: str, potential: Optional[Potential] = None) -> Heteroclinic:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        ext = data["profile_extrapolated"] if "profile_extrapolated" in data.files else None
        s, profile = data["s"], data["profile"]
    return Heteroclinic(
        meta["a_minus"], meta["a_plus"], s, profile, meta["action"],
        left=None if meta["left"] is None else TailFit.from_dict(meta["left"]),
        right=None if meta["right"] is None else TailFit.from_dict(meta["right"]),
        potential=potential, profile_extrapolated=ext,
        action_extrapolated=meta.get("action_extrapolated"),
        diagnostics=meta.get("diagnostics", {}),
    )


# ---------------- helpers ----------------
def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _orient(z: np.ndarray, sign: int) -> Tuple[np.ndarray, int]:
    """Make the first nonzero component of z positive, moving the sign into `sign`."""
    nz = np.flatnonzero(np.abs(z) > 1e-12)
    if nz.size and z[nz[0]] < 0:
        return -z, -sign
    return z, sign


def _rates_at(pot: Potential, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    H = pot.hess(a)
    lam, vecs = np.linalg.eigh(0.5 * (H + H.T))
    return lam, vecs


def _phase_stencil(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights giving u(0) on a symmetric grid (cubic interpolation when 0 is not a node)."""
    if n % 2:
        return np.array([n // 2]), np.array([1.0])
    k = n // 2
    return np.array([k - 2, k - 1, k, k + 1]), np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0


def _seed_path(a_minus, a_plus, s, rate) -> np.ndarray:
    theta = 0.5 * (1.0 + np.tanh(0.5 * rate * s))
    return a_minus + theta[:, None] * (a_plus - a_minus)


def _relax(pot: Potential, U: np.ndarray, h: float, steps: int) -> np.ndarray:
    """Semi-implicit gradient flow of the discrete action; diffusion implicit, reaction explicit."""
    U = U.copy()
    tau = 0.2 / max(max_curvature(pot, U), 1e-12)
    ni = U.shape[0] - 2
    r = tau / h ** 2
    ab = np.zeros((3, ni))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    for _ in range(steps):
        rhs = U[1:-1] - tau * pot.grad(U[1:-1])
        rhs[0] += r * U[0]
        rhs[-1] += r * U[-1]
        U[1:-1] = solve_banded((1, 1), ab, rhs)
    return U


def _discrete_action(pot: Potential, U: np.ndarray, h: float) -> float:
    kinetic = 0.5 * np.sum(np.diff(U, axis=0) ** 2) / h
    W = pot.value(U)
    return float(kinetic + h * (np.sum(W) - 0.5 * (W[0] + W[-1])))


def _stationarity(pot: Potential, U: np.ndarray, h: float) -> float:
    lap = (U[2:] - 2 * U[1:-1] + U[:-2]) / h ** 2
    return float(np.max(np.abs(-lap + pot.grad(U[1:-1]))))


def _derivative4(U: np.ndarray, h: float) -> np.ndarray:
    return (-U[4:] + 8 * U[3:-1] - 8 * U[1:-3] + U[:-4]) / (12 * h)


class _BorderedProblem:
    """
    -u'' - c u' + grad W(u) = 0 on interior nodes, u clamped at +-L, plus the
    midpoint phase row; the unknown drift c keeps the system regular.
    """

    def __init__(self, pot: Potential, a_minus, a_plus, s):
        self.pot = pot
        self.a_minus, self.a_plus = a_minus, a_plus
        self.n, self.m = len(s), len(a_minus)
        self.h = float(s[1] - s[0])
        self.da = a_plus - a_minus
        self.da_norm = float(np.linalg.norm(self.da))
        self.rhs_phase = float(a_plus @ a_plus - a_minus @ a_minus)
        self.nodes, self.weights = _phase_stencil(self.n)

    def pack(self, U, c) -> np.ndarray:
        return np.concatenate([U[1:-1].ravel(), [c]])

    def unpack(self, x) -> Tuple[np.ndarray, float]:
        U = np.empty((self.n, self.m))
        U[0], U[-1] = self.a_minus, self.a_plus
        U[1:-1] = x[:-1].reshape(self.n - 2, self.m)
        return U, float(x[-1])

    def residual(self, x) -> np.ndarray:
        U, c = self.unpack(x)
        h = self.h
        lap = (U[2:] - 2 * U[1:-1] + U[:-2]) / h ** 2
        d1 = (U[2:] - U[:-2]) / (2 * h)
        F = -lap - c * d1 + self.pot.grad(U[1:-1])
        p = self.weights @ U[self.nodes]
        g = (2.0 * self.da @ p - self.rhs_phase) / self.da_norm
        return np.concatenate([F.ravel(), [g]])

    def jacobian(self, x) -> sp.csc_matrix:
        U, c = self.unpack(x)
        h, m, ni = self.h, self.m, self.n - 2
        Hs = self.pot.hess(U[1:-1]).reshape(ni, m, m)
        blocks = sp.block_diag([2.0 / h ** 2 * np.eye(m) + Hk for Hk in Hs], format="csr")
        upper = sp.diags(np.full(ni - 1, -1.0 / h ** 2 - c / (2 * h)), 1)
        lower = sp.diags(np.full(ni - 1, -1.0 / h ** 2 + c / (2 * h)), -1)
        A = blocks + sp.kron(upper + lower, sp.identity(m), format="csr")
        d1 = ((U[2:] - U[:-2]) / (2 * h)).reshape(-1, 1)
        row = np.zeros((1, ni * m))
        for node, w in zip(self.nodes, self.weights):
            if 1 <= node <= self.n - 2:
                row[0, (node - 1) * m:(node - 1) * m + m] += w * 2.0 * self.da / self.da_norm
        return sp.bmat([[A, sp.csr_matrix(-d1)], [sp.csr_matrix(row), None]], format="csc")

    def noise_floor(self, x) -> float:
        U, _ = self.unpack(x)
        return 8.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(U)))) / self.h ** 2


def _damped_newton(prob: _BorderedProblem, x: np.ndarray, tol: float) -> Tuple[np.ndarray, bool, List[float]]:
    trace: List[float] = []
    tol_eff = max(tol, prob.noise_floor(x))
    for _ in range(MAX_NEWTON_ITER):
        F = prob.residual(x)
        nrm = float(np.max(np.abs(F)))
        trace.append(nrm)
        if not np.isfinite(nrm):
            return x, False, trace
        if nrm <= tol_eff:
            return x, True, trace
        try:
            dx = spsolve(prob.jacobian(x), -F)
        except RuntimeError:
            return x, False, trace
        if not np.all(np.isfinite(dx)):
            return x, False, trace
        lam = 1.0
        while lam >= MIN_DAMPING:
            x_try = x + lam * dx
            nrm_try = float(np.max(np.abs(prob.residual(x_try))))
            if np.isfinite(nrm_try) and nrm_try < (1.0 - 1e-4 * lam) * nrm:
                x = x_try
                break
            lam *= 0.5
        else:
            # stalled at round-off level
            return x, nrm <= 100.0 * tol_eff, trace
    return x, False, trace


def _solve_clamped(pot, a_minus, a_plus, s, U0, tol) -> Tuple[np.ndarray, float, List[float], str]:
    prob = _BorderedProblem(pot, a_minus, a_plus, s)
    attempts = []
    start = U0 if pot.dim == 1 else _relax(pot, U0, prob.h, PRERELAX_STEPS)
    x, ok, trace = _damped_newton(prob, prob.pack(start, 0.0), tol)
    attempts.append(trace)
    route = "newton"
    if not ok:
        log.warning("⚠️ Newton failed (last residual %.3e); retrying after gradient-flow relaxation",
                    trace[-1] if trace else float("nan"))
        relaxed = _relax(pot, start, prob.h, FALLBACK_RELAX_STEPS)
        x, ok, trace = _damped_newton(prob, prob.pack(relaxed, 0.0), tol)
        attempts.append(trace)
        route = "relaxed+newton"
    if not ok:
        raise NoConnectionError(
            f"❌ No connection found between {a_minus.tolist()} and {a_plus.tolist()} "
            "(the direct connection may not exist; check triangle_test)",
            traces=attempts)
    U, c = prob.unpack(x)
    return U, c, trace, route


# ---------------- public operations ----------------
def solve_connection(pot: Potential, a_minus, a_plus, L: Optional[float] = None, n: Optional[int] = None,
                     seed: Optional[np.ndarray] = None, newton_tol: float = NEWTON_TOL,
                     extrapolate: bool = True) -> Heteroclinic:
    """
    Minimising connection between two minima by damped Newton on the clamped
    second-order discretisation, followed by tail extraction on both sides.
    With extrapolate=True a half-resolution solve supplies Richardson-corrected
    profile and action.
    """
    a_minus = np.asarray(a_minus, dtype=float).reshape(pot.dim)
    a_plus = np.asarray(a_plus, dtype=float).reshape(pot.dim)
    i_minus, i_plus = nearest_minimum(pot, a_minus), nearest_minimum(pot, a_plus)
    if i_minus == i_plus:
        raise ConfigError("❌ Connection endpoints coincide", a=a_minus.tolist())
    a_minus, a_plus = pot.minima[i_minus].copy(), pot.minima[i_plus].copy()

    lam_m, _ = _rates_at(pot, a_minus)
    lam_p, _ = _rates_at(pot, a_plus)
    mu_min = float(np.sqrt(min(lam_m[0], lam_p[0])))
    L = float(L) if L is not None else HET_L_FACTOR / mu_min
    n = int(n) if n is not None else HET_POINTS
    if n < 16:
        raise ConfigError("❌ Connection grid needs at least 16 points", n=n)
    s = np.linspace(-L, L, n)
    h = float(s[1] - s[0])

    if seed is None:
        rate = 0.5 * (np.sqrt(lam_m[0]) + np.sqrt(lam_p[0]))
        U0 = _seed_path(a_minus, a_plus, s, rate)
    else:
        U0 = np.asarray(seed, dtype=float).reshape(n, pot.dim).copy()
        U0[0], U0[-1] = a_minus, a_plus
    seed_action = _discrete_action(pot, U0, h)

    U, c, trace, route = _solve_clamped(pot, a_minus, a_plus, s, U0, newton_tol)
    action = _discrete_action(pot, U, h)
    diagnostics: Dict[str, Any] = {
        "route": route,
        "newton_trace": trace,
        "drift": c,
        "stationarity": _stationarity(pot, U, h),
        "seed_action": seed_action,
        "decay_at_L": float(np.exp(-mu_min * L)),
    }
    if diagnostics["decay_at_L"] >= 1e-8:
        log.warning("⚠️ exp(-mu_min L) = %.2e >= 1e-8; increase L", diagnostics["decay_at_L"])

    ext_profile, ext_action = None, None
    if extrapolate:
        n_c = (n + 1) // 2
        s_c = np.linspace(-L, L, n_c)
        seed_c = CubicSpline(s, U, axis=0)(s_c)
        coarse = solve_connection(pot, a_minus, a_plus, L=L, n=n_c, seed=seed_c,
                                  newton_tol=newton_tol, extrapolate=False)
        h_c = coarse.h
        wgt = h ** 2 / (h_c ** 2 - h ** 2)
        ext_profile = U + wgt * (U - CubicSpline(s_c, coarse.profile, axis=0)(s))
        ext_profile[0], ext_profile[-1] = a_minus, a_plus
        ext_action = (h_c ** 2 * action - h ** 2 * coarse.action) / (h_c ** 2 - h ** 2)
        diagnostics["action_coarse"] = coarse.action

    het = Heteroclinic(a_minus, a_plus, s, U, action, potential=pot,
                       profile_extrapolated=ext_profile, action_extrapolated=ext_action,
                       diagnostics=diagnostics)
    if not extrapolate:
        return het

    best = het.best_profile
    du = _derivative4(best, h)
    equi = np.abs(0.5 * np.sum(du ** 2, axis=1) - pot.value(best[2:-2]))
    diagnostics["equipartition"] = float(np.max(equi))
    if diagnostics["equipartition"] > EQUI_TOL:
        log.warning("⚠️ equipartition residual %.2e > %.1e", diagnostics["equipartition"], EQUI_TOL)

    het.left = extract_asymptotics(het, "left")
    het.right = extract_asymptotics(het, "right")
    log.info("✅ connection %s -> %s: q2=%.10f (%s, %d Newton steps)", a_minus.tolist(), a_plus.tolist(),
             het.q2, route, len(trace))
    return het


def extract_asymptotics(het: Heteroclinic, side: str) -> TailFit:
    """
    Log-linear fit of |u - a| against |s| on the window |u - a| in [1e-7, 1e-3],
    corrected for the Dirichlet clamp at the end of the grid; the mean tail
    direction is snapped to the nearest Hessian eigenvector at a.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if het.potential is None:
        raise NumericalError("❌ Tail extraction needs the connection's potential")
    a = het.a_minus if side == "left" else het.a_plus
    U = het.best_profile
    half = het.s < 0 if side == "left" else het.s > 0
    r_all = np.abs(het.s)
    dev = U - a
    dist = np.linalg.norm(dev, axis=1)
    lo, hi = TAIL_WINDOW
    base = half & (dist >= lo) & (dist <= hi)
    if np.count_nonzero(base) < MIN_TAIL_POINTS:
        raise IncreaseLError(f"❌ {side} tail window is empty: profile has not decayed; increase L",
                             points=int(np.count_nonzero(base)))

    L = het.L
    mu = None
    mask = base
    for _ in range(CLAMP_PASSES + 1):
        if mu is None:
            factor = np.ones_like(r_all)
        else:
            factor = -np.expm1(-2.0 * mu * (L - r_all))
        mask = base & (factor >= 0.5)
        if np.count_nonzero(mask) < MIN_TAIL_POINTS:
            raise IncreaseLError(f"❌ {side} tail window too short after clamp correction; increase L")
        y = np.log(dist[mask] / factor[mask])
        slope, intercept = np.polyfit(r_all[mask], y, 1)
        mu = -float(slope)
        if mu <= 0:
            raise IncreaseLError(f"❌ {side} tail does not decay (slope {slope:.3g})")
    fitted = intercept + slope * r_all[mask]
    residual = float(np.max(np.abs(y - fitted)))
    amplitude = float(np.exp(intercept))

    mean_dir = np.mean(dev[mask] / dist[mask, None], axis=0)
    mean_dir /= np.linalg.norm(mean_dir)
    lam, vecs = _rates_at(het.potential, a)
    for h_ in range(vecs.shape[1]):
        vecs[:, h_], _ = _orient(vecs[:, h_], 1)
    cosines = vecs.T @ mean_dir
    k = int(np.argmax(np.abs(cosines)))
    angle = float(np.degrees(np.arccos(min(1.0, abs(cosines[k])))))
    sign = 1 if cosines[k] >= 0 else -1
    warning = None
    if angle > H4_ANGLE_DEG:
        warning = f"tail direction {angle:.2f} deg from the nearest Hessian eigenvector"
        log.warning("⚠️ %s at %s", warning, a.tolist())
    mu_ref = float(np.sqrt(lam[k]))
    if abs(mu - mu_ref) > 1e-3 * mu_ref:
        log.warning("⚠️ fitted decay %.6f differs from sqrt(eigenvalue) %.6f", mu, mu_ref)
    r_win = r_all[mask]
    return TailFit(side=side, mu=mu, z=vecs[:, k].copy(), amplitude=amplitude, sign=sign,
                   residual=residual, window=(float(r_win.min()), float(r_win.max())),
                   angle_deg=angle, eigenvalue=float(lam[k]), warning=warning)


@dataclass
class ConnectionSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray      # (n_interior, m, k), Euclidean-normalised
    alignment: float              # |cos| between the first eigenvector and u'
    checks: Dict[str, bool]

    def to_dict(self) -> Dict[str, Any]:
        return {"eigenvalues": self.eigenvalues.tolist(), "alignment": self.alignment, "checks": self.checks}


def connection_spectrum(het: Heteroclinic, k: int = 2) -> ConnectionSpectrum:
    """
    k smallest eigenpairs of -d^2/ds^2 + W_uu(u) on the clamped grid (Dirichlet at +-L),
    with the zero-mode and spectral-floor checks.
    """
    if k < 2:
        raise ValueError("connection_spectrum needs k >= 2")
    if het.potential is None:
        raise NumericalError("❌ Spectrum needs the connection's potential")
    U, h, m = het.profile, het.h, het.dim
    ni = het.n - 2
    Hs = het.potential.hess(U[1:-1]).reshape(ni, m, m)
    lap = sp.diags([np.full(ni - 1, -1.0), np.full(ni, 2.0), np.full(ni - 1, -1.0)], [-1, 0, 1]) / h ** 2
    A = sp.kron(lap, sp.identity(m)) + sp.block_diag(list(Hs))
    try:
        vals, vecs = eigsh(A.tocsc(), k=k, sigma=-1.0, which="LM", tol=1e-12)
    except ArpackNoConvergence as exc:
        raise NumericalError("❌ Connection eigen-iteration did not converge",
                             converged=len(exc.eigenvalues)) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    du = ((U[2:] - U[:-2]) / (2 * h)).ravel()
    alignment = float(abs(vecs[:, 0] @ du) / (np.linalg.norm(vecs[:, 0]) * np.linalg.norm(du)))
    checks = {
        "zero_mode": bool(abs(vals[0]) < EIG0_TOL),
        "aligned": bool(alignment > 0.999),
        "floor": bool(vals[1] > SPECTRAL_FLOOR),
    }
    for name, ok in checks.items():
        if not ok:
            log.warning("⚠️ connection spectrum check '%s' failed: eigenvalues %s", name, vals.tolist())
    return ConnectionSpectrum(eigenvalues=vals, eigenvectors=vecs.reshape(ni, m, k),
                              alignment=alignment, checks=checks)


def geodesic_action(pot: Potential, a, b, n: int = 4001) -> float:
    """Integral of sqrt(2W) along the segment a -> b: the action for scalar W, an upper bound otherwise."""
    a = np.asarray(a, dtype=float).reshape(pot.dim)
    b = np.asarray(b, dtype=float).reshape(pot.dim)
    t = np.linspace(0.0, 1.0, n)
    pts = a + t[:, None] * (b - a)
    vals = np.sqrt(2.0 * np.maximum(pot.value(pts), 0.0))
    return float(simpson(vals, x=t) * np.linalg.norm(b - a))


def sigma_table(pot: Potential, labels: Optional[Sequence[Hashable]] = None) -> Dict[Tuple[Hashable, Hashable], float]:
    """Pairwise segment actions between minima, keyed by label pairs (default labels 0..k-1)."""
    labels = list(range(len(pot.minima))) if labels is None else list(labels)
    table = {}
    for i, j in combinations(range(len(labels)), 2):
        table[(labels[i], labels[j])] = geodesic_action(pot, pot.minima[i], pot.minima[j])
    return table


def triangle_test(sigma: Dict[Tuple[Hashable, Hashable], float],
                  labels: Optional[Iterable[Hashable]] = None) -> Dict[Tuple[Hashable, Hashable], bool]:
    """
    For every pair (p, q): True iff sigma(p, q) < (1 - rtol)(sigma(p, r) + sigma(r, q)) for every
    other minimum r. The table is symmetric; either key order is accepted.
    """
    if labels is None:
        seen: List[Hashable] = []
        for p, q in sigma:
            for x in (p, q):
                if x not in seen:
                    seen.append(x)
        labels = seen
    labels = list(labels)

    def get(p, q) -> float:
        if (p, q) in sigma:
            return float(sigma[(p, q)])
        if (q, p) in sigma:
            return float(sigma[(q, p)])
        raise IncompleteInputError(f"❌ sigma table has no entry for ({p}, {q})", pair=[str(p), str(q)])

    out: Dict[Tuple[Hashable, Hashable], bool] = {}
    for p, q in combinations(labels, 2):
        direct = get(p, q)
        out[(p, q)] = all(direct < (1.0 - TRIANGLE_RTOL) * (get(p, r) + get(r, q))
                          for r in labels if r not in (p, q))
    return out
