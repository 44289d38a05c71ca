# reduction.py
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, lu_factor, lu_solve
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, gmres, splu

from chain import (Ansatz, ChainModel, LayerConfig, ansatz_data, default_rho, existence_condition,
                   residual)
from config import DENSE_EIG_LIMIT, NEWTON_TOL
from errors import (DivergenceError, NumericalError, RefusedByTheoryError, UnsupportedCaseError)
from grid import GridFunction, check_resolution, default_points, energy, spectral_d2_matrix
from tracking import project

log = logging.getLogger(__name__)

LogCB = Callable[[str], None]

# ---------- Tunables ----------
CONDITION_WARN = 1e6
DIVERGENCE_STREAK = 3
GMRES_TOL = 1e-12
MAX_BIF_NEWTON = 30
EIG_RESIDUAL_REL = 1e-8


class LinearizedOperator:
    """
    L v = -eps^2 v_xx + W_uu(u) v on the periodic grid, v stored as (n, m) flattened row-major.
    - matvec(v): spectral application
    - dense(): full matrix (spectral second derivative)
    - sparse_fd(): fourth-order periodic finite differences, used for large problems
    """

    def __init__(self, u: GridFunction, pot):
        self.u = u
        self.n, self.m = u.n, u.m
        self.eps = u.eps
        self.H = pot.hess(u.values).reshape(self.n, self.m, self.m)

    @property
    def size(self) -> int:
        return self.n * self.m

    def matvec(self, v: np.ndarray) -> np.ndarray:
        V = GridFunction(np.asarray(v).reshape(self.n, self.m), self.eps)
        out = -self.eps ** 2 * V.dxx().values + np.einsum("nij,nj->ni", self.H, V.values)
        return out.ravel()

    def dense(self) -> np.ndarray:
        L = -self.eps ** 2 * np.kron(spectral_d2_matrix(self.n), np.eye(self.m))
        L4 = L.reshape(self.n, self.m, self.n, self.m)
        idx = np.arange(self.n)
        L4[idx, :, idx, :] += self.H
        return 0.5 * (L + L.T)

    def sparse_fd(self) -> sp.csc_matrix:
        n, h = self.n, 1.0 / self.n
        coeff = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h ** 2)
        D2 = sp.lil_matrix((n, n))
        for off, c in zip(range(-2, 3), coeff):
            for i in range(n):
                D2[i, (i + off) % n] += c
        L = -self.eps ** 2 * sp.kron(D2.tocsr(), sp.identity(self.m)) + sp.block_diag(list(self.H))
        return L.tocsc()

    def norm_estimate(self) -> float:
        return float(self.eps ** 2 * (np.pi * self.n) ** 2 + np.max(np.abs(self.H)) * self.m)


@dataclass
class SpectralData:
    """
    Smallest N+k eigenpairs of L^xi and the slow basis built from them.
    eigenvectors and basis are L2-normalised, shape (count, n, m).
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    basis: np.ndarray
    eta_norms: np.ndarray
    alignment: np.ndarray
    gap_ratio: float
    residuals: np.ndarray
    condition: float
    N: int
    method: str
    warnings: List[str] = field(default_factory=list)
    operator: Optional[LinearizedOperator] = field(default=None, repr=False)
    data: Optional[Ansatz] = field(default=None, repr=False)

    @property
    def lambda_star(self) -> float:
        return float(self.eigenvalues[self.N])

    def to_dict(self) -> Dict[str, Any]:
        return {"eigenvalues": self.eigenvalues.tolist(), "gap_ratio": self.gap_ratio,
                "alignment": self.alignment.tolist(), "eta_norms": self.eta_norms.tolist(),
                "residuals": self.residuals.tolist(), "condition": self.condition,
                "method": self.method, "warnings": list(self.warnings)}


@dataclass
class SlowBasis:
    basis: np.ndarray
    eta_norms: np.ndarray
    condition: float
    warnings: List[str]


def _gram_schmidt(tangents: np.ndarray, slow: np.ndarray, h: float) -> SlowBasis:
    """Orthonormalise the projections of the unit tangents onto span(slow), in <.,.> = h sum."""
    N = tangents.shape[0]
    T = tangents.reshape(N, -1)
    Y = slow.reshape(slow.shape[0], -1)
    C = h * T @ Y.T                       # C[j, i] = <t_j, y_i>
    P = C @ Y                             # projections of t_j
    basis = np.zeros_like(P)
    for j in range(N):
        v = P[j].copy()
        for i in range(j):
            v -= h * (basis[i] @ v) * basis[i]
        for i in range(j):                # second pass for orthogonality to round-off
            v -= h * (basis[i] @ v) * basis[i]
        basis[j] = v / np.sqrt(h * (v @ v))
    cond = float(np.linalg.cond(C))
    warnings = []
    if cond > CONDITION_WARN:
        warnings.append(f"near-degenerate slow space (condition {cond:.2e})")
        log.warning("⚠️ %s", warnings[-1])
    eta = np.sqrt(h * np.sum((basis - T) ** 2, axis=1))
    return SlowBasis(basis.reshape(tangents.shape), eta, cond, warnings)


def slow_basis_gram_schmidt(chain: ChainModel, cfg: LayerConfig, spec: SpectralData,
                            data: Optional[Ansatz] = None) -> SlowBasis:
    """phi_j = GS of the projections of u_xi_j/|u_xi_j| onto the slow eigenspace; eta_j = phi_j - u_xi_j/|u_xi_j|."""
    data = spec.data if data is None else data
    if data is None:
        data = ansatz_data(chain, cfg, spec.eigenvectors.shape[1])
    tangents = data.u_xi / data.u_xi_norms()[:, None, None]
    return _gram_schmidt(tangents, spec.eigenvectors[:spec.N], data.u.h)


def linearized_spectrum(chain: ChainModel, cfg: LayerConfig, n: Optional[int] = None, k: int = 2,
                        data: Optional[Ansatz] = None) -> SpectralData:
    """
    N+k smallest eigenpairs of L^xi at the ansatz: dense symmetric solver with an
    index subset up to DENSE_EIG_LIMIT unknowns, shift-invert Lanczos on the
    fourth-order finite-difference operator beyond.
    """
    n = default_points(cfg.eps) if n is None else int(n)
    check_resolution(n, cfg.eps)
    data = ansatz_data(chain, cfg, n) if data is None else data
    op = LinearizedOperator(data.u, chain.potential)
    N, count = chain.N, chain.N + k
    if op.size <= DENSE_EIG_LIMIT:
        vals, vecs = eigh(op.dense(), subset_by_index=[0, count - 1])
        method = "dense"
    else:
        try:
            vals, vecs = eigsh(op.sparse_fd(), k=count, sigma=-1.0, which="LM", tol=1e-10)
        except ArpackNoConvergence as exc:
            raise NumericalError("❌ Slow-spectrum eigen-iteration did not converge",
                                 converged=len(exc.eigenvalues)) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        method = "shift-invert"

    h = data.u.h
    resid = np.array([np.linalg.norm(op.matvec(vecs[:, i]) - vals[i] * vecs[:, i]) for i in range(count)])
    warnings: List[str] = []
    if method == "dense" and np.max(resid) > EIG_RESIDUAL_REL * op.norm_estimate():
        warnings.append(f"eigen-residual {np.max(resid):.2e} above tolerance")
        log.warning("⚠️ %s", warnings[-1])

    vectors = (vecs.T / np.sqrt(h)).reshape(count, data.u.n, data.u.m)
    tangents = data.u_xi / data.u_xi_norms()[:, None, None]
    for i in range(N):                    # sign-align with the tangent it overlaps most
        overlaps = h * np.sum(tangents * vectors[i], axis=(1, 2))
        if overlaps[np.argmax(np.abs(overlaps))] < 0:
            vectors[i] = -vectors[i]
    slow = _gram_schmidt(tangents, vectors[:N], h)
    alignment = np.abs(h * np.sum(slow.basis * tangents, axis=(1, 2)))
    gap_ratio = float(vals[N] / max(np.max(np.abs(vals[:N])), 1e-300))
    warnings.extend(slow.warnings)
    if vals[N] <= 0:
        warnings.append("no spectral gap above the slow eigenvalues")
        log.warning("⚠️ %s (lambda_%d = %.3e)", warnings[-1], N + 1, vals[N])
    return SpectralData(eigenvalues=vals, eigenvectors=vectors, basis=slow.basis, eta_norms=slow.eta_norms,
                        alignment=alignment, gap_ratio=gap_ratio, residuals=resid,
                        condition=slow.condition, N=N, method=method, warnings=warnings,
                        operator=op, data=data)


class _DeflatedSolver:
    """Solves (L + P_X) x = r, P_X the L2 projector on the slow basis; LU once, or GMRES for large sizes."""

    def __init__(self, op: LinearizedOperator, basis: np.ndarray, h: float):
        self.op, self.h = op, h
        self.Phi = basis.reshape(basis.shape[0], -1)
        if op.size <= DENSE_EIG_LIMIT:
            A = op.dense() + h * self.Phi.T @ self.Phi
            self._lu = lu_factor(A)
            self._solve = lambda r: lu_solve(self._lu, r)
        else:
            pre = splu((op.sparse_fd() + sp.identity(op.size)).tocsc())
            A = LinearOperator((op.size, op.size), dtype=float,
                               matvec=lambda v: op.matvec(v) + h * self.Phi.T @ (self.Phi @ v))
            M = LinearOperator((op.size, op.size), dtype=float, matvec=pre.solve)

            def solve(r):
                x, info = gmres(A, r, M=M, tol=GMRES_TOL, atol=0.0, restart=60, maxiter=200)
                if info != 0:
                    raise NumericalError("❌ Deflated GMRES solve did not converge", info=info)
                return x
            self._solve = solve

    def project_out(self, v: np.ndarray) -> np.ndarray:
        return v - self.h * self.Phi.T @ (self.Phi @ v)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.project_out(self._solve(self.project_out(r)))


@dataclass
class ReductionResult:
    v: GridFunction
    c: np.ndarray
    trace: List[float]
    converged: bool
    v_w12: float
    bound: float                 # (2/lambda_{N+1}) |F(u^xi)|
    orthogonality: float         # max_j |<v, phi_j>|

    @property
    def within_bound(self) -> bool:
        return self.v_w12 <= self.bound

    def to_dict(self) -> Dict[str, Any]:
        return {"c": self.c.tolist(), "trace": self.trace, "converged": self.converged,
                "v_w12": self.v_w12, "bound": self.bound, "within_bound": self.within_bound,
                "orthogonality": self.orthogonality}


def orthogonal_correction(chain: ChainModel, cfg: LayerConfig, spec: SpectralData, max_iter: int = 50,
                          tol: float = 1e-10) -> ReductionResult:
    """
    Fixed point v -> v_hat on the slow-orthogonal complement:
      c_j = <F(u^xi) - N(v), phi_j>,   L v_hat = F(u^xi) - N(v) - sum_j c_j phi_j,
    N(v) = W_u(u+v) - W_u(u) - W_uu(u) v. Stops when |v_hat - v|_W12 < tol.
    """
    data = spec.data if spec.data is not None else ansatz_data(chain, cfg, spec.eigenvectors.shape[1])
    op = spec.operator if spec.operator is not None else LinearizedOperator(data.u, chain.potential)
    if spec.lambda_star <= 0:
        raise NumericalError("❌ No spectral gap: the correction is undefined",
                             eigenvalues=spec.eigenvalues.tolist())
    pot, u, h, eps = chain.potential, data.u, data.u.h, data.u.eps
    F, F_norms = residual(chain, cfg, u)
    Phi = spec.basis.reshape(chain.N, -1)
    solve = _DeflatedSolver(op, spec.basis, h)
    gu = pot.grad(u.values)

    def remainder(v: np.ndarray) -> np.ndarray:
        V = v.reshape(u.n, u.m)
        lin = np.einsum("nij,nj->ni", op.H, V)
        return (pot.grad(u.values + V) - gu - lin).ravel()

    v = np.zeros(op.size)
    f = F.values.ravel()
    trace: List[float] = []
    c = h * Phi @ f
    converged, rising = False, 0
    for it in range(max_iter):
        r = f - remainder(v)
        c = h * Phi @ r
        v_new = solve(r - Phi.T @ c)
        diff = GridFunction((v_new - v).reshape(u.n, u.m), eps).w12_norm()
        if trace and diff > trace[-1]:
            rising += 1
            if rising >= DIVERGENCE_STREAK:
                raise DivergenceError("❌ Orthogonal correction is not contracting", trace=trace + [diff])
        else:
            rising = 0
        trace.append(diff)
        v = v_new
        if diff < tol:
            converged = True
            break
    if not converged:
        log.warning("⚠️ orthogonal correction stopped after %d iterations (last change %.2e)",
                    max_iter, trace[-1])
    # c consistent with the returned v
    c = h * Phi @ (f - remainder(v))
    V = GridFunction(v.reshape(u.n, u.m), eps)
    return ReductionResult(v=V, c=c, trace=trace, converged=converged, v_w12=V.w12_norm(),
                           bound=2.0 / spec.lambda_star * F_norms["l2"],
                           orthogonality=float(np.max(np.abs(h * Phi @ v))))


def stationary_gaps(chain: ChainModel, eps: float) -> np.ndarray:
    """
    Gaps balancing k_j E_j along the chain:
      g_j = (1/mu_j)/S + (eps/mu_j)(ln k_j - sum_h (ln k_h)/mu_h / S),  S = sum_h 1/mu_h.
    """
    const = chain.constants
    mu, lk = const.mu, np.log(const.k)
    S = np.sum(1.0 / mu)
    return (1.0 / mu) / S + (eps / mu) * (lk - np.sum(lk / mu) / S)


def solve_bifurcation(chain: ChainModel, eps: float, n: Optional[int] = None, rho: Optional[float] = None,
                      tol: float = NEWTON_TOL, max_iter: int = MAX_BIF_NEWTON,
                      log_cb: Optional[LogCB] = None) -> Tuple[LayerConfig, GridFunction, Dict[str, Any]]:
    """
    Stationary (periodic) solution near the predicted spacing: bordered Newton on
    eps^2 u_xx - W_u(u) + tau t_1 = 0 with the phase row <u - u^xi0, t_1> = 0,
    t_1 the unit xi_1-tangent. The layer positions are re-extracted by projection.
    """
    def _log(msg: str):
        if log_cb:
            log_cb(msg)
        else:
            log.info(msg)

    cond = existence_condition(chain)
    if cond["exists"] is None:
        raise UnsupportedCaseError(f"❌ Existence condition is indeterminate: {cond['reason']}", **cond)
    if not cond["exists"]:
        raise RefusedByTheoryError(f"❌ No periodic solution for this chain: {cond['reason']}",
                                   varsigma=cond["varsigma"])

    rho = default_rho(chain) if rho is None else float(rho)
    gaps = stationary_gaps(chain, eps)
    if np.any(gaps <= 0):
        raise NumericalError("❌ Predicted spacing has nonpositive gaps; reduce eps", gaps=gaps.tolist())
    cfg0 = LayerConfig.from_gaps(gaps, eps, rho)
    n = default_points(eps) if n is None else int(n)
    check_resolution(n, eps)
    data = ansatz_data(chain, cfg0, n)
    pot, u0, h = chain.potential, data.u, data.u.h
    t1 = (data.u_xi[0] / data.u_xi_norms()[0]).ravel()
    op_size = u0.n * u0.m
    D2 = -(u0.eps ** 2) * np.kron(spectral_d2_matrix(u0.n), np.eye(u0.m))

    def F_of(U: np.ndarray) -> np.ndarray:
        return (u0.eps ** 2 * GridFunction(U.reshape(u0.n, u0.m), eps).dxx().values
                - pot.grad(U.reshape(u0.n, u0.m))).ravel()

    def system(x: np.ndarray) -> np.ndarray:
        U, tau = x[:-1], x[-1]
        return np.concatenate([F_of(U) + tau * t1, [h * t1 @ (U - u0.values.ravel())]])

    x = np.concatenate([u0.values.ravel(), [0.0]])
    G = system(x)
    nrm = float(np.max(np.abs(G)))
    trace = [nrm]
    floor = 8.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(u0.values)))) * u0.eps ** 2 * (np.pi * u0.n) ** 2
    tol_eff = max(tol, floor)
    route = "ansatz" if nrm <= tol_eff else "newton"
    if route == "ansatz":
        _log(f"✅ ansatz already stationary to {nrm:.2e}; Newton skipped")
    it = 0
    while nrm > tol_eff:
        if it >= max_iter:
            raise DivergenceError(f"❌ Stationary Newton did not converge (last residual {nrm:.3e})", trace=trace)
        it += 1
        U = x[:-1].reshape(u0.n, u0.m)
        H = pot.hess(U).reshape(u0.n, u0.m, u0.m)
        J = np.zeros((op_size + 1, op_size + 1))
        A = -D2
        A4 = A.reshape(u0.n, u0.m, u0.n, u0.m)
        idx = np.arange(u0.n)
        A4[idx, :, idx, :] -= H
        J[:op_size, :op_size] = A
        J[:op_size, -1] = t1
        J[-1, :op_size] = h * t1
        try:
            dx = lu_solve(lu_factor(J), -G)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise DivergenceError("❌ Singular stationary Newton matrix", trace=trace) from exc
        lam = 1.0
        while lam >= 1.0 / 1024:
            G_try = system(x + lam * dx)
            n_try = float(np.max(np.abs(G_try)))
            if np.isfinite(n_try) and n_try < (1.0 - 1e-4 * lam) * nrm:
                x, G, nrm = x + lam * dx, G_try, n_try
                break
            lam *= 0.5
        else:
            if nrm <= 100.0 * tol_eff:
                break
            raise DivergenceError(f"❌ Stationary Newton stalled (last residual {nrm:.3e})", trace=trace)
        trace.append(nrm)
        _log(f"▶️ stationary Newton {it}: |F| = {nrm:.3e}")

    u_star = GridFunction(x[:-1].reshape(u0.n, u0.m), eps)
    proj = project(u_star, chain, guess=cfg0, rho=rho)
    cfg_star = proj.cfg
    _, F_norms = residual(chain, cfg_star, u_star)
    J_eps = energy(u_star, pot)
    report = {
        "eps": eps, "n": u0.n, "rho": rho, "route": route,
        "existence": cond,
        "predicted_gaps": gaps.tolist(),
        "xi": cfg_star.xi.tolist(), "gaps": cfg_star.gaps.tolist(),
        "tau": float(x[-1]), "newton_trace": trace,
        "residual": F_norms,
        "projection": {k: v for k, v in proj.diagnostics.items() if k != "trace"},
        "energy": J_eps,
        "orbit": {"period_T": 1.0 / eps, "action": J_eps / eps},
    }
    _log(f"✅ stationary solution: gaps={np.round(cfg_star.gaps, 6).tolist()}, |F|_inf={F_norms['linf']:.2e}")
    return cfg_star, u_star, report
