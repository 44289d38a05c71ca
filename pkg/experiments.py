# experiments.py
import logging
import os
from itertools import combinations
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import artifacts
from chain import (ChainModel, LayerConfig, ansatz_data, build_chain, c0, cbar, default_rho,
                   existence_condition, leading_energy, residual, rotation_power, tail_products, validate_config)
from compare import compare_runs
from errors import ConfigError, MissingArtifactError, NoConnectionError
from grid import GridFunction, default_points, energy
from heteroclinic import (connection_spectrum, geodesic_action, sigma_table, solve_connection,
                          triangle_test)
import layer_ode
from pde import PdeState, run as pde_run
from potential import Potential, nearest_minimum, validate
from reduction import linearized_spectrum, orthogonal_correction, solve_bifurcation
from report_generator import generate_report
from run_config import RunConfig
from tracking import TrackedTrajectory, track

log = logging.getLogger(__name__)

ProgressCB = Callable[[int, int], None]
CancelCB = Callable[[], bool]
LogCB = Callable[[str], None]

SUBCOMMANDS = ("heteroclinic", "ansatz", "spectrum", "stationary", "pde-run", "ode-run", "compare")
PER_EPS = SUBCOMMANDS[1:]


def eps_dir(out_dir: str, eps: float) -> str:
    return os.path.join(out_dir, f"eps_{eps:g}")


def _logger(log_cb: Optional[LogCB]) -> LogCB:
    def _log(msg: str):
        if log_cb:
            log_cb(msg)
        else:
            log.info(msg)
    return _log


def _chain_indices(rc: RunConfig, pot: Potential) -> List[int]:
    return [nearest_minimum(pot, p) for p in rc.chain_points(pot)]


def _pairs(idx: List[int]) -> List[Tuple[int, int]]:
    N = len(idx)
    return [(idx[j], idx[(j + 1) % N]) for j in range(N)]


def load_chain(rc: RunConfig, pot: Potential, out_dir: str) -> ChainModel:
    """Chain from saved connections (config-listed files first, then <out>/connections)."""
    idx = _chain_indices(rc, pot)
    cache = {}
    for i, j in _pairs(idx):
        if (i, j) in cache or (j, i) in cache:
            continue
        listed = rc.chain.connections.get(f"{i}-{j}")
        path = listed or artifacts.connection_path(out_dir, i, j)
        if os.path.exists(path):
            cache[(i, j)] = artifacts.load_connection(path, pot)
            continue
        rev = rc.chain.connections.get(f"{j}-{i}") or artifacts.connection_path(out_dir, j, i)
        if os.path.exists(rev):
            cache[(j, i)] = artifacts.load_connection(rev, pot)
            continue
        raise MissingArtifactError(path, "heteroclinic")
    return build_chain(pot, pot.minima[idx], connections=cache, equivariant=rc.chain.equivariant)


def initial_config(rc: RunConfig, chain: ChainModel, eps: float, rho: float) -> LayerConfig:
    exp = rc.experiment
    if exp.xi0 is not None:
        cfg = LayerConfig(np.asarray(exp.xi0), eps, rho).normalised()
    elif exp.gaps0 is not None:
        cfg = LayerConfig.from_gaps(exp.gaps0, eps, rho)
    else:
        cfg = LayerConfig.from_gaps(np.ones(chain.N), eps, rho)
    if cfg.N != chain.N:
        raise ConfigError(f"❌ Initial configuration has {cfg.N} layers for a chain of {chain.N}")
    validate_config(chain, cfg)
    return cfg


def _rho(rc: RunConfig, chain: ChainModel) -> float:
    return default_rho(chain) if rc.numerics.rho is None else rc.numerics.rho


def _grid_n(rc: RunConfig, eps: float) -> int:
    return rc.numerics.n or default_points(eps)


def _field_frame(u: GridFunction, F: Optional[GridFunction] = None) -> pd.DataFrame:
    cols: Dict[str, Any] = {"x": u.x, "t": u.x / u.eps}
    for c in range(u.m):
        cols[f"u{c}"] = u.values[:, c]
    if F is not None:
        for c in range(u.m):
            cols[f"F{c}"] = F.values[:, c]
    return pd.DataFrame(cols)


def _finish(rc: RunConfig, summary: Dict[str, Any], out: str, name: str, meta: Dict[str, Any],
            report_pdf: bool, table: Optional[List[Dict[str, Any]]] = None) -> Dict[str, Any]:
    """Summary JSON, the resolved config next to it, and the optional PDF."""
    artifacts.write_json(os.path.join(out, "resolved_config.json"), rc.resolved(), meta)
    path = artifacts.write_json(os.path.join(out, f"{name}.json"), summary, meta)
    if report_pdf:
        generate_report({"meta": meta, **summary}, os.path.join(out, f"{name}.pdf"),
                        title=f"layerlab {name}", table=table)
    summary["_path"] = path
    return summary


# ---------------- heteroclinic ----------------
def run_heteroclinic(rc: RunConfig, out_dir: str, emit_gnuplot: bool = False, report_pdf: bool = False,
                     progress_cb: Optional[ProgressCB] = None, cancel_cb: Optional[CancelCB] = None,
                     log_cb: Optional[LogCB] = None) -> Dict[str, Any]:
    _log = _logger(log_cb)
    pot = rc.build_potential()
    minima_data = validate(pot, np.random.default_rng(rc.seed))
    meta = artifacts.make_meta(rc.digest(), L=rc.numerics.L, n=rc.numerics.het_points)
    report: Dict[str, Any] = {"potential": pot.describe(),
                              "minima": [{"point": m.point.tolist(), "eigenvalues": m.eigenvalues.tolist()}
                                         for m in minima_data],
                              "connections": [], "skipped": []}
    direct: Dict[Tuple[int, int], bool] = {}
    if len(pot.minima) >= 3:
        sig = sigma_table(pot)
        direct = triangle_test(sig)
        report["sigma"] = {f"{p}-{q}": v for (p, q), v in sig.items()}
        report["triangle"] = {f"{p}-{q}": ok for (p, q), ok in direct.items()}

    if rc.chain.minima:
        pairs = _pairs(_chain_indices(rc, pot))
    else:
        pairs = []
        for i, j in combinations(range(len(pot.minima)), 2):
            if direct.get((i, j), True):
                pairs.append((i, j))
            else:
                _log(f"⚠️ Skipping {i} -> {j}: the path through another minimum is no dearer")
                report["skipped"].append({"from": i, "to": j, "reason": "triangle"})

    solved: Dict[Tuple[int, int], Any] = {}
    _log(f"▶️ Solving {len(pairs)} connection(s) for {pot.family}")
    if progress_cb:
        progress_cb(0, len(pairs))
    for k, (i, j) in enumerate(pairs):
        if cancel_cb and cancel_cb():
            _log("⏹ Cancel requested. Stopping after the current connection.")
            report["cancelled"] = True
            break
        if (i, j) in solved:
            continue
        if (j, i) in solved:
            het = solved[(j, i)].reversed()
        else:
            het = None
            if rc.chain.equivariant:
                for src, base in solved.items():
                    r = rotation_power(pot, src, (i, j))
                    if r is not None:
                        het = base.transformed(np.linalg.matrix_power(pot.rotation, r))
                        break
            if het is None:
                try:
                    het = solve_connection(pot, pot.minima[i], pot.minima[j], L=rc.numerics.L,
                                           n=rc.numerics.het_points, newton_tol=rc.numerics.newton_tol)
                except NoConnectionError as exc:
                    if rc.chain.minima:
                        raise
                    # without a chain every pair is tried; some have no direct connection
                    _log(f"⚠️ Skipping {i} -> {j}: {exc.message}")
                    report["skipped"].append({"from": i, "to": j, "reason": exc.message})
                    continue
        solved[(i, j)] = het
        path = artifacts.save_connection(het, out_dir, i, j, meta)
        if emit_gnuplot:
            artifacts.write_gnuplot(os.path.splitext(path)[0] + ".csv", "s",
                                    [f"u{c}" for c in range(het.dim)], title=f"connection {i} -> {j}")
        spec = connection_spectrum(het)
        entry = {"from": i, "to": j, "file": os.path.relpath(path, out_dir), **het.metadata(),
                 "q2": het.q2, "geodesic_action": geodesic_action(pot, het.a_minus, het.a_plus),
                 "spectrum": spec.to_dict()}
        report["connections"].append(entry)
        _log(f"✅ Saved: {path} (q2={het.q2:.10f})")
        if progress_cb:
            progress_cb(k + 1, len(pairs))

    return _finish(rc, report, out_dir, "heteroclinic", meta, report_pdf,
                   table=[{"from": e["from"], "to": e["to"], "q2": e["q2"],
                           "mu_left": e["left"]["mu"], "mu_right": e["right"]["mu"]} for e in report["connections"]])


# ---------------- ansatz ----------------
def run_ansatz(rc: RunConfig, out_dir: str, eps: float, emit_gnuplot: bool = False, report_pdf: bool = False,
               log_cb: Optional[LogCB] = None, **_) -> Dict[str, Any]:
    _log = _logger(log_cb)
    pot = rc.build_potential()
    chain = load_chain(rc, pot, out_dir)
    rho = _rho(rc, chain)
    cfg = initial_config(rc, chain, eps, rho)
    n = _grid_n(rc, eps)
    out = artifacts.ensure_dir(os.path.join(eps_dir(out_dir, eps), "ansatz"))
    meta = artifacts.make_meta(rc.digest(), n=n, eps=eps, rho=rho)

    data = ansatz_data(chain, cfg, n)
    F, norms = residual(chain, cfg, data.u)
    cb, c_lead = cbar(chain, cfg, data=data), c0(chain, cfg)
    csv = artifacts.write_csv(_field_frame(data.u, F), os.path.join(out, "ansatz.csv"), meta)
    if emit_gnuplot:
        artifacts.write_gnuplot(csv, "x", [f"u{c}" for c in range(data.u.m)], title=f"ansatz eps={eps:g}")
    q = chain.constants.q
    summary = {
        "eps": eps, "xi": cfg.xi.tolist(), "gaps": cfg.gaps.tolist(), "chain": chain.describe(),
        "existence": existence_condition(chain),
        "tail_products": tail_products(chain, cfg),
        "residual": norms, "cbar": cb.tolist(), "c0": c_lead.tolist(),
        "weighted_sum": float(np.sum(q * cb)),
        "u_xi_norms": data.u_xi_norms().tolist(), "u_xi_norms_leading": (q / np.sqrt(eps)).tolist(),
        "energy": energy(data.u, pot), "energy_leading": leading_energy(chain, eps),
    }
    _log(f"✅ ansatz eps={eps:g}: |F|={norms['l2']:.3e}, cbar={np.round(cb, 12).tolist()}")
    return _finish(rc, summary, out, "ansatz", meta, report_pdf)


# ---------------- spectrum ----------------
def run_spectrum(rc: RunConfig, out_dir: str, eps: float, report_pdf: bool = False,
                 log_cb: Optional[LogCB] = None, **_) -> Dict[str, Any]:
    _log = _logger(log_cb)
    pot = rc.build_potential()
    chain = load_chain(rc, pot, out_dir)
    rho = _rho(rc, chain)
    cfg = initial_config(rc, chain, eps, rho)
    n = _grid_n(rc, eps)
    out = artifacts.ensure_dir(os.path.join(eps_dir(out_dir, eps), "spectrum"))
    meta = artifacts.make_meta(rc.digest(), n=n, eps=eps, rho=rho)

    spec = linearized_spectrum(chain, cfg, n, k=rc.experiment.k)
    corr = orthogonal_correction(chain, cfg, spec)
    cb = cbar(chain, cfg, data=spec.data)
    q = chain.constants.q
    weighted = float(np.sum(q * corr.c))
    summary = {"eps": eps, "xi": cfg.xi.tolist(), "spectrum": spec.to_dict(), "correction": corr.to_dict(),
               "cbar": cb.tolist(), "weighted_sum": weighted,
               "weighted_sum_rel": weighted / max(float(np.max(np.abs(q * corr.c))), 1e-300)}
    _log(f"✅ spectrum eps={eps:g}: gap ratio {spec.gap_ratio:.3e}")
    return _finish(rc, summary, out, "spectrum", meta, report_pdf,
                   table=[{"index": i + 1, "lambda": float(v)} for i, v in enumerate(spec.eigenvalues)])


# ---------------- stationary ----------------
def run_stationary(rc: RunConfig, out_dir: str, eps: float, emit_gnuplot: bool = False, report_pdf: bool = False,
                   log_cb: Optional[LogCB] = None, **_) -> Dict[str, Any]:
    pot = rc.build_potential()
    chain = load_chain(rc, pot, out_dir)
    n = _grid_n(rc, eps)
    out = artifacts.ensure_dir(os.path.join(eps_dir(out_dir, eps), "stationary"))
    cfg, u, report = solve_bifurcation(chain, eps, n=n, rho=rc.numerics.rho, tol=rc.numerics.newton_tol,
                                       log_cb=log_cb)
    meta = artifacts.make_meta(rc.digest(), n=n, eps=eps, rho=report["rho"])
    F, _ = residual(chain, cfg, u)
    csv = artifacts.write_csv(_field_frame(u, F), os.path.join(out, "stationary.csv"), meta)
    if emit_gnuplot:
        artifacts.write_gnuplot(csv, "x", [f"u{c}" for c in range(u.m)], title=f"stationary eps={eps:g}")
    report["cbar"] = cbar(chain, cfg, n).tolist()
    return _finish(rc, report, out, "stationary", meta, report_pdf)


# ---------------- pde-run ----------------
def _perturbed(u: GridFunction, amplitude: float, seed: int) -> GridFunction:
    if amplitude == 0.0:
        return u
    rng = np.random.default_rng(seed)
    x = u.x
    bump = np.zeros_like(u.values)
    for k in range(1, 4):
        coef = rng.normal(size=u.m)
        phase = rng.uniform(0, 2 * np.pi)
        bump += np.sin(2 * np.pi * k * x + phase)[:, None] * coef / k
    return u + amplitude * bump


def run_pde(rc: RunConfig, out_dir: str, eps: float, emit_gnuplot: bool = False, report_pdf: bool = False,
            progress_cb: Optional[ProgressCB] = None, cancel_cb: Optional[CancelCB] = None,
            log_cb: Optional[LogCB] = None, **_) -> Dict[str, Any]:
    _log = _logger(log_cb)
    pot = rc.build_potential()
    chain = load_chain(rc, pot, out_dir)
    rho = _rho(rc, chain)
    cfg = initial_config(rc, chain, eps, rho)
    n = _grid_n(rc, eps)
    out = artifacts.ensure_dir(os.path.join(eps_dir(out_dir, eps), "pde"))
    meta = artifacts.make_meta(rc.digest(), n=n, eps=eps, rho=rho)

    u0 = _perturbed(ansatz_data(chain, cfg, n).u, rc.experiment.perturbation, rc.seed)
    state = PdeState.initial(u0, pot, dt=rc.numerics.dt)
    result = pde_run(state, pot, rc.experiment.t_end, rc.experiment.snapshot_every, chain=chain, rho=rho,
                     guess=cfg, progress_cb=progress_cb, cancel_cb=cancel_cb, log_cb=log_cb)

    rows = []
    for t, u in result.snapshots:
        frame = _field_frame(u)
        frame.insert(0, "time", t)
        rows.append(frame)
    artifacts.write_csv(pd.concat(rows, ignore_index=True), os.path.join(out, "snapshots.csv"), meta)
    obs_csv = artifacts.write_csv(result.observers.to_frame(), os.path.join(out, "observers.csv"), meta)

    tracked = track(result.snapshots, chain, guess=cfg)
    traj_csv = artifacts.write_csv(tracked.to_frame(), os.path.join(out, "trajectory.csv"), meta)
    if emit_gnuplot:
        artifacts.write_gnuplot(obs_csv, "t", ["energy"], title=f"energy eps={eps:g}")
        artifacts.write_gnuplot(traj_csv, "t", [f"gap{j + 1}" for j in range(chain.N)], title=f"gaps eps={eps:g}")
    summary = {"eps": eps, "xi0": cfg.xi.tolist(), **result.summary(),
               "tracking": {"samples": len(tracked.times), "stride": tracked.stride,
                            "failure_index": tracked.failure_index, "failure": tracked.failure}}
    _log(f"✅ Saved: {traj_csv}")
    return _finish(rc, summary, out, "pde_run", meta, report_pdf)


# ---------------- ode-run ----------------
def run_ode(rc: RunConfig, out_dir: str, eps: float, emit_gnuplot: bool = False, report_pdf: bool = False,
            log_cb: Optional[LogCB] = None, **_) -> Dict[str, Any]:
    _log = _logger(log_cb)
    pot = rc.build_potential()
    chain = load_chain(rc, pot, out_dir)
    rho = _rho(rc, chain)
    cfg = initial_config(rc, chain, eps, rho)
    out = artifacts.ensure_dir(os.path.join(eps_dir(out_dir, eps), "ode"))
    meta = artifacts.make_meta(rc.digest(), eps=eps, rho=rho)
    traj = layer_ode.integrate(chain, cfg, eps, rc.experiment.t_end, rho=rho)
    csv = artifacts.write_csv(traj.to_frame(), os.path.join(out, "ode.csv"), meta)
    if emit_gnuplot:
        artifacts.write_gnuplot(csv, "t", [f"gap{j + 1}" for j in range(chain.N)], title=f"reduced ODE eps={eps:g}")
    _log(f"✅ reduced ODE eps={eps:g}: {traj.status}")
    return _finish(rc, traj.summary(), out, "ode_run", meta, report_pdf)


# ---------------- compare ----------------
def run_compare(rc: RunConfig, out_dir: str, eps: float, emit_gnuplot: bool = False, report_pdf: bool = False,
                log_cb: Optional[LogCB] = None, **_) -> Dict[str, Any]:
    _log = _logger(log_cb)
    pot = rc.build_potential()
    chain = load_chain(rc, pot, out_dir)
    rho = _rho(rc, chain)
    traj_path = os.path.join(eps_dir(out_dir, eps), "pde", "trajectory.csv")
    tracked = TrackedTrajectory.from_frame(artifacts.read_csv(traj_path, "pde-run"), eps)
    out = artifacts.ensure_dir(os.path.join(eps_dir(out_dir, eps), "compare"))
    meta = artifacts.make_meta(rc.digest(), eps=eps, rho=rho)
    result = compare_runs(chain, tracked, rho=rho, min_gap=rc.experiment.min_gap, rel_tol=rc.experiment.rel_tol)
    csv = artifacts.write_csv(result.frame, os.path.join(out, "compare.csv"), meta)
    if emit_gnuplot:
        artifacts.write_gnuplot(csv, "t", ["max_rel_err"], title=f"gap error eps={eps:g}")
    _log(f"{'✅' if result.passed else '⚠️'} compare eps={eps:g}: {result.verdict['rationale']}")
    return _finish(rc, {"eps": eps, "verdict": result.verdict}, out, "compare", meta, report_pdf)


RUNNERS = {
    "ansatz": run_ansatz,
    "spectrum": run_spectrum,
    "stationary": run_stationary,
    "pde-run": run_pde,
    "ode-run": run_ode,
    "compare": run_compare,
}


def run_one(subcommand: str, rc: RunConfig, out_dir: str, eps: float, emit_gnuplot: bool = False,
            report_pdf: bool = False) -> Dict[str, Any]:
    """Module-level entry for worker processes (no callbacks cross the process boundary)."""
    return RUNNERS[subcommand](rc, out_dir, eps, emit_gnuplot=emit_gnuplot, report_pdf=report_pdf)
