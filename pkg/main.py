# main.py
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional

import config as cfg
import experiments
from errors import LayerLabError
from run_config import RunConfig, load_run_config

log = logging.getLogger("layerlab")


# =========================
# Utilities
# =========================
def setup_logging(level: Optional[str] = None) -> None:
    name = (level or cfg.LOG_LEVEL or "INFO").upper()
    if name not in ("DEBUG", "INFO", "WARNING", "ERROR"):
        name = "INFO"
    logging.basicConfig(level=getattr(logging, name), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)


def _progress(current: int, total: int) -> None:
    if total > 0:
        log.debug("progress %d/%d", current, total)


def _emit_error(exc: LayerLabError) -> int:
    sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
    log.error(exc.message)
    return exc.exit_code


def run_subcommand(sub: str, rc: RunConfig, out_dir: str, jobs: int = 1, emit_gnuplot: bool = False,
                   report_pdf: bool = False) -> List[Dict[str, Any]]:
    """Runs one subcommand; per-eps subcommands fan out over numerics.eps (processes when jobs > 1)."""
    os.makedirs(out_dir, exist_ok=True)
    if sub == "heteroclinic":
        return [experiments.run_heteroclinic(rc, out_dir, emit_gnuplot=emit_gnuplot, report_pdf=report_pdf,
                                             progress_cb=_progress)]
    eps_list = list(rc.numerics.eps)
    if jobs > 1 and len(eps_list) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(eps_list))) as pool:
            futures = [pool.submit(experiments.run_one, sub, rc, out_dir, eps, emit_gnuplot, report_pdf)
                       for eps in eps_list]
            return [f.result() for f in futures]
    return [experiments.RUNNERS[sub](rc, out_dir, eps, emit_gnuplot=emit_gnuplot, report_pdf=report_pdf,
                                     progress_cb=_progress) for eps in eps_list]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="layerlab",
        description="Layered periodic solutions and slow layer dynamics of vector Allen-Cahn equations. "
                    "PDE time is reported on the x-scale; the orbit time of u'' = grad W(u) is t = x/eps.")
    ap.add_argument("subcommand", choices=experiments.SUBCOMMANDS)
    ap.add_argument("--config", type=str, required=True, help="Run config (YAML or JSON).")
    ap.add_argument("--out", type=str, default=cfg.OUTPUT_DIR, help="Output directory (env LAYERLAB_OUT).")
    ap.add_argument("--jobs", type=int, default=1, help="Worker processes for eps sweeps.")
    ap.add_argument("--emit-gnuplot", action="store_true", help="Write a gnuplot script next to each CSV.")
    ap.add_argument("--report-pdf", action="store_true", help="Write a one-page PDF summary per run.")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    cfg.CONFIG_PATH = args.config
    try:
        rc = load_run_config(args.config)
        log.info("▶️ %s with %s (sha256 %s)", args.subcommand, args.config, rc.digest()[:12])
        run_subcommand(args.subcommand, rc, args.out, jobs=max(1, args.jobs),
                       emit_gnuplot=args.emit_gnuplot, report_pdf=args.report_pdf)
    except LayerLabError as exc:
        return _emit_error(exc)
    log.info("✅ %s finished; outputs in %s", args.subcommand, args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
