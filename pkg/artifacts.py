# artifacts.py
import json
import math
import os
from typing import Any, Dict, Iterable, Optional

import numpy as np
import pandas as pd

from config import ARTIFACT_VERSION
from errors import MissingArtifactError
from heteroclinic import Heteroclinic, load_npz, save_npz


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def make_meta(digest: str, **grid: Any) -> Dict[str, Any]:
    """Header block shared by every output: artifact version, config hash and grid metadata."""
    return {"artifact": ARTIFACT_VERSION, "config_sha256": digest, "grid": _plain(grid)}


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _header(meta: Dict[str, Any]) -> str:
    grid = ", ".join(f"{k}={v}" for k, v in sorted(meta.get("grid", {}).items()))
    return (f"# artifact: {meta.get('artifact', ARTIFACT_VERSION)}\n"
            f"# config_sha256: {meta.get('config_sha256', '')}\n"
            f"# grid: {grid}\n")


def write_csv(df: pd.DataFrame, path: str, meta: Dict[str, Any]) -> str:
    ensure_dir(os.path.dirname(path) or ".")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_header(meta))
        df.to_csv(f, index=False, float_format="%.17g")
    return path


def read_csv(path: str, producer: Optional[str] = None) -> pd.DataFrame:
    if not os.path.exists(path):
        raise MissingArtifactError(path, producer or "the producing subcommand")
    return pd.read_csv(path, comment="#")


def write_json(path: str, payload: Dict[str, Any], meta: Dict[str, Any]) -> str:
    ensure_dir(os.path.dirname(path) or ".")
    doc = {"meta": meta, **payload}
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: str, producer: Optional[str] = None) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise MissingArtifactError(path, producer or "the producing subcommand")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_gnuplot(csv_path: str, x: str, ys: Iterable[str], title: str = "") -> str:
    """Plot script next to a CSV; columns are addressed by header name."""
    gp = os.path.splitext(csv_path)[0] + ".gp"
    name = os.path.basename(csv_path)
    plots = ", \\\n     ".join(f"'{name}' using '{x}':'{y}' with lines title '{y}'" for y in ys)
    with open(gp, "w", encoding="utf-8") as f:
        f.write("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n")
        if title:
            f.write(f"set title '{title}'\n")
        f.write(f"set xlabel '{x}'\nplot {plots}\n")
    return gp


# ---------------- connections ----------------
def connection_path(out_dir: str, i: int, j: int) -> str:
    return os.path.join(out_dir, "connections", f"conn_{i}_{j}.npz")


def save_connection(het: Heteroclinic, out_dir: str, i: int, j: int, meta: Dict[str, Any]) -> str:
    path = connection_path(out_dir, i, j)
    ensure_dir(os.path.dirname(path))
    save_npz(het, path)
    write_csv(het.to_frame(), os.path.splitext(path)[0] + ".csv", meta)
    return path


def load_connection(path: str, potential=None) -> Heteroclinic:
    if not os.path.exists(path):
        raise MissingArtifactError(path, "heteroclinic")
    return load_npz(path, potential)
