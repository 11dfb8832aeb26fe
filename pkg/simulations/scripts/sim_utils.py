"""Run metadata, results directory handling, logging setup and array fingerprints."""
from __future__ import annotations
import os, json, subprocess, datetime, hashlib, logging
from typing import Dict, Any
import numpy as np

LOG_FORMAT = '[%(levelname)s] %(name)s: %(message)s'


def configure_logging(quiet: bool = False, verbose: bool = False):
    level = logging.WARNING if quiet else (logging.DEBUG if verbose else logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def get_git_hash() -> str:
    try:
        return subprocess.check_output(["git", "rev-parse", "--short", "HEAD"], stderr=subprocess.DEVNULL).decode().strip()
    except Exception:
        return "nogit"


def ensure_dir(path: str):
    os.makedirs(path, exist_ok=True)


def timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime('%Y-%m-%dT%H:%M:%S.%fZ')


def build_metadata(sim_id: str, params: Dict[str, Any], notes: str = "", script: str = "nsch_cli.py") -> Dict[str, Any]:
    return {
        "id": sim_id,
        "script": script,
        "git_hash": get_git_hash(),
        "timestamp": timestamp(),
        "params": params,
        "metrics": {},
        "figures": [],
        "notes": notes,
        "schema_version": 1
    }


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    return str(obj)


def save_results(metadata: Dict[str, Any], results_dir: str = "simulations/results") -> str:
    ensure_dir(results_dir)
    stamp = metadata['timestamp'].replace(':', '').replace('-', '').replace('.', '')
    fpath = os.path.join(results_dir, f"sim_{metadata['id']}_{stamp}.json")
    with open(fpath, 'w') as f:
        json.dump(metadata, f, indent=2, default=_jsonable)
    return fpath


def register_figure(metadata: Dict[str, Any], fig_path: str):
    rel = os.path.relpath(fig_path).replace('\\', '/')
    metadata.setdefault('figures', []).append(rel)


def hash_array(*arrays) -> str:
    """Short sha1 over the raw bytes of one or more arrays (bitwise determinism checks)."""
    h = hashlib.sha1()
    for arr in arrays:
        h.update(np.ascontiguousarray(np.asarray(arr, dtype=float)).tobytes())
    return h.hexdigest()[:10]
