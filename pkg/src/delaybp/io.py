"""Output formats: versioned CSV, binary trajectory dumps, sidecar metadata.

Every CSV starts with ``# schema: delaybp/<kind>/v<N>`` followed by a header
row. Timestamps and versions live only in the ``.meta.json`` sidecar so the
CSV bytes depend on (scenario, seed) alone.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .engine import TRAJECTORY_VERSION, SystemTrajectory
from .topology import NetworkSpec

CSV_SCHEMA_VERSION = 1


class DumpError(ValueError):
    pass


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path, kind: str, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: delaybp/{kind}/v{CSV_SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    with Path(path).open() as fh:
        schema = fh.readline().strip()
        if not schema.startswith("# schema:"):
            raise ValueError(f"{path}: missing schema line")
        rows = list(csv.reader(fh))
    return schema.split(":", 1)[1].strip(), rows[0], rows[1:]


def write_meta(path, **info) -> Path:
    path = Path(str(path) + ".meta.json") if not str(path).endswith(".meta.json") else Path(path)
    info.setdefault("delaybp_version", __version__)
    info.setdefault("kernel", kernels.BACKEND)
    info.setdefault("python", platform.python_version())
    info.setdefault("numpy", np.__version__)
    info.setdefault("written_at", time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    path.write_text(json.dumps(info, indent=2, sort_keys=True, default=str) + "\n")
    return path


def queue_labels(spec: NetworkSpec) -> list[str]:
    return [f"Q_{node}^{spec.flows[f].dest}" for node, f in spec.queues]


def flow_labels(spec: NetworkSpec) -> list[str]:
    return [f"Qtot^{fl.dest}" for fl in spec.flows]


def export_trajectory_csv(path, traj: SystemTrajectory, psi=None) -> Path:
    """Columns: slot, each Q_i^f, each flow total, and W when ``psi`` is given."""
    spec = traj.spec
    header = ["slot"] + queue_labels(spec) + flow_labels(spec)
    cols = [traj.times[:, None], traj.Q, traj.flow_totals()]
    if psi is not None:
        header.append("W")
        cols.append((traj.Q @ np.asarray(psi, dtype=float))[:, None])
    data = np.hstack([c.astype(object) for c in cols])
    return write_csv(path, "trajectory", header, data.tolist())


def spec_fingerprint(spec: NetworkSpec) -> str:
    desc = json.dumps({
        "n_nodes": spec.n_nodes,
        "links": spec.links,
        "interference": [sorted(s) for s in spec.interference_sets],
        "flows": [(f.source, f.dest, f.route) for f in spec.flows],
    }, sort_keys=True)
    return hashlib.sha256(desc.encode()).hexdigest()[:16]


_ARRAYS = ("times", "Q", "A", "D", "R", "S", "qf_sum", "qf_sq", "channel", "hop_counts")


def save_trajectory(path, traj: SystemTrajectory) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    G = np.array([list(k) + [v] for k, v in traj.G.items()], dtype=np.int64).reshape(-1, 5)
    np.savez_compressed(
        path,
        version=np.int64(TRAJECTORY_VERSION),
        fingerprint=np.array(spec_fingerprint(traj.spec)),
        n_states=np.int64(traj.n_states),
        meta=np.array(json.dumps(traj.meta, sort_keys=True, default=str)),
        G=G,
        **{k: getattr(traj, k) for k in _ARRAYS},
    )
    return path if path.suffix == ".npz" else Path(str(path) + ".npz")


def load_trajectory(path, spec: NetworkSpec) -> SystemTrajectory:
    try:
        z = np.load(path, allow_pickle=False)
        files = set(z.files)
    except Exception as exc:
        raise DumpError(f"{path}: unreadable trajectory dump ({exc})") from exc
    missing = ({"version", "fingerprint", "n_states", "G"} | set(_ARRAYS)) - files
    if missing:
        raise DumpError(f"{path}: truncated dump, missing {sorted(missing)}")
    try:
        version = int(z["version"])
        if version != TRAJECTORY_VERSION:
            raise DumpError(f"{path}: dump version {version}, expected {TRAJECTORY_VERSION}")
        if str(z["fingerprint"]) != spec_fingerprint(spec):
            raise DumpError(f"{path}: dump was produced for a different network")
        arrays = {k: z[k] for k in _ARRAYS}
        G = {tuple(int(x) for x in row[:4]): int(row[4]) for row in z["G"]}
        meta = json.loads(str(z["meta"])) if "meta" in files else {}
        n_states = int(z["n_states"])
    except DumpError:
        raise
    except Exception as exc:
        raise DumpError(f"{path}: corrupt or truncated dump ({exc})") from exc
    n = len(arrays["times"])
    if any(arrays[k].shape[0] != n for k in ("Q", "A", "D", "R", "S", "qf_sum", "qf_sq")):
        raise DumpError(f"{path}: record arrays have inconsistent lengths")
    if len(arrays["channel"]) != int(arrays["times"][-1]):
        raise DumpError(f"{path}: channel sequence length does not match horizon")
    return SystemTrajectory(spec=spec, n_states=n_states, G=G, meta=meta, **arrays)
