"""Scenario files, trajectory CSVs, equilibrium reports, and run manifests.

Scenario files are JSON: keys m, n, r, c, tau, and optionally epsilon and
ctilde_factor.  Trajectory CSVs always carry the full column set

    t, q_1..q_n, z_1_1..z_m_n, nu_1..nu_n, x_1_1..x_m_n, setup_cost, lyapunov

with quantities a policy does not produce left as empty fields, never as
missing columns.  Floats are written with shortest round-trip formatting so
identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import Scenario, validate_scenario
from .simulate import Trajectory

__all__ = [
    "FileFormatError",
    "load_scenario",
    "dump_scenario",
    "trajectory_columns",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_manifest",
    "write_lines",
]


class FileFormatError(ValueError):
    """An input file failed to parse or lacks required structure."""


def load_scenario(path) -> Scenario:
    """Parse and validate a JSON scenario file.

    Malformed JSON is reported with line/column; schema violations name the
    offending key.  Both raise FileFormatError.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(
            f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise FileFormatError(f"{path}: expected a JSON object at top level")
    missing = [k for k in ("r", "c", "tau") if k not in raw]
    if missing:
        raise FileFormatError(f"{path}: missing required key(s): {', '.join(missing)}")
    allowed = {"m", "n", "r", "c", "tau", "epsilon", "ctilde_factor"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise FileFormatError(f"{path}: unknown key(s): {', '.join(unknown)}")
    try:
        return validate_scenario(
            r=raw["r"],
            c=raw["c"],
            tau=raw["tau"],
            epsilon=raw.get("epsilon", 0.01),
            ctilde_factor=raw.get("ctilde_factor"),
            m=raw.get("m"),
            n=raw.get("n"),
        )
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def dump_scenario(s: Scenario, path) -> None:
    """Write a scenario back out; ctilde persists only when it is a uniform factor of c."""
    payload = {
        "m": s.m,
        "n": s.n,
        "r": s.r.tolist(),
        "c": s.c.tolist(),
        "tau": s.tau.tolist(),
        "epsilon": s.epsilon,
    }
    factors = s.ctilde / s.c
    if np.allclose(factors, factors[0], rtol=0, atol=1e-12):
        payload["ctilde_factor"] = float(factors[0])
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _fmt(v) -> str:
    return repr(float(v))


def trajectory_columns(m: int, n: int) -> list[str]:
    cols = ["t"]
    cols += [f"q_{j + 1}" for j in range(n)]
    cols += [f"z_{i + 1}_{j + 1}" for i in range(m) for j in range(n)]
    cols += [f"nu_{j + 1}" for j in range(n)]
    cols += [f"x_{i + 1}_{j + 1}" for i in range(m) for j in range(n)]
    cols += ["setup_cost", "lyapunov"]
    return cols


def write_trajectory_csv(path, traj: Trajectory, lyapunov=None) -> None:
    """Write a trajectory in the fixed column schema.

    ``lyapunov`` overrides the recorded Lyapunov signal (used to attach the
    distance-to-saddle values to proximal runs once a reference is known).
    """
    s = traj.scenario
    m, n = s.m, s.n
    lyap = traj.lyapunov if lyapunov is None else np.asarray(lyapunov, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trajectory_columns(m, n))
        for k in range(len(traj)):
            row = [_fmt(traj.times[k])]
            row += [_fmt(v) for v in traj.qs[k]]
            if traj.Zs is None:
                row += [""] * (m * n)
            else:
                row += [_fmt(v) for v in traj.Zs[k].ravel()]
            if traj.nus is None:
                row += [""] * n
            else:
                row += [_fmt(v) for v in traj.nus[k]]
            row += [_fmt(v) for v in traj.rates[k].ravel()]
            row.append(_fmt(traj.setup_costs[k]))
            row.append("" if lyap is None else _fmt(lyap[k]))
            writer.writerow(row)


def read_trajectory_csv(path) -> dict:
    """Read a trajectory CSV back into arrays (empty fields become NaN).

    Returns a dict with t, q (K, n), z (K, m, n), nu (K, n), x (K, m, n),
    setup_cost, lyapunov, plus the inferred m and n.  Columns that were
    entirely empty come back as None.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: empty CSV") from None
        rows = list(reader)
    n = sum(1 for c in header if c.startswith("q_"))
    mn = sum(1 for c in header if c.startswith("z_"))
    if n == 0 or mn == 0 or mn % n != 0:
        raise FileFormatError(f"{path}: header does not match the trajectory schema")
    m = mn // n
    expected = trajectory_columns(m, n)
    if header != expected:
        raise FileFormatError(f"{path}: header does not match the trajectory schema")
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    K = len(rows)
    data = np.full((K, len(header)), np.nan)
    for k, row in enumerate(rows):
        if len(row) != len(header):
            raise FileFormatError(f"{path}: row {k + 2} has {len(row)} fields, expected {len(header)}")
        for idx, cell in enumerate(row):
            if cell != "":
                data[k, idx] = float(cell)

    def block(start, count):
        chunk = data[:, start : start + count]
        return None if np.isnan(chunk).all() else chunk

    pos = 1
    q = block(pos, n); pos += n
    z = block(pos, m * n); pos += m * n
    nu = block(pos, n); pos += n
    x = block(pos, m * n); pos += m * n
    out = {
        "m": m,
        "n": n,
        "t": data[:, 0],
        "q": q,
        "z": None if z is None else z.reshape(K, m, n),
        "nu": nu,
        "x": None if x is None else x.reshape(K, m, n),
        "setup_cost": block(pos, 1),
        "lyapunov": block(pos + 1, 1),
    }
    for key in ("setup_cost", "lyapunov"):
        if out[key] is not None:
            out[key] = out[key][:, 0]
    return out


def write_manifest(path, **fields) -> None:
    """Record everything needed to reproduce a run bit-for-bit."""
    Path(path).write_text(json.dumps(fields, indent=2, sort_keys=True) + "\n")


def write_lines(path, lines) -> None:
    Path(path).write_text("\n".join(lines) + "\n")
