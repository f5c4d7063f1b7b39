"""CSV/JSON serialisation with reproducible formatting.

All floats are written with 17 significant digits (full round-trip
precision), newlines are ``\\n``, and encodings UTF-8, so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .errors import NumericalError
from .experiments import ExperimentReport
from .limit import Equilibrium, LimitTrajectory, Nullclines
from .particle import Event, Trajectory


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_lines(path, lines) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
    except OSError as exc:
        raise NumericalError(f"cannot write {path}: {exc}") from exc


def write_trajectory(traj: Trajectory, path) -> None:
    """``t,mean_u,mean_r`` rows, plus per-neuron columns when snapshots
    were recorded."""
    header = "t,mean_u,mean_r"
    with_snapshots = traj.snapshots_u is not None
    if with_snapshots:
        header += "".join(f",u_{i}" for i in range(traj.n))
        header += "".join(f",r_{i}" for i in range(traj.n))
    lines = [header]
    for k in range(len(traj.grid)):
        row = [fmt(traj.grid[k]), fmt(traj.mean_u[k]), fmt(traj.mean_r[k])]
        if with_snapshots:
            row.extend(fmt(v) for v in traj.snapshots_u[k])
            row.extend(fmt(v) for v in traj.snapshots_r[k])
        lines.append(",".join(row))
    write_lines(path, lines)


def write_events(events: Sequence[Event], path) -> None:
    lines = ["time,neuron,r_before,u_before"]
    lines.extend(f"{fmt(e.time)},{e.neuron},{fmt(e.r_before)},{fmt(e.u_before)}"
                 for e in events)
    write_lines(path, lines)


def write_limit_trajectory(traj: LimitTrajectory, path) -> None:
    lines = ["t,u,r"]
    lines.extend(f"{fmt(t)},{fmt(u)},{fmt(r)}"
                 for t, u, r in zip(traj.grid, traj.u, traj.r))
    write_lines(path, lines)


def write_nullclines(curves: Nullclines, path) -> None:
    lines = ["u,r_nullcline_r,r_nullcline_u"]
    lines.extend(f"{fmt(u)},{fmt(a)},{fmt(b)}"
                 for u, a, b in zip(curves.u, curves.calcium, curves.potential))
    write_lines(path, lines)


def _json_dump(obj, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise NumericalError(f"cannot write {path}: {exc}") from exc


def equilibria_to_dict(eqs: Sequence[Equilibrium]) -> dict:
    return {
        "roots": [
            {
                "u_star": e.u_star,
                "r_star": e.r_star,
                "residual_rate": e.residual_rate,
                "residual_potential": e.residual_potential,
                "jacobian": [list(row) for row in e.jacobian],
                "eigenvalues": [[v.real, v.imag] for v in e.eigenvalues],
                "classification": e.classification,
            }
            for e in eqs
        ]
    }


def write_equilibria(eqs: Sequence[Equilibrium], path) -> None:
    _json_dump(equilibria_to_dict(eqs), path)


def write_report(report: ExperimentReport, path, include_timing: bool = False) -> None:
    """Serialise a study report; timing is opt-in so identical runs stay
    byte-identical."""
    _json_dump(report.to_dict(include_timing=include_timing), path)


def write_json(obj: dict, path) -> None:
    _json_dump(obj, path)


def read_report(path) -> ExperimentReport:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return ExperimentReport(
        experiment=raw["experiment"],
        config=raw["config"],
        master_seed=raw["master_seed"],
        rows=raw["rows"],
        slope=raw["slope"],
        slope_ci=tuple(raw["slope_ci"]) if raw["slope_ci"] is not None else None,
        degenerate_fit=raw["degenerate_fit"],
        checks=raw["checks"],
    )
