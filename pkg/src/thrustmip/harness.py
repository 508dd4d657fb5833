"""Closed-loop scenario runs, trajectory logs, metrics and contact comparison.

Every number written to the trajectory CSV uses ``repr`` so that reading it
back yields the identical float; metrics are always computed from the parsed
CSV, which makes them recomputable by any external reader.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from thrustmip._backend import kernels as _default_kernels
from thrustmip.contact import ContactSingularityError, solve_contact_forces
from thrustmip.control import MPC, PID, PidController, Scheduler
from thrustmip.dynamics import ModelError, upright_pitch
from thrustmip.nmpc import MpcController
from thrustmip.params import format_params
from thrustmip.qp import QPInfeasible
from thrustmip.scenario import Scenario
from thrustmip.truth import SimulationAbort, TruthPlant, from_reduced

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_LINE = f"# thrustmip-trajectory v{SCHEMA_VERSION}"
BASE_COLUMNS = (
    "t", "phi", "theta", "phi_dot", "theta_dot",
    "phi_ref", "theta_ref", "phi_dot_ref", "theta_dot_ref",
    "u_m", "f_t", "h1_model", "h2_model", "h1_sim", "h2_sim",
    "J", "solver_status", "solve_ms", "active_controller",
)
SIM_COLUMNS = ("v_slip", "penetration")
EXTRA_COLUMNS = ("sqp_iters", "h_pred_max", "f_gx_model", "f_gn_model", "f_gx_sim", "f_gn_sim")
COLUMNS = BASE_COLUMNS + SIM_COLUMNS + EXTRA_COLUMNS
STATE_NAMES = ("phi", "theta", "phi_dot", "theta_dot")
TRAJECTORY = "trajectory.csv"
TIMING = "solver_timing.csv"
MANIFEST = "run.json"
METRICS = "metrics.json"
REDUCED_SUBSTEPS = 5


class SolverFatal(RuntimeError):
    """The controller could not produce an input."""


class CompareError(ValueError):
    """Runs cannot be compared."""


@dataclass
class RunMetrics:
    n_steps: int
    rms_error: dict
    max_h1_model: float
    max_h2_model: float
    max_h1_sim: float | None
    max_h2_sim: float | None
    max_violation_model: float
    max_violation_sim: float | None
    max_pred_constraint: float | None
    cost: dict
    solve_ms: dict
    status_counts: dict
    mpc_steps: int
    pid_fallback_steps: int
    slip_steps: int | None
    slip_events: int | None
    max_penetration: float | None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    metrics: RunMetrics
    out_dir: Path
    aborted: str | None = None
    rows: list = field(default_factory=list, repr=False)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _integrate_reduced(x, u, params, dt, kernels):
    p = params.as_array()
    u = np.asarray(u, dtype=float)
    h = dt / REDUCED_SUBSTEPS
    for _ in range(REDUCED_SUBSTEPS):
        k1 = np.asarray(kernels.xdot(x, u, p))
        k2 = np.asarray(kernels.xdot(x + 0.5 * h * k1, u, p))
        k3 = np.asarray(kernels.xdot(x + 0.5 * h * k2, u, p))
        k4 = np.asarray(kernels.xdot(x + h * k3, u, p))
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x)):
        raise SimulationAbort("non-finite reduced-model state")
    return x


def _model_forces(x, u, params):
    try:
        f = solve_contact_forces(x, u, params)
    except ContactSingularityError:
        return None, None, None, None
    h1 = -f.f_gn
    h2 = f.f_gx * f.f_gx - (params.mu_s * f.f_gn) ** 2
    return h1, h2, f.f_gx, f.f_gn


def window_start(scenario: Scenario) -> float:
    return scenario.scheduler.t_mpc_enable + scenario.settle_time


def run_scenario(scenario: Scenario, out_dir=None, kernels=_default_kernels) -> RunResult:
    """Run one closed loop and write its artifacts.

    Raises ``SolverFatal`` or ``SimulationAbort`` after writing the partial
    log when the run cannot continue.
    """
    sc = scenario
    out = Path(out_dir if out_dir is not None else sc.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = sc.params
    dt = sc.control_dt
    pid = PidController(sc.pid)
    mpc = MpcController(params, sc.mpc, kernels)
    sched = Scheduler(sc.scheduler, pid, mpc, params, sc.profile, dt)
    compliant = sc.plant == "compliant"
    x = np.asarray(sc.initial, dtype=float)
    plant = None
    if compliant:
        plant = TruthPlant(from_reduced(x, params, sc.ground), params, sc.ground,
                           sc.dt_physics, sc.max_penetration)
    upright = upright_pitch(params)
    rows = []
    timing = []
    aborted = None
    error = None
    for k in range(sc.n_steps):
        t = k * dt
        if compliant:
            x = plant.free_state.reduced()
        try:
            out_k = sched.step(t, x)
        except (ContactSingularityError, ModelError, QPInfeasible, np.linalg.LinAlgError) as exc:
            aborted = f"solver fatal at t={t:.3f}: {exc}"
            error = SolverFatal(aborted)
            break
        u = np.array([out_k.u.u_m, out_k.u.f_t])
        ref = sched.reference(t)
        if out_k.active == PID:
            ref[1] = sched.theta_eq_pid
        h1m, h2m, fxm, fnm = _model_forces(x, u, params)
        sol = out_k.solution
        row = {
            "t": t, "phi": x[0], "theta": x[1], "phi_dot": x[2], "theta_dot": x[3],
            "phi_ref": ref[0], "theta_ref": ref[1], "phi_dot_ref": ref[2], "theta_dot_ref": ref[3],
            "u_m": u[0], "f_t": u[1], "h1_model": h1m, "h2_model": h2m,
            "h1_sim": None, "h2_sim": None,
            "J": sol.cost if sol is not None else None,
            "solver_status": sol.status if sol is not None else "",
            "solve_ms": None,
            "active_controller": out_k.active,
            "v_slip": None, "penetration": None,
            "sqp_iters": sol.iters if sol is not None else None,
            "h_pred_max": float(np.max(sol.constraints)) if sol is not None else None,
            "f_gx_model": fxm, "f_gn_model": fnm, "f_gx_sim": None, "f_gn_sim": None,
        }
        if sol is not None:
            ms = sol.wall_time * 1e3
            timing.append((t, ms))
            if sc.timing_in_csv:
                row["solve_ms"] = ms
        try:
            if compliant:
                s = plant.advance(u, dt)
                row["h1_sim"] = -s.f_gn
                row["h2_sim"] = s.f_gx * s.f_gx - (params.mu_s * s.f_gn) ** 2
                row["f_gx_sim"], row["f_gn_sim"] = s.f_gx, s.f_gn
                row["v_slip"], row["penetration"] = s.v_slip, s.penetration
                x_next = plant.free_state.reduced()
            else:
                x_next = _integrate_reduced(x, u, params, dt, kernels)
            if abs(x_next[1] - upright) >= 0.5 * math.pi:
                raise SimulationAbort(f"body reached the ground (theta={x_next[1]:.3f})")
        except SimulationAbort as exc:
            rows.append(row)
            aborted = f"nonphysical at t={t:.3f}: {exc}"
            error = SimulationAbort(aborted)
            break
        rows.append(row)
        x = x_next

    _write_trajectory(out / TRAJECTORY, rows)
    _write_timing(out / TIMING, timing)
    manifest = {
        "schema": SCHEMA_VERSION,
        "scenario": sc.name,
        "source": sc.source,
        "overrides": sc.overrides,
        "plant": sc.plant,
        "control_dt": dt,
        "t_end": sc.t_end,
        "n_steps": sc.n_steps,
        "window_start": window_start(sc),
        "slip_threshold": sc.slip_threshold,
        "mu_s": params.mu_s,
        "backend": kernels.NAME,
        "params": format_params(params),
        "ground": {k: v for k, v in asdict(sc.ground).items() if not k.startswith("_")},
        "aborted": aborted,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    metrics = metrics_from_dir(out)
    (out / METRICS).write_text(json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
    _write_series(out, rows)
    if error is not None:
        raise error
    return RunResult(metrics, out, aborted, rows)


def _write_trajectory(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in COLUMNS])


def _write_timing(path: Path, timing) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "solve_ms"))
        for t, ms in timing:
            w.writerow((_fmt(t), _fmt(ms)))


def _write_series(out: Path, rows) -> None:
    """Plot-ready subsets: states and references, inputs, constraint values, cost."""
    panels = {
        "states": ("t",) + STATE_NAMES + ("phi_ref", "theta_ref", "phi_dot_ref", "theta_dot_ref"),
        "inputs": ("t", "u_m", "f_t", "active_controller"),
        "constraints": ("t", "h1_model", "h2_model", "h1_sim", "h2_sim", "h_pred_max"),
        "cost": ("t", "J", "solver_status"),
    }
    sdir = out / "series"
    sdir.mkdir(exist_ok=True)
    for name, cols in panels.items():
        with open(sdir / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in rows:
                if name == "cost" and row["J"] is None:
                    continue
                w.writerow([_fmt(row[c]) for c in cols])


def read_trajectory(path) -> dict:
    """Columns of a trajectory CSV; numeric columns as float arrays (NaN for empty)."""
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith("# thrustmip-trajectory v"):
            raise ValueError(f"{path}: missing schema line")
        version = int(first.rsplit("v", 1)[1])
        if version != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema v{version}")
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[: len(BASE_COLUMNS)]) != BASE_COLUMNS:
            raise ValueError(f"{path}: unexpected columns")
        raw = list(reader)
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in raw]
        if name in ("solver_status", "active_controller"):
            cols[name] = vals
        else:
            cols[name] = np.array([float(v) if v != "" else np.nan for v in vals])
    return cols


def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"count": 0, "mean": None, "min": None, "max": None, "final": None, "total": None}
    return {
        "count": int(v.size),
        "mean": float(np.mean(v)),
        "min": float(np.min(v)),
        "max": float(np.max(v)),
        "final": float(v[-1]),
        "total": float(np.sum(v)),
    }


def _maxnan(v):
    v = np.asarray(v, dtype=float)
    v = v[np.isfinite(v)]
    return float(np.max(v)) if v.size else None


def compute_metrics(cols: dict, timing_ms, slip_threshold: float) -> RunMetrics:
    n = len(cols["t"])
    rms = {}
    for name in STATE_NAMES:
        e = cols[name] - cols[name + "_ref"]
        rms[name] = float(np.sqrt(np.mean(e * e))) if n else None
    sim = bool(n) and bool(np.any(np.isfinite(cols["h1_sim"])))
    statuses = [s for s in cols["solver_status"] if s]
    counts = {s: statuses.count(s) for s in sorted(set(statuses))}
    active = cols["active_controller"]
    fallback = sum(1 for a, s in zip(active, cols["solver_status"]) if a == PID and s)
    J = cols["J"][np.isfinite(cols["J"])]
    slip_steps = slip_events = max_pen = None
    if sim:
        slipping = np.nan_to_num(np.abs(cols["v_slip"])) > slip_threshold
        slip_steps = int(np.sum(slipping))
        onsets = slipping[1:] & ~slipping[:-1]
        slip_events = int(np.sum(onsets)) + int(bool(slipping[0]))
        max_pen = _maxnan(cols["penetration"])
    h1m, h2m = _maxnan(cols["h1_model"]), _maxnan(cols["h2_model"])
    h1s = _maxnan(cols["h1_sim"]) if sim else None
    h2s = _maxnan(cols["h2_sim"]) if sim else None
    return RunMetrics(
        n_steps=n,
        rms_error=rms,
        max_h1_model=h1m,
        max_h2_model=h2m,
        max_h1_sim=h1s,
        max_h2_sim=h2s,
        max_violation_model=max(0.0, h1m or 0.0, h2m or 0.0),
        max_violation_sim=max(0.0, h1s, h2s) if sim else None,
        max_pred_constraint=_maxnan(cols["h_pred_max"]),
        cost=_stats(J),
        solve_ms=_stats(timing_ms),
        status_counts=counts,
        mpc_steps=sum(1 for a in active if a == MPC),
        pid_fallback_steps=fallback,
        slip_steps=slip_steps,
        slip_events=slip_events,
        max_penetration=max_pen,
    )


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"{run_dir} has no {MANIFEST}; not a run directory")
    return json.loads(path.read_text())


def metrics_from_dir(run_dir) -> RunMetrics:
    """Recompute RunMetrics from the files of a finished run."""
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    cols = read_trajectory(run_dir / TRAJECTORY)
    timing = []
    tpath = run_dir / TIMING
    if tpath.exists():
        with open(tpath, newline="") as fh:
            r = csv.reader(fh)
            next(r)
            timing = [float(row[1]) for row in r]
    return compute_metrics(cols, timing, manifest["slip_threshold"])


def _rel(model, sim):
    d = model - sim
    rms_sim = float(np.sqrt(np.mean(sim * sim)))
    max_sim = float(np.max(np.abs(sim)))
    return {
        "rms_rel": float(np.sqrt(np.mean(d * d))) / rms_sim if rms_sim > 0 else math.inf,
        "max_rel": float(np.max(np.abs(d))) / max_sim if max_sim > 0 else math.inf,
        "rms_abs": float(np.sqrt(np.mean(d * d))),
    }


def compare_contact(run_dir, sim_run_dir=None, threshold: float = 0.05, t_from=None) -> dict:
    """Model versus simulator contact channels over the stabilized window.

    With one run directory the model and simulator channels of that run are
    compared.  With two, the model channels of ``run_dir`` are compared with
    the simulator channels of ``sim_run_dir``, which must share its time grid.
    Only the h values decide ``passed``; force errors are reported alongside.
    """
    man = read_manifest(run_dir)
    a = read_trajectory(Path(run_dir) / TRAJECTORY)
    if sim_run_dir is None:
        b, man_b = a, man
    else:
        man_b = read_manifest(sim_run_dir)
        b = read_trajectory(Path(sim_run_dir) / TRAJECTORY)
        if len(a["t"]) != len(b["t"]) or not np.array_equal(a["t"], b["t"]):
            raise CompareError("runs have different time grids")
    if man_b["plant"] != "compliant" or not np.any(np.isfinite(b["h1_sim"])):
        raise CompareError("no simulator force channels; run with the compliant plant")
    t = a["t"]
    diffs = np.diff(t)
    if diffs.size and not np.allclose(diffs, man["control_dt"], rtol=0, atol=1e-9):
        raise CompareError("time column is not on the control grid")
    t0 = man["window_start"] if t_from is None else float(t_from)
    mask = (t >= t0 - 1e-9) & np.isfinite(a["h1_model"]) & np.isfinite(b["h1_sim"])
    if not np.any(mask):
        raise CompareError(f"no samples in the window t >= {t0}")
    report = {"window_start": t0, "samples": int(np.sum(mask)), "threshold": threshold}
    pairs = {
        "h1": ("h1_model", "h1_sim"),
        "h2": ("h2_model", "h2_sim"),
        "f_gx": ("f_gx_model", "f_gx_sim"),
        "f_gn": ("f_gn_model", "f_gn_sim"),
    }
    for key, (cm, cs) in pairs.items():
        report[key] = _rel(a[cm][mask], b[cs][mask])
    report["passed"] = all(report[k]["rms_rel"] < threshold for k in ("h1", "h2"))
    return report
