"""Scenario files: flat INI sections of ``name = value`` pairs."""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from thrustmip.control import ClimbProfile, PidGains, SchedulerConfig, equilibrium_pitch
from thrustmip.nmpc import MpcConfig
from thrustmip.params import ParamsError, RobotParams, load_params
from thrustmip.truth import DEFAULT_DT_PHYSICS, DEFAULT_MAX_PENETRATION, GroundModel

PLANTS = ("reduced", "compliant")
BUNDLED = ("flat_balance", "incline15_mpc", "incline45_wair")


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario."""


@dataclass
class Scenario:
    name: str
    plant: str
    params: RobotParams
    ground: GroundModel
    max_penetration: float
    slip_threshold: float
    pid: PidGains
    mpc: MpcConfig
    profile: ClimbProfile
    scheduler: SchedulerConfig
    initial: tuple
    t_end: float
    control_dt: float
    dt_physics: float
    output_dir: Path
    seed: int = 0
    timing_in_csv: bool = False
    settle_time: float = 0.5
    source: str = ""
    overrides: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.control_dt))


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ScenarioError(f"not a boolean: {text!r}")


def _section(cp, name):
    return dict(cp[name]) if cp.has_section(name) else {}


def _build(cls, values: dict, converters: dict, section: str, **fixed):
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    kw = dict(fixed)
    for key, text in values.items():
        if key not in known:
            raise ScenarioError(f"[{section}] unknown key {key!r}")
        conv = converters.get(key, float)
        try:
            kw[key] = conv(text)
        except ValueError as exc:
            raise ScenarioError(f"[{section}] bad value for {key}: {text!r} ({exc})") from None
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"[{section}] {exc}") from None


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("thrustmip.scenarios").joinpath(f"{name}.scenario")))


def apply_overrides(cp: configparser.ConfigParser, overrides) -> None:
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ScenarioError(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key.strip()] = value.strip()


def load_scenario(path, overrides=None, plant=None, output_dir=None) -> Scenario:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str  # keys are case sensitive (Q, R)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    apply_overrides(cp, overrides)
    if plant is not None:
        if not cp.has_section("scenario"):
            cp.add_section("scenario")
        cp["scenario"]["plant"] = plant
    return _from_config(cp, path, list(overrides or []), output_dir)


def _from_config(cp, path: Path, overrides, output_dir) -> Scenario:
    sc = _section(cp, "scenario")
    allowed = {"name", "plant", "params", "t_end", "control_dt", "dt_physics", "output", "seed",
               "settle_time"}
    unknown = set(sc) - allowed
    if unknown:
        raise ScenarioError(f"[scenario] unknown keys {sorted(unknown)}")
    name = sc.get("name", path.stem)
    plant = sc.get("plant", "reduced")
    if plant not in PLANTS:
        raise ScenarioError(f"plant must be one of {PLANTS}, got {plant!r}")

    params_ref = sc.get("params", "default")
    try:
        if params_ref == "default":
            params = load_params()
        else:
            pfile = Path(params_ref)
            if not pfile.is_absolute():
                pfile = path.parent / pfile
            if not pfile.exists():
                raise ScenarioError(f"parameter file {pfile} does not exist")
            params = load_params(pfile)
        pover = _section(cp, "params")
        changes = {}
        for key, text in pover.items():
            if key == "beta_deg":
                changes["beta"] = math.radians(float(text))
            elif key in ("l_b", "l_t"):
                changes[key] = _floats(text)
            else:
                changes[key] = float(text)
        if changes:
            params = params.replace(**changes)
    except (ParamsError, TypeError, ValueError) as exc:
        raise ScenarioError(f"parameters: {exc}") from None

    try:
        t_end = float(sc.get("t_end", 5.0))
        control_dt = float(sc.get("control_dt", 0.005))
        dt_physics = float(sc.get("dt_physics", DEFAULT_DT_PHYSICS))
        seed = int(sc.get("seed", 0))
        settle_time = float(sc.get("settle_time", 0.5))
    except ValueError as exc:
        raise ScenarioError(f"[scenario] {exc}") from None
    if not (t_end > 0 and control_dt > 0):
        raise ScenarioError("t_end and control_dt must be positive")
    ratio = t_end / control_dt
    if abs(ratio - round(ratio)) > 1e-6:
        raise ScenarioError("control_dt must divide t_end")
    if plant == "compliant" and dt_physics > 1e-4:
        raise ScenarioError("dt_physics must be <= 1e-4 s for the compliant plant")

    gsec = _section(cp, "ground")
    max_pen = float(gsec.pop("max_penetration", DEFAULT_MAX_PENETRATION))
    slip_threshold = float(gsec.pop("slip_threshold", 0.0))
    try:
        ground = GroundModel.matching(params, **{k: float(v) for k, v in gsec.items()})
    except TypeError as exc:
        raise ScenarioError(f"[ground] {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"[ground] {exc}") from None
    if slip_threshold <= 0.0:
        slip_threshold = 5.0 * ground.v_reg

    pid = _build(PidGains, _section(cp, "pid"), {}, "pid")
    vec = {"Q": _floats, "R": _floats, "u_min": _floats, "u_max": _floats, "n_h": int,
           "sqp_max_iters": int, "use_constraints": _bool, "terminal": str}
    msec = _section(cp, "mpc")
    msec.setdefault("dt", str(control_dt))
    sched = _build(SchedulerConfig, _section(cp, "scheduler"),
                   {"thrust_enable": _bool}, "scheduler")
    mpc_fixed = {}
    if "u_max" not in msec:
        mpc_fixed["u_max"] = (1.0, params.f_t_max if sched.thrust_enable else 0.0)
    mpc = _build(MpcConfig, msec, vec, "mpc", **mpc_fixed)
    if not sched.thrust_enable and mpc.u_max[1] > 0.0:
        mpc = dataclasses.replace(mpc, u_max=(mpc.u_max[0], 0.0), u_min=(mpc.u_min[0], 0.0))
    if abs(mpc.dt - control_dt) > 1e-12:
        raise ScenarioError("[mpc] dt must equal the control period")
    profile = _build(ClimbProfile, _section(cp, "reference"), {}, "reference")
    if not sched.thrust_enable and profile.thrust_allocation != 0.0:
        profile = dataclasses.replace(profile, thrust_allocation=0.0)

    init = _section(cp, "initial")
    try:
        theta_text = init.get("theta", "eq")
        if theta_text == "eq":
            f_init = profile.thrust_allocation if sched.t_mpc_enable == 0.0 else 0.0
            theta0 = equilibrium_pitch(params, f_init)
        else:
            theta0 = float(theta_text)
        initial = (
            float(init.get("phi", 0.0)),
            theta0 + float(init.get("theta_offset", 0.0)),
            float(init.get("phi_dot", 0.0)),
            float(init.get("theta_dot", 0.0)),
        )
    except ValueError as exc:
        raise ScenarioError(f"[initial] {exc}") from None

    osec = _section(cp, "output")
    timing = _bool(osec.get("timing", "false"))
    if output_dir is None:
        output_dir = Path(sc.get("output", f"runs/{name}"))
    return Scenario(
        name=name, plant=plant, params=params, ground=ground, max_penetration=max_pen,
        slip_threshold=slip_threshold, pid=pid, mpc=mpc, profile=profile, scheduler=sched,
        initial=initial, t_end=t_end, control_dt=control_dt, dt_physics=dt_physics,
        output_dir=Path(output_dir), seed=seed, timing_in_csv=timing, settle_time=settle_time,
        source=str(path), overrides=overrides,
    )
