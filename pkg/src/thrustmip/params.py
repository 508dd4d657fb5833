"""Physical constants of the planar thruster-assisted MIP and their text file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_PARAMS_FILE = "default.params"

_VECTOR_FIELDS = ("l_b", "l_t")


class ParamsError(ValueError):
    """Raised for invalid or malformed robot parameters."""


@dataclass(frozen=True)
class RobotParams:
    """Constants of the reduced model.

    Angles are clockwise-positive: a positive ``theta`` leans the body forward
    (towards increasing ``phi``) and ``R(theta)`` maps body-frame vectors to the
    inertial frame as ``[[cos, sin], [-sin, cos]]``.  ``l_tz`` is the moment arm
    of the thrust about the wheel axle and must equal ``l_t[1]``.
    """

    m_b: float = 4.5
    m_w: float = 1.5
    I_b: float = 0.55
    I_w: float = 0.012
    r: float = 0.125
    beta: float = 0.0
    l_b: tuple[float, float] = (0.0, 0.35)
    l_t: tuple[float, float] = (0.0, 0.55)
    l_tz: float = 0.55
    g: float = 9.81
    k1: float = 3.0
    k2: float = 0.05
    mu_s: float = 0.7
    f_t_max: float = 43.2
    _vec: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "l_b", tuple(float(v) for v in self.l_b))
        object.__setattr__(self, "l_t", tuple(float(v) for v in self.l_t))
        for name in ("m_b", "m_w", "I_b", "I_w", "r", "g", "k1", "mu_s", "f_t_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ParamsError(f"{name} must be finite and > 0, got {value!r}")
        if not (math.isfinite(self.k2) and self.k2 >= 0.0):
            raise ParamsError(f"k2 must be finite and >= 0, got {self.k2!r}")
        if not abs(self.beta) < math.pi / 2:
            raise ParamsError(f"|beta| must be < pi/2, got {self.beta!r}")
        if len(self.l_b) != 2 or len(self.l_t) != 2:
            raise ParamsError("l_b and l_t must be 2-vectors")
        if math.hypot(*self.l_b) == 0.0:
            raise ParamsError("l_b must be nonzero")
        # torque of a unit thrust about the axle at theta = 0 (B_t theta-row)
        pivot_arm = self.l_t[1]
        if abs(pivot_arm - self.l_tz) > 1e-9 * max(1.0, abs(pivot_arm)):
            raise ParamsError(
                f"l_tz={self.l_tz} inconsistent with thrust arm l_t[1]={pivot_arm}"
            )
        vec = np.array(
            [
                self.m_b, self.m_w, self.I_b, self.I_w, self.r, self.beta,
                self.l_b[0], self.l_b[1], self.l_t[0], self.l_t[1], self.l_tz,
                self.g, self.k1, self.k2, self.mu_s, self.f_t_max,
            ],
            dtype=float,
        )
        vec.setflags(write=False)
        object.__setattr__(self, "_vec", vec)

    @property
    def total_mass(self) -> float:
        return self.m_b + self.m_w

    def as_array(self) -> np.ndarray:
        """Flat float64 layout consumed by the numerical kernels."""
        return self._vec

    def replace(self, **changes) -> "RobotParams":
        if "l_t" in changes and "l_tz" not in changes:
            changes["l_tz"] = tuple(changes["l_t"])[1]
        return dataclasses.replace(self, **changes)


def _parse_value(key: str, text: str):
    try:
        if key in _VECTOR_FIELDS:
            parts = [p for p in text.replace(",", " ").split() if p]
            if len(parts) != 2:
                raise ValueError
            return tuple(float(p) for p in parts)
        return float(text)
    except ValueError:
        raise ParamsError(f"bad value for {key!r}: {text!r}") from None


def parse_params(text: str, base: RobotParams | None = None) -> RobotParams:
    """Parse ``name = value`` lines (``#`` comments) into a RobotParams.

    Keys not present keep the values of ``base`` (the built-in defaults when
    omitted).  Unknown keys are rejected.
    """
    known = {f.name for f in dataclasses.fields(RobotParams) if f.init}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamsError(f"line {lineno}: expected 'name = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ParamsError(f"line {lineno}: unknown parameter {key!r}")
        values[key] = _parse_value(key, value)
    base = base or RobotParams()
    if "l_t" in values and "l_tz" not in values:
        values["l_tz"] = values["l_t"][1]
    return dataclasses.replace(base, **values)


def format_params(params: RobotParams) -> str:
    lines = []
    for f in dataclasses.fields(RobotParams):
        if not f.init:
            continue
        value = getattr(params, f.name)
        if f.name in _VECTOR_FIELDS:
            lines.append(f"{f.name} = {value[0]!r}, {value[1]!r}")
        else:
            lines.append(f"{f.name} = {value!r}")
    return "\n".join(lines) + "\n"


def load_params(path: str | Path | None = None) -> RobotParams:
    """Load a parameter file; ``None`` loads the bundled defaults."""
    if path is None:
        text = resources.files("thrustmip.data").joinpath(DEFAULT_PARAMS_FILE).read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ParamsError(f"cannot read parameter file {path}: {exc}") from exc
    return parse_params(text)
