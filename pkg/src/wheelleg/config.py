"""Scenario configuration: YAML documents validated against a schema.

Validation errors carry the file line of the offending entry. Overrides use
dotted keys (``horizon.N=20``) whose values are parsed as YAML scalars.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator


class ConfigError(ValueError):
    """Invalid configuration; ``messages`` holds one line per problem."""

    def __init__(self, messages: list[str]):
        self.messages = messages
        super().__init__("\n".join(messages))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Section):
    kind: Literal["sagittal_rig", "swerve"] = "sagittal_rig"
    params: dict[str, Any] = Field(default_factory=dict)


class TerrainConfig(_Section):
    kind: Literal["flat", "sine"] = "flat"
    peak: float = Field(0.2, ge=0.0)
    length: float = Field(11.5, gt=0.0)
    waves: int = Field(8, ge=1)
    start: float = 0.5


class ContactConfig(_Section):
    mu: float = Field(0.8, gt=0.0)
    torque_limit: float = Field(5.0, gt=0.0)
    sim_baumgarte: tuple[float, float] = (1e4, 200.0)
    ocp_baumgarte: tuple[float, float] = (100.0, 20.0)
    ocp_friction_scale: float = Field(0.5, gt=0.0, le=1.0)  # planner keeps |f_t| under this fraction of μ f_n


class WeightsConfig(_Section):
    leg_tracking: float = Field(0.1, ge=0.0)
    com_tracking: float = Field(0.0, ge=0.0)
    contact_force: float = Field(1.0, ge=0.0)
    regularization: float = Field(2e-4, ge=0.0)
    base_pose: float = Field(50.0, ge=0.0)
    steering_posture: float = Field(0.0, ge=0.0)
    arm_pose: float = Field(1000.0, ge=0.0)
    velocity: float = Field(1.0, ge=0.0)
    terminal_scale: float = Field(1.0, ge=0.0)


class HorizonConfig(_Section):
    N: int = Field(20, ge=1)
    dt: float = Field(0.02, gt=0.0)
    max_iter: int = Field(20, ge=1)
    first_max_iter: int = Field(50, ge=1)
    tol_cost: float = Field(1e-3, gt=0.0)
    tol_grad: float = Field(1e-6, gt=0.0)
    warm_start: bool = True


class TimingConfig(_Section):
    sim_dt: float = Field(0.002, gt=0.0, le=0.005)
    lfc_ticks_per_solve: int = Field(10, ge=1)


class EndEffectorConfig(_Section):
    height: float = 0.92
    offset_x: float = 0.22
    pitch: Optional[float] = None


class BaseConfig(_Section):
    height: float = Field(0.62, gt=0.0)
    speed: float = 0.0
    start_time: float = Field(0.3, ge=0.0)


class PerturbationConfig(_Section):
    wheel_velocity: float = 0.0
    return_tolerance: float = Field(0.02, gt=0.0)
    ee_deviation_bound: float = Field(0.05, gt=0.0)


class GaitSegment(_Section):
    kind: Literal["straight", "rotate", "crab", "hold"]
    amount: float = 0.0
    duration: float = Field(..., gt=0.0)


class SwerveConfig(_Section):
    half_length: float = Field(0.3, gt=0.0)
    half_width: float = Field(0.2, gt=0.0)
    wheel_radius: float = Field(0.08, gt=0.0)
    com_height: float = Field(0.35, gt=0.0)


class IKConfig(_Section):
    damping: float = Field(1e-2, gt=0.0)
    arm_kp: float = Field(300.0, ge=0.0)
    arm_kd: float = Field(5.0, ge=0.0)
    leg_kp: float = Field(600.0, ge=0.0)
    leg_kd: float = Field(10.0, ge=0.0)
    wheel_kp: float = Field(2.0, ge=0.0)  # base position error -> extra speed, 1/s
    wheel_kd: float = Field(1.0, ge=0.0)  # wheel rate error -> torque, N·m·s


class ModeEvent(_Section):
    t: float = Field(..., ge=0.0)
    mode: Literal["wheeled", "legged"]


class ScenarioConfig(_Section):
    name: str = "scenario"
    scenario: Literal["terrain", "perturbation", "gait"]
    duration: float = Field(..., gt=0.0)
    seed: int = 0
    initial_noise: float = Field(0.0, ge=0.0)
    model: ModelConfig = Field(default_factory=ModelConfig)
    terrain: TerrainConfig = Field(default_factory=TerrainConfig)
    contacts: ContactConfig = Field(default_factory=ContactConfig)
    weights: WeightsConfig = Field(default_factory=WeightsConfig)
    horizon: HorizonConfig = Field(default_factory=HorizonConfig)
    timing: TimingConfig = Field(default_factory=TimingConfig)
    ee_target: EndEffectorConfig = Field(default_factory=EndEffectorConfig)
    base: BaseConfig = Field(default_factory=BaseConfig)
    perturbation: PerturbationConfig = Field(default_factory=PerturbationConfig)
    gait: list[GaitSegment] = Field(default_factory=list)
    swerve: SwerveConfig = Field(default_factory=SwerveConfig)
    ik: IKConfig = Field(default_factory=IKConfig)
    mode_schedule: list[ModeEvent] = Field(default_factory=lambda: [ModeEvent(t=0.0, mode="wheeled")])
    max_degraded_steps: int = Field(25, ge=0)
    compare_ik: bool = False

    @field_validator("mode_schedule")
    @classmethod
    def _sorted(cls, v):
        if [e.t for e in v] != sorted(e.t for e in v):
            raise ValueError("mode_schedule times must be non-decreasing")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.scenario == "gait":
            if self.model.kind != "swerve":
                raise ValueError("the gait scenario runs on the swerve model (model.kind: swerve)")
            if not self.gait:
                raise ValueError("the gait scenario needs at least one gait segment")
        elif self.model.kind != "sagittal_rig":
            raise ValueError(f"the {self.scenario} scenario runs on the sagittal rig (model.kind: sagittal_rig)")
        if self.model.kind == "sagittal_rig":
            from .models import RIG_DEFAULTS

            unknown = sorted(set(self.model.params) - set(RIG_DEFAULTS))
            if unknown:
                raise ValueError(f"unknown rig parameters {unknown}")
        return self


# -- parsing -----------------------------------------------------------------

def _node_lines(node, path=(), out=None):
    """Map key paths to 1-based line numbers of a composed YAML node tree."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = k.start_mark.line + 1
            _node_lines(v, path + (key,), out) if isinstance(v, (yaml.MappingNode, yaml.SequenceNode)) else None
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out[path + (i,)] = v.start_mark.line + 1
            if isinstance(v, (yaml.MappingNode, yaml.SequenceNode)):
                _node_lines(v, path + (i,), out)
    return out


def _line_for(lines, loc):
    loc = tuple(loc)
    while loc and loc not in lines:
        loc = loc[:-1]
    return lines.get(loc)


def _set_path(doc: dict, dotted: str, value):
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        if isinstance(cur, list):
            cur = cur[int(k)]
            continue
        if not isinstance(cur.get(k), (dict, list)):
            cur[k] = {}
        cur = cur[k]
    if isinstance(cur, list):
        cur[int(keys[-1])] = value
    else:
        cur[keys[-1]] = value


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError([f"override {text!r}: expected key=value"])
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def parse_config_text(text: str, source: str = "<config>", overrides=()) -> ScenarioConfig:
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError([f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}"]) from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError([f"{source}:1: top level must be a mapping"])
    lines = _node_lines(node) if node is not None else {}
    doc = copy.deepcopy(doc)
    for ov in overrides:
        key, value = parse_override(ov) if isinstance(ov, str) else ov
        _set_path(doc, key, value)
    try:
        return ScenarioConfig.model_validate(doc)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = [p for p in err["loc"]]
            field = ".".join(str(p) for p in loc) or "<root>"
            line = _line_for(lines, loc)
            where = f"{source}:{line}" if line else source
            msg = err["msg"]
            if err["type"] == "missing":
                msg = "field required"
            msgs.append(f"{where}: {field}: {msg}")
        raise ConfigError(msgs) from exc


def load_config(path, overrides=()) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"]) from exc
    return parse_config_text(text, str(path), overrides)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
