"""Scenario configuration: validated models, runtime assembly and built-ins."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import plant as plants
from .controller import ClosedLoop, ControllerGains, OpenLoop, pack_z
from .signals import (BANK_VARIANTS, DitherBank, ShapingFunction, bank_from_samples,
                      default_shaping, make_harmonic_bank)
from .sim import MIN_STEPS_PER_CYCLE

PLANT_DIMS = {"double-integrator": 2, "kirchhoff": 6}


class PlantSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    key: Literal["double-integrator", "flat", "kirchhoff"]
    n: Optional[int] = Field(default=None, ge=1)
    damping: Optional[list[list[float]]] = None
    J: Optional[list[list[float]]] = None
    M: Optional[list[list[float]]] = None

    @property
    def dim(self) -> int:
        if self.key == "flat":
            return self.n or 2
        return PLANT_DIMS[self.key]

    @model_validator(mode="after")
    def _check(self):
        if self.key != "flat" and self.n is not None and self.n != PLANT_DIMS[self.key]:
            raise ValueError(f"plant {self.key!r} has dimension {PLANT_DIMS[self.key]}, not {self.n}")
        if self.key != "kirchhoff" and (self.J is not None or self.M is not None):
            raise ValueError("J and M apply only to the kirchhoff plant")
        if self.damping is not None:
            d = np.asarray(self.damping, dtype=float)
            if d.shape != (self.dim, self.dim):
                raise ValueError(f"damping must be {self.dim}x{self.dim}")
        for label in ("J", "M"):
            mat = getattr(self, label)
            if mat is not None and np.asarray(mat).shape != (3, 3):
                raise ValueError(f"{label} must be 3x3")
        return self


class ObjectiveSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    key: Literal["plane", "quadratic", "se3", "constant"]
    weights: Optional[list[float]] = None
    offset: float = 0.0
    value: float = 0.0


class GainsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    a: float = Field(gt=0)
    lam: float = Field(gt=0, alias="lambda")
    b: float = Field(gt=0)
    kappa: float = Field(gt=0)
    h: float = Field(default=1.0, gt=0)
    omega: float = Field(gt=0)

    @model_validator(mode="after")
    def _margin(self):
        margin = self.a * self.lam - self.b * self.kappa
        if not margin > 0:
            raise ValueError(f"gains violate a*lambda - b*kappa > 0 (a*lambda - b*kappa = {margin:g})")
        return self

    def to_gains(self) -> ControllerGains:
        return ControllerGains(self.a, self.lam, self.b, self.kappa, self.h, self.omega)


class InitialSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    g0: Optional[list[float]] = None
    R0: Optional[list[list[float]]] = None
    r0: Optional[list[float]] = None
    v0: Optional[list[float]] = None
    w0: Optional[list[float]] = None
    eta0: Optional[float] = None


class LadderSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    omegas: list[float] = Field(min_length=1)
    horizon: float = Field(gt=0)

    @field_validator("omegas")
    @classmethod
    def _positive(cls, v):
        if any(not o > 0 for o in v):
            raise ValueError("ladder frequencies must be positive")
        return v


class StabilitySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    eps_grid: list[float] = Field(min_length=1)
    omega_ladder: list[float] = Field(min_length=1)
    init_samples: int = Field(default=8, ge=1)
    delta: float = Field(default=0.1, gt=0)
    horizon: float = Field(default=40.0, gt=0)
    n_phases: int = Field(default=4, ge=1)
    steps_per_cycle: int = Field(default=50, ge=MIN_STEPS_PER_CYCLE)
    tail_fraction: float = Field(default=0.25, gt=0, le=1)
    flow: Literal["closed", "averaged"] = "closed"


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid")
    name: str
    description: str = ""
    plant: PlantSpec
    objective: ObjectiveSpec
    control: Literal["closed", "open"] = "closed"
    gains: Optional[GainsSpec] = None
    bank: str = "canonical"
    bank_samples: Optional[list[list[float]]] = None
    shaping: Literal["default"] = "default"
    initial: InitialSpec = InitialSpec()
    t0: float = 0.0
    t_end: float
    steps_per_cycle: int = Field(default=200, ge=MIN_STEPS_PER_CYCLE)
    step: Optional[float] = Field(default=None, gt=0)
    thin: int = Field(default=1, ge=1)
    outputs: list[Literal["trajectory", "energy", "defect"]] = ["trajectory", "energy", "defect"]
    ladder: Optional[LadderSpec] = None
    stability: Optional[StabilitySpec] = None

    @field_validator("bank")
    @classmethod
    def _bank(cls, v):
        if v not in BANK_VARIANTS:
            raise ValueError(f"unknown bank variant {v!r}; expected one of {list(BANK_VARIANTS)}")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        n = self.plant.dim
        if self.control == "closed" and self.gains is None:
            raise ValueError("closed-loop scenarios need gains")
        if self.control == "closed" and self.step is not None:
            raise ValueError("closed-loop scenarios set steps_per_cycle, not step")
        if self.control == "open" and self.step is None:
            raise ValueError("open-loop scenarios need an explicit step")
        if self.bank == "fig1" and n != 2:
            raise ValueError(f"bank 'fig1' has 2 channels but the plant has dimension {n}")
        if self.bank == "fig2" and n != 6:
            raise ValueError(f"bank 'fig2' has 6 channels but the plant has dimension {n}")
        if self.bank == "custom":
            if self.bank_samples is None:
                raise ValueError("bank 'custom' needs bank_samples (rows: phases over one period)")
            if any(len(row) != n for row in self.bank_samples):
                raise ValueError(f"bank_samples rows must have {n} entries (one per channel)")
        elif self.bank_samples is not None:
            raise ValueError("bank_samples apply only to bank 'custom'")
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")
        init = self.initial
        for label in ("v0", "w0"):
            vec = getattr(init, label)
            if vec is not None and len(vec) != n:
                raise ValueError(f"initial.{label} must have {n} entries")
        if self.plant.key == "kirchhoff":
            if init.g0 is not None and len(init.g0) != 12:
                raise ValueError("initial.g0 on SE(3) has 12 entries (R row-major, r)")
            if (init.R0 is None) != (init.r0 is None):
                raise ValueError("initial.R0 and initial.r0 go together")
        else:
            if init.R0 is not None or init.r0 is not None:
                raise ValueError("initial.R0/r0 apply only to SE(3) plants")
            if init.g0 is not None and len(init.g0) != n:
                raise ValueError(f"initial.g0 must have {n} entries")
        if self.objective.key == "se3" and self.plant.key != "kirchhoff":
            raise ValueError("objective 'se3' requires an SE(3) plant")
        if self.objective.key == "plane" and n != 2:
            raise ValueError("objective 'plane' is defined on R^2")
        if self.objective.key == "quadratic":
            if self.plant.key == "kirchhoff":
                raise ValueError("objective 'quadratic' is defined on R^n")
            if self.objective.weights is not None and len(self.objective.weights) != n:
                raise ValueError(f"objective weights must have {n} entries")
        return self

    def with_omega(self, omega: float) -> "Scenario":
        if self.gains is None:
            raise ValueError("scenario has no gains")
        data = self.model_dump(by_alias=True)
        data["gains"]["omega"] = float(omega)
        return Scenario.model_validate(data)


@dataclass
class Runtime:
    """Objects assembled from a validated scenario."""

    scenario: Scenario
    plant: plants.PlantModel
    gains: Optional[ControllerGains]
    shaping: ShapingFunction
    bank: DitherBank
    g0: np.ndarray
    z0: np.ndarray

    def vector_field(self):
        if self.scenario.control == "open":
            return OpenLoop(self.plant)
        return ClosedLoop(self.plant, self.gains, self.shaping, self.bank)

    @property
    def step(self) -> float:
        sc = self.scenario
        if sc.step is not None:
            return sc.step
        return self.bank.period / self.gains.omega / sc.steps_per_cycle


def _objective(spec: ObjectiveSpec, n: int, embed_dim: int):
    if spec.key == "plane":
        return plants.plane_objective()
    if spec.key == "se3":
        return plants.se3_objective()
    if spec.key == "quadratic":
        return plants.quadratic_objective(spec.weights or [1.0] * n, spec.offset)
    return plants.constant_objective(spec.value, embed_dim)


def build(scenario: Scenario) -> Runtime:
    ps = scenario.plant
    n = ps.dim
    damping = None if ps.damping is None else np.asarray(ps.damping, dtype=float)
    if ps.key == "kirchhoff":
        obj = _objective(scenario.objective, n, 12)
        J = plants.KIRCHHOFF_J if ps.J is None else np.asarray(ps.J, float)
        M = plants.KIRCHHOFF_M if ps.M is None else np.asarray(ps.M, float)
        plant = plants.kirchhoff_plant(J, M, obj, damping)
    else:
        obj = _objective(scenario.objective, n, n)
        plant = plants.flat_plant(n, 0.0 if damping is None else damping, obj, name=ps.key)
    gains = scenario.gains.to_gains() if scenario.gains is not None else None
    if scenario.bank == "custom":
        bank = bank_from_samples(np.asarray(scenario.bank_samples, dtype=float))
    else:
        bank = make_harmonic_bank(n, scenario.bank)
    init = scenario.initial
    if init.R0 is not None:
        g0 = np.concatenate([np.asarray(init.R0, float).ravel(), np.asarray(init.r0, float)])
    elif init.g0 is not None:
        g0 = np.asarray(init.g0, dtype=float)
    else:
        g0 = plant.model.identity
    if plant.model.defect(g0) > 1e-6:
        raise ValueError("initial.g0 is not on the group (rotation part not orthogonal)")
    v0 = np.zeros(n) if init.v0 is None else np.asarray(init.v0, float)
    w0 = np.zeros(n) if init.w0 is None else np.asarray(init.w0, float)
    eta0 = float(plant.output(g0)) if init.eta0 is None else init.eta0
    return Runtime(scenario, plant, gains, default_shaping(), bank, g0, pack_z(v0, w0, eta0))


def _unit_velocity(seed: int = 0, n: int = 6) -> list:
    v = np.random.default_rng(seed).standard_normal(n)
    return (v / np.linalg.norm(v)).tolist()


def _fig1(name, a, lam, b, kappa, description):
    return Scenario(
        name=name, description=description,
        plant=PlantSpec(key="double-integrator"), objective=ObjectiveSpec(key="plane"),
        gains=GainsSpec(a=a, lam=lam, b=b, kappa=kappa, h=1.0, omega=30.0),
        bank="fig1", initial=InitialSpec(g0=[1.0, 1.0]), t_end=40.0,
        stability=StabilitySpec(eps_grid=[0.01, 0.02, 0.05, 0.1, 0.2, 0.5], omega_ladder=[30.0, 60.0, 120.0],
                                horizon=20.0, delta=0.1),
    )


def _fig2(name, a, lam, b, kappa, description):
    return Scenario(
        name=name, description=description,
        plant=PlantSpec(key="kirchhoff", J=plants.KIRCHHOFF_J.tolist(), M=plants.KIRCHHOFF_M.tolist()),
        objective=ObjectiveSpec(key="se3"),
        gains=GainsSpec(a=a, lam=lam, b=b, kappa=kappa, h=1.0, omega=5.0),
        bank="fig2",
        initial=InitialSpec(R0=plants.FIG2_R0.tolist(), r0=plants.FIG2_r0.tolist(),
                            v0=[0.0] * 6, w0=[0.0] * 6, eta0=0.0),
        t_end=300.0, thin=10,
    )


def builtin_scenarios() -> list:
    return [
        _fig1("fig1-untuned", 1.0, 1.0, 1.0, 0.5, "double integrator, first gain set"),
        _fig1("fig1-tuned", 1.3, 0.7, 1.2, 0.7, "double integrator, gains with small eigenvalue imaginary parts"),
        _fig2("fig2-untuned", 0.1, 0.2, 0.1, 0.1, "rigid body in ideal fluid, first gain set"),
        _fig2("fig2-tuned", 0.15, 0.13, 0.13, 0.13, "rigid body in ideal fluid, second gain set"),
        Scenario(
            name="omega-ladder", description="averaging error versus dither frequency",
            plant=PlantSpec(key="double-integrator"), objective=ObjectiveSpec(key="plane"),
            gains=GainsSpec(a=1.0, lam=1.0, b=1.0, kappa=0.5, h=1.0, omega=30.0),
            bank="fig1", initial=InitialSpec(g0=[1.0, 1.0]), t_end=10.0,
            ladder=LadderSpec(omegas=[30.0, 60.0, 120.0, 240.0], horizon=10.0),
        ),
        Scenario(
            name="kirchhoff-conservation", description="unforced rigid body; kinetic energy is conserved",
            plant=PlantSpec(key="kirchhoff", J=plants.KIRCHHOFF_J.tolist(), M=plants.KIRCHHOFF_M.tolist()),
            objective=ObjectiveSpec(key="se3"), control="open", bank="fig2",
            initial=InitialSpec(v0=_unit_velocity()), t_end=100.0, step=1e-3, thin=100,
            outputs=["trajectory", "defect", "energy"],
        ),
    ]


def get_builtin(name: str) -> Scenario:
    for sc in builtin_scenarios():
        if sc.name == name:
            return sc
    raise KeyError(f"no built-in scenario named {name!r}; available: "
                   + ", ".join(s.name for s in builtin_scenarios()))

