"""Analytic circuit evaluation: reference models of the two benchmark
circuits plus synthetic test functions for validating the optimizer.

The circuit models use textbook square-law device physics:

    I_D = 0.5 * k' * (W/L) * V_ov^2
    gm  = sqrt(2 * k' * (W/L) * I_D)
    r_o = 1 / (lambda * I_D),   lambda = lambda0 / L

Bias currents are mirrored from a diode-referenced bias device Mb whose gate
overdrive is pinned at ``v_ov_bias``, so every mirrored branch current is
I = 0.5 * k' * (W/L) * v_ov_bias^2 for that branch's mirror device. The
models are smooth, monotone-structured, and fail their headroom guards over
much of the box, which exercises both the optimizer and the operating-region
feedback channel without a transistor-level simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConfigError,
    DesignPoint,
    DesignSpace,
    EvalRecord,
    Parameter,
    RangeError,
    Region,
    Scale,
    Source,
    design_space_contains,
)
from .fom import (
    AMP2_FOM,
    COMPARATOR_FOM,
    SYNTHETIC_FOM,
    FomConfig,
    compute_fom,
    failed_metrics,
)


@dataclass(frozen=True)
class ProcessConstants:
    """Device and environment constants of the reference process (SI units)."""

    vdd: float = 1.2
    vth_n: float = 0.35
    vth_p: float = 0.35
    kp_n: float = 200e-6
    kp_p: float = 80e-6
    lambda0: float = 0.1e-6  # V^-1 * m; channel-length modulation lambda = lambda0 / L
    c_load: float = 1e-12
    c_node: float = 0.5e-12
    v_ov_bias: float = 0.2
    v_headroom: float = 0.2
    offset_coeff: float = 5e-9  # V * m; offset = offset_coeff / sqrt(W1 * L1)

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if value <= 0:
                raise ValueError(f"process constant {name} must be positive")


@dataclass(frozen=True)
class Stack:
    """A series path of overdrives sharing the supply budget.

    ``levels`` lists one representative device per stacked level (their
    overdrives add); ``members`` lists every device classified by this
    stack. A gain-path stack that exceeds the budget fails the evaluation.
    """

    levels: tuple[str, ...]
    members: tuple[str, ...]
    gain_path: bool = True


@dataclass(frozen=True)
class BiasSolution:
    """Per-device gate overdrives of the quiescent operating point (volts)."""

    overdrives: dict[str, float]


@dataclass(frozen=True)
class CircuitModel:
    name: str
    space: DesignSpace
    constants: ProcessConstants
    sharing: dict[str, tuple[str, str]] = field(default_factory=dict)
    stacks: tuple[Stack, ...] = ()
    fom: FomConfig = SYNTHETIC_FOM

    @property
    def devices(self) -> tuple[str, ...]:
        return tuple(self.sharing)

    def value(self, point: DesignPoint, name: str) -> float:
        return point.values[self.space.index(name)]


def _amp2_space() -> DesignSpace:
    width = dict(lower=120e-9, upper=50e-6, scale=Scale.LOG, unit="m")
    length = dict(lower=80e-9, upper=1e-6, scale=Scale.LINEAR, unit="m")
    return DesignSpace(
        parameters=(
            Parameter("w1", **width),
            Parameter("l1", **length),
            Parameter("w3", **width),
            Parameter("l3", **length),
            Parameter("w5", **width),
            Parameter("l5", **length),
            Parameter("w6", **width),
            Parameter("l6", **length),
            Parameter("w7", **width),
            Parameter("l7", **length),
            Parameter("wb", **width),
            Parameter("lb", **length),
            Parameter("rz", 10.0, 100e3, Scale.LOG, "ohm"),
            Parameter("cc", 10e-15, 100e-12, Scale.LOG, "F"),
        )
    )


def _comparator_space() -> DesignSpace:
    width = dict(lower=90e-9, upper=200e-6, scale=Scale.LOG, unit="m")
    length = dict(lower=90e-9, upper=1e-6, scale=Scale.LINEAR, unit="m")
    return DesignSpace(
        parameters=(
            Parameter("w1", **width),
            Parameter("l1", **length),
            Parameter("w3", **width),
            Parameter("l3", **length),
            Parameter("w5", **width),
            Parameter("l5", **length),
            Parameter("w7", **width),
            Parameter("l7", **length),
            Parameter("w9", **width),
            Parameter("l9", **length),
            Parameter("wb", **width),
            Parameter("lb", **length),
        )
    )


SYNTHETIC_BOXES: dict[str, tuple[tuple[float, float], ...]] = {
    "branin": ((-5.0, 10.0), (0.0, 15.0)),
    "hartmann6": tuple(((0.0, 1.0),) * 6),
}


def _synthetic_space(fn: str) -> DesignSpace:
    box = SYNTHETIC_BOXES[fn]
    return DesignSpace(
        parameters=tuple(
            Parameter(f"x{i + 1}", lo, hi, Scale.LINEAR) for i, (lo, hi) in enumerate(box)
        )
    )


def circuit_model(
    name: str, constants: ProcessConstants | None = None
) -> CircuitModel:
    """Build a named evaluation model: amp2, comparator, branin, hartmann6."""
    constants = constants or ProcessConstants()
    if name == "amp2":
        return CircuitModel(
            name="amp2",
            space=_amp2_space(),
            constants=constants,
            sharing={
                "M1": ("w1", "l1"),
                "M2": ("w1", "l1"),
                "M3": ("w3", "l3"),
                "M4": ("w3", "l3"),
                "M5": ("w5", "l5"),
                "M6": ("w6", "l6"),
                "M7": ("w7", "l7"),
                "Mb": ("wb", "lb"),
            },
            stacks=(
                Stack(("Mb", "M1", "M3"), ("Mb", "M1", "M2", "M3", "M4")),
                Stack(("M6", "M7"), ("M6", "M7")),
                Stack(("M5",), ("M5",), gain_path=False),
            ),
            fom=AMP2_FOM,
        )
    if name == "comparator":
        return CircuitModel(
            name="comparator",
            space=_comparator_space(),
            constants=constants,
            sharing={
                "M1": ("w1", "l1"),
                "M2": ("w1", "l1"),
                "M3": ("w3", "l3"),
                "M4": ("w3", "l3"),
                "M5": ("w5", "l5"),
                "M6": ("w5", "l5"),
                "M7": ("w7", "l7"),
                "M8": ("w7", "l7"),
                "M9": ("w9", "l9"),
                "M10": ("w9", "l9"),
                "M11": ("w9", "l9"),
                "Mb": ("wb", "lb"),
            },
            stacks=(
                Stack(
                    ("Mb", "M1", "M3"),
                    ("Mb", "M1", "M2", "M3", "M4", "M5", "M6"),
                ),
                Stack(("M7", "M9"), ("M7", "M8", "M9", "M10", "M11")),
            ),
            fom=COMPARATOR_FOM,
        )
    if name in SYNTHETIC_BOXES:
        return CircuitModel(
            name=f"synthetic:{name}",
            space=_synthetic_space(name),
            constants=constants,
            fom=SYNTHETIC_FOM,
        )
    raise ConfigError(f"unknown circuit model {name!r}")


def _parallel(a: float, b: float) -> float:
    return a * b / (a + b)


def _amp2_solve(model: CircuitModel, point: DesignPoint):
    c = model.constants
    v = lambda name: model.value(point, name)
    w1, l1 = v("w1"), v("l1")
    w3, l3 = v("w3"), v("l3")
    w6, l6 = v("w6"), v("l6")
    w7, l7 = v("w7"), v("l7")
    wb, lb = v("wb"), v("lb")
    rz, cc = v("rz"), v("cc")

    i_tail = 0.5 * c.kp_n * (wb / lb) * c.v_ov_bias**2
    i_stage2 = i_tail * (w7 / l7) / (wb / lb)
    i_d1 = 0.5 * i_tail

    gm1 = math.sqrt(2.0 * c.kp_n * (w1 / l1) * i_d1)
    gm3 = math.sqrt(2.0 * c.kp_p * (w3 / l3) * i_d1)
    gm6 = math.sqrt(2.0 * c.kp_p * (w6 / l6) * i_stage2)
    lam = lambda length: c.lambda0 / length
    ro2 = 1.0 / (lam(l1) * i_d1)
    ro4 = 1.0 / (lam(l3) * i_d1)
    ro6 = 1.0 / (lam(l6) * i_stage2)
    ro7 = 1.0 / (lam(l7) * i_stage2)
    rob = 1.0 / (lam(lb) * i_tail)

    stage1 = gm1 * _parallel(ro2, ro4)
    stage2 = gm6 * _parallel(ro6, ro7)
    gbw_hz = gm1 / (2.0 * math.pi * cc)
    wu = 2.0 * math.pi * gbw_hz
    p2 = gm6 / c.c_load
    pm_deg = (
        90.0
        - math.degrees(math.atan(wu / p2))
        - math.degrees(math.atan(wu * cc * (1.0 / gm6 - rz)))
    )
    metrics = {
        "gbw": gbw_hz / 1e6,
        "gain": 20.0 * math.log10(stage1 * stage2),
        "cmrr": 20.0 * math.log10(stage1 * 2.0 * gm3 * rob),
        "pm": pm_deg,
        "power": c.vdd * (i_tail + i_stage2) * 1e6,
    }
    vov1 = math.sqrt(2.0 * i_d1 / (c.kp_n * (w1 / l1)))
    vov3 = math.sqrt(2.0 * i_d1 / (c.kp_p * (w3 / l3)))
    vov6 = math.sqrt(2.0 * i_stage2 / (c.kp_p * (w6 / l6)))
    bias = BiasSolution(
        overdrives={
            "M1": vov1,
            "M2": vov1,
            "M3": vov3,
            "M4": vov3,
            "M5": c.v_ov_bias,
            "M6": vov6,
            "M7": c.v_ov_bias,
            "Mb": c.v_ov_bias,
        }
    )
    ok = i_tail > 0 and i_stage2 > 0
    return metrics, bias, ok


def _comparator_solve(model: CircuitModel, point: DesignPoint):
    c = model.constants
    v = lambda name: model.value(point, name)
    w1, l1 = v("w1"), v("l1")
    w3, l3 = v("w3"), v("l3")
    w5, l5 = v("w5"), v("l5")
    w7, l7 = v("w7"), v("l7")
    w9, l9 = v("w9"), v("l9")
    wb, lb = v("wb"), v("lb")

    i_tail = 0.5 * c.kp_n * (wb / lb) * c.v_ov_bias**2
    i_branch = 0.5 * i_tail
    # Diode-connected and cross-coupled loads share the branch current in the
    # ratio of their aspect ratios (equal gate-source voltages at balance).
    alpha = (w5 / l5) / (w3 / l3)
    i_diode = i_branch / (1.0 + alpha)
    i_out = i_tail * (w9 / l9) / (wb / lb)

    gm1 = math.sqrt(2.0 * c.kp_n * (w1 / l1) * i_branch)
    gm9 = math.sqrt(2.0 * c.kp_n * (w9 / l9) * i_out)
    lam = lambda length: c.lambda0 / length
    ro2 = 1.0 / (lam(l1) * i_branch)
    ro4 = 1.0 / (lam(l3) * i_diode)
    ro9 = 1.0 / (lam(l9) * i_out)  # M9 and M11 share sizes, so ro11 == ro9

    vov1 = math.sqrt(2.0 * i_branch / (c.kp_n * (w1 / l1)))
    v_hys = (
        vov1 * (math.sqrt(alpha) - 1.0) / math.sqrt(alpha + 1.0)
        if alpha > 1.0
        else 0.0
    )
    metrics = {
        "gain": 20.0
        * math.log10(gm1 * _parallel(ro2, ro4) * gm9 * _parallel(ro9, ro9)),
        "ugf": gm1 / (2.0 * math.pi * c.c_node) / 1e6,
        "v_hys_err": v_hys * 1e3,
        "v_offset": c.offset_coeff / math.sqrt(w1 * l1) * 1e3,
        "power": c.vdd * (i_tail + 2.0 * i_out) * 1e6,
    }
    vov_load = math.sqrt(2.0 * i_diode / (c.kp_p * (w3 / l3)))
    vov7 = math.sqrt(2.0 * i_out / (c.kp_p * (w7 / l7)))
    bias = BiasSolution(
        overdrives={
            "M1": vov1,
            "M2": vov1,
            "M3": vov_load,
            "M4": vov_load,
            "M5": vov_load,
            "M6": vov_load,
            "M7": vov7,
            "M8": vov7,
            "M9": c.v_ov_bias,
            "M10": c.v_ov_bias,
            "M11": c.v_ov_bias,
            "Mb": c.v_ov_bias,
        }
    )
    ok = i_tail > 0 and i_out > 0
    return metrics, bias, ok


def classify_regions(
    model: CircuitModel, point: DesignPoint, bias: BiasSolution
) -> dict[str, Region]:
    """Classify every device from its overdrive and its stack's headroom.

    cutoff when the overdrive is non-positive; triode when the device sits in
    a stack whose summed overdrives exceed vdd - v_headroom; saturation
    otherwise. Classification depends only on the bias solution.
    """
    budget = model.constants.vdd - model.constants.v_headroom
    crowded: set[str] = set()
    for stack in model.stacks:
        total = sum(bias.overdrives[name] for name in stack.levels)
        if total > budget:
            crowded.update(stack.members)
    report = {}
    for device in model.devices:
        vov = bias.overdrives[device]
        if vov <= 0:
            report[device] = Region.CUTOFF
        elif device in crowded:
            report[device] = Region.TRIODE
        else:
            report[device] = Region.SATURATION
    return report


def _headroom_ok(model: CircuitModel, bias: BiasSolution) -> bool:
    budget = model.constants.vdd - model.constants.v_headroom
    for stack in model.stacks:
        if not stack.gain_path:
            continue
        if sum(bias.overdrives[name] for name in stack.levels) > budget:
            return False
    return True


def synthetic_eval(fn: str, x) -> float:
    """Negated benchmark function value (maximization convention)."""
    if fn not in SYNTHETIC_BOXES:
        raise ConfigError(f"unknown synthetic function {fn!r}")
    x = np.asarray(x, dtype=float).ravel()
    box = SYNTHETIC_BOXES[fn]
    if x.shape[0] != len(box):
        raise RangeError(f"{fn} expects {len(box)} coordinates, got {x.shape[0]}")
    for i, (lo, hi) in enumerate(box):
        if not lo <= x[i] <= hi:
            raise RangeError(f"{fn}: x{i + 1} = {x[i]!r} outside [{lo}, {hi}]")
    if fn == "branin":
        a, b, c = 1.0, 5.1 / (4.0 * math.pi**2), 5.0 / math.pi
        r, s, t = 6.0, 10.0, 1.0 / (8.0 * math.pi)
        value = (
            a * (x[1] - b * x[0] ** 2 + c * x[0] - r) ** 2
            + s * (1.0 - t) * math.cos(x[0])
            + s
        )
        return -value
    alphas = np.array([1.0, 1.2, 3.0, 3.2])
    A = np.array(
        [
            [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
            [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
            [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
            [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
        ]
    )
    P = 1e-4 * np.array(
        [
            [1312, 1696, 5569, 124, 8283, 5886],
            [2329, 4135, 8307, 3736, 1004, 9991],
            [2348, 1451, 3522, 2883, 3047, 6650],
            [4047, 8828, 8732, 5743, 1091, 381],
        ]
    )
    inner = np.sum(A * (x[None, :] - P) ** 2, axis=1)
    return float(np.sum(alphas * np.exp(-inner)))


def evaluate(
    model: CircuitModel,
    point: DesignPoint,
    source: Source = Source.RANDOM,
    iteration: int = 0,
) -> EvalRecord:
    """Evaluate one design point: metrics, operating regions, FOM.

    A failed evaluation (headroom violation in a gain path, non-positive
    bias current, or a domain error in the formulas) scores every metric at
    its configured failure value; the region report is still populated.
    """
    if not design_space_contains(model.space, point):
        raise RangeError(f"point outside the {model.name} design space")
    if model.name.startswith("synthetic:"):
        value = synthetic_eval(model.name.split(":", 1)[1], np.array(point.values))
        metrics: dict[str, float] = {"objective": value}
        regions: dict[str, Region] = {}
        ok = True
    else:
        solver = _amp2_solve if model.name == "amp2" else _comparator_solve
        try:
            metrics, bias, ok = solver(model, point)
            ok = ok and _headroom_ok(model, bias) and all(
                math.isfinite(m) for m in metrics.values()
            )
        except (ValueError, ZeroDivisionError, OverflowError):
            metrics, ok = {}, False
            bias = BiasSolution(overdrives={d: 0.0 for d in model.devices})
        regions = classify_regions(model, point, bias)
        if not ok:
            metrics = failed_metrics(model.fom)
    return EvalRecord(
        point=point,
        metrics=metrics,
        regions=regions,
        simulation_ok=ok,
        fom=compute_fom(metrics, model.fom),
        source=source,
        iteration=iteration,
    )
