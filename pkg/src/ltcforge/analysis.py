"""Timing-accuracy and power arithmetic for the timecode generator."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ltc_core import FrameRate

__all__ = [
    "EvalSetup",
    "SyncBudgetInput",
    "AlignmentReport",
    "PowerBudget",
    "rms_uncertainty",
    "sync_budget",
    "alignment_metrics",
    "battery_current_ma",
    "battery_runtime",
    "DEFAULT_T_CALC",
    "DEFAULT_PPM",
]

# Back-solved so the 30 fps budget lands on 543 s; never measured.
DEFAULT_T_CALC = 37.5e-6
DEFAULT_PPM = 30.0


@dataclass(frozen=True)
class EvalSetup:
    t_disp: float
    t_exp: float

    def __post_init__(self) -> None:
        if not (self.t_disp >= 0 and self.t_exp >= 0) or not (self.t_disp or self.t_exp):
            raise ValueError("T_disp and T_exp must be non-negative and not both zero")


@dataclass(frozen=True)
class SyncBudgetInput:
    t_calc: float
    eps_frame: float
    rate: FrameRate
    delta_ppm: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "rate", FrameRate.coerce(self.rate))
        if self.t_calc < 0 or self.eps_frame < 0 or self.delta_ppm < 0:
            raise ValueError("t_calc, eps_frame and delta_ppm must be non-negative")
        if self.t_calc >= self.half_frame:
            raise ValueError(f"t_calc={self.t_calc} s leaves no half-frame budget")

    @property
    def half_frame(self) -> float:
        return 1.0 / (2 * int(self.rate))


def rms_uncertainty(setup: EvalSetup) -> float:
    """RMS of two independent uniform quantization errors (display, exposure)."""
    return math.hypot(setup.t_disp / math.sqrt(12), setup.t_exp / math.sqrt(12))


def sync_budget(budget: SyncBudgetInput) -> float:
    """Longest free-running time before the accumulated error reaches half a frame.

    Returns ``math.inf`` when neither discretization nor oscillator error
    accumulates.
    """
    drift_per_second = budget.eps_frame * int(budget.rate) + budget.delta_ppm * 1e-6
    if drift_per_second == 0:
        return math.inf
    return (budget.half_frame - budget.t_calc) / drift_per_second


@dataclass(frozen=True)
class AlignmentReport:
    n: int
    mean: float
    mae: float
    max_ae: float
    fsm: float
    half_frame: float
    std: float = 0.0

    def to_dict(self) -> dict[str, float | int]:
        return {
            "n": self.n,
            "mean_s": self.mean,
            "mae_s": self.mae,
            "max_ae_s": self.max_ae,
            "fsm_s": self.fsm,
            "half_frame_s": self.half_frame,
            "std_s": self.std,
        }

    def to_json(self, **extra) -> str:
        return json.dumps({**self.to_dict(), **extra}, indent=2)

    def to_csv(self) -> str:
        row = self.to_dict()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
        return buf.getvalue()


def alignment_metrics(
    pairs: Iterable[tuple[float, float]], rate: FrameRate | int
) -> AlignmentReport:
    """Summarize ``ltc_time - reference_time`` errors.

    FSM is measured against the half-frame bound, so ``fsm + max_ae``
    equals ``half_frame`` by construction. ``std`` is the population
    standard deviation of the signed errors, reported next to MAE since
    the two are easy to confuse.
    """
    rate = FrameRate.coerce(rate)
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("alignment_metrics needs at least one pair")
    errors = arr[:, 0] - arr[:, 1]
    abs_err = np.abs(errors)
    half_frame = 1.0 / (2 * int(rate))
    max_ae = float(abs_err.max())
    return AlignmentReport(
        n=int(errors.size),
        mean=float(errors.mean()),
        mae=float(abs_err.mean()),
        max_ae=max_ae,
        fsm=half_frame - max_ae,
        half_frame=half_frame,
        std=float(errors.std()),
    )


@dataclass(frozen=True)
class PowerBudget:
    """Component draws in mW at the regulated system rail."""

    component_draws_mw: Mapping[str, float] | Sequence[float]
    capacity_mah: float
    battery_voltage: float
    efficiency: float
    system_voltage: float = 1.8

    def __post_init__(self) -> None:
        if any(d < 0 for d in self.draws):
            raise ValueError("component draws must be non-negative")
        if self.capacity_mah <= 0 or self.battery_voltage <= 0 or self.system_voltage <= 0:
            raise ValueError("capacity and voltages must be positive")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must be in (0, 1]")

    @property
    def draws(self) -> list[float]:
        if isinstance(self.component_draws_mw, Mapping):
            return [float(v) for v in self.component_draws_mw.values()]
        return [float(v) for v in self.component_draws_mw]

    @property
    def total_mw(self) -> float:
        return math.fsum(self.draws)


def battery_current_ma(pb: PowerBudget) -> float:
    return pb.total_mw / (pb.efficiency * pb.battery_voltage)


def battery_runtime(pb: PowerBudget) -> float:
    """Hours of operation; ``math.inf`` for a zero load."""
    current = battery_current_ma(pb)
    if current == 0:
        return math.inf
    return pb.capacity_mah / current

