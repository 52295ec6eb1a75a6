"""Device, design and temperature-sweep records shared by the analyses."""

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np


class Style(str, enum.Enum):
    TAPERED = "Tapered"
    NON_TAPERED = "NonTapered"


class Material(str, enum.Enum):
    NB = "Nb"
    TA = "Ta"
    AL = "Al"
    NBN = "NbN"


@dataclass(frozen=True)
class QubitDesign:
    """Capacitor geometry. ``paddle_area`` is the single-paddle width x height
    product times ``area_multiplier`` (set 2 to count both paddles)."""

    name: str
    style: Style
    gap_um: float
    paddle_w_um: float
    paddle_h_um: float
    area_multiplier: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "style", Style(self.style))
        if self.name not in "ABCDEFG" or len(self.name) != 1:
            raise ValueError(f"unknown design {self.name!r}")
        if min(self.gap_um, self.paddle_w_um, self.paddle_h_um, self.area_multiplier) <= 0:
            raise ValueError("design dimensions must be positive")

    @property
    def paddle_area(self) -> float:
        return self.paddle_w_um * self.paddle_h_um * self.area_multiplier


DESIGNS = {
    d.name: d
    for d in (
        QubitDesign("A", Style.NON_TAPERED, 1.5, 300, 60),
        QubitDesign("B", Style.NON_TAPERED, 20, 480, 60),
        QubitDesign("C", Style.NON_TAPERED, 20, 500, 60),
        QubitDesign("D", Style.TAPERED, 70, 440, 120),
        QubitDesign("E", Style.NON_TAPERED, 70, 500, 120),
        QubitDesign("F", Style.TAPERED, 250, 430, 180),
        QubitDesign("G", Style.NON_TAPERED, 250, 480, 200),
    )
}


@dataclass
class TemperatureSweep:
    """Tunneling rate versus temperature; temperatures in mK, rates in 1/s."""

    t_mk: np.ndarray
    gamma_qp: np.ndarray
    gamma_err: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t_mk = np.asarray(self.t_mk, dtype=float)
        self.gamma_qp = np.asarray(self.gamma_qp, dtype=float)
        if self.gamma_err is not None:
            self.gamma_err = np.asarray(self.gamma_err, dtype=float)
            if self.gamma_err.shape != self.t_mk.shape or np.any(self.gamma_err <= 0):
                raise ValueError("gamma_err must be positive and match the temperatures")
        if self.t_mk.shape != self.gamma_qp.shape or self.t_mk.ndim != 1:
            raise ValueError("temperature and rate arrays must be 1-D of equal length")
        if np.any(np.diff(self.t_mk) <= 0):
            raise ValueError("temperatures must be strictly increasing")
        if np.any(self.t_mk <= 0) or np.any(self.gamma_qp <= 0):
            raise ValueError("temperatures and rates must be positive")

    def __len__(self):
        return len(self.t_mk)

    @property
    def points(self):
        errs = self.gamma_err if self.gamma_err is not None else [None] * len(self)
        return list(zip(self.t_mk.tolist(), self.gamma_qp.tolist(), list(errs)))


@dataclass
class DeviceRecord:
    device_id: str
    material: Material
    design: QubitDesign
    f01: float
    t1: float
    qpt_rate: float
    re_y: Optional[float] = None
    sweep: Optional[TemperatureSweep] = None

    def __post_init__(self):
        self.material = Material(self.material)
        if min(self.f01, self.t1, self.qpt_rate) <= 0:
            raise ValueError("f01, t1 and qpt_rate must be positive")
        if self.re_y is not None and not 0 < self.re_y <= 1:
            raise ValueError("re_y must be design-G normalised, in (0, 1]")

    @property
    def gamma1(self) -> float:
        """Relaxation rate 1/T1 in 1/s (``t1`` is in microseconds)."""
        return 1e6 / self.t1
