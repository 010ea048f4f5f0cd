"""Skid-steer kinematic models mapping wheel speeds to body twists.

Every model is an immutable value holding the chassis geometry and its
trainable parameter vector.  Parameter vectors are ordered as follows:

=====================  ==========================================
variant                parameter order
=====================  ==========================================
``ideal-dd``           (none)
``ext-dd-sym``         alpha, b_hat
``ext-dd-asym``        alpha_l, alpha_r, x_v, y_l, y_r
``roc``                alpha, beta1, beta2
``full-linear``        gamma_11, gamma_12, gamma_21, gamma_22, gamma_31, gamma_32
=====================  ==========================================
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, replace
from typing import ClassVar, Sequence

import numpy as np

from skidsteer.geometry import InvalidInputError, Twist2D

INF = math.inf


class InvalidParameterError(ValueError):
    """Raised when a parameter vector has the wrong arity or leaves its bounds."""


class DegenerateMotionError(ValueError):
    """Raised when an ICR is requested for (near) straight-line motion."""


@dataclass(frozen=True)
class WheelCommand:
    t: float
    omega_l: float
    omega_r: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.t, self.omega_l, self.omega_r)):
            raise InvalidInputError(f"non-finite wheel command {self}")


@dataclass(frozen=True)
class ChassisGeometry:
    r: float = 0.3
    b: float = 1.2

    def __post_init__(self) -> None:
        if not (self.r > 0 and self.b > 0 and math.isfinite(self.r) and math.isfinite(self.b)):
            raise InvalidParameterError(f"wheel radius and width must be positive, got {self}")


@dataclass(frozen=True)
class IcrEstimate:
    c_v: tuple[float, float]
    c_l: tuple[float, float]
    c_r: tuple[float, float]


class ClampCounter:
    """Thread-safe tally of clamped ROC-model ICR offsets."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n: int) -> None:
        if n:
            with self._lock:
                self._count += int(n)

    @property
    def count(self) -> int:
        return self._count


@dataclass(frozen=True)
class KinematicModel:
    """Base class; subclasses declare their parameters as dataclass fields."""

    geometry: ChassisGeometry = ChassisGeometry()

    variant: ClassVar[str] = ""
    param_names: ClassVar[tuple[str, ...]] = ()
    bounds: ClassVar[tuple[tuple[float, float], ...]] = ()

    def __post_init__(self) -> None:
        _check_bounds(type(self), self.params())

    def params(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.param_names], dtype=float)

    def twist_arrays(self, omega_l, omega_r, clamps: ClampCounter | None = None):
        """Vectorised twist prediction; returns ``(vx, vy, omega)`` arrays."""
        raise NotImplementedError

    def nominal_params(self) -> np.ndarray:
        """Parameters reproducing the ideal differential drive for this geometry."""
        raise NotImplementedError


def _check_bounds(cls: type[KinematicModel], values: np.ndarray) -> None:
    if len(values) != len(cls.param_names):
        raise InvalidParameterError(
            f"{cls.variant} takes {len(cls.param_names)} parameters, got {len(values)}"
        )
    for name, value, (lo, hi) in zip(cls.param_names, values, cls.bounds):
        if not math.isfinite(value):
            raise InvalidParameterError(f"{cls.variant}: parameter {name} is not finite ({value})")
        if value < lo or value > hi:
            raise InvalidParameterError(
                f"{cls.variant}: parameter {name}={value} outside bounds [{lo}, {hi}]"
            )


def _symmetric_twist(r, alpha, half_width, omega_l, omega_r):
    vx = r * alpha * (omega_l + omega_r) / 2.0
    omega = r * alpha * (omega_r - omega_l) / (2.0 * half_width)
    return vx, np.zeros_like(vx), omega


@dataclass(frozen=True)
class IdealDD(KinematicModel):
    variant: ClassVar[str] = "ideal-dd"

    def jacobian(self) -> np.ndarray:
        r, b = self.geometry.r, self.geometry.b
        return r * np.array([[0.5, 0.5], [0.0, 0.0], [-1.0 / b, 1.0 / b]])

    def twist_arrays(self, omega_l, omega_r, clamps=None):
        wl, wr = np.asarray(omega_l, float), np.asarray(omega_r, float)
        return _symmetric_twist(self.geometry.r, 1.0, self.geometry.b / 2.0, wl, wr)

    def nominal_params(self) -> np.ndarray:
        return np.empty(0)


@dataclass(frozen=True)
class ExtendedDDSymmetric(KinematicModel):
    alpha: float = 1.0
    b_hat: float = 1.2

    variant: ClassVar[str] = "ext-dd-sym"
    param_names: ClassVar[tuple[str, ...]] = ("alpha", "b_hat")
    bounds: ClassVar[tuple[tuple[float, float], ...]] = ((0.0, 1.0), (0.0, INF))

    def jacobian(self) -> np.ndarray:
        r = self.geometry.r
        return r * self.alpha * np.array(
            [[0.5, 0.5], [0.0, 0.0], [-1.0 / self.b_hat, 1.0 / self.b_hat]]
        )

    def twist_arrays(self, omega_l, omega_r, clamps=None):
        wl, wr = np.asarray(omega_l, float), np.asarray(omega_r, float)
        return _symmetric_twist(self.geometry.r, self.alpha, self.b_hat / 2.0, wl, wr)

    def nominal_params(self) -> np.ndarray:
        return np.array([1.0, self.geometry.b])


@dataclass(frozen=True)
class ExtendedDDAsymmetric(KinematicModel):
    alpha_l: float = 1.0
    alpha_r: float = 1.0
    x_v: float = 0.0
    y_l: float = 0.6
    y_r: float = -0.6

    variant: ClassVar[str] = "ext-dd-asym"
    param_names: ClassVar[tuple[str, ...]] = ("alpha_l", "alpha_r", "x_v", "y_l", "y_r")
    bounds: ClassVar[tuple[tuple[float, float], ...]] = (
        (0.0, 1.0),
        (0.0, 1.0),
        (-INF, INF),
        (0.0, INF),
        (-INF, 0.0),
    )

    def jacobian(self) -> np.ndarray:
        icr = np.array([[-self.y_r, self.y_l], [self.x_v, -self.x_v], [-1.0, 1.0]])
        slip = np.diag([self.alpha_l, self.alpha_r])
        return self.geometry.r / (self.y_l - self.y_r) * icr @ slip

    def twist_arrays(self, omega_l, omega_r, clamps=None):
        wl, wr = np.asarray(omega_l, float), np.asarray(omega_r, float)
        k = self.geometry.r / (self.y_l - self.y_r)
        ul, ur = self.alpha_l * wl, self.alpha_r * wr
        return k * (-self.y_r * ul + self.y_l * ur), k * self.x_v * (ul - ur), k * (ur - ul)

    def nominal_params(self) -> np.ndarray:
        b = self.geometry.b
        return np.array([1.0, 1.0, 0.0, b / 2.0, -b / 2.0])


@dataclass(frozen=True)
class RocBased(KinematicModel):
    """Symmetric slip model whose ICR offset varies with path curvature.

    The ICR half-width is ``b/2 * (1 + beta1 / (1 + beta2 * sqrt(lam)))`` with
    ``lam = |(w_r + w_l) / (w_r - w_l)|``, clamped to ``[b/2, 100 b]``.
    Equal wheel speeds bypass the offset and give pure translation.
    """

    alpha: float = 1.0
    beta1: float = 0.0
    beta2: float = 0.0

    variant: ClassVar[str] = "roc"
    param_names: ClassVar[tuple[str, ...]] = ("alpha", "beta1", "beta2")
    bounds: ClassVar[tuple[tuple[float, float], ...]] = ((0.0, 1.0), (-INF, INF), (-INF, INF))

    def icr_offset(self, omega_l, omega_r):
        """Return ``(y0, clamped)``; entries with equal wheel speeds are NaN and unclamped."""
        wl, wr = np.asarray(omega_l, float), np.asarray(omega_r, float)
        b = self.geometry.b
        diff = wr - wl
        straight = diff == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.abs((wr + wl) / np.where(straight, 1.0, diff))
            raw = b / 2.0 * (1.0 + self.beta1 / (1.0 + self.beta2 * np.sqrt(lam)))
        finite = np.isfinite(raw)
        # a zero denominator sends the offset to the upper clamp
        y0 = np.clip(np.where(finite, raw, 100.0 * b), b / 2.0, 100.0 * b)
        clamped = ((y0 != raw) | ~finite) & ~straight
        return np.where(straight, np.nan, y0), clamped

    def twist_arrays(self, omega_l, omega_r, clamps=None):
        wl, wr = np.asarray(omega_l, float), np.asarray(omega_r, float)
        y0, clamped = self.icr_offset(wl, wr)
        if clamps is not None:
            clamps.add(int(np.count_nonzero(clamped)))
        r, a = self.geometry.r, self.alpha
        vx = r * a * (wl + wr) / 2.0
        straight = np.isnan(y0)
        omega = np.where(straight, 0.0, r * a * (wr - wl) / (2.0 * np.where(straight, 1.0, y0)))
        return vx, np.zeros_like(vx), omega

    def nominal_params(self) -> np.ndarray:
        return np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class FullLinear(KinematicModel):
    gamma_11: float = 0.15
    gamma_12: float = 0.15
    gamma_21: float = 0.0
    gamma_22: float = 0.0
    gamma_31: float = -0.25
    gamma_32: float = 0.25

    variant: ClassVar[str] = "full-linear"
    param_names: ClassVar[tuple[str, ...]] = (
        "gamma_11",
        "gamma_12",
        "gamma_21",
        "gamma_22",
        "gamma_31",
        "gamma_32",
    )
    bounds: ClassVar[tuple[tuple[float, float], ...]] = (
        (-INF, INF),
        (-INF, INF),
        (-INF, INF),
        (-INF, INF),
        (-INF, 0.0),
        (0.0, INF),
    )

    def jacobian(self) -> np.ndarray:
        return self.params().reshape(3, 2)

    def twist_arrays(self, omega_l, omega_r, clamps=None):
        wl, wr = np.asarray(omega_l, float), np.asarray(omega_r, float)
        return (
            self.gamma_11 * wl + self.gamma_12 * wr,
            self.gamma_21 * wl + self.gamma_22 * wr,
            self.gamma_31 * wl + self.gamma_32 * wr,
        )

    def nominal_params(self) -> np.ndarray:
        return IdealDD(self.geometry).jacobian().ravel()


VARIANTS: dict[str, type[KinematicModel]] = {
    cls.variant: cls
    for cls in (IdealDD, ExtendedDDSymmetric, ExtendedDDAsymmetric, RocBased, FullLinear)
}


def variant_class(name: str) -> type[KinematicModel]:
    try:
        return VARIANTS[name]
    except KeyError:
        raise InvalidParameterError(
            f"unknown model variant {name!r}; choose from {', '.join(VARIANTS)}"
        ) from None


def nominal_model(variant: str, geometry: ChassisGeometry) -> KinematicModel:
    """Model of the given variant whose predictions equal the ideal differential drive."""
    cls = variant_class(variant)
    return with_params(cls(geometry), cls(geometry).nominal_params())


def predict_twist(
    model: KinematicModel, cmd: WheelCommand, clamps: ClampCounter | None = None
) -> Twist2D:
    """Body twist predicted by ``model`` for one wheel command."""
    if not (math.isfinite(cmd.omega_l) and math.isfinite(cmd.omega_r)):
        raise InvalidInputError(f"non-finite wheel command {cmd}")
    vx, vy, omega = model.twist_arrays(cmd.omega_l, cmd.omega_r, clamps)
    return Twist2D(float(vx), float(vy), float(omega))


def param_vector(model: KinematicModel) -> np.ndarray:
    return model.params()


def with_params(model: KinematicModel, vector: Sequence[float]) -> KinematicModel:
    """Copy of ``model`` with its parameters replaced; validates arity and bounds."""
    values = np.asarray(vector, dtype=float).ravel()
    cls = type(model)
    _check_bounds(cls, values)
    return replace(model, **{n: float(v) for n, v in zip(cls.param_names, values)})


def as_full_linear(model: KinematicModel) -> FullLinear:
    """Equivalent full-linear model of any constant-Jacobian variant."""
    if isinstance(model, RocBased):
        raise InvalidParameterError("the ROC model has no constant Jacobian")
    return FullLinear(model.geometry, *model.jacobian().ravel())


def icr_positions(
    twist: Twist2D, cmd: WheelCommand, alpha_l: float, alpha_r: float, r: float
) -> IcrEstimate:
    """Body and per-side ICRs implied by a measured twist (diagnostic only)."""
    w = twist.omega
    if abs(w) <= 1e-9:
        raise DegenerateMotionError(f"|omega|={abs(w):.3g} too small; ICR is at infinity")
    x_v = -twist.vy / w
    return IcrEstimate(
        c_v=(x_v, twist.vx / w),
        c_l=(x_v, alpha_l * (r * cmd.omega_l - twist.vx) / w),
        c_r=(x_v, alpha_r * (r * cmd.omega_r - twist.vx) / w),
    )


def _bound_to_json(v: float):
    return None if math.isinf(v) else v


def model_to_dict(model: KinematicModel, name: str | None = None) -> dict:
    cls = type(model)
    return {
        "name": name or cls.variant,
        "variant": cls.variant,
        "geometry": {"r": model.geometry.r, "b": model.geometry.b},
        "param_names": list(cls.param_names),
        "params": [float(v) for v in model.params()],
        "bounds": [[_bound_to_json(lo), _bound_to_json(hi)] for lo, hi in cls.bounds],
    }


def model_from_dict(doc: dict) -> KinematicModel:
    try:
        cls = variant_class(doc["variant"])
        geometry = ChassisGeometry(float(doc["geometry"]["r"]), float(doc["geometry"]["b"]))
        names = list(doc.get("param_names", cls.param_names))
        values = doc.get("params", [])
    except (KeyError, TypeError) as exc:
        raise InvalidParameterError(f"malformed model document: {exc}") from exc
    if names != list(cls.param_names):
        raise InvalidParameterError(f"{cls.variant}: expected parameters {cls.param_names}, got {names}")
    return with_params(cls(geometry), values)


def dumps_model(model: KinematicModel, name: str | None = None, metadata: dict | None = None) -> str:
    doc = model_to_dict(model, name)
    if metadata is not None:
        doc["metadata"] = metadata
    return json.dumps(doc, indent=2) + "\n"


def loads_model(text: str) -> KinematicModel:
    return model_from_dict(json.loads(text))

