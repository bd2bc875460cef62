"""Core data model: experimental runs, input transforms, and fit reports.

A run is an :class:`ObservationSeries` of time-ordered samples holding a
concentration, a removal fraction, or both. Removal is always stored as a
fraction in [0, 1]; percent is a display concern only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InconsistentSample, InvalidInput, InvalidTime

# tolerance for agreement between a stored concentration and removal fraction
CONSISTENCY_TOL = 1e-9


class Contaminant(Enum):
    PB = "pb"
    METHYLENE_BLUE = "methylene_blue"


class ModelKind(Enum):
    FIRST_ORDER = "first_order"
    EXPONENTIAL = "exponential"
    GAUSSIAN_PROCESS = "gaussian_process"


@dataclass(frozen=True)
class Sample:
    """One effluent measurement.

    ``thickness_w`` may be left None and filled from the series-level
    barrier thickness; at least one of concentration / removal_fraction
    must be present.
    """

    t_raw: float
    concentration: float | None = None
    removal_fraction: float | None = None
    thickness_w: float | None = None
    ph: float | None = None


@dataclass(frozen=True)
class ObservationSeries:
    contaminant: Contaminant
    run_label: str
    c0: float
    samples: tuple[Sample, ...]
    barrier_thickness_cm: float | None = None

    def __post_init__(self):
        if not (self.c0 > 0):
            raise InvalidInput(f"c0 must be positive, got {self.c0}")
        samples = tuple(self.samples)
        if len(samples) < 3:
            raise InvalidInput(f"a series needs at least 3 samples, got {len(samples)}")
        filled = []
        prev_t = -math.inf
        for i, s in enumerate(samples):
            if not (s.t_raw > 0) or not math.isfinite(s.t_raw):
                raise InvalidTime(f"sample {i}: time must be positive, got {s.t_raw}")
            if s.t_raw <= prev_t:
                raise InvalidInput(
                    f"sample {i}: times must be strictly increasing "
                    f"({s.t_raw} after {prev_t})"
                )
            prev_t = s.t_raw
            if s.concentration is None and s.removal_fraction is None:
                raise InvalidInput(
                    f"sample {i}: needs a concentration or a removal fraction"
                )
            if s.concentration is not None and not (
                math.isfinite(s.concentration) and s.concentration >= 0
            ):
                raise InvalidInput(
                    f"sample {i}: concentration must be finite and >= 0, "
                    f"got {s.concentration}"
                )
            if s.removal_fraction is not None and not (
                0.0 <= s.removal_fraction <= 1.0
            ):
                raise InvalidInput(
                    f"sample {i}: removal fraction outside [0, 1]: {s.removal_fraction}"
                )
            if s.concentration is not None and s.removal_fraction is not None:
                implied = (self.c0 - s.concentration) / self.c0
                if abs(implied - s.removal_fraction) > CONSISTENCY_TOL:
                    raise InconsistentSample(
                        f"sample {i}: removal {s.removal_fraction} disagrees with "
                        f"concentration {s.concentration} (implies {implied})"
                    )
            thickness = s.thickness_w
            if thickness is None:
                thickness = self.barrier_thickness_cm
            if thickness is None:
                raise InvalidInput(
                    f"sample {i}: no thickness and no series-level barrier thickness"
                )
            if thickness < 0:
                raise InvalidInput(f"sample {i}: thickness must be >= 0, got {thickness}")
            if thickness != s.thickness_w:
                s = Sample(
                    t_raw=s.t_raw,
                    concentration=s.concentration,
                    removal_fraction=s.removal_fraction,
                    thickness_w=thickness,
                    ph=s.ph,
                )
            filled.append(s)
        object.__setattr__(self, "samples", tuple(filled))

    def times(self) -> np.ndarray:
        return np.array([s.t_raw for s in self.samples])

    def concentrations(self) -> np.ndarray:
        """Concentrations in mg/L, derived from removal where not stored."""
        return np.array(
            [
                s.concentration
                if s.concentration is not None
                else self.c0 * (1.0 - s.removal_fraction)
                for s in self.samples
            ]
        )


class RemovalPoint(NamedTuple):
    t_raw: float
    removal_fraction: float
    thickness_w: float
    ph: float | None


def to_removal_series(series: ObservationSeries) -> list[RemovalPoint]:
    """Removal fraction (c0 - c_t)/c0 per sample.

    Fractions a hair outside [0, 1] (within 1e-9) are clamped; a
    concentration exceeding c0 beyond that tolerance is an error.
    """
    out = []
    for i, s in enumerate(series.samples):
        if s.removal_fraction is not None:
            frac = s.removal_fraction
        else:
            if s.concentration > series.c0 * (1.0 + CONSISTENCY_TOL):
                raise InconsistentSample(
                    f"sample {i}: concentration {s.concentration} exceeds c0 {series.c0}"
                )
            frac = (series.c0 - s.concentration) / series.c0
            if frac < 0.0:
                frac = 0.0  # within tolerance of zero, checked above
            elif frac > 1.0:
                if frac > 1.0 + CONSISTENCY_TOL:
                    raise InconsistentSample(
                        f"sample {i}: removal fraction {frac} above 1"
                    )
                frac = 1.0
        out.append(RemovalPoint(s.t_raw, frac, s.thickness_w, s.ph))
    return out


@dataclass(frozen=True)
class TransformedInputs:
    """Times mapped to ln(t)/max(ln(t)), so the last sample sits at 1."""

    t_raw: np.ndarray
    t_norm: np.ndarray
    denominator: float


def log_time_norm(t_raw: Sequence[float] | np.ndarray) -> TransformedInputs:
    t = np.asarray(t_raw, dtype=float)
    if t.size == 0:
        raise InvalidInput("no times to transform")
    if np.any(t <= 1.0):
        raise InvalidTime("log-time normalization needs all times > 1 minute")
    logs = np.log(t)
    denominator = float(logs.max())
    return TransformedInputs(t_raw=t, t_norm=logs / denominator, denominator=denominator)


def transform_time(series: ObservationSeries) -> TransformedInputs:
    """Normalized log-time inputs for the regression models."""
    return log_time_norm(series.times())


def compute_capacity(c0: float, ct: float, volume_l: float, mass_g: float) -> float:
    """Adsorption capacity (c0 - ct) * V / m in mg per gram of adsorbent."""
    if not (mass_g > 0):
        raise InvalidInput(f"adsorbent mass must be positive, got {mass_g}")
    if not (volume_l > 0):
        raise InvalidInput(f"volume must be positive, got {volume_l}")
    if not (0 <= ct <= c0):
        raise InvalidInput(f"need 0 <= ct <= c0, got ct={ct}, c0={c0}")
    return (c0 - ct) * volume_l / mass_g


@dataclass
class PredictionRow:
    inputs: dict[str, float]
    predicted: float
    observed: float | None = None
    variance: float | None = None


@dataclass
class FitReport:
    """Serializable bundle of parameters, metrics, and prediction rows."""

    model_kind: ModelKind
    parameters: dict
    metrics: object | None  # FitMetrics or None for prediction-only runs
    predictions: list[PredictionRow] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
