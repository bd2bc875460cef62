"""CSV ingestion, synthetic series generation, and report serialization.

Input files are headered CSV with the canonical columns ``time_min``,
``concentration_mg_l``, ``removal_pct``, ``thickness_cm``, ``ph``. Reports
go out as JSON (sorted keys, stable float repr, so identical runs produce
identical bytes) plus a flat CSV of prediction rows for external plotting.
All writes are write-to-temp + atomic rename: a failing run leaves no
partial output behind.

Synthetic series are seeded through numpy's default PCG64 generator, which
is stable across platforms and releases; the seed alone reproduces a file.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import (
    Contaminant,
    FitReport,
    ModelKind,
    ObservationSeries,
    PredictionRow,
    Sample,
    log_time_norm,
)
from .errors import FileIOError, InvalidSpec, ParseError, ValidationError
from .expmodel import ExpModelParams, exp_model_eval
from .gp import DEFAULT_EPSILON, GpHyperParams, kernel_matrix
from .metrics import FitMetrics
from .numeric import cholesky

CANONICAL_COLUMNS = ("time_min", "concentration_mg_l", "removal_pct", "thickness_cm", "ph")

# effluent sampling schedule: every 10 min over the first hour, then hourly
DEFAULT_SCHEDULE = tuple(float(t) for t in list(range(10, 61, 10)) + list(range(120, 3601, 60)))

FIXTURE_DIR_ENV = "PABFIT_FIXTURE_DIR"


@dataclass
class DatasetFile:
    """A CSV file plus the run-level facts the file itself does not carry."""

    path: str | Path
    contaminant: Contaminant
    c0: float
    schema: dict[str, str] | None = None  # canonical name -> actual header
    default_thickness_cm: float | None = None
    run_label: str | None = None
    strict_columns: bool = True


def _parse_cell(raw: str | None, row: int, column: str) -> float | None:
    if raw is None or raw.strip() == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"row {row}, column {column}: cannot parse {raw!r} as a number") from None


def load_series(f: DatasetFile) -> ObservationSeries:
    """Read and validate a CSV file into an :class:`ObservationSeries`.

    Row numbers in error messages count data rows from 1 (the header is
    row 0). Unknown columns raise when ``strict_columns`` is set and warn
    otherwise; ``removal_pct`` is divided by 100 on the way in.
    """
    path = Path(f.path)
    schema = {c: c for c in CANONICAL_COLUMNS}
    if f.schema:
        schema.update(f.schema)
    header_to_canonical = {v: k for k, v in schema.items()}

    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FileIOError(f"cannot read {path}: {e}") from e

    reader = csv.DictReader(raw.splitlines())
    if reader.fieldnames is None:
        raise ParseError(f"{path}: empty file, expected a CSV header row")
    unknown = [h for h in reader.fieldnames if h not in header_to_canonical]
    if unknown:
        if f.strict_columns:
            raise ValidationError(f"{path}: unknown columns {unknown}")
        warnings.warn(f"{path}: ignoring unknown columns {unknown}", stacklevel=2)
    present = {header_to_canonical[h] for h in reader.fieldnames if h in header_to_canonical}
    if "time_min" not in present:
        raise ValidationError(f"{path}: required column {schema['time_min']!r} is missing")
    if "concentration_mg_l" not in present and "removal_pct" not in present:
        raise ValidationError(
            f"{path}: need a concentration or removal column"
        )

    samples = []
    prev_t = None
    for i, row in enumerate(reader, start=1):
        def cell(canonical: str) -> float | None:
            if canonical not in present:
                return None
            return _parse_cell(row.get(schema[canonical]), i, schema[canonical])

        t = cell("time_min")
        if t is None:
            raise ValidationError(f"row {i}: missing time")
        if t <= 1.0:
            raise ValidationError(
                f"row {i}: time {t} min is <= 1; the log-time transform is undefined there"
            )
        if prev_t is not None and t <= prev_t:
            raise ValidationError(f"row {i}: times must be strictly increasing")
        prev_t = t
        conc = cell("concentration_mg_l")
        if conc is not None and conc > f.c0 * (1.0 + 1e-9):
            raise ValidationError(
                f"row {i}: concentration {conc} exceeds c0 {f.c0}"
            )
        pct = cell("removal_pct")
        thickness = cell("thickness_cm")
        if thickness is None:
            thickness = f.default_thickness_cm
        samples.append(
            Sample(
                t_raw=t,
                concentration=conc,
                removal_fraction=None if pct is None else pct / 100.0,
                thickness_w=thickness,
                ph=cell("ph"),
            )
        )

    return ObservationSeries(
        contaminant=f.contaminant,
        run_label=f.run_label or path.stem,
        c0=f.c0,
        samples=tuple(samples),
        barrier_thickness_cm=f.default_thickness_cm,
    )


class Generator(Enum):
    FIRST_ORDER = "first_order"
    EXP_MODEL = "exp_model"
    GP_DRAW = "gp_draw"


@dataclass
class SyntheticSpec:
    generator: Generator
    parameters: dict[str, float]
    time_schedule: Sequence[float] = DEFAULT_SCHEDULE
    noise_sd: float = 0.0
    seed: int = 0
    contaminant: Contaminant = Contaminant.PB
    run_label: str = "synthetic"


def _require(params: dict, keys: Sequence[str], generator: str) -> list[float]:
    missing = [k for k in keys if k not in params]
    if missing:
        raise InvalidSpec(f"{generator} generator needs parameters {missing}")
    return [float(params[k]) for k in keys]


def generate_synthetic(spec: SyntheticSpec) -> ObservationSeries:
    """Deterministic synthetic series: identical spec objects give
    identical samples.

    Noise is additive Gaussian (sd = ``noise_sd``) applied on the
    generator's natural scale and clamped so concentrations stay within
    [0, c0].
    """
    t = np.asarray(spec.time_schedule, dtype=float)
    if t.size == 0 or np.any(np.diff(t) <= 0) or np.any(t <= 1.0):
        raise InvalidSpec("time schedule must be strictly increasing with all times > 1")
    if spec.noise_sd < 0:
        raise InvalidSpec(f"noise_sd must be >= 0, got {spec.noise_sd}")
    rng = np.random.default_rng(spec.seed)
    p = dict(spec.parameters)
    c0 = float(p.get("c0", 50.0))
    thickness = float(p.get("thickness_cm", 3.0))
    ph = p.get("ph")

    if spec.generator is Generator.FIRST_ORDER:
        (k,) = _require(p, ["k"], "first_order")
        conc = np.exp(k * t + np.log(c0))
        if spec.noise_sd > 0:
            conc = conc + spec.noise_sd * rng.standard_normal(t.size)
        conc = np.clip(conc, 0.0, c0)
        samples = tuple(
            Sample(t_raw=ti, concentration=ci, thickness_w=thickness, ph=ph)
            for ti, ci in zip(t, conc)
        )
        return ObservationSeries(spec.contaminant, spec.run_label, c0, samples)

    t_norm = log_time_norm(t).t_norm
    if spec.generator is Generator.EXP_MODEL:
        a, b = _require(p, ["a", "b"], "exp_model")
        removal = np.asarray(
            exp_model_eval(ExpModelParams(a=a, b=b), t_norm, thickness), dtype=float
        )
    elif spec.generator is Generator.GP_DRAW:
        (v,) = _require(p, ["v"], "gp_draw")
        weights = [float(p[k]) for k in ("w1", "w2", "w3") if k in p]
        if not weights:
            raise InvalidSpec("gp_draw generator needs at least w1")
        mean = float(p.get("mean", 0.5))
        hp = GpHyperParams(
            v=v, w=tuple(weights), epsilon=float(p.get("epsilon", DEFAULT_EPSILON))
        )
        # columns follow the fitting convention: (t_norm[, pH][, W])
        columns = [t_norm]
        if len(weights) == 3:
            columns.append(np.full(t.size, 7.0 if ph is None else float(ph)))
        if len(weights) >= 2:
            columns.append(np.full(t.size, thickness))
        x = np.column_stack(columns)
        cov = kernel_matrix(hp, x)
        cov[np.diag_indices_from(cov)] += hp.epsilon
        factor = cholesky(cov)
        removal = mean + factor.lower @ rng.standard_normal(t.size)
    else:
        raise InvalidSpec(f"unknown generator {spec.generator}")

    if spec.noise_sd > 0:
        removal = removal + spec.noise_sd * rng.standard_normal(t.size)
    removal = np.clip(removal, 0.0, 1.0)
    conc = c0 * (1.0 - removal)
    samples = tuple(
        Sample(
            t_raw=ti,
            concentration=ci,
            removal_fraction=ri,
            thickness_w=thickness,
            ph=ph,
        )
        for ti, ci, ri in zip(t, conc, removal)
    )
    return ObservationSeries(spec.contaminant, spec.run_label, c0, samples)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
        tmp = None
    except OSError as e:
        raise FileIOError(f"cannot write {path}: {e}") from e
    finally:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)


def write_series(series: ObservationSeries, path: str | Path) -> None:
    """Write a series back to canonical CSV (floats as shortest round-trip repr)."""
    has_conc = any(s.concentration is not None for s in series.samples)
    has_removal = any(s.removal_fraction is not None for s in series.samples)
    has_ph = any(s.ph is not None for s in series.samples)
    header = ["time_min"]
    if has_conc:
        header.append("concentration_mg_l")
    if has_removal:
        header.append("removal_pct")
    header.append("thickness_cm")
    if has_ph:
        header.append("ph")

    def fmt(x: float | None) -> str:
        return "" if x is None else repr(float(x))

    lines = [",".join(header)]
    for s in series.samples:
        row = [fmt(s.t_raw)]
        if has_conc:
            row.append(fmt(s.concentration))
        if has_removal:
            row.append(fmt(None if s.removal_fraction is None else 100.0 * s.removal_fraction))
        row.append(fmt(s.thickness_w))
        if has_ph:
            row.append(fmt(s.ph))
        lines.append(",".join(row))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def _report_payload(report: FitReport) -> dict:
    metrics = None
    if report.metrics is not None:
        m = report.metrics
        metrics = {"r2": m.r2, "rmse": m.rmse, "obs_pred_slope": m.obs_pred_slope, "n": m.n}
    predictions = []
    for row in report.predictions:
        entry = {"inputs": dict(row.inputs), "predicted": row.predicted, "observed": row.observed}
        if row.variance is not None:
            entry["variance"] = row.variance
        predictions.append(entry)
    return {
        "model_kind": report.model_kind.value,
        "parameters": report.parameters,
        "metrics": metrics,
        "predictions": predictions,
        "provenance": report.provenance,
    }


def report_csv_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".csv")


def write_report(report: FitReport, path: str | Path) -> None:
    """Serialize a report as JSON plus a flat CSV of prediction rows.

    The CSV sits next to the JSON (same stem, .csv) with one column per
    input dimension followed by observed and predicted.
    """
    path = Path(path)
    payload = _report_payload(report)
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    input_keys = sorted({k for row in report.predictions for k in row.inputs})
    lines = [",".join(input_keys + ["observed", "predicted"])]
    for row in report.predictions:
        cells = [repr(float(row.inputs[k])) if k in row.inputs else "" for k in input_keys]
        cells.append("" if row.observed is None else repr(float(row.observed)))
        cells.append(repr(float(row.predicted)))
        lines.append(",".join(cells))
    _atomic_write(report_csv_path(path), "\n".join(lines) + "\n")


def read_report(path: str | Path) -> FitReport:
    """Load a report written by :func:`write_report`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FileIOError(f"cannot read {path}: {e}") from e
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: not valid JSON ({e})") from e
    missing = [k for k in ("model_kind", "parameters", "metrics", "predictions", "provenance") if k not in payload]
    if missing:
        raise ValidationError(f"{path}: report is missing keys {missing}")
    metrics = None
    if payload["metrics"] is not None:
        m = payload["metrics"]
        metrics = FitMetrics(r2=m["r2"], rmse=m["rmse"], obs_pred_slope=m["obs_pred_slope"], n=m["n"])
    predictions = [
        PredictionRow(
            inputs=dict(row["inputs"]),
            predicted=row["predicted"],
            observed=row.get("observed"),
            variance=row.get("variance"),
        )
        for row in payload["predictions"]
    ]
    return FitReport(
        model_kind=ModelKind(payload["model_kind"]),
        parameters=payload["parameters"],
        metrics=metrics,
        predictions=predictions,
        provenance=payload["provenance"],
    )


@dataclass(frozen=True)
class FixtureInfo:
    contaminant: Contaminant
    c0: float
    final_removal: float  # removal fraction at the last sample time
    default_thickness_cm: float


#: Bundled reconstructions; see fixtures/README.md for how each was built.
FIXTURES: dict[str, FixtureInfo] = {
    "pcp_run1.csv": FixtureInfo(Contaminant.PB, 50.0, 0.72, 3.0),
    "pcp_run2.csv": FixtureInfo(Contaminant.PB, 50.0, 0.584, 3.0),
    "pcbc_run1.csv": FixtureInfo(Contaminant.PB, 50.0, 0.8694, 3.0),
    "pcbc_run2.csv": FixtureInfo(Contaminant.PB, 50.0, 0.8212, 3.0),
    "mb_run1.csv": FixtureInfo(Contaminant.METHYLENE_BLUE, 50.0, 0.9853613053949207, 1.0),
}


def fixture_dir() -> Path:
    """Bundled fixture directory, overridable via PABFIT_FIXTURE_DIR."""
    env = os.environ.get(FIXTURE_DIR_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("pabfit").joinpath("fixtures")))


def resolve_input(path: str | Path) -> Path:
    """An existing path as-is, else a bundled fixture of that name."""
    p = Path(path)
    if p.exists():
        return p
    candidate = fixture_dir() / p.name
    if candidate.exists():
        return candidate
    raise FileIOError(f"no such file: {path} (also not a bundled fixture)")


def load_fixture(name: str) -> ObservationSeries:
    if name not in FIXTURES:
        raise InvalidSpec(f"unknown fixture {name!r}; have {sorted(FIXTURES)}")
    info = FIXTURES[name]
    return load_series(
        DatasetFile(
            path=fixture_dir() / name,
            contaminant=info.contaminant,
            c0=info.c0,
            default_thickness_cm=info.default_thickness_cm,
        )
    )
