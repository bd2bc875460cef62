"""Command-line surface: fit, predict, synthesize, and merge reports.

Every subcommand reads CSV series and/or JSON reports, runs the matching
model module, and writes a report atomically. Identical options (and seed)
produce byte-identical outputs. Exit codes: 0 success, 2 parse errors,
3 validation errors, 4 numeric failures, 5 I/O failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    DEFAULT_SCHEDULE,
    DatasetFile,
    Generator,
    SyntheticSpec,
    _atomic_write,
    generate_synthetic,
    load_series,
    read_report,
    resolve_input,
    write_report,
    write_series,
)
from .domain import (
    Contaminant,
    FitReport,
    ModelKind,
    ObservationSeries,
    PredictionRow,
    to_removal_series,
    transform_time,
)
from .errors import InvalidInput, PabfitError, ParseError, ValidationError
from .expmodel import ExpModelParams, ExponentForm, exp_model_eval, fit_exp_model
from .gp import (
    DEFAULT_EPSILON,
    GpHyperParams,
    GpModel,
    build_inputs,
    default_hyperparams,
    gp_fit,
    gp_optimize_hyperparams,
    gp_predict,
)
from .kinetics import KineticFitResult, fit_first_order, predict_first_order
from .metrics import compute_metrics
from .numeric import DescentConfig

_CONTAMINANTS = {
    "pb": Contaminant.PB,
    "mb": Contaminant.METHYLENE_BLUE,
    "methylene_blue": Contaminant.METHYLENE_BLUE,
}


@contextmanager
def _stage(name: str):
    """Tag errors with the pipeline stage they came from."""
    try:
        yield
    except PabfitError as e:
        if not hasattr(e, "stage"):
            e.stage = name
        raise


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ParseError(f"{flag}: cannot parse {text!r} as comma-separated numbers") from None


def _parse_hyper(text: str) -> tuple[float | None, list[float], float | None]:
    """Parse 'v=0.3852,w=0.7839,2.8869,2.859e-9[,eps=1.5e-8]'."""
    v = None
    eps = None
    w: list[float] = []
    current = None
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "=" in tok:
            key, _, val = tok.partition("=")
            key = key.strip().lower()
            if key not in ("v", "w", "eps", "epsilon"):
                raise ParseError(f"--hyper: unknown key {key!r}")
            current = key
            tok = val
        elif current != "w":
            raise ParseError(f"--hyper: bare value {tok!r} outside the w list")
        try:
            num = float(tok)
        except ValueError:
            raise ParseError(f"--hyper: cannot parse {tok!r} as a number") from None
        if current == "v":
            v = num
        elif current in ("eps", "epsilon"):
            eps = num
        else:
            w.append(num)
    return v, w, eps


def _load(args, contaminant: Contaminant) -> ObservationSeries:
    path = resolve_input(args.input)
    return load_series(
        DatasetFile(
            path=path,
            contaminant=contaminant,
            c0=args.c0,
            default_thickness_cm=args.thickness,
        )
    )


def _provenance(args, command: str, extra: dict | None = None) -> dict:
    options = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("command", "func") and v is not None
    }
    prov = {
        "tool": "pabfit",
        "version": __version__,
        "command": command,
        "options": options,
    }
    if extra:
        prov.update(extra)
    return prov


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_fit_kinetics(args) -> int:
    contaminant = _CONTAMINANTS[args.contaminant]
    with _stage("load"):
        series = _load(args, contaminant)
    with _stage("fit"):
        fit = fit_first_order(series)
        t = series.times()
        log_obs = np.log(series.concentrations())
        log_pred = fit.k * t + fit.ln_c0_fit
        metrics = compute_metrics(log_obs, log_pred)
    rows = [
        PredictionRow(
            inputs={"time_min": float(ti)},
            predicted=float(ci_hat),
            observed=float(ci),
        )
        for ti, ci, ci_hat in zip(t, series.concentrations(), predict_first_order(fit, t))
    ]
    report = FitReport(
        model_kind=ModelKind.FIRST_ORDER,
        parameters={
            "k": fit.k,
            "ln_c0_fit": fit.ln_c0_fit,
            "n_points": fit.n_points,
            "degenerate": fit.degenerate,
            "c0": series.c0,
            "contaminant": contaminant.value,
        },
        metrics=metrics,
        predictions=rows,
        provenance=_provenance(args, "fit-kinetics", {"run_label": series.run_label}),
    )
    final_removal = to_removal_series(series)[-1].removal_fraction
    with _stage("write"):
        write_report(report, args.output)
    print(
        f"fit-kinetics: k={fit.k:.6g} 1/min, R^2={fit.r2:.4f}, "
        f"final removal {100.0 * final_removal:.2f}% -> {args.output}"
    )
    return 0


def _cmd_fit_exp(args) -> int:
    contaminant = _CONTAMINANTS[args.contaminant]
    with _stage("load"):
        series = _load(args, contaminant)
    with _stage("fit"):
        removal = to_removal_series(series)
        t_norm = transform_time(series)
        data = [
            (tn, r.thickness_w, r.removal_fraction)
            for tn, r in zip(t_norm.t_norm, removal)
        ]
        x0 = _floats(args.x0, "--x0")
        if len(x0) != 2:
            raise ValidationError(f"--x0 needs exactly two values, got {len(x0)}")
        config = DescentConfig(step=0.1, tolerance=1e-16, max_iters=args.max_iters)
        params = fit_exp_model(
            data,
            x0=x0,
            contaminant=contaminant,
            exponent_form=ExponentForm(args.exponent_form),
            config=config,
        )
        observed = np.array([r.removal_fraction for r in removal])
        predicted = np.array(
            [exp_model_eval(params, tn, r.thickness_w) for tn, r in zip(t_norm.t_norm, removal)]
        )
        metrics = compute_metrics(observed, predicted)
    rows = [
        PredictionRow(
            inputs={
                "time_min": r.t_raw,
                "t_norm": float(tn),
                "thickness_cm": r.thickness_w,
            },
            predicted=float(p),
            observed=float(o),
        )
        for tn, r, p, o in zip(t_norm.t_norm, removal, predicted, observed)
    ]
    report = FitReport(
        model_kind=ModelKind.EXPONENTIAL,
        parameters={
            "a": params.a,
            "b": params.b,
            "sse": params.sse,
            "converged": params.converged,
            "negative_parameters": bool(params.a < 0 or params.b < 0),
            "exponent_form": params.exponent_form.value,
            "time_denominator": t_norm.denominator,
            "c0": series.c0,
            "contaminant": contaminant.value,
        },
        metrics=metrics,
        predictions=rows,
        provenance=_provenance(args, "fit-exp", {"run_label": series.run_label}),
    )
    with _stage("write"):
        write_report(report, args.output)
    print(
        f"fit-exp: a={params.a:.6g}, b={params.b:.6g}, sse={params.sse:.3g}, "
        f"final removal {100.0 * float(observed[-1]):.2f}% -> {args.output}"
    )
    return 0


def _resolve_hyper(args, contaminant: Contaminant) -> GpHyperParams:
    base = default_hyperparams(contaminant, epsilon=args.epsilon)
    if args.hyper is None:
        return base
    v, w, eps = _parse_hyper(args.hyper)
    return GpHyperParams(
        v=base.v if v is None else v,
        w=tuple(w) if w else base.w,
        epsilon=base.epsilon if eps is None else eps,
    )


def _cmd_fit_gp(args) -> int:
    contaminant = _CONTAMINANTS[args.contaminant]
    with _stage("load"):
        series = _load(args, contaminant)
    with _stage("fit"):
        hp = _resolve_hyper(args, contaminant)
        x, y, ph_assumed = build_inputs(series, default_ph=args.default_ph)
        if x.shape[1] != hp.p:
            raise ValidationError(
                f"{hp.p} kernel weights but the {contaminant.value} design matrix has "
                f"{x.shape[1]} columns"
            )
        if args.optimize:
            hp = gp_optimize_hyperparams(x, y, hp, objective=args.objective)
        model = gp_fit(hp, x, y)
        pred = gp_predict(model, x)
        metrics = compute_metrics(y, pred.mean)
    t_norm = transform_time(series)
    removal = to_removal_series(series)
    rows = []
    for i, r in enumerate(removal):
        inputs = {"time_min": r.t_raw, "t_norm": float(x[i, 0])}
        if contaminant is Contaminant.PB:
            inputs["ph"] = float(x[i, 1])
        inputs["thickness_cm"] = float(x[i, -1])
        rows.append(
            PredictionRow(
                inputs=inputs,
                predicted=float(pred.mean[i]),
                observed=float(y[i]),
                variance=float(pred.variance[i]),
            )
        )
    report = FitReport(
        model_kind=ModelKind.GAUSSIAN_PROCESS,
        parameters={
            "v": hp.v,
            "w": list(hp.w),
            "epsilon": hp.epsilon,
            "p": hp.p,
            "time_denominator": t_norm.denominator,
            "jitter_used": model.factor.jitter_used,
            "default_ph": args.default_ph if contaminant is Contaminant.PB else None,
            "ph_assumed": ph_assumed,
            "optimized": bool(args.optimize),
            "objective": args.objective if args.optimize else None,
            "c0": series.c0,
            "contaminant": contaminant.value,
        },
        metrics=metrics,
        predictions=rows,
        provenance=_provenance(args, "fit-gp", {"run_label": series.run_label}),
    )
    with _stage("write"):
        write_report(report, args.output)
    print(
        f"fit-gp: v={hp.v:.6g}, R^2={metrics.r2:.4f}, "
        f"slope={metrics.obs_pred_slope:.4f} -> {args.output}"
    )
    return 0


def _rebuild_model(report: FitReport):
    """Reconstruct a fitted model from its report."""
    params = report.parameters
    if report.model_kind is ModelKind.FIRST_ORDER:
        return KineticFitResult(
            k=params["k"],
            ln_c0_fit=params["ln_c0_fit"],
            r2=report.metrics.r2 if report.metrics else 0.0,
            n_points=params.get("n_points", 3),
            degenerate=params.get("degenerate", False),
        )
    if report.model_kind is ModelKind.EXPONENTIAL:
        return ExpModelParams(
            a=params["a"],
            b=params["b"],
            sse=params.get("sse", 0.0),
            converged=params.get("converged", True),
            exponent_form=ExponentForm(params.get("exponent_form", "literal")),
        )
    hp = GpHyperParams(v=params["v"], w=tuple(params["w"]), epsilon=params["epsilon"])
    train = [row for row in report.predictions if row.observed is not None]
    if not train:
        raise ValidationError("GP report carries no training rows; cannot rebuild the model")
    cols = ["t_norm"] + (["ph"] if hp.p == 3 else []) + ["thickness_cm"]
    try:
        x = np.array([[row.inputs[c] for c in cols] for row in train])
    except KeyError as e:
        raise ValidationError(f"GP report rows lack input column {e}") from None
    y = np.array([row.observed for row in train])
    return gp_fit(hp, x, y)


def optimum_thickness_scan(model, w_grid, t_fixed: float, ph: float | None = None):
    """Best thickness on the grid at a fixed normalized time.

    Returns (w_star, predicted removal). Ties go to the smaller thickness
    (the cheaper barrier).
    """
    grid = sorted(float(w) for w in w_grid)
    if not grid:
        raise InvalidInput("thickness grid must be non-empty")
    if isinstance(model, ExpModelParams):
        preds = [float(exp_model_eval(model, t_fixed, w)) for w in grid]
    elif isinstance(model, GpModel):
        if model.hp.p == 3:
            if ph is None:
                ph = float(np.mean(model.x_train[:, 1]))
            rows = [[t_fixed, ph, w] for w in grid]
        else:
            rows = [[t_fixed, w] for w in grid]
        preds = [float(m) for m in gp_predict(model, np.array(rows)).mean]
    else:
        raise InvalidInput(
            f"thickness scan needs an exponential or GP model, got {type(model).__name__}"
        )
    best = int(np.argmax(preds))  # first max on the ascending grid = smallest W
    return grid[best], preds[best]


def _cmd_predict(args) -> int:
    with _stage("load"):
        report = read_report(resolve_input(args.model))
        model = _rebuild_model(report)
    with _stage("predict"):
        t_grid = _floats(args.t_grid, "--t-grid")
        if not t_grid:
            raise ValidationError("--t-grid must contain at least one time")
        rows = []
        if report.model_kind is ModelKind.FIRST_ORDER:
            if args.w_grid is not None:
                raise ValidationError("the first-order model has no thickness input")
            for t in t_grid:
                if t < 0:
                    raise ValidationError(f"time {t} min is negative")
                rows.append(
                    PredictionRow(
                        inputs={"time_min": t},
                        predicted=float(predict_first_order(model, t)),
                    )
                )
        else:
            denom = report.parameters.get("time_denominator")
            if denom is None:
                raise ValidationError("report lacks time_denominator; cannot map minutes")
            if args.w_grid is None:
                raise ValidationError("--w-grid is required for this model kind")
            w_grid = _floats(args.w_grid, "--w-grid")
            horizon = float(np.exp(denom))
            t_norms = []
            for t in t_grid:
                if not (1.0 < t <= horizon * (1.0 + 1e-12)):
                    raise ValidationError(
                        f"time {t} min outside the model's range (1, {horizon:.0f}]"
                    )
                t_norms.append(float(np.log(t) / denom))
            if report.model_kind is ModelKind.EXPONENTIAL:
                for t, tn in zip(t_grid, t_norms):
                    for w in w_grid:
                        rows.append(
                            PredictionRow(
                                inputs={"time_min": t, "t_norm": tn, "thickness_cm": w},
                                predicted=float(exp_model_eval(model, tn, w)),
                            )
                        )
            else:
                ph = args.ph
                if model.hp.p == 3 and ph is None:
                    ph = report.parameters.get("default_ph") or 7.0
                queries = []
                inputs_list = []
                for t, tn in zip(t_grid, t_norms):
                    for w in w_grid:
                        inputs = {"time_min": t, "t_norm": tn, "thickness_cm": w}
                        q = [tn, w]
                        if model.hp.p == 3:
                            inputs["ph"] = float(ph)
                            q = [tn, float(ph), w]
                        queries.append(q)
                        inputs_list.append(inputs)
                pred = gp_predict(model, np.array(queries))
                for inputs, m, var in zip(inputs_list, pred.mean, pred.variance):
                    rows.append(
                        PredictionRow(
                            inputs=inputs, predicted=float(m), variance=float(var)
                        )
                    )
    out = FitReport(
        model_kind=report.model_kind,
        parameters=report.parameters,
        metrics=None,
        predictions=rows,
        provenance=_provenance(args, "predict", {"model_report": str(args.model)}),
    )
    with _stage("write"):
        write_report(out, args.output)
    print(f"predict: {len(rows)} rows -> {args.output}")
    return 0


def _cmd_synth(args) -> int:
    generator = Generator(args.generator.replace("-", "_"))
    params: dict[str, float] = {"c0": args.c0, "thickness_cm": args.thickness}
    if args.ph is not None:
        params["ph"] = args.ph
    if args.k is not None:
        params["k"] = args.k
    if args.a is not None:
        params["a"] = args.a
    if args.b is not None:
        params["b"] = args.b
    if args.v is not None:
        params["v"] = args.v
    if args.w is not None:
        for i, wi in enumerate(_floats(args.w, "--w"), start=1):
            params[f"w{i}"] = wi
    if args.mean is not None:
        params["mean"] = args.mean
    if args.epsilon is not None:
        params["epsilon"] = args.epsilon
    schedule = DEFAULT_SCHEDULE if args.schedule is None else _floats(args.schedule, "--schedule")
    spec = SyntheticSpec(
        generator=generator,
        parameters=params,
        time_schedule=schedule,
        noise_sd=args.noise_sd,
        seed=args.seed,
        contaminant=_CONTAMINANTS[args.contaminant],
        run_label=Path(args.output).stem,
    )
    with _stage("generate"):
        series = generate_synthetic(spec)
    with _stage("write"):
        write_series(series, args.output)
    print(f"synth: {len(series.samples)} samples -> {args.output}")
    return 0


def _cmd_report(args) -> int:
    comparison = []
    with _stage("load"):
        loaded = [(path, read_report(resolve_input(path))) for path in args.inputs]
    with _stage("scan"):
        for path, report in loaded:
            entry = {
                "source": Path(path).name,
                "model_kind": report.model_kind.value,
                "parameters": report.parameters,
                "metrics": None
                if report.metrics is None
                else {
                    "r2": report.metrics.r2,
                    "rmse": report.metrics.rmse,
                    "obs_pred_slope": report.metrics.obs_pred_slope,
                    "n": report.metrics.n,
                },
                "thickness_scan": None,
            }
            if args.scan_w is not None and report.model_kind is not ModelKind.FIRST_ORDER:
                model = _rebuild_model(report)
                w_star, removal = optimum_thickness_scan(
                    model, _floats(args.scan_w, "--scan-w"), args.scan_t, ph=args.ph
                )
                entry["thickness_scan"] = {
                    "t_norm": args.scan_t,
                    "w_grid": sorted(_floats(args.scan_w, "--scan-w")),
                    "optimum_w_cm": w_star,
                    "removal_at_optimum": removal,
                }
            comparison.append(entry)
    payload = {
        "model_kind": "comparison",
        "parameters": {},
        "metrics": None,
        "predictions": [],
        "comparison": comparison,
        "provenance": _provenance(args, "report"),
    }
    with _stage("write"):
        _atomic_write(Path(args.output), json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for entry in comparison:
        scan = entry["thickness_scan"]
        if scan is not None:
            print(
                f"report: {entry['source']} optimum W={scan['optimum_w_cm']:g} cm, "
                f"removal {100.0 * scan['removal_at_optimum']:.2f}%"
            )
    print(f"report: merged {len(comparison)} fits -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_series_options(sub, thickness_default: float) -> None:
    sub.add_argument("--input", required=True, help="input CSV (path or bundled fixture name)")
    sub.add_argument("--c0", type=float, default=50.0, help="influent concentration, mg/L")
    sub.add_argument(
        "--contaminant", choices=sorted(_CONTAMINANTS), default="pb", help="contaminant kind"
    )
    sub.add_argument(
        "--thickness",
        type=float,
        default=thickness_default,
        help="barrier thickness (cm) used when the file has no thickness column",
    )
    sub.add_argument("--output", required=True, help="output report JSON path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pabfit",
        description="Fit and evaluate contaminant-removal models for permeable adsorptive barriers.",
    )
    parser.add_argument("--version", action="version", version=f"pabfit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-kinetics", help="first-order log-linear kinetic fit")
    _add_series_options(p, 3.0)
    p.set_defaults(func=_cmd_fit_kinetics)

    p = sub.add_parser("fit-exp", help="exponential removal model fit")
    _add_series_options(p, 3.0)
    p.add_argument("--x0", default="1,1", help="initial a,b for the descent")
    p.add_argument(
        "--exponent-form",
        choices=[f.value for f in ExponentForm],
        default=ExponentForm.LITERAL.value,
        help="read the model exponent as a+b+W (literal) or a*(b+W) (product)",
    )
    p.add_argument("--max-iters", type=int, default=20000, help="descent iteration cap")
    p.set_defaults(func=_cmd_fit_exp)

    p = sub.add_parser("fit-gp", help="Gaussian Process regression fit")
    _add_series_options(p, 3.0)
    p.add_argument(
        "--hyper",
        default=None,
        help="hyperparameters, e.g. v=0.3852,w=0.7839,2.8869,2.859e-9[,eps=1.5e-8]; "
        "defaults to the per-contaminant reference values",
    )
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="diagonal jitter")
    p.add_argument("--optimize", action="store_true", help="refine hyperparameters by descent")
    p.add_argument(
        "--objective",
        choices=["nlml", "sse"],
        default="nlml",
        help="optimization objective (marginal likelihood or leave-one-out SSE)",
    )
    p.add_argument(
        "--default-ph",
        type=float,
        default=7.0,
        help="pH used for lead when the file has no ph column (flagged in the report)",
    )
    p.set_defaults(func=_cmd_fit_gp)

    p = sub.add_parser("predict", help="evaluate a saved model on a grid")
    p.add_argument("--model", required=True, help="fit report JSON to load")
    p.add_argument("--t-grid", required=True, help="times in raw minutes, comma-separated")
    p.add_argument("--w-grid", default=None, help="thicknesses in cm, comma-separated")
    p.add_argument("--ph", type=float, default=None, help="pH for 3-input GP queries")
    p.add_argument("--output", required=True, help="output report JSON path")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("synth", help="generate a deterministic synthetic series")
    p.add_argument(
        "--generator",
        choices=["first-order", "exp-model", "gp-draw"],
        required=True,
    )
    p.add_argument("--k", type=float, default=None, help="first-order rate constant, 1/min")
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--v", type=float, default=None, help="GP signal variance")
    p.add_argument("--w", default=None, help="GP weights w1[,w2[,w3]]")
    p.add_argument("--mean", type=float, default=None, help="GP draw mean removal")
    p.add_argument("--epsilon", type=float, default=None, help="GP draw jitter")
    p.add_argument("--c0", type=float, default=50.0)
    p.add_argument("--thickness", type=float, default=3.0)
    p.add_argument("--ph", type=float, default=None)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schedule", default=None, help="override sample times (minutes)")
    p.add_argument(
        "--contaminant", choices=sorted(_CONTAMINANTS), default="pb"
    )
    p.add_argument("--output", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="merge fit reports into a comparison table")
    p.add_argument("--inputs", nargs="+", required=True, help="fit report JSON files")
    p.add_argument("--scan-w", default=None, help="thickness grid for the optimum scan")
    p.add_argument("--scan-t", type=float, default=1.0, help="normalized time for the scan")
    p.add_argument("--ph", type=float, default=None, help="pH for 3-input GP scans")
    p.add_argument("--output", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PabfitError as e:
        stage = getattr(e, "stage", args.command)
        print(
            f"error: stage={stage} code={e.exit_code} kind={type(e).__name__}: {e}",
            file=sys.stderr,
        )
        return e.exit_code
    except OSError as e:
        print(f"error: stage=io code=5 kind=OSError: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
