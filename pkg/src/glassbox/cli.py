"""Command-line interface: fit, compare, extract, pgof-sim, oracle and reproduce.

Exit codes: 0 success, 2 input error, 3 degenerate input, 4 capacity guard.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import comparators, hdmr, oracles, pgof, sensitivity
from .basis import BasisError, BasisSpec
from .blackbox import (
    CapacityError,
    TreeEnsemble,
    fourier_smooth,
    train_gbr,
    train_rf,
    tree_hdmr,
)
from .blackbox.tree_hdmr import LAMBDA_GRID
from .measure import (
    CsvError,
    EmpiricalMeasure,
    GaussianMeasure,
    MeasureError,
    ProductMeasure,
    Uniform,
    load_csv,
    power_law,
)

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_CAPACITY = 0, 2, 3, 4


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _floats(text: str) -> list:
    if text is None or not text.strip():
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list:
    return [int(v) for v in _floats(text)]


def threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("HDMR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"HDMR_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text if text.endswith("\n") else text + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def _report_files(out: Path, model: hdmr.HdmrModel, report, extra: dict, tree=None) -> str:
    _write(out / "model.json", model.to_json(indent=2))
    payload = report.to_dict()
    payload.update(extra)
    _write(out / "report.json", _dump(payload))
    text = report.to_text(tree=tree)
    _write(out / "report.txt", text)
    return text


def _capture(fn, *a, **kw):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = fn(*a, **kw)
    return result, sorted({str(w.message) for w in caught})


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _analytic_measure(kind: str, emp: EmpiricalMeasure, rho):
    x = emp.samples
    if kind == "gaussian":
        corr = np.corrcoef(x, rowvar=False) if x.shape[1] > 1 else np.ones((1, 1))
        if rho is not None:
            if x.shape[1] != 2:
                raise InputError("--rho applies to two-variable data only")
            corr = np.array([[1.0, rho], [rho, 1.0]])
        return GaussianMeasure(x.mean(axis=0), x.std(axis=0), corr)
    lo, hi = x.min(axis=0), x.max(axis=0)
    if np.any(hi <= lo):
        raise InputError("product measure needs non-constant predictor columns")
    return ProductMeasure(tuple(Uniform(float(a), float(b)) for a, b in zip(lo, hi)))


def cmd_fit(args) -> int:
    emp, y = load_csv(args.input, args.response, standardize=args.standardize)
    if np.ptp(y) == 0:
        raise sensitivity.DegenerateModelError("response is constant: total variance 0")
    spec = BasisSpec(args.basis, args.degree, args.order)
    model, notes = _capture(hdmr.fit, y, emp, spec, ridge=args.ridge)
    if args.measure != "empirical":
        # refit the sample surrogate under the analytic law
        surrogate = model
        meas = _analytic_measure(args.measure, emp, args.rho)
        model, more = _capture(hdmr.fit, lambda x: hdmr.evaluate(surrogate, x), meas, spec)
        model = hdmr.HdmrModel(
            model.constant, model.components, model.order, model.covariance, model.total_variance,
            model.n_vars, model.fitting_measure_id, emp.variable_names, model.metadata,
        )
        notes += more
    report = sensitivity.scsa(model)
    extra = {"warnings": notes, "measure": args.measure, "basis": args.basis, "degree": args.degree, "order": args.order}
    print(_report_files(_outdir(args), model, report, extra))
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

TABLE_COLUMNS = ("rho", "HDMR", "PD_marginal", "PD_conditional", "DGSM_f", "DGSM_var")


def _predictor_table(predictor, rhos, mean, stdev, degree) -> dict:
    """Comparator table for an arbitrary bivariate predictor; DGSM of Var f is not defined."""
    table = {r: [] for r in comparators.TABLE_ROWS}
    spec = BasisSpec("monomial", degree, 2)
    for rho in rhos:
        meas = GaussianMeasure.bivariate(float(rho), mean, stdev)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model = hdmr.fit(predictor, meas, spec)
        rep = sensitivity.scsa(model)
        var = model.total_variance
        table["HDMR"].append(rep.S((0,)) + rep.S((1,)))
        for row, fn in (("PD (marg.)", comparators.pd_marginal), ("PD (cond.)", comparators.pd_conditional)):
            profs = [fn(predictor, meas, (i,), grid=np.array([0.0, 1.0])) for i in (0, 1)]
            s = comparators.pd_sensitivity(profs, meas, total_variance=var)
            table[row].append(s[(0,)][2] + s[(1,)][2])
        d = comparators.dgsm_indices(predictor, meas, [(1, 0), (0, 1), (1, 1)])
        table["DGSM f"].append(d[(1, 0)] + d[(0, 1)])
        table["DGSM var"].append(float("nan"))
    return table


def _profiles_csv(predictor, meas, components, grid: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(("x", "hdmr_f1", "pd_marginal_1", "pd_conditional_1", "hdmr_f2", "pd_marginal_2", "pd_conditional_2"))
    cols = []
    for i in (0, 1):
        pts = np.zeros((grid.size, 2))
        pts[:, i] = grid
        cols.append(np.asarray(components[(i,)](pts), dtype=float))
        cols.append(comparators.pd_marginal(predictor, meas, (i,), grid=grid).values)
        cols.append(comparators.pd_conditional(predictor, meas, (i,), grid=grid).values)
    for k, g in enumerate(grid):
        w.writerow([f"{g:.6g}"] + [f"{c[k]:.10g}" for c in cols])
    return buf.getvalue()


def cmd_compare(args) -> int:
    rhos = _floats(args.rho)
    if any(not -1 <= r <= 1 for r in rhos):
        raise InputError("correlations must lie in [-1, 1]")
    mean, stdev = tuple(_floats(args.mean)), tuple(_floats(args.stdev))
    if args.target == "gauss-poly":
        params = oracles.GaussPolyParams(tuple(_floats(args.beta)), mean, stdev)
        table = comparators.first_order_table(params, rhos)
        predictor = oracles.gauss_poly_target(params)
    elif Path(args.target).is_file():
        model = hdmr.HdmrModel.from_json(Path(args.target).read_text())
        if model.n_vars != 2:
            raise InputError("model comparison needs a two-variable model")
        params = None

        def predictor(x):
            return hdmr.evaluate(model, x)

        table = _predictor_table(predictor, rhos, mean, stdev, args.degree)
    else:
        raise InputError(f"unknown target {args.target!r}; use gauss-poly or a model JSON file")
    out = _outdir(args)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(TABLE_COLUMNS)
    for k, r in enumerate(rhos):
        w.writerow([f"{r:g}"] + [f"{table[row][k]:.10g}" for row in comparators.TABLE_ROWS])
    _write(out / "table.csv", buf.getvalue())
    text = comparators.format_table(table, rhos) if rhos else ""
    _write(out / "table.txt", text)
    grid = np.linspace(-3, 3, args.grid_points)
    for r in rhos:
        p = params.with_rho(r) if params else None
        meas = GaussianMeasure.bivariate(r, mean, stdev)
        if p is not None:
            try:
                comps = oracles.gauss_poly_components(p)
            except oracles.OracleError:
                comps = {(0,): lambda x: np.full(x.shape[0], np.nan), (1,): lambda x: np.full(x.shape[0], np.nan)}
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fitted = hdmr.fit(predictor, meas, BasisSpec("monomial", args.degree, 2))
            comps = {u: fitted.components[u].evaluate for u in ((0,), (1,))}
        _write(out / f"profiles_rho{r:g}.csv", _profiles_csv(predictor, meas, comps, grid))
    if text:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------


def _extract_data(args):
    if args.input:
        emp, y = load_csv(args.input, args.response, standardize=args.standardize)
        return emp, y
    if args.oracle != "ishigami":
        raise InputError("extract needs --input CSV or --oracle ishigami")
    rng = np.random.default_rng(args.seed)
    x = rng.uniform(-np.pi, np.pi, (args.samples, 3))
    return EmpiricalMeasure(x), oracles.ishigami(oracles.IshigamiParams(args.a, args.b), x)


def cmd_extract(args) -> int:
    emp, y = _extract_data(args)
    if np.ptp(y) == 0:
        raise sensitivity.DegenerateModelError("response is constant: total variance 0")
    if args.ensemble:
        ensembles = []
        for p in args.ensemble:
            try:
                ensembles.append(TreeEnsemble.from_json(Path(p).read_text()))
            except (OSError, json.JSONDecodeError, KeyError) as exc:
                raise InputError(f"cannot read ensemble {p}: {exc}") from None
        if any(e.n_vars != emp.dim for e in ensembles):
            raise InputError("ensemble input dimension differs from the data")
    else:
        depths = _ints(args.depths)
        if not depths:
            raise InputError("--depths must list at least one depth")
        if args.model == "gbr":
            ensembles = [train_gbr(emp.samples, y, d, args.trees, args.learning_rate, args.seed) for d in depths]
        else:
            ensembles = [train_rf(emp.samples, y, d, args.trees, args.seed) for d in depths]
    out = _outdir(args)
    if args.save_ensembles:
        for k, e in enumerate(ensembles):
            _write(out / f"ensemble_{k}.json", e.to_json())
    grid = _floats(args.lambda_grid) if args.lambda_grid else list(LAMBDA_GRID)
    model, notes = _capture(tree_hdmr, ensembles, emp, y, grid, args.folds, args.order, args.seed)
    report = sensitivity.scsa(model)
    tree = np.mean([e.split_fraction_importance() for e in ensembles], axis=0)
    extra = {"warnings": notes, "lambda": model.metadata["lam"], "split_fraction": tree.tolist()}
    if args.smooth:
        box = emp.bounds()
        m = args.grid_points
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(("variable", "x", "component", "smoothed"))
        for i in range(emp.dim):
            if (i,) not in model.components:
                continue
            c = model.components[(i,)]
            s = fourier_smooth(c, args.smooth, box)
            pts = np.tile(box.mean(axis=1), (m, 1))
            pts[:, i] = np.linspace(box[i, 0], box[i, 1], m)
            for xv, a, b in zip(pts[:, i], c.evaluate(pts), s.evaluate(pts)):
                w.writerow([i + 1, f"{xv:.6g}", f"{a:.10g}", f"{b:.10g}"])
        _write(out / "smoothed_components.csv", buf.getvalue())
    print(_report_files(out, model, report, extra, tree=tree))
    return EXIT_OK


# ---------------------------------------------------------------------------
# pgof-sim
# ---------------------------------------------------------------------------


def cmd_pgof(args) -> int:
    if args.k < 2:
        raise InputError("--k must be >= 2")
    law = power_law(args.k, args.alpha)
    sim = pgof.simulate(args.n, law, args.replicates, args.seed, threads(args))
    summary = sim.summary()
    summary["alpha"] = args.alpha
    out = _outdir(args)
    _write(out / "summary.json", _dump(summary))
    _write(out / "records.csv", sim.records_csv())
    _write(out / "histogram.csv", sim.histogram_csv())
    print(_dump(summary))
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def oracle_values(args) -> dict:
    name = args.name
    if name == "ishigami":
        p = oracles.IshigamiParams(args.a, args.b)
        out = dict(oracles.ishigami_indices(p))
        out["variance"] = oracles.ishigami_variance(p)
    elif name == "gauss-poly":
        p = oracles.GaussPolyParams(tuple(_floats(args.beta)), tuple(_floats(args.mean)), tuple(_floats(args.stdev)), args.rho)
        out = oracles.gauss_poly_indices(p)
    elif name == "product":
        shares = oracles.product_shares(args.n, args.rho)
        out = {"shares": shares.tolist(), "total_importance": oracles.product_total_importance(args.n, args.rho)}
    elif name == "esp":
        shares = oracles.esp_shares(args.n, args.rho)
        out = {"shares": shares.tolist()}
    else:
        raise InputError(f"unknown oracle {name!r}")
    return {"oracle": name, **{k: float(v) if np.isscalar(v) else v for k, v in out.items()}}


def cmd_oracle(args) -> int:
    text = _dump(oracle_values(args))
    if args.out:
        _write(_outdir(args) / f"oracle_{args.name}.json", text)
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------


def _check(lines: list, name: str, ok: bool, detail: str) -> None:
    lines.append({"check": name, "pass": bool(ok), "detail": detail})


def cmd_reproduce(args) -> int:
    quick = args.scale == "quick"
    checks = []
    # diagnostics table
    table = comparators.first_order_table(oracles.GaussPolyParams(), [-1.0, 0.0, 1.0])
    expect = {
        "HDMR": (1, 2 / 3, 1),
        "PD (marg.)": (2, 2 / 3, 4 / 3),
        "PD (cond.)": (4, 2 / 3, 4),
        "DGSM f": (0.8, 0.8, 0.8),
        "DGSM var": (0, 2 / 3, 2 / 3),
    }
    for row, vals in expect.items():
        got = table[row]
        _check(checks, f"table {row}", np.allclose(got, vals, atol=1e-6), " ".join(f"{v:.4f}" for v in got))
    # PGOF regimes
    reps = 500 if quick else 5000
    law = power_law(2500, 0.5)
    sims = {n: pgof.simulate(n, law, reps, args.seed, threads(args)).summary() for n in (50, 500, 5000)}
    mean_tol = 0.03 if quick else 0.01
    var_tol = 0.3 if quick else 0.1
    for n, s in sims.items():
        _check(checks, f"pgof mean n={n}", abs(s["mean_chi2"] / 2499 - 1) <= mean_tol, f"{s['mean_chi2']:.1f}")
        _check(checks, f"pgof var hdmr n={n}", abs(s["var_chi2_hdmr"] / s["hdmr_variance_formula"] - 1) <= var_tol, f"{s['var_chi2_hdmr']:.0f}")
    _check(checks, "pgof variance ratio n=50", sims[50]["var_ratio"] >= 5, f"{sims[50]['var_ratio']:.2f}")
    _check(checks, "pgof KS at lambda=10", sims[500]["ks_chi2_hdmr"] < sims[500]["ks_chi2"],
           f"{sims[500]['ks_chi2_hdmr']:.3f} vs {sims[500]['ks_chi2']:.3f}")
    # Ishigami
    idx = oracles.ishigami_indices(oracles.IshigamiParams())
    _check(checks, "ishigami analytic", np.allclose([idx["S1"], idx["S2"], idx["S13"]], [0.31, 0.44, 0.24], atol=0.005),
           f"{idx['S1']:.4f} {idx['S2']:.4f} {idx['S13']:.4f}")
    n_samples, n_trees = (2000, 300) if quick else (5000, 1000)
    rng = np.random.default_rng(args.seed)
    x = rng.uniform(-np.pi, np.pi, (n_samples, 3))
    y = oracles.ishigami(oracles.IshigamiParams(), x)
    ens = [train_gbr(x, y, d, n_trees, 0.1, args.seed) for d in (1, 2, 3)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = sensitivity.scsa(tree_hdmr(ens, EmpiricalMeasure(x), y, seed=args.seed))
    s1, s2, s13 = rep.S((0,)), rep.S((1,)), rep.S((0, 2))
    ok = 0.27 <= s1 <= 0.33 and 0.42 <= s2 <= 0.48 and 0.16 <= s13 <= 0.24
    _check(checks, "ishigami tree extraction", ok, f"{s1:.3f} {s2:.3f} {s13:.3f}")
    out = _outdir(args)
    _write(out / "summary.json", _dump({"scale": args.scale, "seed": args.seed, "checks": checks}))
    text = "\n".join(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']}: {c['detail']}" for c in checks)
    _write(out / "summary.txt", text)
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common(p, out_required=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default HDMR_THREADS or core count)")
    p.add_argument("--out", required=out_required, default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glassbox", description="HDMR glass-box modelling and sensitivity analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit an HDMR to CSV data and report sensitivities")
    p.add_argument("--input", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--basis", choices=("monomial", "fourier"), default="monomial")
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--measure", choices=("empirical", "gaussian", "product"), default="empirical")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--standardize", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="HDMR vs partial dependence vs DGSM across correlations")
    p.add_argument("--target", default="gauss-poly", help="gauss-poly or a two-variable model JSON file")
    p.add_argument("--rho", default="-1,0,1", help="comma-separated correlations")
    p.add_argument("--beta", default="1,1,1,1")
    p.add_argument("--mean", default="0,0")
    p.add_argument("--stdev", default="1,1")
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--grid-points", type=int, default=61)
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("extract", help="glass-box HDMR of tree ensembles")
    p.add_argument("--input")
    p.add_argument("--response")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--oracle", default="ishigami")
    p.add_argument("--a", type=float, default=7.0)
    p.add_argument("--b", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--ensemble", nargs="+", help="ensemble JSON files instead of training")
    p.add_argument("--model", choices=("gbr", "rf"), default="gbr")
    p.add_argument("--depths", default="1,2,3")
    p.add_argument("--trees", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--lambda-grid", default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--smooth", type=int, default=0, help="Fourier degree for smoothed first-order components")
    p.add_argument("--grid-points", type=int, default=101)
    p.add_argument("--save-ensembles", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("pgof-sim", help="Monte Carlo of chi-square and its HDMR variant")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--replicates", type=int, default=5000)
    _common(p)
    p.set_defaults(func=cmd_pgof)

    p = sub.add_parser("oracle", help="closed-form indices")
    p.add_argument("name", help="ishigami, gauss-poly, product or esp")
    p.add_argument("--a", type=float, default=7.0)
    p.add_argument("--b", type=float, default=0.1)
    p.add_argument("--beta", default="1,1,1,1")
    p.add_argument("--mean", default="0,0")
    p.add_argument("--stdev", default="1,1")
    p.add_argument("--rho", type=float, default=0.0, help="correlation, or coefficient of variation for product/esp")
    p.add_argument("--n", type=int, default=5)
    _common(p, out_required=False)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("reproduce", help="desk-scale reproduction with a pass/fail summary")
    p.add_argument("--scale", choices=("desk", "quick"), default="desk")
    _common(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CapacityError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (sensitivity.DegenerateModelError, oracles.DegenerateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except CsvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BasisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY if "too large" in str(exc) else EXIT_INPUT
    except (InputError, MeasureError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
