"""Command-line front end: combine, reconcile, simulate and evaluate.

Every run writes its outputs atomically (temp file + rename) and drops a
``<output>.manifest.json`` recording the command, options, seed and library
version, so reruns from the same inputs are byte-identical. Numeric output is
printed with 17 significant digits and round-trips exactly.

Exit codes: 0 success, 2 bad arguments, 3 data/schema error, 4 numerical
failure (non-SPD covariance, rank deficiency).
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import click
import numpy as np

from . import __version__
from .coherent import mint_reconcile, occ, scr, src
from .combiners import combine_multi_task, combine_single_task, single_task_weights
from .constraints import read_constraint_file
from .covariance import (
    block_by_expert,
    block_by_variable,
    diagonal_mse,
    sample_mse,
    shrink,
)
from .exceptions import DataError, NumericalError
from .metrics import accuracy, dm_test
from .panel import from_availability
from .simulation import SimulationConfig, run_experiment

COV_CHOICES = {
    "sample": lambda resid, panel: sample_mse(resid),
    "shrink": lambda resid, panel: shrink(resid),
    "bd-expert": lambda resid, panel: block_by_expert(resid, panel, shrink_blocks=False),
    "bd-expert-shrink": lambda resid, panel: block_by_expert(resid, panel, shrink_blocks=True),
    "bd-variable": lambda resid, panel: block_by_variable(resid, panel, shrink_blocks=False),
    "bd-variable-shrink": lambda resid, panel: block_by_variable(resid, panel, shrink_blocks=True),
    "diag": lambda resid, panel: diagonal_mse(resid),
}

_SCHEME_FLAGS = {"ew": "ew", "ow-var": "ow_var", "ow-cov": "ow_cov"}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(output: Path, command: str, params: dict) -> None:
    manifest = {
        "command": command,
        "options": {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
        "version": __version__,
    }
    _write_atomic(Path(str(output) + ".manifest.json"),
                  json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# -- input readers -------------------------------------------------------------


def _read_csv_dicts(path: Path, required: set[str], what: str) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{what} file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
            raise DataError(
                f"{what} CSV {path} must have columns {sorted(required)}"
            )
        return [row for row in reader]


def _read_panel_csv(path: Path, sys_):
    """Panel CSV (series,expert[,horizon],value) -> per-horizon panels.

    Expert order is first appearance over the whole file; all horizons must
    share the same availability so one weight matrix applies throughout.
    """
    rows = _read_csv_dicts(path, {"series", "expert", "value"}, "panel")
    experts: list[str] = []
    cells: dict[int, dict[tuple[int, int], float]] = {}
    for row in rows:
        series, expert = row["series"].strip(), row["expert"].strip()
        try:
            h = int(row.get("horizon") or 1)
        except ValueError as exc:
            raise DataError(f"bad horizon {row.get('horizon')!r} in panel CSV") from exc
        i = sys_.index_of(series)
        if expert not in experts:
            experts.append(expert)
        j = experts.index(expert)
        try:
            value = float(row["value"])
        except ValueError as exc:
            raise DataError(f"non-numeric panel value {row['value']!r}") from exc
        bucket = cells.setdefault(h, {})
        if (i, j) in bucket:
            raise DataError(
                f"duplicate forecast for series {series!r}, expert {expert!r}, horizon {h}"
            )
        bucket[(i, j)] = value
    if not cells:
        raise DataError(f"panel CSV {path} holds no forecasts")

    horizons = sorted(cells)
    pair_set = set(cells[horizons[0]])
    for h in horizons[1:]:
        if set(cells[h]) != pair_set:
            raise DataError("panel availability differs across horizons")
    avail = np.zeros((sys_.n, len(experts)), dtype=bool)
    for i, j in pair_set:
        avail[i, j] = True
    panels = {}
    for h in horizons:
        values = [cells[h][(i, j)] for j in range(len(experts)) for i in range(sys_.n)
                  if avail[i, j]]
        panels[h] = from_availability(avail, sys_, experts=tuple(experts), values=np.array(values))
    return panels


def _read_residual_csv(path: Path, panel) -> np.ndarray:
    """Residual CSV (t,series,expert,value) -> m x T matrix in panel order."""
    rows = _read_csv_dicts(path, {"t", "series", "expert", "value"}, "residual")
    expert_index = {name: j for j, name in enumerate(panel.experts)}
    row_of = {pair: r for r, pair in enumerate(panel.pairs)}
    cells: dict[tuple[int, int], float] = {}
    times: set[int] = set()
    for row in rows:
        try:
            t = int(row["t"])
            value = float(row["value"])
        except ValueError as exc:
            raise DataError(f"bad residual row {row!r}") from exc
        series, expert = row["series"].strip(), row["expert"].strip()
        if series not in panel.labels:
            raise DataError(f"unknown series {series!r} in residual CSV")
        j = expert_index.get(expert)
        if j is None:
            raise DataError(f"unknown expert {expert!r} in residual CSV")
        r = row_of.get((panel.labels.index(series), j))
        if r is None:
            raise DataError(f"residual for pair ({series!r}, {expert!r}) not in the panel")
        if (r, t) in cells:
            raise DataError(f"duplicate residual cell for {series!r}/{expert!r} at t={t}")
        cells[(r, t)] = value
        times.add(t)
    t_sorted = sorted(times)
    if len(t_sorted) < 2:
        raise DataError("need residuals for at least two time points")
    out = np.full((panel.m, len(t_sorted)), np.nan)
    t_pos = {t: k for k, t in enumerate(t_sorted)}
    for (r, t), value in cells.items():
        out[r, t_pos[t]] = value
    if np.isnan(out).any():
        raise DataError("residual CSV does not cover every (series, expert, t) cell")
    return out


def _forecast_csv(results: dict[int, np.ndarray], labels) -> str:
    horizons = sorted(results)
    if horizons == [1]:
        rows = [[labels[i], _fmt(results[1][i])] for i in range(len(labels))]
        return _csv_text(["series", "value"], rows)
    rows = [
        [labels[i], h, _fmt(results[h][i])]
        for h in horizons
        for i in range(len(labels))
    ]
    return _csv_text(["series", "horizon", "value"], rows)


# -- command group ---------------------------------------------------------------


@click.group(name="cocomb")
@click.version_option(__version__)
def cli() -> None:
    """Coherent combination of multi-expert forecasts under linear constraints."""


_common_inputs = [
    click.option("--constraints", "constraints_path", required=True, type=Path,
                 help="Constraint file (JSON with A/upper/bottom or C/vars, or CSV)."),
    click.option("--panel", "panel_path", required=True, type=Path,
                 help="Base forecast CSV: series,expert[,horizon],value."),
    click.option("--residuals", "residuals_path", type=Path, default=None,
                 help="In-sample residual CSV: t,series,expert,value."),
    click.option("--cov", "cov_kind", default="shrink",
                 type=click.Choice(sorted(COV_CHOICES)), show_default=True,
                 help="Covariance estimator; the shrinkage intensity is the "
                      "closed-form estimate on standardized residuals, clamped to [0,1]."),
    click.option("--output", "output_path", required=True, type=Path,
                 help="Output CSV path."),
]


def _with_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


def _load_inputs(constraints_path, panel_path, residuals_path, cov_kind, need_cov):
    sys_, _ = read_constraint_file(constraints_path)
    panels = _read_panel_csv(panel_path, sys_)
    first = panels[sorted(panels)[0]]
    cov = None
    resid = None
    if residuals_path is not None:
        resid = _read_residual_csv(residuals_path, first)
        cov = COV_CHOICES[cov_kind](resid, first)
    elif need_cov:
        raise DataError("this method requires --residuals to estimate a covariance")
    return sys_, panels, first, cov, resid


@cli.command()
@_with_options(_common_inputs)
@click.option("--scheme", default="ew", show_default=True,
              type=click.Choice(["ew", "ow-var", "ow-cov", "multi-task"]),
              help="Combination scheme; ow-cov solves for non-negative weights "
                   "summing to one via an active-set iteration.")
def combine(constraints_path, panel_path, residuals_path, cov_kind, output_path, scheme):
    """Combine the panel per variable (or jointly) without reconciling."""
    need_cov = scheme != "ew"
    sys_, panels, first, cov, _ = _load_inputs(
        constraints_path, panel_path, residuals_path, cov_kind, need_cov
    )
    results = {}
    for h, panel_h in panels.items():
        if scheme == "multi-task":
            results[h] = combine_multi_task(panel_h, cov).y_c
        else:
            results[h] = combine_single_task(panel_h, _SCHEME_FLAGS[scheme], cov)
    _write_atomic(output_path, _forecast_csv(results, sys_.labels))
    _write_manifest(output_path, "combine", {
        "constraints": constraints_path, "panel": panel_path,
        "residuals": residuals_path, "cov": cov_kind, "scheme": scheme,
        "output": output_path,
    })


@cli.command()
@_with_options(_common_inputs)
@click.option("--method", default="occ", show_default=True,
              type=click.Choice(["occ", "mint", "src", "scr-ew", "scr-var", "scr-cov"]))
@click.option("--formulation", default="zc-be", show_default=True,
              type=click.Choice(["zc-be", "zc-bv", "struct-be", "struct-bv"]),
              help="Equivalent closed forms of the occ solution.")
@click.option("--emit-weights", "weights_path", type=Path, default=None,
              help="Also write the combination weight matrix as CSV.")
@click.option("--emit-cov", "cov_path", type=Path, default=None,
              help="Also write the reconciled error covariance as CSV.")
def reconcile(constraints_path, panel_path, residuals_path, cov_kind, output_path,
              method, formulation, weights_path, cov_path):
    """Produce coherent forecasts from the panel."""
    sys_, panels, first, cov, resid = _load_inputs(
        constraints_path, panel_path, residuals_path, cov_kind, need_cov=True
    )
    formulation_key = formulation.replace("-", "_")
    results = {}
    last = None
    for h, panel_h in panels.items():
        if method == "occ":
            res = occ(panel_h, sys_, cov, formulation_key)
        elif method == "mint":
            if panel_h.p != 1 or not panel_h.balanced:
                raise DataError("mint expects a single expert covering every series")
            res = mint_reconcile(panel_h.y_hat, sys_, cov)
        elif method == "src":
            covs = [shrink(resid[panel_h.expert_rows(j)]) for j in range(panel_h.p)]
            res = src(panel_h, sys_, covs)
        else:
            scheme = {"scr-ew": "ew", "scr-var": "ow_var", "scr-cov": "ow_cov"}[method]
            ws = single_task_weights(panel_h, scheme, cov)
            combined_resid = ws.matrix(panel_h).T @ resid
            res = scr(panel_h, sys_, ws, cov, shrink(combined_resid))
        results[h] = res.y_tilde
        last = (panel_h, res)
    _write_atomic(output_path, _forecast_csv(results, sys_.labels))

    panel_h, res = last
    if weights_path is not None:
        rows = [
            [panel_h.experts[j], panel_h.labels[i], panel_h.labels[k], _fmt(res.Psi[r, k])]
            for r, (i, j) in enumerate(panel_h.pairs)
            for k in range(panel_h.n)
        ]
        _write_atomic(weights_path, _csv_text(["expert", "series", "target", "weight"], rows))
    if cov_path is not None:
        rows = [
            [sys_.labels[i]] + [_fmt(v) for v in res.W_tilde[i]]
            for i in range(sys_.n)
        ]
        _write_atomic(cov_path, _csv_text(["series"] + list(sys_.labels), rows))
    _write_manifest(output_path, "reconcile", {
        "constraints": constraints_path, "panel": panel_path,
        "residuals": residuals_path, "cov": cov_kind, "method": method,
        "formulation": formulation, "output": output_path,
        "emit_weights": weights_path, "emit_cov": cov_path,
    })


@cli.command()
@click.option("--setting", type=click.IntRange(1, 6), required=True)
@click.option("--p", "n_experts", type=int, default=4, show_default=True)
@click.option("--n-train", type=int, default=200, show_default=True)
@click.option("--test-len", type=int, default=100, show_default=True)
@click.option("--reps", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--balanced/--unbalanced", default=True, show_default=True)
@click.option("--error-corr", type=click.Choice(["random-spd", "identity"]),
              default="random-spd", show_default=True,
              help="Expert error correlation: a random correlation matrix or none.")
@click.option("--methods", default="ew,scr-ew,occ-be", show_default=True,
              help="Comma-separated: ew, ow-var, ow-cov, src, scr-ew, scr-var, "
                   "scr-cov, occ-be, occ-bv, occ-shr, occ-wls, base-star, "
                   "base-star-shr, base-shr.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel replication workers; results are identical to a serial run.")
@click.option("--output", "output_path", required=True, type=Path)
def simulate(setting, n_experts, n_train, test_len, reps, seed, balanced,
             error_corr, methods, jobs, output_path):
    """Run the Monte-Carlo experiment and write the relative-accuracy table."""
    method_keys = tuple(m.strip().replace("-", "_") for m in methods.split(",") if m.strip())
    cfg = SimulationConfig(
        setting=setting, p=n_experts, n_train=n_train, test_len=test_len,
        replications=reps, seed=seed, balanced=balanced,
        error_corr=error_corr.replace("-", "_"),
    )
    result = run_experiment(cfg, method_keys, n_jobs=jobs)
    rows = [
        [r["setting"], r["p"], r["n_train"], r["balanced"], r["method"],
         _fmt(r["avg_rel_mae"]), _fmt(r["avg_rel_mse"])]
        for r in result.summary_rows()
    ]
    _write_atomic(output_path, _csv_text(
        ["setting", "p", "n_train", "balanced", "method", "avg_rel_mae", "avg_rel_mse"], rows
    ))
    _write_manifest(output_path, "simulate", {
        "setting": setting, "p": n_experts, "n_train": n_train, "test_len": test_len,
        "reps": reps, "seed": seed, "balanced": balanced, "error_corr": error_corr,
        "methods": methods, "output": output_path,
    })


def _parse_horizons(expr: str) -> list[int]:
    expr = expr.strip()
    if ":" in expr:
        lo, hi = expr.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in expr.split(",") if tok.strip()]


@cli.command()
@click.option("--actuals", "actuals_path", required=True, type=Path,
              help="Actuals CSV: series,horizon,q,value.")
@click.option("--forecasts", "forecasts_path", required=True, type=Path,
              help="Forecast CSV: method,series,horizon,q,value.")
@click.option("--benchmark", default="ew", show_default=True)
@click.option("--horizons", default="1:1", show_default=True,
              help="Range 'lo:hi' or comma list of horizons to evaluate.")
@click.option("--dm/--no-dm", "run_dm", default=False, show_default=True,
              help="Also write the pairwise equal-predictive-accuracy matrix "
                   "(Bartlett kernel with h-1 lags, two-sided normal p-values, "
                   "no small-sample correction).")
@click.option("--output", "output_path", required=True, type=Path)
@click.option("--dm-output", "dm_output_path", type=Path, default=None)
def evaluate(actuals_path, forecasts_path, benchmark, horizons, run_dm,
             output_path, dm_output_path):
    """Score methods against actuals with relative accuracy indices."""
    horizon_list = _parse_horizons(horizons)
    act_rows = _read_csv_dicts(actuals_path, {"series", "horizon", "q", "value"}, "actuals")
    fc_rows = _read_csv_dicts(
        forecasts_path, {"method", "series", "horizon", "q", "value"}, "forecasts"
    )

    series = sorted({row["series"].strip() for row in act_rows})
    s_index = {s: i for i, s in enumerate(series)}
    methods = sorted({row["method"].strip() for row in fc_rows})

    def _grid(rows, keys):
        grid: dict = {}
        for row in rows:
            try:
                h = int(row["horizon"])
                q = int(row["q"])
                value = float(row["value"])
            except ValueError as exc:
                raise DataError(f"bad evaluation row {row!r}") from exc
            if h not in horizon_list:
                continue
            key = tuple(row[k].strip() for k in keys)
            grid.setdefault(h, {}).setdefault(key, {})[q] = value
        return grid

    act_grid = _grid(act_rows, ("series",))
    fc_grid = _grid(fc_rows, ("method", "series"))
    actuals: dict[int, np.ndarray] = {}
    forecasts: dict[str, dict[int, np.ndarray]] = {m: {} for m in methods}
    for h in horizon_list:
        if h not in act_grid:
            raise DataError(f"no actuals for horizon {h}")
        qs = sorted(next(iter(act_grid[h].values())))
        y = np.full((len(qs), len(series)), np.nan)
        for (s,), by_q in act_grid[h].items():
            if sorted(by_q) != qs:
                raise DataError(f"actuals for series {s!r} at horizon {h} misaligned")
            y[:, s_index[s]] = [by_q[q] for q in qs]
        actuals[h] = y
        for m in methods:
            f = np.full_like(y, np.nan)
            for s in series:
                by_q = fc_grid.get(h, {}).get((m, s))
                if by_q is None or sorted(by_q) != qs:
                    raise DataError(
                        f"forecasts for method {m!r}, series {s!r}, horizon {h} misaligned"
                    )
                f[:, s_index[s]] = [by_q[q] for q in qs]
            forecasts[m][h] = f
    if np.isnan(actuals[horizon_list[0]]).any():
        raise DataError("actuals grid is incomplete")

    table = accuracy(actuals, forecasts, benchmark, series)
    rows = []
    for metric, per_h, overall in (
        ("avg_rel_mae", table.avg_rel_mae_h, table.avg_rel_mae),
        ("avg_rel_mse", table.avg_rel_mse_h, table.avg_rel_mse),
    ):
        for m in table.methods:
            for h in table.horizons:
                rows.append([metric, m, h, _fmt(per_h[m][h])])
            rows.append([metric, m, "all", _fmt(overall[m])])
    _write_atomic(output_path, _csv_text(["metric", "method", "horizon", "value"], rows))

    if run_dm:
        if dm_output_path is None:
            dm_output_path = Path(str(output_path) + ".dm.csv")
        dm_rows = []
        for loss_name, power in (("absolute", 1), ("squared", 2)):
            for h in horizon_list + ["all"]:
                hs = horizon_list if h == "all" else [h]
                lag = max(hs)
                for m_a in methods:
                    for m_b in methods:
                        if m_a == m_b:
                            continue
                        wins = 0
                        for s in series:
                            i = s_index[s]
                            loss_a = np.concatenate(
                                [np.abs(actuals[hh][:, i] - forecasts[m_a][hh][:, i]) ** power
                                 for hh in hs]
                            )
                            loss_b = np.concatenate(
                                [np.abs(actuals[hh][:, i] - forecasts[m_b][hh][:, i]) ** power
                                 for hh in hs]
                            )
                            res = dm_test(loss_a, loss_b, h=lag)
                            if res.p_value < 0.05 and res.statistic < 0:
                                wins += 1
                        dm_rows.append([
                            loss_name, h, m_a, m_b, _fmt(100.0 * wins / len(series)),
                        ])
        _write_atomic(dm_output_path, _csv_text(
            ["loss", "horizon", "method_a", "method_b", "pct_more_accurate"], dm_rows
        ))
    _write_manifest(output_path, "evaluate", {
        "actuals": actuals_path, "forecasts": forecasts_path, "benchmark": benchmark,
        "horizons": horizons, "dm": run_dm, "output": output_path,
        "dm_output": dm_output_path,
    })


def main(argv=None) -> int:
    """Entry point with structured error reporting and stable exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except SystemExit as exc:  # --help / --version paths
        return int(exc.code or 0)
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except DataError as exc:
        click.echo(json.dumps({"code": exc.code, "message": str(exc)}), err=True)
        return 3
    except NumericalError as exc:
        click.echo(json.dumps({"code": exc.code, "message": str(exc)}), err=True)
        return 4


def script() -> None:
    sys.exit(main())
