"""Command-line front end: homogeneity tests, intervals, and simulations.

Input tables are delimiter-separated with the header
``stratum,group,n0,n1,n2,m0,m1`` (two rows per stratum, groups 1 and 2), or
an equivalent JSON document ``{"strata": [{"id": ..., "group1": {...},
"group2": {...}}]}``.  Exit codes: 0 success, 2 input error, 3 infeasible or
degenerate data, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass

from . import __version__, estimation, inference, intervals, montecarlo
from .model import (
    CommonDiffParams,
    FullParams,
    GroupCounts,
    ParameterDomainError,
    StratumCounts,
    StudyData,
    has_zero_cells,
    smooth_zero_cells,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NONCONVERGENCE = 4

_HEADER = ("stratum", "group", "n0", "n1", "n2", "m0", "m1")


class InputError(ValueError):
    pass


@dataclass(frozen=True)
class StudyTable:
    """Labelled study rows: (stratum_id, group, n0, n1, n2, m0, m1)."""

    stratum_ids: tuple[str, ...]
    data: StudyData

    def rows(self):
        for sid, stratum in zip(self.stratum_ids, self.data.strata):
            for g, grp in ((1, stratum.group1), (2, stratum.group2)):
                yield (sid, g, grp.n0, grp.n1, grp.n2, grp.m0, grp.m1)


def _parse_count(text: str, field: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"line {line}: {field} is not a number: {text!r}")
    if value < 0 or not value == int(value):
        raise InputError(
            f"line {line}: {field} must be a nonnegative integer, got {text!r}"
        )
    return value


def read_table_csv(path: str) -> StudyTable:
    with open(path, newline="") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        delimiter = ","
        if sample and "\t" in sample.splitlines()[0]:
            delimiter = "\t"
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("empty input file")
        header = tuple(h.strip().lower() for h in header)
        if header != _HEADER:
            raise InputError(
                f"header must be {','.join(_HEADER)}, got {','.join(header)}"
            )
        groups: dict[str, dict[int, GroupCounts]] = {}
        order: list[str] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 7:
                raise InputError(f"line {line_no}: expected 7 fields, got {len(row)}")
            sid = row[0].strip()
            gtxt = row[1].strip()
            if gtxt not in ("1", "2"):
                raise InputError(f"line {line_no}: group must be 1 or 2, got {gtxt!r}")
            g = int(gtxt)
            counts = [
                _parse_count(row[i + 2], _HEADER[i + 2], line_no) for i in range(5)
            ]
            if sid not in groups:
                groups[sid] = {}
                order.append(sid)
            if g in groups[sid]:
                raise InputError(
                    f"line {line_no}: duplicate (stratum, group) = ({sid!r}, {g})"
                )
            groups[sid][g] = GroupCounts(*counts)
    strata = []
    for sid in order:
        got = groups[sid]
        if set(got) != {1, 2}:
            raise InputError(f"stratum {sid!r} must have exactly groups 1 and 2")
        strata.append(StratumCounts(group1=got[1], group2=got[2]))
    if not strata:
        raise InputError("no data rows found")
    return StudyTable(tuple(order), StudyData(strata))


def read_table_json(path: str) -> StudyTable:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "strata" not in doc:
        raise InputError("JSON input needs a top-level 'strata' list")
    ids = []
    strata = []
    for k, entry in enumerate(doc["strata"]):
        sid = str(entry.get("id", k + 1))
        try:
            g1 = GroupCounts(**{f: float(entry["group1"][f]) for f in ("n0", "n1", "n2", "m0", "m1")})
            g2 = GroupCounts(**{f: float(entry["group2"][f]) for f in ("n0", "n1", "n2", "m0", "m1")})
        except KeyError as exc:
            raise InputError(f"strata[{k}]: missing field {exc}")
        ids.append(sid)
        strata.append(StratumCounts(group1=g1, group2=g2))
    if not strata:
        raise InputError("no strata in JSON input")
    return StudyTable(tuple(ids), StudyData(strata))


def read_table(path: str) -> StudyTable:
    if path.endswith(".json"):
        return read_table_json(path)
    return read_table_csv(path)


def write_table_csv(table: StudyTable, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(_HEADER)
    for row in table.rows():
        writer.writerow(
            [row[0], row[1]]
            + [int(v) if v == int(v) else v for v in row[2:]]
        )


def _apply_smoothing(data: StudyData, smooth: str):
    if smooth == "auto":
        if has_zero_cells(data):
            return smooth_zero_cells(data, 1e-4), 1e-4
        return data, 0.0
    if smooth in ("off", "none"):
        return data, 0.0
    try:
        eps = float(smooth)
    except ValueError:
        raise InputError(f"--smooth must be 'auto', 'off', or a number, got {smooth!r}")
    if eps < 0:
        raise InputError("--smooth value must be >= 0")
    return (smooth_zero_cells(data, eps), eps) if eps > 0 else (data, 0.0)


def _emit(line: str, out) -> None:
    print(line, file=out)


def _jsonl(obj: dict, out) -> None:
    print(json.dumps(obj), file=out)


def _mle_lines(table, fit_ha, fit_h0, fmt, out):
    up: FullParams = fit_ha.params
    cp: CommonDiffParams = fit_h0.params
    if fmt == "json-lines":
        for s, sid in enumerate(table.stratum_ids):
            _jsonl(
                {
                    "kind": "mle",
                    "stratum": sid,
                    "pi1_hat": up.pi1[s],
                    "pi2_hat": up.pi2[s],
                    "gamma_hat": up.gamma[s],
                    "d_hat": up.pi1[s] - up.pi2[s],
                    "pi1_tilde": cp.pi1[s],
                    "pi2_tilde": cp.pi1[s] - cp.d,
                    "gamma_tilde": cp.gamma[s],
                    "d_tilde": cp.d,
                },
                out,
            )
        return
    _emit("", out)
    _emit("Maximum-likelihood estimates", out)
    header = (
        f"{'stratum':<12}{'group':>6}{'pi_hat':>10}{'gamma_hat':>11}"
        f"{'d_hat':>10}{'pi_tilde':>10}{'gamma_tilde':>13}{'d_tilde':>10}"
    )
    _emit(header, out)
    for s, sid in enumerate(table.stratum_ids):
        d_hat = up.pi1[s] - up.pi2[s]
        _emit(
            f"{sid:<12}{1:>6}{up.pi1[s]:>10.4f}{up.gamma[s]:>11.4f}"
            f"{d_hat:>10.4f}{cp.pi1[s]:>10.4f}{cp.gamma[s]:>13.4f}{cp.d:>10.4f}",
            out,
        )
        _emit(
            f"{'':<12}{2:>6}{up.pi2[s]:>10.4f}{'':>11}{'':>10}"
            f"{cp.pi1[s] - cp.d:>10.4f}{'':>13}{'':>10}",
            out,
        )


def cmd_test(args, out=None) -> int:
    out = out or sys.stdout
    table = read_table(args.input)
    if table.data.n_strata < 2:
        raise InputError("df = 0: need S >= 2")
    data, eps = _apply_smoothing(table.data, args.smooth)
    methods = [m.strip().upper() for m in args.methods.split(",")]
    fit_ha = estimation.fit_unconstrained(data)
    fit_h0 = estimation.fit_constrained(data, unconstrained=fit_ha)
    if not (fit_ha.converged and fit_h0.converged):
        print("error: maximum-likelihood fits did not converge", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    results = {}
    for m in methods:
        if m == "SC":
            results[m] = inference.score_test(data, fit_h0=fit_h0)
        elif m == "LR":
            results[m] = inference.lr_test(data, fit_ha=fit_ha, fit_h0=fit_h0)
        elif m == "W":
            results[m] = inference.wald_test(data, fit_ha=fit_ha)
        else:
            raise InputError(f"unknown test method {m!r} (use SC, LR, W)")
    if args.format == "json-lines":
        for m in methods:
            r = results[m]
            _jsonl(
                {
                    "kind": "test",
                    "method": m,
                    "statistic": r.statistic,
                    "df": r.df,
                    "p_value": r.p_value,
                    "alpha": args.alpha,
                    "smooth_epsilon": eps,
                    "flags": list(r.flags),
                },
                out,
            )
    else:
        _emit(f"Homogeneity tests (S = {data.n_strata}, df = {data.n_strata - 1})", out)
        if eps:
            _emit(f"zero cells smoothed with epsilon = {eps:g}", out)
        _emit(f"{'method':<8}{'statistic':>12}{'df':>4}{'p-value':>10}", out)
        for m in methods:
            r = results[m]
            _emit(f"{m:<8}{r.statistic:>12.4f}{r.df:>4}{r.p_value:>10.4f}", out)
    _mle_lines(table, fit_ha, fit_h0, args.format, out)
    return EXIT_OK


def cmd_ci(args, out=None) -> int:
    out = out or sys.stdout
    table = read_table(args.input)
    data, eps = _apply_smoothing(table.data, args.smooth)
    methods = tuple(m.strip().upper() for m in args.methods.split(","))
    cis = intervals.all_intervals(data, alpha=args.alpha, methods=methods)
    if args.format == "json-lines":
        for ci in cis:
            _jsonl(
                {
                    "kind": "ci",
                    "method": ci.method,
                    "lower": ci.lower,
                    "upper": ci.upper,
                    "width": ci.width,
                    "center": ci.center_estimate,
                    "alpha": ci.alpha,
                    "smooth_epsilon": eps,
                    "flags": list(ci.flags),
                },
                out,
            )
    else:
        _emit(
            f"Confidence intervals for the common risk difference "
            f"(alpha = {args.alpha:g})",
            out,
        )
        if eps:
            _emit(f"zero cells smoothed with epsilon = {eps:g}", out)
        _emit(f"{'method':<8}{'lower':>10}{'upper':>10}{'width':>10}", out)
        for ci in cis:
            _emit(
                f"{ci.method:<8}{ci.lower:>10.4f}{ci.upper:>10.4f}{ci.width:>10.4f}",
                out,
            )
    return EXIT_OK


def _config_from_doc(doc: dict, path: str) -> montecarlo.SimConfig:
    for field in ("mode", "sizes", "truth"):
        if field not in doc:
            raise InputError(f"{path}: missing required field '{field}'")
    truth_doc = doc["truth"]
    if not isinstance(truth_doc, dict):
        raise InputError(f"{path}: 'truth' must be an object")
    try:
        if "d" in truth_doc:
            truth = CommonDiffParams(
                truth_doc["d"], truth_doc["pi1"], truth_doc["gamma"]
            )
        else:
            truth = FullParams(
                truth_doc["pi1"], truth_doc["pi2"], truth_doc["gamma"]
            )
        truth.validate()
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path}: invalid 'truth': {exc}")
    sizes = doc["sizes"]
    if not isinstance(sizes, list) or not all(
        isinstance(r, list) and len(r) == 4 for r in sizes
    ):
        raise InputError(f"{path}: 'sizes' must be a list of [n1, n2, m1, m2] rows")
    try:
        return montecarlo.SimConfig(
            mode=doc["mode"],
            sizes=tuple(tuple(float(v) for v in r) for r in sizes),
            truth=truth,
            replicates=int(doc.get("replicates", 10000)),
            alpha=float(doc.get("alpha", 0.05)),
            seed=int(doc.get("seed", 0)),
            methods=tuple(doc.get("methods", ())),
            workers=int(doc.get("workers", 1)),
            smooth_epsilon=float(doc.get("smooth_epsilon", 1e-4)),
            label=str(doc.get("label", "")),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}")


def _apply_overrides(config: montecarlo.SimConfig, overrides) -> montecarlo.SimConfig:
    from dataclasses import replace

    kw = {}
    if overrides.replicates is not None:
        kw["replicates"] = overrides.replicates
    if overrides.seed is not None:
        kw["seed"] = overrides.seed
    if overrides.workers is not None:
        kw["workers"] = overrides.workers
    if overrides.methods is not None:
        kw["methods"] = tuple(m.strip().upper() for m in overrides.methods.split(","))
    return replace(config, **kw) if kw else config


def cmd_simulate(args, out=None) -> int:
    out = out or sys.stdout
    with open(args.config) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: invalid JSON: {exc}")
    docs = doc if isinstance(doc, list) else [doc]
    configs = []
    for i, d in enumerate(docs):
        path = f"{args.config}[{i}]" if isinstance(doc, list) else args.config
        if not isinstance(d, dict):
            raise InputError(f"{path}: each configuration must be an object")
        if "grid" in d:
            try:
                expanded = montecarlo.expand_grid(d)
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path}: invalid grid: {exc}")
            configs.extend(_apply_overrides(c, args) for c in expanded)
        else:
            configs.append(_apply_overrides(_config_from_doc(d, path), args))
    runners = {
        "type1": montecarlo.run_type1,
        "power": montecarlo.run_power,
        "coverage": montecarlo.run_coverage,
    }
    rows = []
    for config in configs:
        result = runners[config.mode](config)
        stanza = {
            "kind": "simulation",
            "label": config.label,
            "mode": config.mode,
            "seed": config.seed,
            "replicates": config.replicates,
            "alpha": config.alpha,
            "version": __version__,
            "result": result.to_dict(),
        }
        _jsonl(stanza, out)
        per_method = (
            result.rejection_rates
            if config.mode != "coverage"
            else result.coverage
        )
        for m, v in per_method.items():
            row = {
                "label": config.label,
                "mode": config.mode,
                "method": m,
                "value": v,
                "mean_length": result.mean_length.get(m, ""),
                "replicates": config.replicates,
                "degenerate": result.degenerate,
                "seed": config.seed,
            }
            rows.append(row)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stratrd",
        description=(
            "Homogeneity tests and confidence intervals for the common risk "
            "difference in stratified bilateral/unilateral binary data."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run the three homogeneity tests")
    p_test.add_argument("input", help="CSV or JSON study table")
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--methods", default="SC,LR,W")
    p_test.add_argument("--smooth", default="auto")
    p_test.add_argument("--format", choices=("table", "json-lines"), default="table")
    p_test.set_defaults(func=cmd_test)

    p_ci = sub.add_parser("ci", help="construct confidence intervals")
    p_ci.add_argument("input", help="CSV or JSON study table")
    p_ci.add_argument("--alpha", type=float, default=0.05)
    p_ci.add_argument("--methods", default="W1,W2,W3,PRO,SC")
    p_ci.add_argument("--smooth", default="auto")
    p_ci.add_argument("--format", choices=("table", "json-lines"), default="table")
    p_ci.set_defaults(func=cmd_ci)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo configuration")
    p_sim.add_argument(
        "config", help="JSON simulation config (object, list, or grid form)"
    )
    p_sim.add_argument("--out", help="write a flat CSV results table here")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--replicates", type=int, default=None)
    p_sim.add_argument("--workers", type=int, default=None)
    p_sim.add_argument("--methods", default=None)
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ParameterDomainError, estimation.InfeasibleConstraintError) as exc:
        print(f"infeasible data: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
