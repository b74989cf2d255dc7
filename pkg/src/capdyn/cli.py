"""``capdyn`` command-line front end.

Usage::

    capdyn <command> --input FILE [--output FILE] [--format table|csv] [--tol NAME=VALUE]

Commands are ``rates``, ``schedule``, ``risk``, ``evolve`` and ``bridge``.
Inputs are JSON documents; outputs are aligned text tables or CSV with a
header row. Every run carries audit columns (duality and balance
residuals, cross-method discrepancies).

Exit status: 0 on success, 2 when the input cannot be read or does not
match the schema, 3 on domain or numerical errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import matevol
from .cashflow import FlowProfile, mean_intensity, peak_intensity, transport_risk_distance
from .errors import CapdynError, DomainError
from .rates import (
    RateCurve,
    lower_rate,
    range_rate,
    upper_rate,
    utility_from_rate,
)
from .scheduler import (
    InstalmentSchedule,
    discount_schedule,
    minmax_schedule,
    nominally_fixed_schedule,
    risk_report,
    risk_rows,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DOMAIN = 3

COMMANDS = ("rates", "schedule", "risk", "evolve", "bridge")

DEFAULT_TOLERANCES = {
    "balance": 1e-10,
    "singular": matevol.SINGULAR_COND,
    "eig_cond": matevol.EIGEN_COND_CAP,
    "imag": matevol.IMAG_RESIDUE,
}


class InputError(Exception):
    """Input file unreadable or not matching the expected schema."""


class UnbalancedError(CapdynError):
    name = "unbalanced"


@dataclass
class RunConfig:
    command: str
    input_path: Path
    output_path: Path | None = None
    format: str = "table"
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))


@dataclass
class Table:
    header: list[str]
    rows: list[list]
    notes: list[str] = field(default_factory=list)


def fmt(x) -> str:
    """12 significant digits, locale independent."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x == 0.0:
            return "0"
        return format(x, ".12g")
    return str(x)


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.header)
    for row in table.rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def render_table(table: Table) -> str:
    cells = [table.header] + [[fmt(v) for v in row] for row in table.rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(table.header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.extend(table.notes)
    return "\n".join(lines) + "\n"


def load_json(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: top-level JSON value must be an object")
    return data


def _require(data: dict, key: str, where: str = "input"):
    if key not in data:
        raise InputError(f"{where}: missing required key {key!r}")
    return data[key]


def _parse(builder, data, where: str):
    """Run a schema constructor, mapping shape errors to InputError."""
    try:
        return builder(data)
    except CapdynError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        detail = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        raise InputError(f"{where}: {detail}") from exc


def _float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"{where}: expected a number, got {value!r}")
    return float(value)


# -- commands -----------------------------------------------------------------


def cmd_rates(config: RunConfig) -> Table:
    data = load_json(config.input_path)
    curve = _parse(RateCurve.from_dict, _require(data, "curve"), "curve")
    spans = _require(data, "spans")
    if not isinstance(spans, list):
        raise InputError("spans: expected a list of [from, to] pairs")
    rows = []
    for i, span in enumerate(spans):
        if not (isinstance(span, list) and len(span) == 2):
            raise InputError(f"spans[{i}]: expected [from, to]")
        a, b = (_float(v, f"spans[{i}]") for v in span)
        u = utility_from_rate(curve, a, b)
        lo, up = lower_rate(u), upper_rate(u)
        residual = (1.0 + lo) * (1.0 - up) - 1.0
        rows.append([a, b, u.factor, range_rate(u).value, lo, up, residual])
    header = ["from", "to", "utility", "range_rate", "lower_rate", "upper_rate", "duality_residual"]
    return Table(header, rows)


def _build_schedule(data: dict) -> tuple[InstalmentSchedule, RateCurve]:
    mode = _require(data, "mode")
    builders = {"minmax": minmax_schedule, "nominal": nominally_fixed_schedule}
    if mode not in builders:
        raise InputError(f"mode: expected one of {sorted(builders)}, got {mode!r}")
    curve = _parse(RateCurve.from_dict, _require(data, "curve"), "curve")
    loan = _float(_require(data, "loan"), "loan")
    times = [_float(t, "times") for t in _require(data, "times")]
    tau = _float(_require(data, "reference"), "reference")
    loan_time = data.get("loan_time")
    if loan_time is not None:
        loan_time = _float(loan_time, "loan_time")
    s = builders[mode](loan, times, curve, tau, loan_time=loan_time)
    return s, curve


def cmd_schedule(config: RunConfig) -> Table:
    data = load_json(config.input_path)
    s, curve = _build_schedule(data)
    d = discount_schedule(s, curve)
    residual = d.total()
    rows = [[0, s.loan.at, s.loan.amount, d.entries[0][1], residual]]
    rows += [
        [k, t, face, disc, residual]
        for k, ((t, face), (_, disc)) in enumerate(zip(s.instalments, d.entries[1:]), start=1)
    ]
    if abs(residual) > config.tolerances["balance"]:
        raise UnbalancedError(f"balance residual {residual:.3g} exceeds tolerance")
    if config.output_path is not None and config.output_path.suffix == ".json":
        config.output_path.write_text(json.dumps(s.to_dict(), indent=2) + "\n", encoding="utf-8")
        config.output_path = None
    return Table(["k", "t", "face", "discounted", "balance_residual"], rows)


def cmd_risk(config: RunConfig) -> Table:
    data = load_json(config.input_path)
    if "schedule_path" in data:
        sched_path = (config.input_path.parent / data["schedule_path"]).resolve()
        sched_data = load_json(sched_path)
    else:
        sched_data = _require(data, "schedule")
    s = _parse(InstalmentSchedule.from_dict, sched_data, "schedule")
    curve = _parse(RateCurve.from_dict, _require(data, "curve"), "curve")
    d = discount_schedule(s, curve)
    rep = risk_report(d)
    rows = [
        [k, t, face, disc, dev, rep.mean_discounted, rep.variance_risk, rep.max_discounted]
        for k, t, face, disc, dev in risk_rows(s, d)
    ]
    header = ["k", "t", "face", "discounted", "deviation", "mean", "variance_risk", "max_discounted"]
    notes = [
        f"mean_discounted = {fmt(rep.mean_discounted)}",
        f"variance_risk = {fmt(rep.variance_risk)}",
        f"max_discounted = {fmt(rep.max_discounted)} (k = {rep.argmax})",
    ]
    return Table(header, rows, notes)


def _sample_times(curve: matevol.MatrixRateCurve, a: float, b: float, samples: int | None) -> list[float]:
    ts = {a, b}
    ts.update(t for t in curve.breakpoints if a < t < b)
    if samples:
        ts.update(float(t) for t in np.linspace(a, b, samples))
    return sorted(ts)


def _eigen_path(curve, a, times, p0, tol) -> list[np.ndarray]:
    """Chain eigen evolution piece by piece; each piece is a constant generator."""
    out = []
    for t in times:
        p = np.asarray(p0, dtype=float)
        for lo, hi, R in curve.pieces(a, t) if t > a else []:
            p = matevol.eigen_evolve(R, p, hi - lo, tol["eig_cond"], tol["imag"])
        out.append(p)
    return out


def _continuous_paths(data: dict, methods: list[str], tol) -> tuple[list[float], dict]:
    curve = _parse(matevol.MatrixRateCurve.from_dict, _require(data, "curve"), "curve")
    p0 = np.asarray([_float(v, "p0") for v in _require(data, "p0")])
    if p0.shape != (curve.dimension,):
        raise InputError(f"p0: expected {curve.dimension} entries, got {p0.size}")
    span = data.get("span", [curve.start, curve.end])
    if not (isinstance(span, list) and len(span) == 2):
        raise InputError("span: expected [from, to]")
    a, b = (_float(v, "span") for v in span)
    curve.check_domain(a, b)
    if b < a:
        raise DomainError("span end precedes span start")
    samples = data.get("samples")
    if samples is not None and (isinstance(samples, bool) or not isinstance(samples, int) or samples < 2):
        raise InputError("samples: expected an integer >= 2")
    times = _sample_times(curve, a, b, samples)
    paths = {}
    for m in methods:
        if m == "ordered":
            paths[m] = [matevol.ordered_exp(curve, a, t).apply(p0) for t in times]
        elif m == "eigen":
            paths[m] = _eigen_path(curve, a, times, p0, tol)
        elif m.startswith("volterra:"):
            try:
                order = int(m.split(":", 1)[1])
            except ValueError:
                raise InputError(f"method {m!r}: order must be an integer") from None
            if order < 1:
                raise InputError(f"method {m!r}: order must be positive")
            quad = int(data.get("quad_points", 2000))
            paths[m] = [matevol.volterra_series(curve, a, t, order, quad).apply(p0) for t in times]
        else:
            raise InputError(f"unknown continuous method {m!r}")
    return times, paths


def _matrices(raw, where: str, n: int | None = None) -> list[np.ndarray]:
    try:
        mats = [np.asarray(m, dtype=float) for m in raw]
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: {exc}") from exc
    for k, m in enumerate(mats):
        if m.ndim != 2 or m.shape[0] != m.shape[1] or (n is not None and m.shape[0] != n):
            raise InputError(f"{where}[{k}]: expected a square {n or 'n'}x{n or 'n'} matrix")
    return mats


def _discrete_paths(data: dict, methods: list[str], tol) -> tuple[list[float], dict]:
    limit = tol["singular"]
    if "lower_rates" in data:
        p = np.asarray([_float(v, "p0") for v in _require(data, "p0")])
        lowers = _matrices(data["lower_rates"], "lower_rates", p.size)
        uppers = [matevol.lower_to_upper_matrix(L, limit) for L in lowers]
        forward = matevol.lower_trajectory(lowers, p, limit)
    elif "upper_rates" in data:
        p = np.asarray([_float(v, "p_final") for v in _require(data, "p_final")])
        uppers = _matrices(data["upper_rates"], "upper_rates", p.size)
        lowers = [matevol.upper_to_lower_matrix(R, limit) for R in uppers]
        forward = None
    else:
        raise InputError("input: discrete methods need 'lower_rates' or 'upper_rates'")

    def backward(p_end):
        path = [np.asarray(p_end, dtype=float)]
        for k in range(len(uppers) - 1, -1, -1):
            path.insert(0, matevol.discrete_evolve_upper([uppers[k]], path[0], limit))
        return path

    if forward is None:
        back = backward(p)
        forward = matevol.lower_trajectory(lowers, back[0], limit)
    else:
        back = backward(forward[-1])
    times = [float(k) for k in range(len(forward))]
    paths = {}
    for m in methods:
        if m == "discrete-lower":
            paths[m] = forward
        elif m == "discrete-upper":
            paths[m] = back
        else:
            raise InputError(f"unknown discrete method {m!r}")
    return times, paths


def cmd_evolve(config: RunConfig) -> Table:
    data = load_json(config.input_path)
    methods = _require(data, "methods")
    if not (isinstance(methods, list) and methods and all(isinstance(m, str) for m in methods)):
        raise InputError("methods: expected a non-empty list of method names")
    discrete = [m.startswith("discrete-") for m in methods]
    if any(discrete) and not all(discrete):
        raise InputError("methods: cannot mix discrete and continuous methods in one run")
    if all(discrete):
        times, paths = _discrete_paths(data, methods, config.tolerances)
    else:
        times, paths = _continuous_paths(data, methods, config.tolerances)

    primary = paths[methods[0]]
    n = primary[0].size
    header = ["t"] + [f"p_{i + 1}" for i in range(n)]
    header += [f"discrepancy_{m}" for m in methods[1:]]
    rows = []
    for j, t in enumerate(times):
        row = [t] + [float(v) for v in primary[j]]
        row += [float(np.abs(paths[m][j] - primary[j]).max()) for m in methods[1:]]
        rows.append(row)
    notes = [
        f"max discrepancy {methods[0]} vs {m} = {fmt(max(r[1 + n + i] for r in rows))}"
        for i, m in enumerate(methods[1:])
    ]
    return Table(header, rows, notes)


def cmd_bridge(config: RunConfig) -> Table:
    data = load_json(config.input_path)
    raw = _require(data, "profiles")
    if not (isinstance(raw, list) and raw):
        raise InputError("profiles: expected a non-empty list")
    names, profiles = [], []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise InputError(f"profiles[{i}]: expected an object")
        names.append(str(entry.get("name", f"profile_{i + 1}")))
        profiles.append(_parse(FlowProfile.from_dict, entry, f"profiles[{i}]"))
    peaks = [peak_intensity(f) for f in profiles]
    means = [mean_intensity(f) for f in profiles]
    best = min(peaks)
    header = ["profile", "mean", "peak", "minimal_peak"] + [f"distance_{nm}" for nm in names]
    rows = [
        [nm, mu, pk, pk == best] + [transport_risk_distance(f, g) for g in profiles]
        for nm, mu, pk, f in zip(names, means, peaks, profiles)
    ]
    return Table(header, rows)


HANDLERS = {
    "rates": cmd_rates,
    "schedule": cmd_schedule,
    "risk": cmd_risk,
    "evolve": cmd_evolve,
    "bridge": cmd_bridge,
}


def _tolerance(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep or name not in DEFAULT_TOLERANCES:
        raise argparse.ArgumentTypeError(
            f"expected NAME=VALUE with NAME in {sorted(DEFAULT_TOLERANCES)}, got {text!r}"
        )
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {name!r} is not a number: {value!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"tolerance {name!r} must be positive and finite")
    return name, v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capdyn", description="Deterministic capital dynamics.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--input", required=True, type=Path, help="JSON input file")
    parser.add_argument("--output", type=Path, help="write output here instead of stdout")
    parser.add_argument("--format", choices=("table", "csv"), default="table")
    parser.add_argument(
        "--tol", action="append", type=_tolerance, default=[], metavar="NAME=VALUE",
        help=f"override a tolerance; names: {', '.join(DEFAULT_TOLERANCES)}",
    )
    return parser


def run(config: RunConfig, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        table = HANDLERS[config.command](config)
    except InputError as exc:
        print(f"capdyn: parse error: {exc}", file=stderr)
        return EXIT_PARSE
    except CapdynError as exc:
        print(f"capdyn: error [{exc.name}]: {exc}", file=stderr)
        return EXIT_DOMAIN
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"capdyn: error [numeric]: {exc}", file=stderr)
        return EXIT_DOMAIN
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        print(f"capdyn: parse error: input does not match the {config.command} schema: {exc!r}", file=stderr)
        return EXIT_PARSE
    text = render_csv(table) if config.format == "csv" else render_table(table)
    if config.output_path is not None:
        config.output_path.write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update(dict(args.tol))
    config = RunConfig(args.command, args.input, args.output, args.format, tolerances)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
