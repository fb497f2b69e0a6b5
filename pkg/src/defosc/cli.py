"""Command line entry point: ``defosc <mode> --config <path>``.

Exit status 0 on success, 2 for configuration errors and 3 for numerical
failures.  Errors are reported on stderr as one JSON object per line.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .algebra import deformation_factor, spectrum
from .config import MODES, ConfigError, ScenarioConfig, load_config
from .errors import NumericalError
from .evolve import integrate
from .liouvillian import assemble_generator, max_stable_step
from .steady import (
    steady_nullspace,
    steady_product,
    thermo,
    transition_rates,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class Table:
    def __init__(self, columns, rows=None):
        self.columns = list(columns)
        self.rows = rows if rows is not None else []


def fmt(value) -> str:
    """Fixed 17-significant-digit rendering used in every output file."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value + 0.0, ".17g")  # + 0.0 folds -0 into 0


def run_spectrum(cfg: ScenarioConfig) -> Table:
    spec, mode = cfg.deformation, cfg.mode_params
    tab = spectrum(spec, mode)
    rows = []
    for n in range(mode.dim):
        f = deformation_factor(spec, n) if n >= 1 else math.nan
        shift = tab.omega_shift[n] if n < tab.omega_shift.size else math.nan
        rows.append([n, tab.structure[n], f, tab.energies[n], shift])
    return Table(["n", "F", "f", "E", "Omega"], rows)


def run_evolve(cfg: ScenarioConfig) -> Table:
    spec, mode = cfg.deformation, cfg.mode_params
    gen = assemble_generator(spec, cfg.bath, mode)
    if cfg.dt > max_stable_step(gen):
        raise ConfigError("dt", f"exceeds the step bound {max_stable_step(gen):.6g}")
    rho0 = cfg.initial_state.build(spec, mode)
    traj = integrate(gen, rho0, cfg.t_end, cfg.dt, cfg.sample_every, keep_states=False)
    obs = traj.observables
    rows = [
        [
            t,
            obs["mean_N"][i],
            obs["mean_a"][i].real,
            obs["mean_a"][i].imag,
            obs["mean_Omega_a"][i].real,
            obs["mean_Omega_a"][i].imag,
            obs["energy"][i],
            obs["trace_err"][i],
            obs["min_eig"][i],
        ]
        for i, t in enumerate(traj.times)
    ]
    return Table(
        ["t", "mean_N", "mean_a_re", "mean_a_im", "mean_Omega_a_re", "mean_Omega_a_im",
         "energy", "trace_err", "min_eig"],
        rows,
    )


def run_steady(cfg: ScenarioConfig) -> Table:
    chain = transition_rates(cfg.deformation, cfg.bath, cfg.mode_params)
    prod = steady_product(chain)
    if prod.negative_factor:
        raise NumericalError("negative product factor (2 D_+ - lambda < 0); populations undefined")
    null = steady_nullspace(chain)
    p = prod.p
    balance = np.concatenate([[0.0], np.abs(chain.down * p[1:] - chain.up * p[:-1])])
    rows = [[n, p[n], null.p[n], balance[n]] for n in range(chain.dim)]
    return Table(["n", "P_product", "P_nullspace", "balance_residual"], rows)


def run_thermo(cfg: ScenarioConfig) -> Table:
    res = thermo(cfg.beta, cfg.tau, cfg.mode_params.omega)
    return Table(
        ["beta", "tau", "Z_q", "Z_plus_b_tau2", "b", "E_closed", "E_series", "tail_bound"],
        [[res.beta, res.tau, res.Z_q, res.Z_q_expansion, res.b,
          res.E_inf_closed, res.E_inf_series, res.tail_bound]],
    )


RUNNERS = {
    "spectrum": run_spectrum,
    "evolve": run_evolve,
    "steady": run_steady,
    "thermo": run_thermo,
}


def _run_one(cfg: ScenarioConfig):
    """Worker body: returns ("ok", table) or ("error", record) so failures cross process lines."""
    try:
        return "ok", RUNNERS[cfg.mode](cfg)
    except ConfigError as exc:
        return "error", _error_record("config", exc.message, field=exc.field)
    except NumericalError as exc:
        return "error", _error_record("numerical", str(exc))
    except (ValueError, IndexError) as exc:
        return "error", _error_record("config", str(exc))


def _error_record(kind: str, message: str, **extra) -> dict:
    return {"error": kind, "message": message, **extra}


def _exit_code(record: dict) -> int:
    return EXIT_NUMERIC if record["error"] == "numerical" else EXIT_CONFIG


def run_sweep(cfg: ScenarioConfig, jobs: int = 1):
    """Run the base mode per sweep value; returns (table, error_record or None).

    Rows are assembled in input order.  On the first failing value the rows
    gathered so far are returned together with the error.
    """
    param = cfg.sweep_parameter
    configs, bad = [], None
    for v in cfg.sweep_values:
        try:
            configs.append(cfg.with_value(param, v))
        except ConfigError as exc:
            bad = ("error", _error_record("config", exc.message, field=exc.field))
            break
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, configs))
    else:
        results = []
        for c in configs:
            results.append(_run_one(c))
            if results[-1][0] == "error":
                break
    if bad is not None:
        results.append(bad)
    table = None
    for value, (status, payload) in zip(cfg.sweep_values, results):
        if status == "error":
            payload["sweep_value"] = value
            return table or Table([f"sweep.{param}"]), payload
        if table is None:
            table = Table([f"sweep.{param}"] + payload.columns)
        key = int(value) if param == "dim" else value
        table.rows.extend([key] + row for row in payload.rows)
    return table, None


def render(table: Table, fmt_name: str, partial: dict | None = None) -> str:
    if fmt_name == "json":
        doc = {
            "columns": table.columns,
            "rows": [[_json_number(v) for v in row] for row in table.rows],
        }
        if partial is not None:
            doc["partial"] = True
            doc["error"] = partial
        return _dump_json(doc) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([fmt(v) for v in row])
    if partial is not None:
        buf.write(f"# PARTIAL: {json.dumps(partial, sort_keys=True)}\r\n")
    return buf.getvalue()


class _Raw(str):
    pass


def _json_number(v):
    text = fmt(v)
    return text if text in ("nan", "inf", "-inf") else _Raw(text)


def _dump_json(doc: dict) -> str:
    # numbers keep the fixed 17-digit rendering; non-finite values become strings
    def enc(o):
        if isinstance(o, _Raw):
            return str(o)
        if isinstance(o, dict):
            return "{" + ", ".join(f"{json.dumps(k)}: {enc(v)}" for k, v in o.items()) + "}"
        if isinstance(o, list):
            return "[" + ", ".join(enc(v) for v in o) + "]"
        return json.dumps(o, sort_keys=True)
    return enc(doc)


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run_scenario(cfg: ScenarioConfig, out: str | None = None, fmt_name: str | None = None,
                 jobs: int = 1) -> int:
    """Execute a validated scenario and write its table; returns the exit status."""
    out = out or cfg.output_path
    fmt_name = fmt_name or cfg.output_format
    if cfg.mode == "sweep":
        table, err = run_sweep(cfg, jobs)
        _emit(render(table, fmt_name, partial=err), out)
        if err is not None:
            _report(err)
            return _exit_code(err)
        return EXIT_OK
    status, payload = _run_one(cfg)
    if status == "error":
        _report(payload)
        return _exit_code(payload)
    _emit(render(payload, fmt_name), out)
    return EXIT_OK


def _report(record: dict):
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defosc",
        description="Damped deformed quantum oscillator scenarios.",
    )
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="key = value or JSON scenario file")
    parser.add_argument("--out", help="output file (default: output.path or stdout)")
    parser.add_argument("--format", choices=("csv", "json"), dest="fmt")
    parser.add_argument("--jobs", type=int, default=None,
                        help="sweep workers (default: $DEFOSC_JOBS or 1)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    jobs = args.jobs
    if jobs is None:
        env = os.environ.get("DEFOSC_JOBS", "1")
        try:
            jobs = int(env)
        except ValueError:
            _report(_error_record("config", f"DEFOSC_JOBS={env!r} is not an integer",
                                  field="--jobs"))
            return EXIT_CONFIG
    if jobs < 1:
        _report(_error_record("config", "must be >= 1", field="--jobs"))
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, mode=args.mode)
    except ConfigError as exc:
        _report(_error_record("config", exc.message, field=exc.field))
        return EXIT_CONFIG
    return run_scenario(cfg, args.out, args.fmt, jobs)


if __name__ == "__main__":
    sys.exit(main())
