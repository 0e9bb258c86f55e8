"""memlab command line: gen-data, evolve, sweep, analyze, verify, report.

Exit codes: 0 success, 1 configuration or input error, 2 solver error,
3 diagnostics or verification failure.
"""

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from memlab.checkpoint import CheckpointWriter, read_checkpoint, read_data, write_checkpoint, write_data
from memlab.config import RunConfig, load_config
from memlab.diagnostics import (
    FRAME_QUANTITIES,
    ConeFluxAccumulator,
    History,
    RrmeEnergyMonitor,
    commuted_residual_norm,
    energy_identity,
    flux_energy,
    last_slice_report,
    pointwise_tracker,
    region_one_energy,
    scaling_fit,
)
from memlab.models import close_db, init_db, is_complete, record_run, sweep_runs
from memlab.report import (
    CONSTRAINT_COLUMNS,
    FIT_COLUMNS,
    FLUX_COLUMNS,
    MONITOR_COLUMNS,
    check_entry,
    fit_entry,
    fit_rows,
    flux_rows,
    monitor_rows,
    read_table,
    write_summary,
    write_table,
)
from memlab.shortpulse import (
    chart_consistency,
    check_constraints,
    direct_data,
    fit_constraints,
    null_cone_vanishing,
    rrme_data,
    rrme_jet_bound,
)
from memlab.solver import Monitor, evolve
from memlab.utils import (
    InsufficientJetError,
    InsufficientSamplesError,
    InvalidInputError,
    MemlabError,
    OutOfHistoryError,
    VerificationFailedError,
    calculate_sha256,
    conf,
    init_data,
    worker_count,
)
from memlab.verify import list_suites, run_suites

FITTED = ("L_sup", "Lb_last_slice", "region_one", "energy_dt", "energy_Lbt", "energy_Lt")


def run_tag(config, delta):
    grid = config.grid()
    return f"{config.mode}-n{config.n}-delta{delta:g}-N{grid.N}"


def run_dir(config, delta):
    return config.output_dir / "runs" / run_tag(config, delta)


def _relative(config, paths):
    return [Path(p).relative_to(config.output_dir).as_posix() for p in paths]


def _attempt(label, fn, *args, **kwargs):
    """fn(*args, **kwargs), or None when the history does not cover the request."""
    try:
        return fn(*args, **kwargs)
    except (OutOfHistoryError, InsufficientSamplesError, InsufficientJetError) as e:
        logging.warning("%s skipped: %s", label, e)
        return None


def make_data(config, delta, callbacks=()):
    grid = config.grid()
    if config["run"]["provenance"] == "rrme":
        return rrme_data(delta, config.profile(), grid, config.rrme_settings(), callbacks)
    return direct_data(delta, config.profile(), grid)


def generate(config, delta):
    """Write the Cauchy data of one delta with its constraint table; returns (report, checks, outputs)."""
    directory = run_dir(config, delta)
    tag = run_tag(config, delta)
    thresholds = config["thresholds"]
    energy = RrmeEnergyMonitor(stride=10)
    data = make_data(config, delta, [energy])
    outputs = [write_data(directory / "data.memb", data)]
    report = check_constraints(data)
    outputs.append(write_table(directory / "constraints.csv", "constraint sup norms", CONSTRAINT_COLUMNS, report.rows()))

    outside = data.outside_support()
    checks = {
        f"{tag}.outside_support": check_entry(outside, 0.0, outside == 0),
        f"{tag}.constraints_finite": check_entry(None, None, report.passed),
    }
    if data.run is not None:
        limit = thresholds["null_cone"]
        incoming, outgoing = null_cone_vanishing(data.run)
        checks[f"{tag}.null_cone_incoming"] = check_entry(incoming, limit, incoming <= limit)
        checks[f"{tag}.null_cone_outgoing"] = check_entry(outgoing, limit, outgoing <= limit)
        bounds = rrme_jet_bound(data.run.initial)
        rows = [(i0, i1, weighted, plain) for (i0, i1), (weighted, plain) in sorted(bounds.items())]
        columns = [
            ("i0", "order of delta d_u'"),
            ("i1", "order of delta d_ub'"),
            ("weighted", "sup over the slab divided by delta^(3/2)"),
            ("plain", "sup of the unweighted derivative"),
        ]
        outputs.append(write_table(directory / "jet_bound.csv", "rescaled data jet bound", columns, rows))
        worst = max(w for _, _, w, _ in rows)
        checks[f"{tag}.jet_bound"] = check_entry(worst, thresholds["jet_bound"], worst <= thresholds["jet_bound"])

        rows = [(t, e, e / delta) for t, e in energy.records]
        columns = [("t_prime", "rescaled time"), ("energy", "d_t flux through t' = const"), ("per_delta", "energy / delta")]
        outputs.append(write_table(directory / "rrme_energy.csv", "rescaled slice energy", columns, rows))
        logging.info("rescaled energy of %s grows by %s", tag, energy.growth())

        if config.mode == "radial":
            diff, scale = chart_consistency(
                delta, config.profile(), config.n, config.grid().N, config.chart_settings(),
                1.0 + config["chart"]["dt"], config["run"]["cfl"],
            )
            relative = diff / scale if scale > 0 else diff
            checks[f"{tag}.chart_consistency"] = check_entry(relative, thresholds["chart"], relative <= thresholds["chart"])
    logging.info("data %s: outside support %.3e", tag, outside)
    return report, checks, outputs


def analyze_history(config, delta, history, accumulator, final):
    """Per-run diagnostic tables; returns (scalars, outputs)."""
    directory = run_dir(config, delta)
    d = config["diagnostics"]
    bounds = config["thresholds"]["bounds"]
    scalars, outputs = {}, []
    t_start, t_last = history.span
    t0 = max(1.0, t_start)

    ub = config.t_end - delta
    if ub >= t0 + delta:
        reports = []
        for multiplier in d["multipliers"]:
            for word in [w for w in config.words() if len(w) <= 1]:
                rep = _attempt(
                    f"energy identity {multiplier} {word}",
                    energy_identity, history, delta, ub, -delta, t0, multiplier, word, d["energy_resolution"],
                )
                if rep is None:
                    continue
                reports.append(rep)
                if not word:
                    scalars[f"energy_{multiplier}"] = rep.initial
                    scalars[f"margin_{multiplier}"] = rep.margin
                    scalars[f"identity_{multiplier}"] = rep.relative_residual
        outputs.append(write_table(directory / "flux.csv", "energy identity", FLUX_COLUMNS, flux_rows(reports)))

        # second-order words: cone fluxes only, the bulk needs one more derivative
        rows = []
        for word in [w for w in config.words() if len(w) == 2]:
            flux = _attempt(
                f"cone flux {word}", flux_energy, history, "outgoing", delta, (t0 - delta, ub), "dt", word,
                d["energy_resolution"],
            )
            if flux is not None:
                rows.append((word, flux[0], flux[1]))
        if rows:
            columns = [("word", "commuting word"), ("flux", "d_t flux through u = delta"), ("margin", "least flux density")]
            outputs.append(write_table(directory / "cone_words.csv", "second-order cone fluxes", columns, rows))

    stations = config.stations(delta)
    stations = stations[(stations >= t_start) & (stations + delta <= t_last)]
    if stations.size >= 3:
        table = _attempt("pointwise tracker", pointwise_tracker, history, delta, stations)
        if table is not None:
            rows = [(s, *(table.rows[q][i] for q in FRAME_QUANTITIES)) for i, s in enumerate(table.stations)]
            columns = [("ub", "incoming null coordinate")] + [(q, f"sup over 0 <= u <= delta of |{q} phi|") for q in FRAME_QUANTITIES]
            outputs.append(write_table(directory / "tracker.csv", "pointwise frame derivatives", columns, rows))
            scalars["L_sup"] = float(np.max(table.rows["L"]))
            fit = _attempt("decay fit", table.fit, "Lb", bounds["Lb_decay"], 0.0, "lower")
            if fit is not None:
                scalars["Lb_decay"] = fit.slope
        last = _attempt("last slice", last_slice_report, history, delta, stations)
        if last is not None:
            rows = list(zip(last.stations, last.lb, last.transport))
            columns = [
                ("ub", "incoming null coordinate on u = delta"),
                ("Lb", "|Lb phi|"),
                ("transport", "ub^(n-1) (Lb phi)^2 / g"),
            ]
            outputs.append(write_table(directory / "last_slice.csv", "last slice", columns, rows))
            words = [(word, value) for word, value in sorted(last.words.items(), key=lambda kv: (len(kv[0]), kv[0]))]
            outputs.append(
                write_table(
                    directory / "last_slice_words.csv",
                    "sup over the last slice of commuted fields",
                    [("word", "commuting word, '-' for phi itself"), ("sup", "sup of |Z phi| over the stations")],
                    words,
                )
            )
            scalars["Lb_last_slice"] = float(np.max(last.lb))
            scalars["transport_variation"] = last.transport_variation

    rows = [(word, final.t, region_one_energy(final, delta, word)) for word in config.words()]
    outputs.append(
        write_table(
            directory / "region_one.csv",
            "slice energy inside u >= delta",
            [("word", "commuting word"), ("t", "slice time"), ("energy", "square root of the slice integral")],
            rows,
        )
    )
    scalars["region_one"] = rows[0][2]

    cone_rows = [(u, ub, value) for u, series in sorted(accumulator.series.items()) for ub, value in series]
    outputs.append(
        write_table(
            directory / "cones.csv",
            f"cumulative outgoing flux ({accumulator.multiplier})",
            [("u", "outgoing cone"), ("ub", "incoming null coordinate"), ("flux", "flux through C_u up to ub")],
            cone_rows,
        )
    )
    ratio = accumulator.uniform_ratio(0.0, delta)
    if ratio is not None:
        scalars["uniform_ratio"] = ratio

    for letter in sorted({z for word in config.words() for z in word}):
        scalars[f"commuted_{letter}"] = commuted_residual_norm(final, letter)

    rows = sorted(scalars.items())
    outputs.append(write_table(directory / "scalars.csv", "per-run scalars", [("quantity", "name"), ("value", "value")], rows))
    return scalars, outputs


def execute_run(config, delta, resume=None):
    """Evolve the data of one delta to t_end; returns (registry entry, error or None). Never raises MemlabError."""
    grid = config.grid()
    directory = run_dir(config, delta)
    entry = {"mode": config.mode, "n": config.n, "delta": delta, "N": grid.N, "status": "failed", "exit_code": 0}
    monitor = Monitor(warn_floor=config["thresholds"]["min_g"])
    outputs = []
    started = time.perf_counter()
    try:
        data_path = directory / "data.memb"
        if not data_path.is_file():
            raise InvalidInputError(f"no Cauchy data at {data_path}; run `memlab gen-data` first")
        state = read_data(data_path)
        if resume is not None:
            resumed = read_checkpoint(resume)
            if resumed.grid != state.grid or resumed.delta != state.delta:
                raise InvalidInputError(f"checkpoint {resume} does not belong to run {run_tag(config, delta)}")
            state = resumed
        history = History(stride=config["diagnostics"]["history_stride"])
        accumulator = ConeFluxAccumulator(config.cones(delta), "Lt")
        writer = CheckpointWriter(config.output_dir / "checkpoints" / run_tag(config, delta), config["output"]["checkpoint_stride"])
        monitor(state, None)
        try:
            final = evolve(state, config.t_end, callbacks=[monitor, history, accumulator, writer], cfl=config["run"]["cfl"])
        finally:
            outputs.append(write_table(directory / "monitor.csv", "evolution monitor", MONITOR_COLUMNS, monitor_rows(monitor.records)))
        outputs.append(write_checkpoint(directory / "final.memb", final))
        if not history.times:
            history.add(final)
        _, more = analyze_history(config, delta, history, accumulator, final)
        outputs.extend(more)
        entry.update(status="ok", final_t=final.t)
        error = None
    except MemlabError as e:
        logging.exception(e)
        entry.update(exit_code=e.exit_code, error=str(e))
        error = e
    entry["min_g"] = monitor.min_g if monitor.records else None
    entry["outputs"] = _relative(config, outputs)
    if not config["output"]["deterministic"]:
        entry["seconds"] = time.perf_counter() - started
    return entry, error


def _record(entry):
    record_run(
        entry["mode"], entry["n"], entry["delta"], entry["N"], entry["status"], entry["exit_code"],
        entry.get("final_t"), entry.get("min_g"), entry.get("outputs", ()), entry.get("error"),
    )


def _summary(config, command, exit_code, runs=(), fits=None, checks=None, **extra):
    summary = {
        "command": command,
        "config": config.source,
        "exit_code": exit_code,
        "runs": list(runs),
        "fits": fits or {},
        "checks": checks or {},
    }
    summary.update(extra)
    return summary


def render_text(summary):
    lines = [f"memlab {summary['command']} ({summary['config']}): exit {summary['exit_code']}"]
    for run in summary["runs"]:
        line = f"  run delta={run['delta']:g} {run['status']}"
        if run.get("min_g") is not None:
            line += f" min_g={run['min_g']:.4f}"
        if run.get("error"):
            line += f" error: {run['error']}"
        lines.append(line)
    for name, fit in sorted(summary["fits"].items()):
        verdict = "pass" if fit["passed"] else "FAIL"
        lines.append(f"  fit {name}: slope {fit['slope']:.3f} +- {fit['stderr']:.3f} ({fit['side']} {fit['reference']}) {verdict}")
    for name, check in sorted(summary["checks"].items()):
        verdict = "pass" if check["passed"] else "FAIL"
        lines.append(f"  check {name}: {check['value']} (threshold {check['threshold']}) {verdict}")
    for name, passed in sorted(summary.get("suites", {}).items()):
        lines.append(f"  suite {name}: {'pass' if passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def _publish(config, name, summary):
    reports = config.output_dir / "reports"
    path = write_summary(reports / f"{name}.json", summary)
    (reports / f"{name}.txt").write_text(render_text(summary), encoding="utf-8")
    return path


def _failed(checks):
    return sorted(name for name, check in checks.items() if not check["passed"])


def cmd_gen_data(config, args=None):
    reports, checks, runs, provenance = [], {}, [], {}
    grid = config.grid()
    for delta in config.deltas:
        report, more, outputs = generate(config, delta)
        reports.append(report)
        checks.update(more)
        tag = run_tag(config, delta)
        provenance[tag] = {"provenance": config["run"]["provenance"], "sha256": calculate_sha256(outputs[0])}
        runs.append(
            {"mode": config.mode, "n": config.n, "delta": delta, "N": grid.N, "status": "ok", "exit_code": 0,
             "outputs": _relative(config, outputs)}
        )
    fits = {}
    if len(reports) >= 3:
        try:
            fitted = fit_constraints(reports, config["thresholds"]["fit_tolerance"])
            for (family, k, l, m), fit in fitted[0].fits.items():
                fits[f"constraint.{family}.k{k}.l{l}.m{m}"] = fit
            checks["constraints_monotone"] = check_entry(None, None, True if fitted[0].monotone is None else fitted[0].monotone)
        except InsufficientSamplesError as e:
            logging.warning("constraint fits skipped: %s", e)
    if fits:
        write_table(config.output_dir / "reports" / "constraint_fits.csv", "constraint exponents", FIT_COLUMNS, fit_rows(fits))
    failed = [name for name in _failed(checks) if name != "constraints_monotone"]
    exit_code = VerificationFailedError.exit_code if failed else 0
    summary = _summary(
        config, "gen-data", exit_code, runs, {k: fit_entry(f) for k, f in fits.items()}, checks, provenance=provenance
    )
    _publish(config, "gen-data", summary)
    if failed:
        raise VerificationFailedError(f"data checks failed: {', '.join(failed)}")
    return 0


def cmd_evolve(config, args=None):
    if len(config["run"]["deltas"]) > 1:
        raise InvalidInputError("evolve runs a single delta; use `memlab sweep` or --delta")
    resume = getattr(args, "resume", None)
    init_db(config.output_dir / "registry.sqlite")
    try:
        entry, error = execute_run(config, config.delta, resume)
        _record(entry)
    finally:
        close_db()
    summary = _summary(config, "evolve", entry["exit_code"], [entry])
    _publish(config, "evolve", summary)
    if error is not None:
        raise error
    return 0


def _sweep_worker(document, source, delta):
    config = RunConfig(document, source)
    try:
        generate(config, delta)
    except MemlabError as e:
        logging.exception(e)
        grid = config.grid()
        entry = {"mode": config.mode, "n": config.n, "delta": delta, "N": grid.N, "status": "failed",
                 "exit_code": e.exit_code, "error": str(e), "outputs": []}
        return entry, e
    return execute_run(config, delta)


def analyze_sweep(config):
    """Cross-delta fits of the per-run scalars; returns (runs, fits, checks)."""
    grid = config.grid()
    bounds = config["thresholds"]["bounds"]
    runs, scalars = [], {}
    registered = {row.delta: row for row in sweep_runs(config.mode, config.n, grid.N)}
    for delta in config.deltas:
        row = registered.get(delta)
        if row is None:
            logging.warning("no registry entry for delta=%g", delta)
            continue
        runs.append(row.as_summary())
        if row.status != "ok":
            continue
        _, _, rows = read_table(run_dir(config, delta) / "scalars.csv")
        scalars[delta] = {name: value for name, value in rows}

    checks = {}
    for delta, values in sorted(scalars.items()):
        tag = run_tag(config, delta)
        if "Lb_decay" in values:
            v = values["Lb_decay"]
            checks[f"{tag}.Lb_decay"] = check_entry(v, bounds["Lb_decay"], v >= bounds["Lb_decay"])
        if "uniform_ratio" in values:
            v = values["uniform_ratio"]
            limit = config["thresholds"]["uniform_ratio"]
            checks[f"{tag}.uniform_ratio"] = check_entry(v, limit, v <= limit)
    for run in runs:
        if run.get("min_g") is not None:
            floor = config["thresholds"]["min_g"]
            checks[f"{run_tag(config, run['delta'])}.min_g"] = check_entry(run["min_g"], floor, run["min_g"] >= floor)

    fits = {}
    deltas = sorted(scalars)
    for name in FITTED:
        pairs = [(d, scalars[d][name]) for d in deltas if scalars[d].get(name, 0) > 0]
        if len(pairs) < 3:
            continue
        xs, ys = zip(*pairs)
        reference = bounds.get(name)
        fit = _attempt(f"fit {name}", scaling_fit, xs, ys, reference, 0.0, "lower")
        if fit is not None:
            fits[name] = fit
    return runs, fits, checks


def _analysis(config, command, run_error=None):
    """Fit, publish `command`.json and return the verdict failures."""
    init_db(config.output_dir / "registry.sqlite")
    try:
        runs, fits, checks = analyze_sweep(config)
    finally:
        close_db()
    write_table(config.output_dir / "reports" / "fits.csv", "delta exponents", FIT_COLUMNS, fit_rows(fits))
    failed = _failed(checks) + sorted(name for name, fit in fits.items() if not fit.passed)
    exit_code = VerificationFailedError.exit_code if failed else 0
    if run_error is not None:
        exit_code = max(exit_code, run_error.exit_code)
    summary = _summary(config, command, exit_code, runs, {k: fit_entry(f) for k, f in fits.items()}, checks)
    _publish(config, command, summary)
    return failed


def cmd_analyze(config, args=None):
    failed = _analysis(config, "analyze")
    if failed:
        raise VerificationFailedError(f"verdicts failed: {', '.join(failed)}")
    return 0


def cmd_sweep(config, args=None):
    grid = config.grid()
    init_db(config.output_dir / "registry.sqlite")
    try:
        pending = [d for d in config.deltas if not is_complete(config.mode, config.n, d, grid.N)]
        for delta in sorted(set(config.deltas) - set(pending)):
            logging.info("delta=%g already complete, skipped", delta)
    finally:
        close_db()

    results = {}
    if pending:
        with ProcessPoolExecutor(max_workers=min(worker_count(), len(pending))) as pool:
            futures = {delta: pool.submit(_sweep_worker, config.document, config.source, delta) for delta in pending}
            for delta in sorted(futures):
                results[delta] = futures[delta].result()

    init_db(config.output_dir / "registry.sqlite")
    try:
        for delta in sorted(results):
            _record(results[delta][0])
    finally:
        close_db()

    errors = [error for _, error in (results[d] for d in sorted(results)) if error is not None]
    worst = max(errors, key=lambda e: e.exit_code) if errors else None
    failed = _analysis(config, "sweep", worst)
    if worst is not None:
        if failed:
            logging.warning("verdicts after failed runs: %s", ", ".join(failed))
        raise worst
    if failed:
        raise VerificationFailedError(f"verdicts failed: {', '.join(failed)}")
    return 0


def cmd_verify(config, args=None):
    if getattr(args, "list", False):
        for name, description in list_suites():
            print(f"{name}: {description}")
        return 0
    v = config["verify"]
    reports = run_suites(v["suites"], v["seed"], v["samples"], v["tolerance_scale"])
    rows = [(c.suite, c.name, c.kind, c.value, c.tolerance, c.passed) for rep in reports for c in rep.checks]
    columns = [
        ("suite", "suite name"),
        ("check", "invariant"),
        ("kind", "max: value <= tolerance, min: value >= tolerance"),
        ("value", "measured value"),
        ("tolerance", "scaled tolerance"),
        ("passed", "verdict"),
    ]
    write_table(config.output_dir / "reports" / "verify.csv", "invariant suites", columns, rows)
    failed = [f"{c.suite}/{c.name}" for rep in reports for c in rep.failures()]
    exit_code = VerificationFailedError.exit_code if failed else 0
    suites = {rep.name: rep.passed for rep in reports}
    summary = _summary(config, "verify", exit_code, suites=suites)
    _publish(config, "verify", summary)
    if failed:
        raise VerificationFailedError(f"{len(failed)} checks failed: {', '.join(failed)}")
    return 0


def cmd_report(config, args=None):
    """Print the text summaries present in the output folder."""
    reports = config.output_dir / "reports"
    texts = sorted(reports.glob("*.txt"))
    if not texts:
        raise InvalidInputError(f"no summaries under {reports}; run a command first")
    text = "".join(path.read_text(encoding="utf-8") for path in texts)
    print(text, end="")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "evolve": cmd_evolve,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
    "report": cmd_report,
}


class MemlabParser(argparse.ArgumentParser):
    """Usage errors follow the exit-code contract (1) instead of argparse's 2."""

    def error(self, message):
        raise InvalidInputError(f"{self.prog}: {message}")


def build_parser():
    common = MemlabParser(add_help=False)
    common.add_argument("--config", help="run configuration (TOML)")
    common.add_argument("--out", help="output folder, overrides output.directory")
    common.add_argument("--delta", help="pulse width, overrides run.delta and collapses run.deltas")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = MemlabParser(prog="memlab", description="Numerical lab for the relativistic membrane equation.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="short-pulse Cauchy data and constraint tables")
    evolve_parser = sub.add_parser("evolve", parents=[common], help="evolve one run and tabulate diagnostics")
    evolve_parser.add_argument("--resume", help="continue from a checkpoint file")
    sub.add_parser("sweep", parents=[common], help="gen-data and evolve every delta, then analyze")
    sub.add_parser("analyze", parents=[common], help="fit delta exponents over completed runs")
    verify_parser = sub.add_parser("verify", parents=[common], help="run the invariant suites")
    verify_parser.add_argument("--list", action="store_true", help="list the suites without running them")
    sub.add_parser("report", parents=[common], help="print the summaries of an output folder")
    return parser


def _delta_override(value):
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        raise InvalidInputError(f"--delta: not a number: {value!r}")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        config = load_config(args.config).with_overrides(_delta_override(args.delta), args.out)
    except MemlabError as e:
        print(f"memlab: {e}", file=sys.stderr)
        return e.exit_code

    # setup logging
    root = init_data(config.output_dir)
    logging.basicConfig(filename=root / "memlab.log", filemode="a")
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else conf.get("log_level", "INFO"))

    try:
        return COMMANDS[args.command](config, args)
    except MemlabError as e:
        logging.exception(e)
        print(f"memlab: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
