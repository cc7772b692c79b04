"""Command-line front end: ``hystkin <command> [options]``.

Commands: generate, train, select-k, evaluate, invert, report. Options may
also come from a TOML file given with ``--config``; command-line flags win
over the file, and the file wins over built-in defaults. Errors print one
line ``E_<CODE>: message`` to stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .dataset import _atomic_write_text, load_csv, split_cycles, train_test_split, write_csv
from .errors import HystkinError, Unreachable
from .gmm import select_k
from .hysteresis import (
    HysteresisModel,
    SolverState,
    evaluate,
    solve_inverse,
    tip_error_um,
    train_hysteresis_model,
)
from .plotting import plot_criteria, plot_loop
from .simulator import PRESETS, BacklashPlant, generate_dataset

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("hystkin")

EXIT_CODES = {"E_CONFIG": 2, "E_IO": 3, "E_EM": 4, "E_UNREACHABLE": 5}
LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

RESULTS_CSV = "results.csv"
PER_SAMPLE_CSV = "per_sample.csv"
LOOP_SVG = "loop.svg"
CRITERIA_CSV = "criteria.csv"
CRITERIA_SVG = "criteria.svg"
FIT_REPORT = "fit_report.txt"
INVERSE_CSV = "inverse.csv"
REPORT_TXT = "report.txt"


class ConfigError(HystkinError):
    code = "E_CONFIG"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _read_csv_dicts(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _out_dir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_split(args):
    ds = load_csv(args.data, args.q_min, args.q_max)
    return train_test_split(ds, args.train_cycles)


def cmd_generate(args):
    plant = BacklashPlant.preset(args.preset, noise_sigma=args.noise, seed=args.seed)
    ds = generate_dataset(plant, args.cycles, args.steps, args.amplitude, warmup=args.warmup)
    write_csv(ds, args.out)
    log.info("wrote %d samples (%d cycles) to %s", len(ds), ds.cycles, args.out)


def cmd_train(args):
    train, _ = _load_split(args)
    model, reports = train_hysteresis_model(
        train, *args.k, seed=args.seed, max_iters=args.max_iters, tol=args.tol
    )
    model = HysteresisModel(model.nominal, model.cw, model.ccw, model.q_min, model.q_max, args.epsilon)
    out = _out_dir(args.out)
    model.save(out)
    text = "".join(f"[{name}]\nK {k}\n{reports[name].to_text()}\n" for name, k in zip(("nominal", "cw", "ccw"), args.k))
    _atomic_write_text(out / FIT_REPORT, text)
    for name, rep in reports.items():
        if not rep.converged:
            log.warning("%s fit stopped at max_iters=%d without meeting tol", name, args.max_iters)
    log.info("model bundle written to %s", out)


def cmd_select_k(args):
    ds = load_csv(args.data, args.q_min, args.q_max)
    if args.train_cycles:
        ds, _ = train_test_split(ds, args.train_cycles)
    if args.branch == "nominal":
        pts = ds.points
    else:
        asc, desc = split_cycles(ds)
        pts = (asc if args.branch == "cw" else desc).points
    best_bic, best_aic, table = select_k(
        pts, (args.k_min, args.k_max), seed=args.seed, max_iters=args.max_iters, tol=args.tol
    )
    out = _out_dir(args.out)
    _atomic_write_text(out / CRITERIA_CSV, _csv_text(("k", "bic", "aic"), [(r.k, r.bic, r.aic) for r in table]))
    plot_criteria(table, out / CRITERIA_SVG, title=f"{args.branch} model")
    print(f"best_k_bic={best_bic} best_k_aic={best_aic}")


def cmd_evaluate(args):
    _, test = _load_split(args)
    model = HysteresisModel.load(args.model)
    ev = evaluate(model, test)
    out = _out_dir(args.out)
    _atomic_write_text(
        out / RESULTS_CSV,
        _csv_text(
            ("rmse_nominal", "rmse_compensated", "improvement_pct", "n_samples"),
            [(ev.rmse_nominal, ev.rmse_compensated, ev.improvement_pct, len(test))],
        ),
    )
    cols = list(ev.per_sample)
    rows = zip(*(ev.per_sample[c].tolist() for c in cols))
    _atomic_write_text(out / PER_SAMPLE_CSV, _csv_text(cols, rows))
    plot_loop(model, test, out / LOOP_SVG)
    print(
        f"rmse_nominal={ev.rmse_nominal:.4f} rmse_compensated={ev.rmse_compensated:.4f} "
        f"improvement_pct={ev.improvement_pct:.1f}"
    )


def _targets(args) -> list[float]:
    if args.targets_file:
        rows = _read_csv_dicts(args.targets_file)
        if not rows or "gamma_des" not in rows[0]:
            raise ConfigError(f"{args.targets_file}: expected a gamma_des column")
        return [float(r["gamma_des"]) for r in rows]
    if not args.targets:
        raise ConfigError("give --targets or --targets-file")
    return list(args.targets)


def cmd_invert(args):
    model = HysteresisModel.load(args.model)
    state = SolverState(
        q_prev=args.q_start,
        epsilon=args.epsilon if args.epsilon is not None else model.epsilon,
        max_iters=args.max_iters,
    )
    rows = []
    failed = []
    for g in _targets(args):
        sol = solve_inverse(model, state, g)
        rows.append((g, sol.q_star, sol.gamma_achieved, sol.iterations, str(sol.converged).lower(), sol.trace_summary()))
        if not sol.converged:
            failed.append(g)
    header = ("gamma_des", "q_star", "gamma_achieved", "iterations", "converged", "branch_trace")
    _atomic_write_text(args.out, _csv_text(header, rows))
    if failed:
        raise Unreachable(f"{len(failed)} target(s) not reached: " + ", ".join(f"{g:g}" for g in failed))


def summarize(directory, arm_length_mm: float = 3.0) -> str:
    """Plain-text digest of whatever artifacts an experiment directory holds."""
    d = Path(directory)
    lines = [f"experiment: {d}"]
    found = False
    if (d / RESULTS_CSV).exists():
        found = True
        r = _read_csv_dicts(d / RESULTS_CSV)[0]
        nom, comp = float(r["rmse_nominal"]), float(r["rmse_compensated"])
        lines += [
            f"rmse_nominal_deg {nom:.4f}",
            f"rmse_compensated_deg {comp:.4f}",
            f"improvement_pct {float(r['improvement_pct']):.2f}",
            f"arm_length_mm {arm_length_mm:g}",
            f"tip_error_nominal_um {tip_error_um(nom, arm_length_mm):.2f}",
            f"tip_error_compensated_um {tip_error_um(comp, arm_length_mm):.2f}",
        ]
    if (d / CRITERIA_CSV).exists():
        found = True
        rows = _read_csv_dicts(d / CRITERIA_CSV)
        best_bic = min(rows, key=lambda r: float(r["bic"]))["k"]
        best_aic = min(rows, key=lambda r: float(r["aic"]))["k"]
        lines += [f"k_range {rows[0]['k']}..{rows[-1]['k']}", f"best_k_bic {best_bic}", f"best_k_aic {best_aic}"]
    if (d / FIT_REPORT).exists():
        found = True
        for block in (d / FIT_REPORT).read_text(encoding="utf-8").split("\n\n"):
            kv = dict(ln.split(" ", 1) for ln in block.splitlines()[1:] if " " in ln)
            if kv:
                name = block.splitlines()[0].strip("[]")
                lines.append(f"fit_{name} K={kv.get('K')} iterations={kv.get('iterations')} converged={kv.get('converged')}")
    if (d / INVERSE_CSV).exists():
        found = True
        rows = _read_csv_dicts(d / INVERSE_CSV)
        ok = sum(r["converged"] == "true" for r in rows)
        lines.append(f"inverse_converged {ok}/{len(rows)}")
    if not found:
        raise HystkinError(f"{d}: no experiment artifacts found")
    return "\n".join(lines) + "\n"


def cmd_report(args):
    text = summarize(args.dir, args.arm_length_mm)
    _atomic_write_text(args.out or Path(args.dir) / REPORT_TXT, text)
    sys.stdout.write(text)


def _common(p, data=True):
    p.add_argument("--config", help="TOML file with option defaults")
    p.add_argument("--seed", type=int, default=0)
    if data:
        p.add_argument("--data", required=True, help="dataset CSV")
        p.add_argument("--q-min", type=float, default=-1.0)
        p.add_argument("--q-max", type=float, default=1.0)


def _em_opts(p):
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-7)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hystkin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate a dataset from a plant preset")
    _common(p, data=False)
    p.add_argument("--preset", choices=sorted(PRESETS), default="pitch-like")
    p.add_argument("--cycles", type=int, default=9)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.15, help="measurement noise sigma (deg)")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--warmup", action="store_true", help="run one unrecorded cycle first")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit nominal, cw and ccw models")
    _common(p)
    _em_opts(p)
    p.add_argument("--train-cycles", type=int, default=6)
    p.add_argument("--k", type=int, nargs=3, default=[9, 9, 9], metavar=("K_NOM", "K_CW", "K_CCW"))
    p.add_argument("--epsilon", type=float, default=0.05, help="inverse tolerance stored with the model (deg)")
    p.add_argument("--out", required=True, help="model bundle directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select-k", help="BIC/AIC sweep over the number of components")
    _common(p)
    _em_opts(p)
    p.add_argument("--train-cycles", type=int, default=0, help="use only the first N cycles (0: all)")
    p.add_argument("--branch", choices=("nominal", "cw", "ccw"), default="nominal")
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=15)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("evaluate", help="nominal vs compensated RMSE on test cycles")
    _common(p)
    p.add_argument("--train-cycles", type=int, default=6)
    p.add_argument("--model", required=True, help="model bundle directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("invert", help="solve inverse kinematics for target angles")
    _common(p, data=False)
    p.add_argument("--model", required=True)
    p.add_argument("--targets", type=float, nargs="+", help="target angles (deg), solved in order")
    p.add_argument("--targets-file", help="CSV with a gamma_des column")
    p.add_argument("--q-start", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("report", help="text summary of an experiment directory")
    p.add_argument("--config", help="TOML file with option defaults")
    p.add_argument("--dir", required=True)
    p.add_argument("--arm-length-mm", type=float, default=3.0)
    p.add_argument("--out", default=None, help="summary path (default: DIR/report.txt)")
    p.set_defaults(func=cmd_report)
    return parser


def _load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _norm(d: dict) -> dict:
    return {k.replace("-", "_"): v for k, v in d.items()}


def parse_args(argv=None) -> argparse.Namespace:
    """Parse ``argv``; a ``--config`` file supplies defaults that flags override.

    Top-level keys apply to every command that has the option; a table named
    after the command applies to that command only and must name known options.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subparsers), None)
    if known.config and command:
        cfg = _load_config(known.config)
        sub = subparsers[command]
        dests = {a.dest for a in sub._actions}
        table = cfg.get(command, {})
        if not isinstance(table, dict):
            raise ConfigError(f"config entry {command!r} must be a table")
        specific = _norm(table)
        unknown = sorted(set(specific) - dests)
        if unknown:
            raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        defaults = {k: v for k, v in _norm(cfg).items() if k in dests and not isinstance(v, dict)}
        defaults.update(specific)
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _setup_logging():
    level_name = os.environ.get("HYSTKIN_LOG", "info").lower()
    if level_name not in LOG_LEVELS:
        raise ConfigError(f"HYSTKIN_LOG must be one of {', '.join(LOG_LEVELS)}, got {level_name!r}")
    logging.basicConfig(level=LOG_LEVELS[level_name], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = parse_args(argv)
        args.func(args)
    except HystkinError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.code, 1)
    except OSError as exc:
        print(f"E_IO: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_CODES["E_IO"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
