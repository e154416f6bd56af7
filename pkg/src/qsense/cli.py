"""Command-line driver: ``qsense COMMAND [--config PATH] [--out DIR] [--seed N] [--threads N]``.

Configs are INI files. ``[prior]`` and ``[run]`` are shared; every command
reads its own section. Unknown sections or keys are errors. All output is
written once at the end; each CSV starts with a provenance comment carrying
the package version and a hash of the effective configuration.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DomainError, QsenseError, UnsupportedError

log = logging.getLogger("qsense")

COMMANDS = ("bounds", "qubit-opt", "nlevel-sweep", "onthefly", "sequential", "two-qubit",
            "compile", "verify-pulses")

# section -> {key: (type, default)}
SCHEMA = {
    "run": {"seed": (int, 0), "threads": (int, 1), "emit": (str, "csv,json")},
    "prior": {"family": (str, "gaussian"), "mean": (float, 0.0), "sigma": (float, 1.0),
              "lo": (float, -math.sqrt(3.0)), "hi": (float, math.sqrt(3.0)), "path": (str, ""),
              "bin_width": (float, None)},
    "bounds": {"levels": (int, 2), "state": (str, "flat"), "t_max": (float, 6.0),
               "t_points": (int, 61)},
    "qubit-opt": {"grid_points": (int, 200)},
    "nlevel-sweep": {"n_min": (int, 2), "n_max": (int, 9), "t_span": (float, 6.0),
                     "t_points": (int, 200), "restarts": (int, 4)},
    "onthefly": {"steps": (int, 6), "tau": (float, None), "restarts": (int, 8)},
    "sequential": {"A": (float, None), "steps": (int, 2), "simulate": (bool, True)},
    "two-qubit": {"restarts": (int, 4)},
    "compile": {"levels": (int, 3), "state": (str, "optimal"), "t": (float, 2.0),
                "cutoff": (int, None), "measurement": (bool, True)},
    "verify-pulses": {"program": (str, ""), "fields": (str, "0.0,0.4,1.3"), "tolerance": (float, 1e-9)},
}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
_NOT_HASHED = {("run", "threads")}


class Config:
    """Validated configuration with typed access and a stable digest."""

    def __init__(self, text: str = "", base: Path | None = None):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keep key case (``A``)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        self.base = base or Path.cwd()
        self.values: dict[str, dict] = {}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser[section].items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                self.values.setdefault(section, {})[key] = self._convert(section, key, raw)

    @staticmethod
    def _convert(section, key, raw):
        kind = SCHEMA[section][key][0]
        try:
            if kind is bool:
                low = raw.strip().lower()
                if low not in ("true", "false", "yes", "no", "1", "0"):
                    raise ValueError(raw)
                return low in ("true", "yes", "1")
            return kind(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from exc

    def get(self, section, key):
        if key in self.values.get(section, {}):
            return self.values[section][key]
        return SCHEMA[section][key][1]

    def set(self, section, key, value):
        self.values.setdefault(section, {})[key] = value

    def digest(self, command: str) -> str:
        # the thread count cannot change results, so it stays out of the hash
        canon = {"command": command}
        for section in sorted(SCHEMA):
            canon[section] = {k: self.get(section, k) for k in sorted(SCHEMA[section])
                              if (section, k) not in _NOT_HASHED}
        blob = json.dumps(canon, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def path(self, section, key) -> Path | None:
        raw = self.get(section, key)
        if not raw:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base / p


def build_prior(cfg: Config):
    from .priors import GaussianPrior, UniformPrior, load_grid_csv

    family = cfg.get("prior", "family").lower()
    if family == "gaussian":
        return GaussianPrior(cfg.get("prior", "mean"), cfg.get("prior", "sigma"))
    if family == "uniform":
        return UniformPrior(cfg.get("prior", "lo"), cfg.get("prior", "hi"))
    if family == "grid":
        path = cfg.path("prior", "path")
        if path is None or not path.exists():
            raise ConfigError(f"grid prior needs an existing path, got {path}")
        return load_grid_csv(path, cfg.get("prior", "bin_width"))
    raise ConfigError(f"unknown prior family {family!r}")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Output:
    """Collects files and writes them in one go at the end."""

    def __init__(self, outdir: Path, command: str, digest: str):
        self.outdir = outdir
        self.header = f"# qsense {__version__} command={command} config_sha256={digest}\n"
        self.files: dict[str, str] = {}

    def table(self, name: str, columns, rows):
        buf = io.StringIO()
        buf.write(self.header)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        self.files[name] = buf.getvalue()

    def text(self, name: str, body: str):
        self.files[name] = body if body.endswith("\n") else body + "\n"

    def flush(self):
        self.outdir.mkdir(parents=True, exist_ok=True)
        for name, body in self.files.items():
            (self.outdir / name).write_text(body)


# -- commands -----------------------------------------------------------------

def cmd_bounds(cfg: Config, out: Output):
    from .estimation import ProbeState, Spectrum, bcrb, entropic_bound, optimal_mse
    from .protocols import sine_state

    prior = build_prior(cfg)
    n = cfg.get("bounds", "levels")
    kind = cfg.get("bounds", "state")
    if kind == "flat":
        state = ProbeState.flat(n)
    elif kind == "sine":
        state = sine_state(n)
    else:
        raise ConfigError(f"[bounds] state must be flat or sine, got {kind!r}")
    spec = Spectrum.equally_gapped(n)
    ent = entropic_bound(prior, n)
    rows = []
    for t in np.linspace(0.0, cfg.get("bounds", "t_max"), cfg.get("bounds", "t_points")):
        try:
            b = bcrb(prior, state, spec, float(t))
        except UnsupportedError:
            b = math.nan
        rows.append((float(t), b, ent, optimal_mse(prior, state, spec, float(t))))
    out.table("bounds.csv", ("t", "bcrb", "entropic_d", "mse"), rows)


def cmd_qubit_opt(cfg: Config, out: Output):
    from .estimation import ProbeState, Spectrum, qubit_general_solution, simulate_bayes, solve
    from .optimizeng import find_tmax

    prior = build_prior(cfg)
    spec, state = Spectrum.qubit(), ProbeState.flat(2)
    res = find_tmax(prior, spec, state, grid_points=cfg.get("qubit-opt", "grid_points"))
    _, sol, mse = solve(prior, state, spec, res.t_max)
    _, g = qubit_general_solution(prior, res.t_max)
    oracle = simulate_bayes(prior, state, spec, res.t_max, sol).mse
    rows = [("t_max", res.t_max), ("mse_min", res.mse_min), ("mse_personick", mse),
            ("mse_closed_form", prior.variance - g), ("mse_grid_oracle", oracle)]
    out.table("qubit_opt.csv", ("quantity", "value"), rows)


def cmd_nlevel_sweep(cfg: Config, out: Output):
    from .optimizeng import SWEEP_COLUMNS, nlevel_sweep

    prior = build_prior(cfg)
    lo, hi = cfg.get("nlevel-sweep", "n_min"), cfg.get("nlevel-sweep", "n_max")
    if not 1 <= lo <= hi:
        raise ConfigError("need 1 <= n_min <= n_max")
    t_grid = np.linspace(0.0, cfg.get("nlevel-sweep", "t_span") / prior.sigma, cfg.get("nlevel-sweep", "t_points"))
    tab = nlevel_sweep(prior, range(lo, hi + 1), t_grid, restarts=cfg.get("nlevel-sweep", "restarts"),
                       seed=cfg.get("run", "seed"), threads=cfg.get("run", "threads"))
    out.table("nlevel_sweep.csv", SWEEP_COLUMNS, tab.rows())
    env, best = tab.envelope()
    out.table("envelope.csv", ("t", "mse", "n"), zip(tab.t_grid, env, best))
    cross = tab.crossover_times()
    out.table("crossovers.csv", ("n", "t_crossover"), sorted(cross.items()))


def cmd_onthefly(cfg: Config, out: Output):
    from .protocols import onthefly_run

    prior = build_prior(cfg)
    trace = onthefly_run(prior, cfg.get("onthefly", "steps"), cfg.get("onthefly", "tau"),
                         restarts=cfg.get("onthefly", "restarts"), seed=cfg.get("run", "seed"))
    emit = _emit(cfg)
    if "csv" in emit:
        body = trace.to_csv()
        out.text("onthefly.csv", out.header + body)
    if "json" in emit:
        out.text("onthefly.json", trace.to_json())


def cmd_sequential(cfg: Config, out: Output):
    from .protocols import sequential_coefficient, sequential_optimize_A, sequential_plan, sequential_simulate

    prior = build_prior(cfg)
    A = cfg.get("sequential", "A")
    A_star, coef_star = sequential_optimize_A()
    A = A_star if A is None else A
    steps = cfg.get("sequential", "steps")
    plan = sequential_plan(prior.variance, A, steps)
    rows = []
    for k in range(steps + 1):
        t = plan.times[k] if k < steps else math.nan
        rows.append((k, plan.variances[k], t, plan.cumulative[k]))
    out.table("sequential_plan.csv", ("k", "variance", "time", "cumulative_time"), rows)
    summary = [("A", A), ("R", plan.R), ("coefficient", sequential_coefficient(A)),
               ("A_star", A_star), ("coefficient_star", coef_star),
               ("gaussian_mse", plan.variances[-1])]
    if cfg.get("sequential", "simulate"):
        summary.append(("exact_mse", sequential_simulate(prior, steps, plan.times)))
    out.table("sequential_summary.csv", ("quantity", "value"), summary)


def cmd_two_qubit(cfg: Config, out: Output):
    from .optimizeng import two_qubit_study

    prior = build_prior(cfg)
    rep = two_qubit_study(prior, restarts=cfg.get("two-qubit", "restarts"), seed=cfg.get("run", "seed"))
    rows = [("free_t", rep.free_t), ("free_mse", rep.free_mse), ("lifted_x", rep.lifted_x),
            ("lifted_t", rep.lifted_t), ("lifted_mse", rep.lifted_mse), ("ratio", rep.ratio),
            ("equal_gap_t", rep.equal_gap_t), ("equal_gap_mse", rep.equal_gap_mse)]
    rows += [(f"amplitude_{i}", v) for i, v in enumerate(rep.amplitudes)]
    rows += [(f"phase_coefficient_{i}", v) for i, v in enumerate(rep.phase_coefficients)]
    rows += [(f"estimator_{i}", v) for i, v in enumerate(rep.estimators)]
    for r, (amp, ph) in enumerate(zip(rep.projector_amplitudes, rep.projector_phases)):
        rows += [(f"projector{r}_amplitude_{i}", v) for i, v in enumerate(amp)]
        rows += [(f"projector{r}_phase_{i}", v) for i, v in enumerate(ph)]
    out.table("two_qubit.csv", ("quantity", "value"), rows)
    out.table("two_qubit_frozen.csv", ("t", "mse"), zip(rep.frozen_times, rep.frozen_mse))


def cmd_compile(cfg: Config, out: Output):
    from .estimation import ProbeState, Spectrum, personick_solve, averaged_pair
    from .ioncompile import compile_protocol
    from .optimizeng import optimize_state
    from .protocols import sine_state

    prior = build_prior(cfg)
    n = cfg.get("compile", "levels")
    t = cfg.get("compile", "t")
    spec = Spectrum.equally_gapped(n)
    kind = cfg.get("compile", "state")
    if kind == "optimal":
        state = optimize_state(prior, spec, t, seed=cfg.get("run", "seed")).state
    elif kind == "flat":
        state = ProbeState.flat(n)
    elif kind == "sine":
        state = sine_state(n)
    else:
        raise ConfigError(f"[compile] state must be optimal, flat or sine, got {kind!r}")
    projectors = None
    if cfg.get("compile", "measurement"):
        projectors = personick_solve(averaged_pair(prior, state, spec, t)).projectors
    prog = compile_protocol(spec, state, t, cfg.get("compile", "cutoff"), projectors)
    out.text("program.json", prog.to_json())


def sample_program_text() -> str:
    return resources.files("qsense").joinpath("data/sample_program.json").read_text()


def cmd_verify_pulses(cfg: Config, out: Output):
    from .ioncompile import IonProgram, program_deviation

    path = cfg.path("verify-pulses", "program")
    if path is not None and not path.exists():
        raise ConfigError(f"pulse program {path} does not exist")
    text = sample_program_text() if path is None else path.read_text()
    try:
        prog = IonProgram.from_json(text)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"malformed pulse program: {exc}") from exc
    try:
        fields = [float(x) for x in cfg.get("verify-pulses", "fields").split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError("[verify-pulses] fields must be comma separated numbers") from exc
    rows = [(B, program_deviation(prog, B)) for B in fields]
    out.table("verify.csv", ("B", "max_deviation"), rows)
    worst = max(r[1] for r in rows) if rows else 0.0
    print(f"max deviation {worst:.3e} over {len(rows)} field values")
    if worst > cfg.get("verify-pulses", "tolerance"):
        print(f"numerical failure: pulse program deviates by {worst:.3e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _emit(cfg: Config) -> set[str]:
    return {x.strip() for x in cfg.get("run", "emit").split(",") if x.strip()}


HANDLERS = {
    "bounds": cmd_bounds,
    "qubit-opt": cmd_qubit_opt,
    "nlevel-sweep": cmd_nlevel_sweep,
    "onthefly": cmd_onthefly,
    "sequential": cmd_sequential,
    "two-qubit": cmd_two_qubit,
    "compile": cmd_compile,
    "verify-pulses": cmd_verify_pulses,
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qsense", description="Bayesian single-qubit sensing workbench")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="INI config file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int, help="seed for quasi-random restarts (overrides [run] seed)")
    p.add_argument("--threads", type=int, help="worker threads for sweeps (overrides [run] threads)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.config is not None:
            if not args.config.exists():
                raise ConfigError(f"config file {args.config} not found")
            cfg = Config(args.config.read_text(), base=args.config.parent)
        else:
            cfg = Config()
        if args.seed is not None:
            cfg.set("run", "seed", args.seed)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            cfg.set("run", "threads", args.threads)
        out = Output(args.out, args.command, cfg.digest(args.command))
        code = HANDLERS[args.command](cfg, out) or EXIT_OK
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QsenseError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out.flush()
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
