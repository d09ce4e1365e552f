"""Experiment runner: configures, seeds, and executes the descent
experiments, emitting CSV histories, a JSON manifest, and plot data.

Three experiments are available: `app1` (random p-Laplace energy, steepest
descent in W^{1,4}_0), `app2` (elliptic control, steepest descent in L^4),
and `compare-p2` (the control problem at p = 2, running steepest descent
and gradient descent side by side with shared seeds).
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, optimize
from .fem import NodalFunction, SolverSettings, build_mesh
from .optimize import DescentAborted, StepSchedule
from .problems import App1Config, App1Problem, App2Config, App2Problem
from .random_field import KleSpec

EXPERIMENTS = ("app1", "app2", "compare-p2")

HISTORY_COLUMNS = ("n", "t_n", "dual_norm", "running_min", "cum_t", "rate_product", "energy")

#: per-experiment defaults for fields the experiments disagree on
_EXPERIMENT_DEFAULTS = {
    "app1": {"p": 4.0, "alpha": 3.0},
    "app2": {"p": 4.0, "alpha": 2.0},
    "compare-p2": {"p": 2.0, "alpha": 2.0},
}


class ConfigError(ValueError):
    """Invalid run configuration; message lines name the offending fields."""

    def __init__(self, errors):
        super().__init__("\n".join(errors))
        self.errors = list(errors)


class HistoryFormatError(ValueError):
    """Malformed history CSV; carries the 1-based line number."""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass
class RunConfig:
    experiment: str
    seed: int | None = None
    mesh: int = 32
    p: float | None = None
    iters: int = 200
    t0: float = 1.0
    gamma: float = 1.0
    beta: float = 1e-2
    tau: float = 1.0
    alpha: float | None = None
    kmax: int = 10
    energy_every: int = 10
    mc_samples: int = 20
    out: str = "."

    def resolved(self) -> "RunConfig":
        """Fill experiment-dependent defaults for p and alpha."""
        defaults = _EXPERIMENT_DEFAULTS.get(self.experiment, {})
        p = self.p if self.p is not None else defaults.get("p")
        alpha = self.alpha if self.alpha is not None else defaults.get("alpha")
        return RunConfig(**{**asdict(self), "p": p, "alpha": alpha})


@dataclass
class RunManifest:
    experiment: str
    config: dict
    version: str
    iteration_seeds: dict
    wall_seconds: float
    status: str
    max_iterate_norm: dict = field(default_factory=dict)


def validate(config: RunConfig) -> list[str]:
    """Check every field; returns one message per violation, naming the field."""
    errors = []
    if config.experiment not in EXPERIMENTS:
        errors.append(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
    if config.seed is None:
        errors.append("seed: a seed is mandatory for reproducible runs")
    if config.mesh < 1:
        errors.append("mesh: subdivision count must be >= 1")
    if config.iters < 0:
        errors.append("iters: iteration count must be >= 0")
    if config.p is not None and config.p < 2:
        errors.append("p: exponent must be >= 2")
    if config.experiment == "compare-p2" and config.p is not None and config.p != 2.0:
        errors.append("p: compare-p2 runs in the Hilbert case and requires p = 2")
    if config.t0 <= 0:
        errors.append("t0: initial step must be positive")
    if config.gamma < 0:
        errors.append("gamma: step decay exponent must be >= 0")
    if config.beta <= 0:
        errors.append("beta: control-cost weight must be positive")
    if config.tau <= 0:
        errors.append("tau: inverse lengthscale must be positive")
    if config.alpha is not None and config.alpha <= 1:
        errors.append("alpha: regularity exponent must exceed 1")
    if config.kmax < 0:
        errors.append("kmax: truncation cutoff must be >= 0")
    if config.energy_every < 0:
        errors.append("energy_every: cadence must be >= 0 (0 disables logging)")
    if config.mc_samples < 1:
        errors.append("mc_samples: Monte-Carlo sample count must be >= 1")
    return errors


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_history(history: optimize.DescentHistory, path) -> None:
    lines = [",".join(HISTORY_COLUMNS)]
    for i in range(len(history)):
        energy = "" if history.energy[i] is None else _fmt(history.energy[i])
        lines.append(
            ",".join(
                [
                    str(history.n[i]),
                    _fmt(history.t[i]),
                    _fmt(history.dual_norm[i]),
                    _fmt(history.running_min[i]),
                    _fmt(history.cum_t[i]),
                    _fmt(history.running_min[i] * history.cum_t[i]),
                    energy,
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_history(path) -> dict:
    """Parse a history CSV into column arrays (energy is NaN where unlogged)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise HistoryFormatError(1, "empty file, expected a header row")
    header = tuple(lines[0].split(","))
    if header != HISTORY_COLUMNS:
        raise HistoryFormatError(1, f"header {header!r} does not match {HISTORY_COLUMNS!r}")
    columns = {name: [] for name in HISTORY_COLUMNS}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(HISTORY_COLUMNS):
            raise HistoryFormatError(lineno, f"expected {len(HISTORY_COLUMNS)} fields, got {len(parts)}")
        try:
            columns["n"].append(int(parts[0]))
            for name, raw in zip(HISTORY_COLUMNS[1:], parts[1:]):
                if name == "energy":
                    columns[name].append(float(raw) if raw else np.nan)
                else:
                    columns[name].append(float(raw))
        except ValueError as exc:
            raise HistoryFormatError(lineno, str(exc)) from None
    return {name: np.asarray(vals) for name, vals in columns.items()}


def emit_plotdata(history_csv, out_path) -> int:
    """Rewrite a history as whitespace-separated plot columns with the
    reference curve (sum t_n)^(-1) appended; returns the row count."""
    data = read_history(history_csv)
    rows = len(data["n"])
    header = "# " + " ".join(HISTORY_COLUMNS + ("reference",))
    lines = [header]
    for i in range(rows):
        ref = 1.0 / data["cum_t"][i]
        fields = [str(int(data["n"][i]))]
        fields += [_fmt(data[name][i]) for name in HISTORY_COLUMNS[1:-1]]
        fields.append(_fmt(data["energy"][i]) if np.isfinite(data["energy"][i]) else "nan")
        fields.append(_fmt(ref))
        lines.append(" ".join(fields))
    Path(out_path).write_text("\n".join(lines) + "\n")
    return rows


def _build_problem(config: RunConfig):
    mesh = build_mesh(config.mesh, config.mesh)
    settings = SolverSettings()
    kle = KleSpec(tau=config.tau, alpha=config.alpha, kmax=config.kmax)
    if config.experiment == "app1":
        return App1Problem(App1Config(mesh, p=config.p, kle=kle, settings=settings))
    return App2Problem(
        App2Config(mesh, p=config.p, beta=config.beta, kle=kle, settings=settings)
    )


def run(config: RunConfig) -> RunManifest:
    """Execute one experiment; writes history CSV(s) and manifest.json into
    config.out and returns the manifest. Solver failures still write the
    partial history, then re-raise."""
    config = config.resolved()
    errors = validate(config)
    if errors:
        raise ConfigError(errors)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = _build_problem(config)
    u0 = NodalFunction.zero(problem.mesh)
    schedule = StepSchedule(t0=config.t0, gamma=config.gamma)
    started = time.perf_counter()
    seeds: dict = {}
    norms: dict = {}
    status = "completed"
    try:
        if config.experiment == "compare-p2":
            _, ssd_hist = optimize.ssd_run(
                problem, u0, schedule, config.iters, config.seed,
                energy_every=config.energy_every, energy_samples=config.mc_samples,
            )
            write_history(ssd_hist, out_dir / "history_ssd.csv")
            seeds["ssd"] = [int(s) for s in ssd_hist.seeds]
            norms["ssd"] = ssd_hist.max_iterate_norm
            _, sgd_hist = optimize.sgd_run(
                problem, u0, schedule, config.iters, config.seed,
                energy_every=config.energy_every, energy_samples=config.mc_samples,
            )
            write_history(sgd_hist, out_dir / "history_sgd.csv")
            seeds["sgd"] = [int(s) for s in sgd_hist.seeds]
            norms["sgd"] = sgd_hist.max_iterate_norm
        else:
            energy_every = config.energy_every if config.experiment == "app2" else 0
            _, hist = optimize.ssd_run(
                problem, u0, schedule, config.iters, config.seed,
                energy_every=energy_every, energy_samples=config.mc_samples,
            )
            write_history(hist, out_dir / "history.csv")
            seeds["ssd"] = [int(s) for s in hist.seeds]
            norms["ssd"] = hist.max_iterate_norm
    except DescentAborted as exc:
        compare = config.experiment == "compare-p2"
        label = "sgd" if (compare and "ssd" in seeds) else "ssd"
        name = f"history_{label}.csv" if compare else "history.csv"
        write_history(exc.history, out_dir / name)
        seeds[label] = [int(s) for s in exc.history.seeds]
        status = f"failed: {exc}"
        manifest = RunManifest(
            config.experiment, asdict(config), __version__, seeds,
            time.perf_counter() - started, status, norms,
        )
        _write_manifest(manifest, out_dir / "manifest.json")
        raise
    manifest = RunManifest(
        config.experiment, asdict(config), __version__, seeds,
        time.perf_counter() - started, status, norms,
    )
    _write_manifest(manifest, out_dir / "manifest.json")
    return manifest


def _write_manifest(manifest: RunManifest, path) -> None:
    Path(path).write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")


def parse_config_file(path) -> dict:
    """Flat `key = value` file; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([f"config file line {lineno}: expected key = value, got {raw!r}"])
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_FIELD_TYPES = {
    "experiment": str, "seed": int, "mesh": int, "p": float, "iters": int,
    "t0": float, "gamma": float, "beta": float, "tau": float, "alpha": float,
    "kmax": int, "energy_every": int, "mc_samples": int, "out": str,
}


def config_from_sources(file_values: dict, flag_values: dict) -> RunConfig:
    """Defaults, overridden by the config file, overridden by flags."""
    merged = {}
    for key, raw in file_values.items():
        if key not in _FIELD_TYPES:
            raise ConfigError([f"{key}: unknown configuration key"])
        try:
            merged[key] = _FIELD_TYPES[key](raw)
        except ValueError:
            raise ConfigError([f"{key}: could not parse {raw!r} as {_FIELD_TYPES[key].__name__}"]) from None
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    if "experiment" not in merged:
        raise ConfigError(["experiment: an experiment must be named"])
    return RunConfig(**merged)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ssdopt",
        description="Run the stochastic steepest descent experiments or convert a history to plot data.",
    )
    parser.add_argument("--experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--mesh", type=int, help="subdivisions per axis (default 32)")
    parser.add_argument("--p", type=float, help="space exponent (default per experiment)")
    parser.add_argument("--iters", type=int, help="iteration budget (default 200)")
    parser.add_argument("--seed", type=int, help="RNG seed (mandatory)")
    parser.add_argument("--beta", type=float, help="control-cost weight (default 1e-2)")
    parser.add_argument("--tau", type=float, help="field inverse lengthscale (default 1)")
    parser.add_argument("--alpha", type=float, help="field regularity (default per experiment)")
    parser.add_argument("--kmax", type=int, help="per-axis mode cutoff (default 10)")
    parser.add_argument("--t0", type=float, help="initial step size (default 1)")
    parser.add_argument("--gamma", type=float, help="step decay exponent (default 1)")
    parser.add_argument("--energy-every", type=int, dest="energy_every",
                        help="energy logging cadence (default 10, 0 disables)")
    parser.add_argument("--mc-samples", type=int, dest="mc_samples",
                        help="Monte-Carlo samples per energy estimate (default 20)")
    parser.add_argument("--out", help="output directory (runs) or file (plot data)")
    parser.add_argument("--emit-plotdata", metavar="HISTORY_CSV",
                        help="convert a history CSV to whitespace plot columns and exit")
    args = parser.parse_args(argv)

    if args.emit_plotdata:
        out = args.out or str(Path(args.emit_plotdata).with_suffix(".dat"))
        try:
            rows = emit_plotdata(args.emit_plotdata, out)
        except (HistoryFormatError, OSError) as exc:
            print(f"error: {exc}")
            return 2
        print(f"wrote {rows} rows to {out}")
        return 0

    flag_values = {
        key: getattr(args, key)
        for key in _FIELD_TYPES
        if getattr(args, key, None) is not None
    }
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        config = config_from_sources(file_values, flag_values)
        errors = validate(config.resolved())
        if errors:
            raise ConfigError(errors)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}")
        return 2
    try:
        manifest = run(config)
    except DescentAborted as exc:
        print(f"run failed: {exc}")
        return 1
    print(f"completed {manifest.experiment} in {manifest.wall_seconds:.1f}s -> {config.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
