"""Command-line entry point.

Exit codes: 0 ok, 1 verification failure, 2 configuration error,
3 numeric or regime error.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import click

from .martingale import RegimeError, exact_curve, walk_constants
from .reinforcement import (DEFAULT_T_CAP, CapExceededError, IndeterminateMomentError, ReinforcementError,
                            ReinforcementSpec, compute_time_law, parse_reinforcement)
from .stats import chunk_stream, clt_diagnostic, msd_reports
from .timechange import coupled_pair, senile_direct, senile_from_timechange
from .walk_core import KINDS, REINFORCED, ConfigurationError, check_reinforced_regime, generate_walk
from .verify import SUITES, run_suite, suite_json

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
MODES = ("walk", "senile", "coupled")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "persistent"
    dim: int = 1
    f: str = "const:0"
    seed: int = 1
    paths: int = 1
    steps: int = 1000
    horizon: int = 1000
    tgrid: tuple = (0.5, 1.0)
    out: str | None = None
    format: str = "csv"
    workers: int = os.cpu_count() or 1
    tcap: int = DEFAULT_T_CAP
    suite: str = "full"
    mode: str = "walk"

    def validate(self) -> "ExperimentConfig":
        if self.model not in KINDS:
            raise ConfigError(f"--model must be one of {KINDS}, got {self.model!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"--format must be one of {FORMATS}")
        if self.suite not in SUITES:
            raise ConfigError(f"--suite must be one of {SUITES}")
        if self.mode not in MODES:
            raise ConfigError(f"--mode must be one of {MODES}")
        for name in ("dim", "paths", "steps", "horizon", "workers", "tcap"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"--{name} must be a positive integer, got {value!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"--seed must be a nonnegative integer, got {self.seed!r}")
        if not self.tgrid or any(t < 0 for t in self.tgrid):
            raise ConfigError("--tgrid must be a nonempty list of nonnegative times")
        self.spec()
        return self

    def spec(self) -> ReinforcementSpec:
        try:
            return parse_reinforcement(self.f, self.dim, t_cap=self.tcap)
        except (ReinforcementError, OSError) as exc:
            raise ConfigError(f"--f {self.f!r}: {exc}") from exc


def parse_tgrid(text) -> tuple:
    if isinstance(text, (list, tuple)):
        values = text
    else:
        values = [v for v in str(text).split(",") if v.strip()]
    try:
        return tuple(float(v) for v in values)
    except ValueError as exc:
        raise ConfigError(f"--tgrid: {exc}") from exc


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    """Config file values (JSON object), then non-None flag values on top."""
    values = {}
    if path is not None:
        text = Path(path).read_text()
        if not text.strip():
            raise ConfigError(f"config file {path} is empty")
        try:
            values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
        if not isinstance(values, dict) or not values:
            raise ConfigError(f"config file {path} must hold a nonempty JSON object")
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "tgrid" in values:
        values["tgrid"] = parse_tgrid(values["tgrid"])
    return ExperimentConfig(**values).validate()


def regime(kind: str, spec: ReinforcementSpec, law) -> str:
    if kind == REINFORCED:
        if spec.dimension == 1 and law.p_odd >= 1.0:
            return "excluded (d=1 with p=1)"
        return "diffusive" if law.mean_finite else "reinforced-subdiffusive"
    return "diffusive" if law.second_moment_finite else "persistent-nondiffusive (E(T^2) infinite)"


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def moments_report(config: ExperimentConfig) -> dict:
    spec = config.spec()
    law = compute_time_law(spec)
    return {
        "f": config.f, "d": config.dim,
        "mean_T": _finite_or_none(law.mean), "mean_finite": law.mean_finite,
        "second_moment_T": _finite_or_none(law.second_moment), "second_moment_finite": law.second_moment_finite,
        "p_odd": law.p_odd,
        "regime": {kind: regime(kind, spec, law) for kind in KINDS},
    }


def _check_model(config: ExperimentConfig) -> ReinforcementSpec:
    spec = config.spec()
    if config.model == REINFORCED:
        check_reinforced_regime(spec)
    return spec


def _records_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(records)
    return buf.getvalue()


def _csv_to_json(text: str) -> str:
    rows = list(csv.DictReader(io.StringIO(text)))
    return json.dumps([{k: int(v) for k, v in row.items()} for row in rows]) + "\n"


def simulation_files(config: ExperimentConfig) -> dict[str, str]:
    """File name -> contents for ``simulate``; path ``i`` uses stream ``i`` under the seed."""
    spec = _check_model(config)
    ext = config.format

    def one(i):
        rng = chunk_stream(config.seed, i)
        if config.mode == "walk":
            files = {f"walk_{i:05d}": generate_walk(config.model, spec, config.steps, rng).to_csv()}
        elif config.mode == "senile":
            files = {f"senile_{i:05d}": senile_direct(config.model, spec, config.horizon, rng).to_csv()}
        else:
            walk, direct = coupled_pair(config.model, spec, config.horizon, rng)
            files = {f"coupled_{i:05d}_timechange": senile_from_timechange(walk, config.horizon).to_csv(),
                     f"coupled_{i:05d}_direct": direct.to_csv()}
        if ext == "json":
            return {f"{k}.json": _csv_to_json(v) for k, v in files.items()}
        return {f"{k}.csv": v for k, v in files.items()}

    out = {}
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        for files in pool.map(one, range(config.paths)):
            out.update(files)
    return out


def _emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _run(func):
    """Map library exceptions onto exit codes."""
    try:
        return func()
    except (ConfigError, ConfigurationError, ReinforcementError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (RegimeError, CapExceededError, IndeterminateMomentError, OverflowError) as exc:
        click.echo(f"numeric error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


def common_options(func):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="JSON file with any of the flag values; flags override it."),
        click.option("--model", type=click.Choice(KINDS)),
        click.option("--dim", type=int, help="Lattice dimension d."),
        click.option("--f", "f", help='Reinforcement: "const:c", "affine:a,b" or "table:path".'),
        click.option("--seed", type=int),
        click.option("--paths", type=int),
        click.option("--steps", type=int, help="Macro-steps of the time-changed walk."),
        click.option("--horizon", type=int, help="Unit-time horizon of senile paths."),
        click.option("--tgrid", help='Comma-separated times, e.g. "0.5,1.0".'),
        click.option("--out", help="Output file (moments, estimate, verify) or directory (simulate)."),
        click.option("--format", "format", type=click.Choice(FORMATS)),
        click.option("--workers", type=int),
        click.option("--tcap", type=int, help="Largest allowed run length T."),
    ]
    for opt in reversed(opts):
        func = opt(func)
    return func


@click.group()
def main():
    """Simulate and verify senile persistent and senile reinforced random walks."""


@main.command()
@common_options
def moments(config_path, **flags):
    """Moments of T, P(T odd) and the regime of each walk."""
    def go():
        config = load_config(config_path, flags)
        _emit(json.dumps(moments_report(config), indent=1) + "\n", config.out)
    _run(go)


@main.command()
@common_options
@click.option("--mode", type=click.Choice(MODES), help="walk, senile or coupled (both senile constructions).")
def simulate(config_path, **flags):
    """Write one path file per path into the --out directory."""
    def go():
        config = load_config(config_path, flags)
        if config.out is None:
            raise ConfigError("simulate needs --out DIRECTORY")
        files = simulation_files(config)
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text)
        click.echo(f"wrote {len(files)} files to {out}", err=True)
    _run(go)


@main.command()
@common_options
def constants(config_path, **flags):
    """Diffusion constant, correction coefficient and exact E|W_n|^2 at n = --steps grid."""
    def go():
        config = load_config(config_path, flags)
        _check_model(config)
        law = compute_time_law(config.spec())
        const = walk_constants(config.model, config.dim, law)
        n_values = sorted({1, 2, 5, 10, 100, config.steps})
        records = exact_curve(const, law, n_values)
        text = _records_csv(records) if config.format == "csv" else json.dumps(records, indent=1) + "\n"
        _emit(text, config.out)
    _run(go)


@main.command()
@common_options
@click.option("--target", type=click.Choice(("walk", "senile")), default="walk", show_default=True)
@click.option("--clt", is_flag=True, help="Run the Brownian scaling diagnostics on --tgrid instead.")
def estimate(config_path, target, clt, **flags):
    """Monte Carlo estimates with standard errors (walk at --steps, senile at --horizon)."""
    def go():
        config = load_config(config_path, flags)
        spec = _check_model(config)
        if clt:
            res = clt_diagnostic(config.model, spec, config.horizon, config.tgrid, config.paths, config.seed,
                                 workers=config.workers)
            reports = [r for test in res.values() for r in test.reports]
        else:
            n = config.steps if target == "walk" else config.horizon
            reports = msd_reports(config.model, target, spec, [n], config.paths, config.seed,
                                  workers=config.workers)
        if config.format == "csv":
            rows = [{k: v for k, v in r.to_dict().items() if k != "warnings"} for r in reports]
            text = _records_csv(rows)
        else:
            text = "".join(r.to_json() + "\n" for r in reports)
        _emit(text, config.out)
    _run(go)


@main.command()
@common_options
@click.option("--suite", type=click.Choice(SUITES))
@click.option("--sabotage", is_flag=True, help="Halve the martingale correction; the suite must then fail.")
def verify(config_path, sabotage, **flags):
    """Run the acceptance suite; exit 0 iff every criterion passes."""
    def go():
        config = load_config(config_path, flags)
        checks = [3] if sabotage else None
        results = run_suite(config.suite, config.seed, config.workers, checks=checks,
                            coefficient_scale=0.5 if sabotage else 1.0,
                            progress=lambda r: click.echo(r.line(), err=True))
        _emit(suite_json(results) + "\n", config.out)
        return all(r.passed for r in results)
    sys.exit(EXIT_OK if _run(go) else EXIT_FAILED)


if __name__ == "__main__":
    main()
