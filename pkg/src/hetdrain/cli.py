"""Command-line front end: experiment specs, parameter sweeps and output files.

An experiment spec is a YAML file::

    base:                 # any ScenarioConfig field, defaults for the rest
      n_mue: 30
      trials: 50
      seed: 7
    sweep:
      param: n_sbs
      values: [10, 20, 40]
    strategies: [frequency_reuse, id_ia]
    output: results/k_sweep

``hetdrain run spec.yaml`` writes one CSV of per-trial rows for every
(strategy, sweep value), a ``summary.csv`` with one aggregated row each and
a ``manifest.yaml`` that pins the resolved configuration, seed and version.
Exit status is 0 on success, 1 when a trial fails and 2 for spec errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .config import FIELD_NAMES, ConfigError, ScenarioConfig, Strategy
from .sim import TrialError, aggregate, rows_to_csv, run_trials

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
ANTENNA_PROFILE = (2, 4)
SBS_POWER_RANGE_DBM = (0.0, 30.0)
SPEC_KEYS = ("base", "sweep", "strategies", "output")

_DEFAULTS = ScenarioConfig()


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    line: int | None
    field: str
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}" if self.line is not None else "spec"
        return f"{where}: {self.level}: {self.field}: {self.message}"


@dataclass(frozen=True)
class ExperimentSpec:
    base: ScenarioConfig
    sweep_param: str
    sweep_values: tuple
    strategies: tuple[Strategy, ...]
    output: str

    def configs(self):
        """(strategy, sweep value, config) for every point of the experiment."""
        for strategy in self.strategies:
            for value in self.sweep_values:
                yield strategy, value, self.base.replace(
                    **{self.sweep_param: value, "strategy": strategy})

    def to_dict(self) -> dict:
        base = self.base.to_dict()
        base.pop("strategy")
        return {
            "base": base,
            "sweep": {"param": self.sweep_param, "values": list(self.sweep_values)},
            "strategies": [s.value for s in self.strategies],
            "output": self.output,
        }


@dataclass
class SpecReport:
    spec: ExperimentSpec | None = None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.level == "error"]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.level == "warning"]


# ---------------------------------------------------------------------------
# spec parsing

def _line(node) -> int | None:
    return None if node is None else node.start_mark.line + 1


def _mapping_nodes(node) -> dict:
    """Key -> (key node, value node) for a YAML mapping node."""
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: (k, v) for k, v in node.value}


def _coerce(name: str, value):
    """Check ``value`` against the type of ScenarioConfig field ``name``."""
    default = getattr(_DEFAULTS, name)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}")
        return value
    if isinstance(default, Strategy):
        try:
            return Strategy(value)
        except ValueError:
            raise ConfigError(f"unknown strategy {value!r}; "
                              f"choose from {[s.value for s in Strategy]}") from None
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if (not isinstance(value, (list, tuple)) or len(value) != len(default)
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in value)):
            raise ConfigError(f"expected a list of {len(default)} numbers, got {value!r}")
        return tuple(float(x) for x in value)
    return value


def _range_warnings(cfg: ScenarioConfig, line) -> list[Diagnostic]:
    out = []
    for name in ("a_mbs", "a_sbs"):
        a = getattr(cfg, name)
        if a not in ANTENNA_PROFILE:
            out.append(Diagnostic("warning", line(name), name,
                                  f"{a} antennas is outside the reference profile "
                                  f"{list(ANTENNA_PROFILE)}"))
    lo, hi = SBS_POWER_RANGE_DBM
    if not lo <= cfg.p_sbs_dbm <= hi:
        out.append(Diagnostic("warning", line("p_sbs_dbm"), "p_sbs_dbm",
                              f"{cfg.p_sbs_dbm:g} dBm is outside [{lo:g}, {hi:g}] dBm"))
    return out


def parse_spec(text: str) -> SpecReport:
    """Parse and validate a spec; never raises on bad content."""
    rep = SpecReport()
    err = lambda line, name, msg: rep.diagnostics.append(Diagnostic("error", line, name, msg))

    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        err(None if mark is None else mark.line + 1, "spec", f"not valid YAML: {exc}")
        return rep
    if not isinstance(data, dict):
        err(_line(root), "spec", "top level must be a mapping")
        return rep
    top = _mapping_nodes(root)
    for key in data:
        if key not in SPEC_KEYS:
            err(_line(top[key][0]), str(key), f"unknown section; expected one of {list(SPEC_KEYS)}")

    def line_of(section, name=None):
        """Line of ``section.name``, falling back to the section header."""
        if section not in top:
            return None
        hit = _mapping_nodes(top[section][1]).get(name)
        return _line((hit or top[section])[0])

    # base
    raw_base = data.get("base") or {}
    base_fields = {}
    if not isinstance(raw_base, dict):
        err(line_of("base"), "base", "must be a mapping of scenario fields")
        raw_base = {}
    for name, value in raw_base.items():
        if name not in FIELD_NAMES:
            err(line_of("base", name), f"base.{name}", "unknown scenario field")
        elif name == "strategy":
            err(line_of("base", name), "base.strategy", "set strategies in the 'strategies' list")
        else:
            try:
                base_fields[name] = _coerce(name, value)
            except ConfigError as exc:
                err(line_of("base", name), f"base.{name}", str(exc))

    # sweep
    sweep = data.get("sweep")
    param, values = None, ()
    if not isinstance(sweep, dict):
        err(line_of("sweep"), "sweep", "required mapping with 'param' and 'values'")
    else:
        param = sweep.get("param")
        raw_values = sweep.get("values")
        if param not in FIELD_NAMES or param in ("strategy", "seed", "trials"):
            err(line_of("sweep", "param") if "param" in sweep else line_of("sweep"),
                "sweep.param", f"{param!r} is not a sweepable scenario field")
            param = None
        if not isinstance(raw_values, list) or not raw_values:
            err(line_of("sweep", "values") if "values" in sweep else line_of("sweep"),
                "sweep.values", "must be a non-empty list")
        elif param is not None:
            coerced = []
            for v in raw_values:
                try:
                    coerced.append(_coerce(param, v))
                except ConfigError as exc:
                    err(line_of("sweep", "values"), "sweep.values", str(exc))
            if len(set(coerced)) != len(coerced):
                err(line_of("sweep", "values"), "sweep.values", "values must be distinct")
            values = tuple(coerced)

    # strategies
    raw_strats = data.get("strategies", [s.value for s in (Strategy.FREQUENCY_REUSE,
                                                            Strategy.ID_IA)])
    strategies = []
    if not isinstance(raw_strats, list) or not raw_strats:
        err(line_of("strategies"), "strategies", "must be a non-empty list")
    else:
        for s in raw_strats:
            try:
                strategies.append(_coerce("strategy", s))
            except ConfigError as exc:
                err(line_of("strategies"), "strategies", str(exc))
        if len(set(strategies)) != len(strategies):
            err(line_of("strategies"), "strategies", "strategies must be distinct")

    output = data.get("output", "results")
    if not isinstance(output, str) or not output:
        err(line_of("output"), "output", "must be a directory path")

    def where_line(name):
        if name == param:
            return line_of("sweep", "values")
        return line_of("base", name) if name in raw_base else line_of("base")

    seen = set()

    def warn(cfg):
        for d in _range_warnings(cfg, where_line):
            if (d.field, d.message) not in seen:
                seen.add((d.field, d.message))
                rep.diagnostics.append(d)

    # the well-typed base fields are checked even when other parts are broken
    try:
        base = ScenarioConfig(**base_fields)
    except ConfigError as exc:
        name = next((n for n in sorted(base_fields, key=len, reverse=True) if n in str(exc)),
                    None)
        err(line_of("base", name) if name else line_of("base"), f"base.{name or ''}", str(exc))
        return rep
    if rep.errors:
        warn(base)
        return rep

    # every point of the sweep must be a valid configuration
    for strategy in strategies:
        for value in values:
            try:
                cfg = base.replace(**{param: value, "strategy": strategy})
            except ConfigError as exc:
                err(line_of("sweep", "values"), "sweep.values",
                    f"{param}={value!r} with {strategy.value}: {exc}")
                continue
            warn(cfg)
    if not rep.errors:
        rep.spec = ExperimentSpec(base, param, values, tuple(strategies), output)
    return rep


def load_spec(path: str | os.PathLike) -> SpecReport:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        return SpecReport(None, [Diagnostic("error", None, "spec", f"cannot read {path}: {exc}")])
    return parse_spec(text)


# ---------------------------------------------------------------------------
# running

def _slug(value) -> str:
    text = repr(value) if isinstance(value, float) else str(value)
    return "".join(c if c.isalnum() or c in ".-" else "_" for c in text)


def point_filename(strategy: Strategy, param: str, value) -> str:
    return f"{strategy.value}__{param}={_slug(value)}.csv"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_spec(spec: ExperimentSpec, out_dir: str | os.PathLike, workers: int = 1,
             log=print) -> list[Path]:
    """Run every point of ``spec`` and write the artifacts; returns the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summary = []
    for strategy, value, cfg in spec.configs():
        log(f"{strategy.value} {spec.sweep_param}={value!r}: {cfg.trials} trials")
        results = run_trials(cfg, workers=workers)
        if not results:
            continue
        report = aggregate(results)
        path = out / point_filename(strategy, spec.sweep_param, value)
        path.write_text(rows_to_csv(report.rows))
        written.append(path)
        summary.append({"strategy": strategy.value, "param": spec.sweep_param, "value": value,
                        **report.summary()})
    path = out / "summary.csv"
    path.write_text(rows_to_csv(summary))
    written.append(path)

    manifest = {
        "tool": "hetdrain",
        "version": __version__,
        "seed": spec.base.seed,
        "spec": spec.to_dict(),
        "points": [{"strategy": s.value, "value": v, "config": c.to_dict()}
                   for s, v, c in spec.configs()],
        "files": {p.name: _sha256(p) for p in written},
    }
    path = out / "manifest.yaml"
    path.write_text(yaml.safe_dump(manifest, sort_keys=False))
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hetdrain", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment spec")
    run.add_argument("spec")
    run.add_argument("--seed", type=int, help="override the spec's base seed")
    run.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("--out", help="override the spec's output directory")
    val = sub.add_parser("validate", help="check a spec without running it")
    val.add_argument("spec")
    val.add_argument("--seed", type=int, help="override the spec's base seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    rep = load_spec(args.spec)
    for d in rep.diagnostics:
        print(f"{args.spec}: {d}", file=sys.stderr)
    if rep.spec is None:
        return EXIT_CONFIG
    spec = rep.spec
    if args.seed is not None:
        if args.seed < 0:
            print(f"{args.spec}: error: --seed must be >= 0", file=sys.stderr)
            return EXIT_CONFIG
        spec = dataclasses.replace(spec, base=spec.base.replace(seed=args.seed))
    if args.command == "validate":
        print(f"{args.spec}: ok ({len(spec.strategies)} strategies x "
              f"{len(spec.sweep_values)} values, {spec.base.trials} trials each)")
        return EXIT_OK
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or spec.output
    try:
        files = run_spec(spec, out, workers=args.workers,
                         log=lambda msg: print(msg, file=sys.stderr))
    except TrialError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
