"""Command-line driver: ``thermoform <subcommand> --map ... --potential ...``.

Reports are JSON (keys sorted, floats as shortest round-trip decimals)
or CSV.  Exit codes: 0 success, 2 parse error, 3 a strictness or
consistency verdict failed, 4 budget exceeded, 5 any other numerical
precondition or search failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import __version__
from .errors import BudgetError, SpecParseError, ThermoformError
from .imfs import (
    build_full_shift_imfs,
    branch_bound_check,
    freeness_check,
    key_lemma_check,
    parse_imfs,
    star_property_check,
)
from .interval_map import IntervalMap, exactness_time, parse_map
from .periodic import (
    default_orbit,
    horseshoe_certificate,
    induced_gap_series,
    periodic_gap_check,
)
from .potential import Potential, parse_potential
from .pressure import generic_base_point, hyperbolicity_report, tree_pressure_series
from .transfer import MeasureEstimate, equilibrium_report, equilibrium_state

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VERDICT = 3
EXIT_BUDGET = 4
EXIT_NUMERIC = 5

SUBCOMMANDS = ("pressure", "hyperbolicity", "equilibrium", "periodic-gap", "imfs", "exactness", "theorem1")


@dataclass
class ExperimentConfig:
    subcommand: str
    map_spec: str = "cheb2"
    potential_spec: str = "const:0"
    depth: int = 12
    nsup: int = 8
    grid: int = 2**17 + 1
    cells: int = 4096
    period: int = 1
    bases: list[float] = field(default_factory=list)
    rho: float = 0.2
    kmax: int = 8
    mmax: int = 8
    horseshoe: bool = False
    T: int = 8
    imfs_file: Optional[str] = None
    imfs_text: Optional[str] = None
    bound_D: Optional[float] = None
    nu_point: Optional[float] = None
    key_lemma: bool = False
    U: Optional[tuple[float, float]] = None
    n_max: int = 20
    fmt: str = "json"
    threads: int = 1

    def validate(self) -> None:
        if self.subcommand not in SUBCOMMANDS:
            raise SpecParseError(f"unknown subcommand {self.subcommand!r}")
        for name in ("depth", "nsup", "grid", "period", "kmax", "mmax", "T", "n_max", "threads"):
            if getattr(self, name) < 1:
                raise SpecParseError(f"--{name} must be positive")
        if self.cells < 0:
            raise SpecParseError("--cells must be >= 0")
        if not self.rho > 0:
            raise SpecParseError("--rho must be positive")
        if self.fmt not in ("json", "csv"):
            raise SpecParseError(f"unknown format {self.fmt!r}")

    def resolved(self) -> dict:
        """The config as echoed by ``--dump-config``; the thread count is left out."""
        d = asdict(self)
        d.pop("threads")
        d.pop("imfs_text")
        if d["U"] is not None:
            d["U"] = list(d["U"])
        return d


@dataclass
class Theorem1Report:
    hyperbolicity: dict
    equilibrium: dict
    consistency: bool

    def to_dict(self) -> dict:
        return asdict(self)


def parse_specs(map_spec: str, potential_spec: str) -> tuple[IntervalMap, Potential]:
    f = parse_map(map_spec)
    return f, parse_potential(potential_spec, f)


def _bases(cfg: ExperimentConfig, f: IntervalMap) -> list[float]:
    return list(cfg.bases) if cfg.bases else [generic_base_point(f)]


def _pressure(cfg, f, phi):
    series = [tree_pressure_series(f, phi, x0, cfg.depth, cfg.threads) for x0 in _bases(cfg, f)]
    doc = {"series": [s.to_dict() for s in series]}
    return doc, EXIT_OK


def _hyperbolicity(cfg, f, phi):
    base = cfg.bases[0] if cfg.bases else None
    rep = hyperbolicity_report(f, phi, cfg.depth, cfg.nsup, cfg.grid, cfg.cells or None, base, cfg.threads)
    return {"report": rep.to_dict()}, EXIT_OK if rep.hyperbolic else EXIT_VERDICT


def _equilibrium(cfg, f, phi):
    state = equilibrium_state(f, phi, cfg.cells)
    rep = equilibrium_report(f, phi, cfg.cells, state=state)
    mu = state[2]
    doc = {"report": rep.to_dict()}
    rows = [(float(a), float(b), float(w)) for a, b, w in zip(mu.lo, mu.hi, mu.weights)]
    return doc, EXIT_OK, rows, state[0]


def _periodic_gap(cfg, f, phi):
    orbit = default_orbit(f, cfg.period, cfg.bases[0] if cfg.bases else None)
    gap = periodic_gap_check(f, phi, orbit, cfg.depth, cfg.threads)
    doc = {"gap": gap.to_dict()}
    ok = gap.strict
    if cfg.horseshoe:
        cert = horseshoe_certificate(f, orbit, cfg.rho, cfg.kmax)
        ind = induced_gap_series(f, phi, cert, cfg.mmax)
        consistent = gap.margin >= ind.margin / cert.K - 1e-3
        doc["certificate"] = cert.to_dict()
        doc["induced"] = ind.to_dict()
        doc["consistent"] = consistent
        ok = ok and ind.strict and consistent
    return doc, EXIT_OK if ok else EXIT_VERDICT


def _imfs(cfg, f, phi):
    if cfg.imfs_text is not None:
        system = parse_imfs(cfg.imfs_text, f)
    else:
        system = build_full_shift_imfs(f)
    bases = list(cfg.bases) if cfg.bases else [generic_base_point(f)]
    checks = []
    star_all = True
    for x0 in bases:
        star = star_property_check(system, x0, cfg.T)
        free = freeness_check(system, x0, cfg.T)
        star_all = star_all and star
        checks.append({"x0": x0, "star": star, "free": free})
    doc = {
        "base": list(system.base),
        "branches": [{"time": b.time, "window": list(b.window)} for b in system.branches],
        "checks": checks,
    }
    if cfg.bound_D is not None:
        nu = MeasureEstimate.point_mass(cfg.nu_point if cfg.nu_point is not None else bases[0])
        bb = branch_bound_check(system, phi, nu, cfg.bound_D)
        doc["branch_bound"] = asdict(bb)
    if cfg.key_lemma:
        nu = MeasureEstimate.point_mass(cfg.nu_point if cfg.nu_point is not None else bases[0])
        doc["key_lemma"] = [asdict(r) for r in key_lemma_check(f, phi, nu, bases, cfg.depth, cfg.threads)]
    return doc, EXIT_OK if star_all else EXIT_VERDICT


def _exactness(cfg, f, phi):
    U = cfg.U if cfg.U is not None else (f.domain[0], f.domain[1])
    n = exactness_time(f, U, cfg.n_max)
    return {"U": list(U), "n_max": cfg.n_max, "exactness_time": n}, EXIT_OK


def _theorem1(cfg, f, phi):
    base = cfg.bases[0] if cfg.bases else None
    hyp = hyperbolicity_report(f, phi, cfg.depth, cfg.nsup, cfg.grid, cfg.cells or None, base, cfg.threads)
    eq = equilibrium_report(f, phi, cfg.cells or 4096, pressure_used=hyp.pressure_lower)
    consistency = (not hyp.hyperbolic) or (eq.flags["entropy_positive"] and eq.flags["lyapunov_positive"])
    rep = Theorem1Report(hyp.to_dict(), eq.to_dict(), bool(consistency))
    ok = consistency and eq.flags["ruelle_ok"]
    return rep.to_dict(), EXIT_OK if ok else EXIT_VERDICT


_RUNNERS = {
    "pressure": _pressure,
    "hyperbolicity": _hyperbolicity,
    "periodic-gap": _periodic_gap,
    "imfs": _imfs,
    "exactness": _exactness,
    "theorem1": _theorem1,
}


@dataclass
class RunResult:
    document: dict
    exit_code: int
    csv_rows: Optional[list] = None
    operator: object = None


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Validate, parse and run one experiment.  Errors propagate to the caller."""
    config.validate()
    f, phi = parse_specs(config.map_spec, config.potential_spec)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if config.subcommand == "equilibrium":
            doc, code, rows, op = _equilibrium(config, f, phi)
        else:
            doc, code = _RUNNERS[config.subcommand](config, f, phi)
            rows, op = None, None
    doc = {
        "command": config.subcommand,
        "map": config.map_spec,
        "potential": config.potential_spec,
        "holder": bool(phi.is_holder),
        "result": doc,
        "warnings": sorted({f"{w.category.__name__}: {w.message}" for w in caught}),
    }
    return RunResult(doc, code, rows, op)


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def to_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, default=_json_default) + "\n"


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def to_csv(result: RunResult) -> str:
    """CSV form of the numeric core of a report."""
    doc = result.document
    cmd = doc["command"]
    if cmd == "pressure":
        series = doc["result"]["series"]
        multi = len(series) > 1
        lines = ["base_point,n,p_n,leaf_count" if multi else "n,p_n,leaf_count"]
        for s in series:
            for n, (p, c) in enumerate(zip(s["values"], s["leaf_counts"]), start=1):
                row = [n, p, c]
                if multi:
                    row.insert(0, s["base_point"])
                lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"
    if cmd == "equilibrium":
        lines = ["cell_lo,cell_hi,weight"]
        lines += [",".join(_fmt(v) for v in row) for row in result.csv_rows]
        return "\n".join(lines) + "\n"
    flat = _flatten(doc["result"])
    lines = ["key,value"] + [f"{k},{_fmt(v)}" for k, v in flat]
    return "\n".join(lines) + "\n"


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def _floats(text: str) -> list[float]:
    out = []
    for tok in text.replace(",", " ").split():
        try:
            out.append(float(tok))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {tok!r}")
    return out


def _interval(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2 or not v[0] < v[1]:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi' with lo < hi, got {text!r}")
    return (v[0], v[1])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--map", default="cheb2", help="cheb2 | cheb3 | quad:a | poly:[a,b]:c0,c1,...")
    common.add_argument("--potential", default="const:0", help="const:c | cos:a | poly:c0,... | geom:t[:base]")
    common.add_argument("--base", action="append", type=_floats, default=[], help="base point(s); repeatable")
    common.add_argument("--depth", type=int, default=None, help="tree depth n_max")
    common.add_argument("--out", default="-", help="output path, '-' for stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--no-meta", action="store_true", help="omit timing metadata")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--dump-config", action="store_true", help="echo the resolved config")

    p = argparse.ArgumentParser(prog="thermoform", description="Thermodynamic formalism numerics for interval maps.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("pressure", parents=[common], help="tree pressure series")

    for name in ("hyperbolicity", "theorem1"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--nsup", type=int, default=8)
        s.add_argument("--grid", type=int, default=2**17 + 1)
        s.add_argument("--cells", type=int, default=4096)

    s = sub.add_parser("equilibrium", parents=[common], help="Ulam equilibrium estimate")
    s.add_argument("--cells", type=int, default=4096)
    s.add_argument("--dump-matrix", default=None, metavar="PATH", help="write the Ulam matrix as i,j,value CSV")

    s = sub.add_parser("periodic-gap", parents=[common], help="periodic gap inequality")
    s.add_argument("--period", type=int, default=1)
    s.add_argument("--horseshoe", action="store_true", help="also build a certificate and the induced series")
    s.add_argument("--rho", type=float, default=0.2)
    s.add_argument("--kmax", type=int, default=8)
    s.add_argument("--mmax", type=int, default=8)

    s = sub.add_parser("imfs", parents=[common], help="star property and freeness")
    s.add_argument("--imfs-file", default=None, help="IMFS description; default is the full shift")
    s.add_argument("--T", type=int, default=8)
    s.add_argument("--bound-D", type=float, default=None)
    s.add_argument("--nu-point", type=float, default=None, help="point mass used for branch bound / key lemma")
    s.add_argument("--key-lemma", action="store_true", help="compare tree pressure with the integral against nu")

    s = sub.add_parser("exactness", parents=[common], help="first n with f^n(U) full")
    s.add_argument("--U", type=_interval, default=None, metavar="LO,HI")
    s.add_argument("--n-max", type=int, default=20)
    return p


_DEFAULT_DEPTH = {"hyperbolicity": 14, "theorem1": 14}


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(
        subcommand=ns.subcommand,
        map_spec=ns.map,
        potential_spec=ns.potential,
        depth=ns.depth if ns.depth is not None else _DEFAULT_DEPTH.get(ns.subcommand, 12),
        bases=[x for group in ns.base for x in group],
        fmt=ns.format,
        threads=ns.threads,
    )
    for name in ("nsup", "grid", "cells", "period", "rho", "kmax", "mmax", "horseshoe", "T", "n_max", "U", "key_lemma"):
        if hasattr(ns, name):
            setattr(cfg, name, getattr(ns, name))
    if getattr(ns, "bound_D", None) is not None:
        cfg.bound_D = ns.bound_D
    if getattr(ns, "nu_point", None) is not None:
        cfg.nu_point = ns.nu_point
    if getattr(ns, "imfs_file", None):
        cfg.imfs_file = ns.imfs_file
        with open(ns.imfs_file) as fh:
            cfg.imfs_text = fh.read()
    return cfg


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    t0 = time.time()
    try:
        cfg = config_from_args(ns)
        res = run_experiment(cfg)
    except SpecParseError as exc:
        print(f"thermoform: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetError as exc:
        print(f"thermoform: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ThermoformError, OSError) as exc:
        print(f"thermoform: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    doc = res.document
    if ns.dump_config:
        doc["config"] = cfg.resolved()
    if not ns.no_meta:
        doc["meta"] = {
            "version": __version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t0)),
            "elapsed_s": round(time.time() - t0, 3),
            "threads": cfg.threads,
        }
    if getattr(ns, "dump_matrix", None) and res.operator is not None:
        with open(ns.dump_matrix, "w") as fh:
            fh.write(res.operator.to_csv())
    _emit(to_csv(res) if cfg.fmt == "csv" else to_json(doc), ns.out)
    return res.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
