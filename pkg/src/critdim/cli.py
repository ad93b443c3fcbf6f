"""``critdim`` command line: simulate, bounds, report.

Exit codes: 0 success, 2 usage or configuration error, 3 tainted sweep
(more than 1% of replicates failed to converge), 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from .errors import ConfigInvalid, CritdimError, SchemaMismatch
from .harness import (
    SweepConfig,
    aggregate,
    atomic_write_text,
    read_records_csv,
    records_to_csv,
    sweep,
)
from .models import DEFAULT_CUTOFF_EPS, DEFAULT_L, ModelKind
from .rng import PRNG_NAME, PRNG_VERSION
from .theory import ConditionConstants, breve_constants, entropy_term, model_constants, spread, theorem_bounds

EXIT_OK, EXIT_USAGE, EXIT_TAINTED, EXIT_IO = 0, 2, 3, 4
MANIFEST_VERSION = 1


class UsageError(Exception):
    pass


def _jsonable(obj):
    """Replace non-finite floats by ``None`` so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# -- configuration -------------------------------------------------------------------

@dataclass
class CliConfig:
    """Merged simulate settings: flags over config file over defaults."""

    model: str | None = None
    n: list | None = None
    gamma: float | None = None
    c: float = 1.0
    replicates: int = 100
    seed: int | None = None
    workers: int = 1
    L: float = DEFAULT_L
    eps_cutoff: float = DEFAULT_CUTOFF_EPS
    constants: dict | None = None
    out: str | None = None
    format: str = "csv"

    @classmethod
    def keys(cls) -> set:
        return {f.name for f in fields(cls)}

    def merge(self, values: dict, source: str) -> None:
        for key, val in values.items():
            if key not in self.keys():
                raise ConfigInvalid(f"{source}: unknown key {key!r}", field=key)
            if val is not None:
                setattr(self, key, val)

    def to_sweep(self) -> SweepConfig:
        for key in ("model", "n", "gamma", "seed"):
            if getattr(self, key) is None:
                flag = "--" + key
                raise ConfigInvalid(f"{flag} is required (on the command line or in --config)",
                                    field=key)
        if self.format not in ("csv", "json"):
            raise ConfigInvalid(f"format must be csv or json, got {self.format!r}", field="format")
        return SweepConfig(
            model_kind=self.model,
            gamma=self.gamma,
            c=self.c,
            n_list=tuple(_parse_n_values(self.n)),
            replicates=self.replicates,
            master_seed=self.seed,
            constants_override=self.constants,
            L=self.L,
            outer_cutoff_eps=self.eps_cutoff,
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _parse_n_values(values) -> list[int]:
    """Flatten repeated ``--n`` flags and comma lists into integers."""
    if isinstance(values, (int, str)):
        values = [values]
    out = []
    for item in values:
        parts = item.split(",") if isinstance(item, str) else [item]
        for part in parts:
            if isinstance(part, str):
                part = part.strip()
                if not part:
                    continue
                try:
                    part = int(part)
                except ValueError:
                    raise ConfigInvalid(f"--n: not an integer: {part!r}", field="n") from None
            if isinstance(part, bool) or not isinstance(part, int):
                raise ConfigInvalid(f"n values must be integers, got {part!r}", field="n")
            out.append(part)
    if not out:
        raise ConfigInvalid("at least one n is required", field="n")
    return out


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: expected a JSON object")
    return data


def _config_from_file(path: str) -> dict:
    """A bare config object, or the ``config`` echo of a run manifest."""
    data = _load_json(path)
    if "manifest_version" in data:
        data = dict(data.get("config") or {})
        data.pop("out", None)
    return data


# -- simulate ------------------------------------------------------------------------

def _records_json(records) -> str:
    rows = [{k: getattr(r, k) for k in r.__dataclass_fields__} for r in records]
    return _dumps(rows)


def cmd_simulate(args) -> int:
    cfg = CliConfig()
    if args.config:
        cfg.merge(_config_from_file(args.config), args.config)
    flags = {
        "model": args.model, "n": args.n, "gamma": args.gamma, "c": args.c,
        "replicates": args.replicates, "seed": args.seed, "workers": args.workers,
        "L": args.L, "eps_cutoff": args.eps_cutoff, "out": args.out, "format": args.format,
    }
    cfg.merge(flags, "flags")
    if cfg.n is not None:
        cfg.n = _parse_n_values(cfg.n)
    sweep_cfg = cfg.to_sweep()
    if cfg.out is None:
        raise ConfigInvalid("--out is required", field="out")
    if isinstance(cfg.workers, bool) or not isinstance(cfg.workers, int) or cfg.workers < 1:
        raise ConfigInvalid("workers must be an integer >= 1", field="workers")

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    records = sweep(sweep_cfg, workers=cfg.workers)
    summary = aggregate(records)
    finished = _now()

    constants = {}
    for n in sweep_cfg.n_list:
        spec = sweep_cfg.spec_for(n)
        consts = sweep_cfg.constants_override or model_constants(spec)
        constants[str(n)] = consts.to_dict()
    groups = []
    for g in summary.groups:
        entry = {k: g[k] for k in ("model", "n", "p_total", "p_target", "count", "r0_x",
                                   "r0_hat", "xi_norm_sq_mean", "converged_rate")}
        r0 = g["r0_hat"]
        entry["r0_status"] = ("insufficient-samples" if r0 is None
                              else "ok" if math.isfinite(r0) else "infinite")
        groups.append(entry)
    records_name = "records.csv" if cfg.format == "csv" else "records.json"
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "tool": "critdim",
        "library_version": __version__,
        "prng": {"name": PRNG_NAME, "version": PRNG_VERSION},
        "config": cfg.to_dict(),
        "sweep": sweep_cfg.to_dict(),
        "dimensions": {str(n): sweep_cfg.p_for(n) for n in sweep_cfg.n_list},
        "constants": constants,
        "groups": groups,
        "started_at": started,
        "finished_at": finished,
        "tainted": summary.tainted,
        "failure_rate": summary.failure_rate,
        "files": {"records": records_name, "summary": "summary.json"},
    }
    text = records_to_csv(records) if cfg.format == "csv" else _records_json(records)
    atomic_write_text(out / records_name, text)
    atomic_write_text(out / "summary.json", _dumps(summary.to_dict()))
    atomic_write_text(out / "manifest.json", _dumps(manifest))
    print(f"wrote {len(records)} records to {out / records_name}")
    if summary.tainted:
        print(f"critdim: sweep tainted: {summary.failure_rate:.2%} of replicates failed",
              file=sys.stderr)
        return EXIT_TAINTED
    return EXIT_OK


# -- bounds --------------------------------------------------------------------------

def _pick_group(manifest: dict, n: int | None) -> dict:
    groups = manifest.get("groups") or []
    if n is not None:
        groups = [g for g in groups if g["n"] == n]
    if not groups:
        raise ConfigInvalid("manifest has no matching group (check --n)", field="n")
    if len(groups) > 1:
        ns = sorted({g["n"] for g in groups})
        raise ConfigInvalid(f"manifest holds several groups; pick one with --n from {ns}", field="n")
    return groups[0]


def cmd_bounds(args) -> int:
    const_kw = {}
    r0, x, p_total, p_target, xi_norm = args.r0, args.x, args.p_total, args.p_target, args.xi_norm
    if args.manifest:
        manifest = _load_json(args.manifest)
        if "manifest_version" not in manifest:
            raise ConfigInvalid(f"{args.manifest}: not a critdim run manifest")
        grp = _pick_group(manifest, args.n)
        const_kw = dict(manifest["constants"][str(grp["n"])])
        if r0 is None:
            if grp["r0_status"] == "infinite":
                r0 = math.inf
            elif grp["r0_status"] == "ok":
                r0 = grp["r0_hat"]
            else:
                raise ConfigInvalid("manifest has no r0 estimate for this group "
                                    "(too few replicates); pass --r0", field="r0")
        x = grp["r0_x"] if x is None else x
        p_total = grp["p_total"] if p_total is None else p_total
        p_target = grp["p_target"] if p_target is None else p_target
        if xi_norm is None and grp.get("xi_norm_sq_mean") is not None:
            xi_norm = math.sqrt(grp["xi_norm_sq_mean"])
    for name in ("nu", "nu0", "nu1", "omega", "g", "delta_slope"):
        val = getattr(args, name)
        if val is not None:
            const_kw[name] = val
    missing = [f for f, v in (("--r0", r0), ("--x", x), ("--p-total", p_total)) if v is None]
    if missing:
        raise ConfigInvalid(f"missing {', '.join(missing)} (or give --manifest)")
    p_target = p_total if p_target is None else p_target
    if not 1 <= p_target <= p_total:
        raise ConfigInvalid("need 1 <= p_target <= p_total", field="p_target")
    if r0 < 0 or x < 0:
        raise ConfigInvalid("r0 and x must be nonnegative")
    if xi_norm is None:
        xi_norm = math.sqrt(p_target)
    try:
        consts = ConditionConstants.from_dict(const_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"constants: {exc}") from None
    g_breve, nu_breve = breve_constants(consts.g, consts.nu)
    fisher_rhs, wilks_rhs = theorem_bounds(xi_norm, r0, x, p_total, p_target, consts)
    out = {
        "fisher_rhs": fisher_rhs,
        "wilks_rhs": wilks_rhs,
        "spread": spread(r0, x, p_total, p_target, consts),
        "spread_expanded": spread(2.0 * (1.0 + consts.nu) * r0, x, p_total, p_target, consts),
        "entropy_term": entropy_term(x, 2 * p_total + 2 * p_target, g_breve),
        "g_breve": g_breve,
        "nu_breve": nu_breve,
        "r0": r0,
        "x": x,
        "p_total": p_total,
        "p_target": p_target,
        "xi_norm": xi_norm,
        "constants": consts.to_dict(),
    }
    sys.stdout.write(_dumps(out))
    return EXIT_OK


# -- report --------------------------------------------------------------------------

REPORT_COLUMNS = (
    "model", "n", "p_total", "p_target", "count", "converged_rate", "in_C1_rate", "in_S_rate",
    "beta_n", "fisher_error_median", "fisher_error_q25", "fisher_error_q75",
    "wilks_error_median", "wilks_error_q25", "wilks_error_q75", "wilks_stat_mean",
    "ks_chi2_p_target", "ks_chi2_1", "ks_critical_1pct", "wilks_error_median_in_S",
    "wilks_error_in_S_over_beta", "fisher_over_sqrt_beta", "r0_hat",
)
TEXT_COLUMNS = (
    "model", "n", "p_total", "count", "converged_rate", "beta_n", "fisher_error_median",
    "wilks_error_median", "ks_chi2_p_target", "wilks_error_in_S_over_beta",
)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _text_cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def aligned_table(groups, columns=TEXT_COLUMNS) -> str:
    cells = [list(columns)] + [[_text_cell(g[c]) for c in columns] for g in groups]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def long_rows(groups):
    """Plot-ready ``(model, n, p, metric, quantile, value)`` rows."""
    spec = (
        ("fisher_error", (("0.25", "fisher_error_q25"), ("0.5", "fisher_error_median"),
                          ("0.75", "fisher_error_q75"))),
        ("wilks_error", (("0.25", "wilks_error_q25"), ("0.5", "wilks_error_median"),
                         ("0.75", "wilks_error_q75"))),
        ("wilks_error_in_S", (("0.5", "wilks_error_median_in_S"),)),
        ("wilks_stat", (("mean", "wilks_stat_mean"),)),
        ("ks_chi2_p_target", (("", "ks_chi2_p_target"),)),
        ("ks_chi2_1", (("", "ks_chi2_1"),)),
    )
    for g in groups:
        for metric, entries in spec:
            for q, key in entries:
                if g[key] is not None:
                    yield (g["model"], g["n"], g["p_total"], metric, q, g[key])


def _collect_csvs(inputs) -> list[Path]:
    files = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            files.extend(sorted(p for p in path.rglob("records.csv")))
        elif path.exists():
            files.append(path)
        else:
            raise FileNotFoundError(f"no such file or directory: {item}")
    return files


def cmd_report(args) -> int:
    files = _collect_csvs(args.inputs)
    if not files:
        raise ConfigInvalid("no records.csv files found in " + ", ".join(args.inputs))
    records = []
    for f in files:
        records.extend(read_records_csv(f))
    if not records:
        raise ConfigInvalid("input files hold no records")
    summary = aggregate(records)
    groups = summary.groups
    slopes_text = _dumps({"slopes": summary.slopes, "tainted": summary.tainted,
                          "failure_rate": summary.failure_rate})
    sys.stdout.write(aligned_table(groups))
    sys.stdout.write(slopes_text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.format == "json":
            atomic_write_text(out / "aggregate.json", _dumps(groups))
        else:
            rows = [[g[c] for c in REPORT_COLUMNS] for g in groups]
            atomic_write_text(out / "aggregate.csv", _csv_text(REPORT_COLUMNS, rows))
        atomic_write_text(out / "aggregate.txt", aligned_table(groups, REPORT_COLUMNS))
        atomic_write_text(out / "slopes.json", slopes_text)
        atomic_write_text(out / "long.csv",
                          _csv_text(("model", "n", "p", "metric", "quantile", "value"),
                                    long_rows(groups)))
    if summary.tainted:
        print(f"critdim: records tainted: {summary.failure_rate:.2%} failed", file=sys.stderr)
        return EXIT_TAINTED
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _float_or_inf(s: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="critdim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"critdim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a seeded Monte Carlo sweep")
    sim.add_argument("--model", choices=[k.value for k in ModelKind])
    sim.add_argument("--n", action="append", help="sample size; repeat or use a comma list")
    sim.add_argument("--gamma", type=float, help="dimension exponent, p = ceil(c n^gamma)")
    sim.add_argument("--c", type=float, help="dimension coefficient (default 1)")
    sim.add_argument("--replicates", type=int, help="replicates per n (default 100)")
    sim.add_argument("--seed", type=int, help="master seed (required)")
    sim.add_argument("--workers", type=int, help="worker processes (default 1)")
    sim.add_argument("--L", type=float, help="kernel-bump transition scale (default 8)")
    sim.add_argument("--eps-cutoff", dest="eps_cutoff", type=float,
                     help="kernel-bump outer cutoff width (default 0.25)")
    sim.add_argument("--out", help="output directory")
    sim.add_argument("--config", help="JSON config file (or a run manifest)")
    sim.add_argument("--format", choices=("csv", "json"), help="records file format")
    sim.set_defaults(func=cmd_simulate)

    bnd = sub.add_parser("bounds", help="evaluate the Fisher/Wilks right-hand sides")
    bnd.add_argument("--r0", type=_float_or_inf, help="localisation radius, inf allowed (taken from --manifest if omitted)")
    bnd.add_argument("--x", type=float, help="deviation level x (taken from --manifest if omitted)")
    bnd.add_argument("--p-total", dest="p_total", type=int, help="full dimension")
    bnd.add_argument("--p-target", dest="p_target", type=int, help="target dimension")
    bnd.add_argument("--xi-norm", dest="xi_norm", type=float,
                     help="norm of the efficient score (default sqrt(p_target))")
    bnd.add_argument("--nu", type=float, help="identifiability constant in [0, 1)")
    bnd.add_argument("--nu0", type=float, help="exponential-moment constant nu0")
    bnd.add_argument("--nu1", type=float, help="exponential-moment constant nu1")
    bnd.add_argument("--omega", type=float, help="score-gradient scale in [0, 1/2]")
    bnd.add_argument("--g", type=_float_or_inf, help="exponential-moment range (default inf)")
    bnd.add_argument("--delta-slope", dest="delta_slope", type=float,
                     help="slope of the linear smoothness modulus")
    bnd.add_argument("--manifest", help="read r0, dimensions and constants from a run manifest")
    bnd.add_argument("--n", type=int, help="which sample size to use from the manifest")
    bnd.set_defaults(func=cmd_bounds)

    rep = sub.add_parser("report", help="aggregate one or more record CSVs")
    rep.add_argument("inputs", nargs="+", help="records CSV files or run directories")
    rep.add_argument("--out", help="directory for aggregate/slope/long tables")
    rep.add_argument("--format", choices=("csv", "json"), default="csv")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except (ConfigInvalid, SchemaMismatch) as exc:
        print(f"critdim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CritdimError as exc:
        print(f"critdim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"critdim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
