"""Seeded Monte Carlo engine: replicates, sweeps, CSV persistence, aggregation.

A sweep is a pure function of its :class:`SweepConfig`.  Every replicate gets
its own seed from :func:`critdim.rng.replicate_seed`, replicates share no
mutable state, and records come back in ``(n, replicate_index)`` order no
matter how many worker processes ran them.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np

from .core import ScoreMap, psd_sqrt
from .errors import ConfigInvalid, CritdimError, EmptyGroup, SchemaMismatch
from .models import DEFAULT_CUTOFF_EPS, DEFAULT_L, ModelKind, ModelSpec, gradient, sample_observation
from .optimize import profile_result
from .rng import replicate_seed
from .stats import ks_critical_value, ks_distance
from .theory import ConditionConstants, beta_n, estimate_r0_from_radii, min_samples_r0

CSV_HEADER = (
    "master_seed", "replicate_index", "model", "n", "p_total", "p_target", "beta_n",
    "fisher_error", "wilks_stat", "xi_norm_sq", "wilks_error", "in_C1", "in_S_event",
    "converged", "r_localized",
)
TAINT_RATE = 0.01
R0_X = 3.0
_DIM_TOL = 1e-9


@dataclass(frozen=True)
class ExperimentRecord:
    master_seed: int
    replicate_index: int
    model: str
    n: int
    p_total: int
    p_target: int
    beta_n: float
    fisher_error: float
    wilks_stat: float
    xi_norm_sq: float
    wilks_error: float
    in_C1: bool
    in_S_event: bool
    converged: bool
    r_localized: float


# -- configuration ---------------------------------------------------------------

def dimension(n: int, gamma: float, c: float, kind: ModelKind) -> int:
    """``max(2, ceil(c n^gamma))``, bumped to even for the kernel bump.

    A relative slack of 1e-9 keeps exact powers (``4096^(1/3) = 16``) from
    being rounded up by floating-point noise.
    """
    raw = c * float(n) ** gamma
    p = max(2, math.ceil(raw - _DIM_TOL * max(1.0, raw)))
    if kind is ModelKind.KERNEL_BUMP and p % 2:
        p += 1
    return p


@dataclass(frozen=True)
class SweepConfig:
    model_kind: ModelKind
    gamma: float
    c: float
    n_list: tuple
    replicates: int
    master_seed: int
    constants_override: ConditionConstants | None = None
    L: float = DEFAULT_L
    outer_cutoff_eps: float = DEFAULT_CUTOFF_EPS

    def __post_init__(self):
        try:
            kind = ModelKind.parse(self.model_kind)
        except ValueError as exc:
            raise ConfigInvalid(str(exc), field="model_kind") from None
        object.__setattr__(self, "model_kind", kind)
        if isinstance(self.n_list, (int, np.integer)):
            object.__setattr__(self, "n_list", (self.n_list,))
        n_list = tuple(self.n_list)
        if not n_list:
            raise ConfigInvalid("n_list must not be empty", field="n_list")
        for n in n_list:
            if isinstance(n, bool) or int(n) != n or n < 1:
                raise ConfigInvalid(f"n values must be positive integers, got {n!r}", field="n_list")
        object.__setattr__(self, "n_list", tuple(sorted({int(n) for n in n_list})))
        if isinstance(self.replicates, bool) or int(self.replicates) != self.replicates \
                or self.replicates < 1:
            raise ConfigInvalid("replicates must be an integer >= 1", field="replicates")
        object.__setattr__(self, "replicates", int(self.replicates))
        if isinstance(self.master_seed, bool) or int(self.master_seed) != self.master_seed \
                or not 0 <= self.master_seed < 2**64:
            raise ConfigInvalid("master_seed must be an unsigned 64-bit integer", field="master_seed")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        for name in ("gamma", "c", "L", "outer_cutoff_eps"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigInvalid(f"{name} must be a finite number", field=name)
        if self.c <= 0:
            raise ConfigInvalid("c must be positive", field="c")
        if self.gamma < 0:
            raise ConfigInvalid("gamma must be nonnegative", field="gamma")
        if self.L <= 0:
            raise ConfigInvalid("L must be positive", field="L")
        if self.outer_cutoff_eps <= 0:
            raise ConfigInvalid("outer_cutoff_eps must be positive", field="outer_cutoff_eps")
        if isinstance(self.constants_override, dict):
            try:
                consts = ConditionConstants.from_dict(self.constants_override)
            except (TypeError, ValueError) as exc:
                raise ConfigInvalid(str(exc), field="constants_override") from None
            object.__setattr__(self, "constants_override", consts)

    def p_for(self, n: int) -> int:
        return dimension(n, self.gamma, self.c, self.model_kind)

    def spec_for(self, n: int) -> ModelSpec:
        p = self.p_for(n)
        if self.model_kind is ModelKind.GAUSSIAN:
            return ModelSpec.gaussian(n, p)
        if self.model_kind is ModelKind.LATTICE_BUMP:
            return ModelSpec.lattice_bump(n, p)
        return ModelSpec.kernel_bump(n, p, L=self.L, outer_cutoff_eps=self.outer_cutoff_eps)

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind.value,
            "gamma": self.gamma,
            "c": self.c,
            "n_list": list(self.n_list),
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "constants_override": (
                None if self.constants_override is None else self.constants_override.to_dict()
            ),
            "L": self.L,
            "outer_cutoff_eps": self.outer_cutoff_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigInvalid(f"unknown config key {key!r}", field=key)
        missing = [k for k in ("model_kind", "gamma", "c", "n_list", "replicates", "master_seed")
                   if k not in d]
        if missing:
            raise ConfigInvalid(f"missing config key {missing[0]!r}", field=missing[0])
        return cls(**d)


# -- one replicate ---------------------------------------------------------------

@lru_cache(maxsize=64)
def _score_map(spec: ModelSpec) -> tuple[ScoreMap, np.ndarray]:
    blocks = spec.blocks()
    return ScoreMap.from_blocks(blocks), psd_sqrt(blocks.Dfull2)


def in_c1(spec: ModelSpec, X) -> bool:
    """Typical-value event: ``(p/n)^{3/2}/2 < |X|^3 < (2p/n)^{3/2}`` and ``|X_1| <= 1``."""
    X = np.asarray(X, dtype=float)
    ratio = spec.p / spec.n
    cube = float(np.linalg.norm(X)) ** 3
    return 0.5 * ratio**1.5 < cube < (2.0 * ratio) ** 1.5 and abs(float(X[0])) <= 1.0


def run_replicate(spec: ModelSpec, constants=None, seed: int = 0, *,
                  master_seed: int = 0, replicate_index: int = 0) -> ExperimentRecord:
    """Sample ``X``, profile it, and score the Fisher and Wilks errors.

    ``constants`` does not enter the per-record metrics (they are pure
    functions of ``X``); it is accepted so callers can pass the sweep's
    constants through unchanged.  Model or optimiser errors produce a record
    with ``converged = False``, NaN metrics and an infinite radius.
    """
    split = spec.split
    X = np.asarray(sample_observation(spec, seed), dtype=float)
    beta = beta_n(spec.n, spec.p)
    c1 = in_c1(spec, X)
    try:
        smap, droot = _score_map(spec)
        g0 = gradient(spec, X, np.zeros(spec.p))
        xi = smap.score(g0[: split.p_target], g0[split.p_target:])
        prof = profile_result(spec, X)
        full = np.asarray(prof.upsilon_full, dtype=float)
        cons = np.asarray(prof.upsilon_constrained, dtype=float)
        fisher = float(np.linalg.norm(smap.dbreve @ prof.theta_hat - xi))
        wilks = 2.0 * prof.excess
        xi_sq = float(xi @ xi)
        r_loc = max(float(np.linalg.norm(droot @ full)), float(np.linalg.norm(droot @ cons)))
        converged = prof.converged and all(
            math.isfinite(v) for v in (fisher, wilks, xi_sq, r_loc)
        )
        in_s = prof.in_S_event
    except (CritdimError, ArithmeticError, np.linalg.LinAlgError):
        fisher = wilks = xi_sq = math.nan
        r_loc = math.inf
        converged = in_s = False
    return ExperimentRecord(
        master_seed=int(master_seed),
        replicate_index=int(replicate_index),
        model=spec.kind.value,
        n=spec.n,
        p_total=split.p_total,
        p_target=split.p_target,
        beta_n=beta,
        fisher_error=fisher,
        wilks_stat=wilks,
        xi_norm_sq=xi_sq,
        wilks_error=abs(wilks - xi_sq),
        in_C1=c1,
        in_S_event=bool(in_s),
        converged=bool(converged),
        r_localized=r_loc,
    )


def _run_task(task) -> ExperimentRecord:
    spec_dict, master_seed, idx = task
    spec = ModelSpec.from_dict(spec_dict)
    seed = replicate_seed(master_seed, spec.n, spec.p, idx)
    return run_replicate(spec, None, seed, master_seed=master_seed, replicate_index=idx)


def sweep(config: SweepConfig, workers: int = 1) -> list[ExperimentRecord]:
    """All replicates of ``config`` in ``(n, replicate_index)`` order."""
    if not isinstance(config, SweepConfig):
        raise ConfigInvalid("sweep expects a SweepConfig")
    if isinstance(workers, bool) or int(workers) != workers or workers < 1:
        raise ConfigInvalid("workers must be an integer >= 1", field="workers")
    tasks = []
    for n in config.n_list:
        spec_dict = config.spec_for(n).to_dict()
        tasks.extend((spec_dict, config.master_seed, i) for i in range(config.replicates))
    if workers == 1 or len(tasks) < 2:
        return [_run_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(_run_task, tasks, chunksize=chunk))


# -- CSV ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([_fmt(getattr(r, name)) for name in CSV_HEADER])
    return buf.getvalue()


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename it over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_records_csv(path, records) -> None:
    atomic_write_text(path, records_to_csv(records))


def _parse_bool(s: str, column: str) -> bool:
    if s == "true":
        return True
    if s == "false":
        return False
    raise SchemaMismatch(f"column {column!r}: expected true/false, got {s!r}")


_PARSERS = {
    "master_seed": int, "replicate_index": int, "n": int, "p_total": int, "p_target": int,
    "model": str, "in_C1": None, "in_S_event": None, "converged": None,
}


def parse_records_csv(text: str, source: str = "<csv>") -> list[ExperimentRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaMismatch(f"{source}: empty file, expected header {','.join(CSV_HEADER)}")
    header = tuple(rows[0])
    if header != CSV_HEADER:
        missing = [c for c in CSV_HEADER if c not in header]
        extra = [c for c in header if c not in CSV_HEADER]
        parts = []
        if missing:
            parts.append("missing column(s) " + ", ".join(missing))
        if extra:
            parts.append("unexpected column(s) " + ", ".join(extra))
        if not parts:
            parts.append("columns out of order")
        raise SchemaMismatch(f"{source}: " + "; ".join(parts))
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise SchemaMismatch(f"{source}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        values = {}
        for name, raw in zip(CSV_HEADER, row):
            parser = _PARSERS.get(name, float)
            try:
                values[name] = _parse_bool(raw, name) if parser is None else parser(raw)
            except ValueError:
                raise SchemaMismatch(f"{source}:{lineno}: column {name!r} has bad value {raw!r}") from None
        out.append(ExperimentRecord(**values))
    return out


def read_records_csv(path) -> list[ExperimentRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_records_csv(fh.read(), source=os.fspath(path))


# -- aggregation -------------------------------------------------------------------

def _finite(values) -> np.ndarray:
    """Finite entries in sorted order, so every reduction ignores record order."""
    a = np.asarray(values, dtype=float)
    return np.sort(a[np.isfinite(a)])


def _quantiles(values) -> tuple[float | None, float | None, float | None]:
    a = _finite(values)
    if a.size == 0:
        return None, None, None
    q25, med, q75 = np.quantile(a, [0.25, 0.5, 0.75])
    return float(med), float(q25), float(q75)


def _ks(values, k: int) -> float | None:
    a = _finite(values)
    return ks_distance(a, k) if a.size >= 2 else None


def loglog_slope(ns, values) -> float | None:
    """Least-squares slope of ``log(value)`` against ``log(n)``."""
    pts = [(n, v) for n, v in zip(ns, values)
           if v is not None and math.isfinite(v) and v > 0]
    if len({n for n, _ in pts}) < 2:
        return None
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    return float(np.polyfit(x, y, 1)[0])


SLOPE_METRICS = ("fisher_error_median", "wilks_error_median", "wilks_error_median_in_S")


@dataclass
class Summary:
    groups: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    tainted: bool = False
    failure_rate: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate(records, r0_x: float = R0_X) -> Summary:
    """Per ``(model, n, p_total)`` statistics plus log-log slopes per model.

    Non-converged records stay in every count.  When they exceed 1% of all
    records the summary is tainted and they are dropped from the medians,
    quantiles, means and KS distances.
    """
    records = list(records)
    if not records:
        raise EmptyGroup("aggregate needs at least one record")
    failures = sum(not r.converged for r in records)
    failure_rate = failures / len(records)
    tainted = failure_rate > TAINT_RATE
    grouped: dict = {}
    for r in records:
        grouped.setdefault((r.model, r.n, r.p_total), []).append(r)
    rows = []
    need_r0 = min_samples_r0(r0_x)
    for (model, n, p_total) in sorted(grouped):
        grp = grouped[(model, n, p_total)]
        used = [r for r in grp if r.converged] if tainted else grp
        p_target = grp[0].p_target
        beta = grp[0].beta_n
        f_med, f_q25, f_q75 = _quantiles([r.fisher_error for r in used])
        w_med, w_q25, w_q75 = _quantiles([r.wilks_error for r in used])
        stats = _finite([r.wilks_stat for r in used])
        xi = _finite([r.xi_norm_sq for r in used])
        in_s = [r.wilks_error for r in used if r.in_S_event]
        s_med = _quantiles(in_s)[0]
        count = len(grp)
        usable = stats.size
        radii = [r.r_localized for r in grp]
        rows.append({
            "model": model,
            "n": n,
            "p_total": p_total,
            "p_target": p_target,
            "count": count,
            "converged_rate": sum(r.converged for r in grp) / count,
            "in_C1_rate": sum(r.in_C1 for r in grp) / count,
            "in_S_rate": sum(r.in_S_event for r in grp) / count,
            "beta_n": beta,
            "fisher_error_median": f_med,
            "fisher_error_q25": f_q25,
            "fisher_error_q75": f_q75,
            "wilks_error_median": w_med,
            "wilks_error_q25": w_q25,
            "wilks_error_q75": w_q75,
            "wilks_stat_mean": math.fsum(stats) / usable if usable else None,
            "xi_norm_sq_mean": math.fsum(xi) / xi.size if xi.size else None,
            "ks_chi2_p_target": _ks(stats, p_target),
            "ks_chi2_1": _ks(stats, 1),
            "ks_critical_1pct": ks_critical_value(usable) if usable else None,
            "wilks_error_median_in_S": s_med,
            "wilks_error_in_S_over_beta": None if s_med is None else s_med / beta,
            "fisher_over_sqrt_beta": None if f_med is None else f_med / math.sqrt(beta),
            "r0_x": r0_x,
            "r0_hat": estimate_r0_from_radii(radii, r0_x) if count >= need_r0 else None,
        })
    slopes = {}
    for model in sorted({row["model"] for row in rows}):
        mrows = [row for row in rows if row["model"] == model]
        slopes[model] = {
            metric: loglog_slope([row["n"] for row in mrows], [row[metric] for row in mrows])
            for metric in SLOPE_METRICS
        }
    return Summary(groups=rows, slopes=slopes, tainted=tainted, failure_rate=failure_rate)

