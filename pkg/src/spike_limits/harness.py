"""Monte Carlo experiments compared against the limiting theory."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .errors import DomainError, InputError, InsufficientData, ScopeError, ValidationFailed
from .limits import (
    KINDS,
    eigenvalue_clt_block,
    eigenvalue_limit,
    eigvec_limit,
    eigvec_variance,
    normalization_effect,
    normalize_kind,
    projection_context,
)
from .model import PopulationModel, model_from_json, model_to_json, validate
from .simulate import ReplicationRecord, SourceDistribution, derive_seed, replicate

MIN_RECORDS = 30
Z_MAX = 4.0
VAR_BAND = (0.8, 1.25)
VAR_MIN_REPS = 500
KS_COEF = 1.358
DENSITY_POINTS = 200
HIST_BINS = 30


@dataclass
class ExperimentConfig:
    model: PopulationModel
    n: int
    reps: int
    dist: SourceDistribution = field(default_factory=SourceDistribution)
    kinds: tuple = KINDS
    projections: tuple = ()
    master_seed: int = 0

    def __post_init__(self):
        self.n = int(self.n)
        self.reps = int(self.reps)
        if isinstance(self.dist, str):
            self.dist = SourceDistribution(self.dist)
        self.kinds = tuple(normalize_kind(k) for k in self.kinds)
        if not self.kinds:
            raise InputError("at least one matrix kind is required")
        if self.reps < 2:
            raise InputError("reps must be at least 2")
        if self.n < 1 or self.n < self.model.p / 10:
            raise DomainError(f"n={self.n} is too small for p={self.model.p} (need n >= p/10)")
        self.projections = tuple(self.projections)

    @classmethod
    def from_json(cls, doc: dict | str, **overrides) -> "ExperimentConfig":
        if isinstance(doc, str):
            try:
                doc = json.loads(doc)
            except json.JSONDecodeError as exc:
                raise InputError(f"malformed config JSON: {exc}") from exc
        if not isinstance(doc, dict) or "model" not in doc:
            raise InputError("config must be a JSON object with a 'model' entry")
        doc = dict(doc)
        doc.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(
                model=model_from_json(doc["model"]),
                n=doc["n"],
                reps=doc["reps"],
                dist=SourceDistribution(doc.get("dist", "gaussian")),
                kinds=tuple(doc.get("kinds", KINDS)),
                projections=tuple(doc.get("projections", ())),
                master_seed=int(doc.get("master_seed", 0)),
            )
        except KeyError as exc:
            raise InputError(f"config is missing {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise InputError(f"invalid config value: {exc}") from exc

    def to_json(self) -> dict:
        projections = [p if isinstance(p, str) else {"name": p["name"], "vector": list(p["vector"])}
                       for p in self.projections]
        return {
            "model": model_to_json(self.model),
            "n": self.n,
            "reps": self.reps,
            "dist": self.dist.kind,
            "kinds": list(self.kinds),
            "projections": projections,
            "master_seed": self.master_seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def resolve_projections(model: PopulationModel, items) -> dict:
    """Map projection items to unit vectors.

    ``"Vk"`` is the first population spike direction of group k (1-based),
    ``"ej"`` a coordinate vector, ``"orthogonal"`` the leading bulk direction
    (orthogonal to every spike direction); dicts carry an explicit vector.
    """
    out = {}
    starts = [int(idx[0]) for idx in model.spikes.index_sets]
    for item in items:
        if isinstance(item, dict):
            v = np.asarray(item["vector"], dtype=float)
            norm = np.linalg.norm(v)
            if v.shape != (model.p,) or norm == 0:
                raise InputError(f"projection {item.get('name')!r} must be a nonzero {model.p}-vector")
            out[str(item["name"])] = v / norm
            continue
        if item == "orthogonal":
            if model.M >= model.p:
                raise DomainError("no bulk direction available")
            out[item] = np.array(model.V[:, model.M])
        elif len(item) > 1 and item[0] in "Ve" and item[1:].isdigit():
            j = int(item[1:])
            if item[0] == "V":
                if not 1 <= j <= model.K:
                    raise InputError(f"projection {item}: no spike group {j}")
                out[item] = np.array(model.V[:, starts[j - 1]])
            else:
                if not 1 <= j <= model.p:
                    raise InputError(f"projection {item}: coordinate out of range")
                e = np.zeros(model.p)
                e[j - 1] = 1.0
                out[item] = e
        else:
            raise InputError(f"unknown projection {item!r}")
    return out


def _workers() -> int:
    raw = os.environ.get("SPIKE_LIMITS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"SPIKE_LIMITS_THREADS must be an integer, got {raw!r}") from None


def run(config: ExperimentConfig, workers: int | None = None) -> list[ReplicationRecord]:
    """Simulate ``reps`` replications; records are ordered by (rep, kind)."""
    model, n = config.model, config.n
    report = validate(model, n)
    if not report.ok:
        raise ValidationFailed(report)
    phis = [eigenvalue_limit(model, n, k) for k in range(model.K)]
    projections = resolve_projections(model, config.projections)
    seeds = [derive_seed(config.master_seed, r) for r in range(config.reps)]

    def one(r):
        return replicate(model, n, config.dist, config.kinds, projections, phis, seeds[r])

    workers = _workers() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(config.reps)))
    else:
        results = [one(r) for r in range(config.reps)]
    records = []
    for r, res in enumerate(results):
        for kind in config.kinds:
            lam, theta, proj = res[kind]
            records.append(ReplicationRecord(r, kind, lam, theta, proj, seeds[r]))
    return records


@dataclass
class Theory:
    """Targets for one statistic: mean, variance, and which checks apply."""

    mean: float
    var: float
    kind: str
    source: str
    normal: bool = True


def theory_for(config: ExperimentConfig) -> dict:
    """Theoretical targets keyed by (statistic, kind)."""
    model, n, nu4 = config.model, config.n, config.dist.nu4
    projections = resolve_projections(model, config.projections)
    out = {}
    for kind in config.kinds:
        if kind == "correlation_matrix" and model.mode != "correlation":
            raise ScopeError("correlation-matrix theory needs a correlation-mode model")
        for k, idx in enumerate(model.spikes.index_sets):
            block = eigenvalue_clt_block(model, n, k, kind, nu4)
            m = idx.size
            out[(f"lambda_{k + 1}", kind)] = Theory(eigenvalue_limit(model, n, k), float("nan"), kind, "limit", False)
            if m == 1:
                out[(f"theta_{k + 1}", kind)] = Theory(0.0, block.var_diag(), kind, "clt")
            else:
                # trace of the Gaussian block and its squared Frobenius norm
                tr_var = float(sum(block.cov[a, a, b, b] for a in range(m) for b in range(m)))
                sq_mean = float(sum(block.cov[a, b, a, b] for a in range(m) for b in range(m)))
                out[(f"trace_{k + 1}", kind)] = Theory(0.0, tr_var, kind, "clt")
                out[(f"sumsq_{k + 1}", kind)] = Theory(sq_mean, float("nan"), kind, "moment", False)
            for name, P in projections.items():
                ctx = projection_context(model, P)
                lim = eigvec_limit(model, n, ctx, k)
                var = eigvec_variance(model, n, ctx, k, kind, nu4).sigma2
                out[(f"vec_{name}_{k + 1}", kind)] = Theory(0.0, var, kind, "clt")
                out[(f"proj_{name}_{k + 1}", kind)] = Theory(lim, float("nan"), kind, "limit", False)
    return out


def extract_series(records, config: ExperimentConfig, theory: dict) -> dict:
    """Per-statistic sample paths in rep-index order."""
    model, n = config.model, config.n
    series = {key: [] for key in theory}
    for rec in sorted(records, key=lambda r: (r.rep_index, KINDS.index(r.kind))):
        kind = rec.kind
        for k, idx in enumerate(model.spikes.index_sets):
            if (f"lambda_{k + 1}", kind) not in series:
                continue
            series[(f"lambda_{k + 1}", kind)].append(float(rec.lam[idx[0]]))
            th = rec.theta[idx]
            if idx.size == 1:
                series[(f"theta_{k + 1}", kind)].append(float(th[0]))
            else:
                series[(f"trace_{k + 1}", kind)].append(float(np.sum(th)))
                series[(f"sumsq_{k + 1}", kind)].append(float(np.sum(th**2)))
        for (name, k), val in rec.proj_stat.items():
            key_p = (f"proj_{name}_{k + 1}", kind)
            if key_p in series:
                series[key_p].append(val)
                lim = theory[key_p].mean
                series[(f"vec_{name}_{k + 1}", kind)].append(float(np.sqrt(n) * (val - lim)))
    return series


class Welford:
    """One-pass running mean and variance."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    @property
    def var(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")


@dataclass
class StatSummary:
    statistic: str
    kind: str
    count: int
    emp_mean: float
    emp_var: float
    theory_mean: float
    theory_var: float
    z: float | None
    var_ratio: float | None
    ks: float | None
    ks_crit: float | None
    checks: dict

    @property
    def passed(self) -> bool:
        return all(v for v in self.checks.values() if v is not None)

    def to_json(self) -> dict:
        def clean(x):
            if x is None:
                return None
            x = float(x)
            return x if np.isfinite(x) else None

        return {
            "statistic": self.statistic,
            "kind": self.kind,
            "count": self.count,
            "emp_mean": clean(self.emp_mean),
            "emp_var": clean(self.emp_var),
            "theory_mean": clean(self.theory_mean),
            "theory_var": clean(self.theory_var),
            "z": clean(self.z),
            "var_ratio": clean(self.var_ratio),
            "ks": clean(self.ks),
            "ks_crit": clean(self.ks_crit),
            "checks": dict(self.checks),
            "passed": self.passed,
        }


def summarize_series(name: str, kind: str, values, th: Theory, n: int | None = None) -> StatSummary:
    x = np.asarray(values, dtype=float)
    if x.size < MIN_RECORDS:
        raise InsufficientData(f"{name} ({kind}) has {x.size} records; at least {MIN_RECORDS} are needed")
    acc = Welford()
    for v in x:
        acc.push(float(v))
    mean, var = acc.mean, acc.var
    se = np.sqrt(var / x.size)
    z = ratio = ks = crit = None
    checks = {}
    if th.source == "moment":
        z = (mean - th.mean) / se if se > 0 else (0.0 if mean == th.mean else np.inf)
        checks["mean"] = bool(abs(z) <= Z_MAX)
    elif th.normal:
        if th.var > 0:
            z = mean / se if se > 0 else (0.0 if mean == 0 else np.inf)
            checks["mean"] = bool(abs(z) <= Z_MAX)
            ratio = var / th.var
            checks["variance"] = bool(VAR_BAND[0] <= ratio <= VAR_BAND[1]) if x.size >= VAR_MIN_REPS else None
            ks = float(stats.kstest(x, "norm", args=(0.0, np.sqrt(th.var))).statistic)
            crit = KS_COEF / np.sqrt(x.size)
            checks["ks"] = bool(ks <= crit)
        else:
            # degenerate limit: the statistic is sqrt(n) times an O(1/n) quantity
            scale = Z_MAX / np.sqrt(n) if n else 0.0
            checks["mean"] = bool(abs(mean) <= scale)
    return StatSummary(name, kind, int(x.size), mean, var, th.mean, th.var, z, ratio, ks, crit, checks)


@dataclass
class SummaryReport:
    stats: list
    config_hash: str
    version: str = __version__
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.stats)

    def get(self, statistic: str, kind: str) -> StatSummary:
        for s in self.stats:
            if s.statistic == statistic and s.kind == normalize_kind(kind):
                return s
        raise KeyError((statistic, kind))

    def failures(self) -> list[str]:
        out = []
        for s in self.stats:
            for check, ok in s.checks.items():
                if ok is False:
                    out.append(f"{s.statistic}[{s.kind}].{check}")
        return out

    def to_json(self) -> dict:
        doc = {
            "schema": "summary_v1",
            "version": self.version,
            "config_hash": self.config_hash,
            "passed": self.passed,
            "failures": self.failures(),
            "stats": [s.to_json() for s in self.stats],
        }
        doc.update(self.extra)
        return doc


def summarize(records, config: ExperimentConfig, theory: dict | None = None) -> SummaryReport:
    theory = theory_for(config) if theory is None else theory
    series = extract_series(records, config, theory)
    out = []
    for (name, kind), th in theory.items():
        out.append(summarize_series(name, kind, series[(name, kind)], th, config.n))
    return SummaryReport(stats=out, config_hash=config.config_hash())


def compare_normalization(config: ExperimentConfig, records=None) -> dict:
    """Paired covariance-vs-correlation comparison for a single-spike correlation model."""
    model, n = config.model, config.n
    if model.mode != "correlation":
        raise ScopeError("normalization comparison needs a correlation-mode model")
    if model.K != 1 or model.M != 1:
        raise ScopeError("normalization comparison needs a single simple spike")
    if set(config.kinds) != set(KINDS):
        raise ScopeError("normalization comparison needs both matrix kinds")
    effect = normalization_effect(model, n, config.dist.nu4)
    records = run(config) if records is None else records
    var = {}
    for kind in KINDS:
        acc = Welford()
        for rec in sorted((r for r in records if r.kind == kind), key=lambda r: r.rep_index):
            acc.push(float(rec.theta[0]))
        if acc.count < MIN_RECORDS:
            raise InsufficientData("too few records for the normalization comparison")
        var[kind] = acc.var
    diff = var["correlation_matrix"] - var["covariance_matrix"]
    th_var = {k: eigenvalue_clt_block(model, n, 0, k, config.dist.nu4).var_diag() for k in KINDS}
    sign_ok = bool(np.sign(diff) == np.sign(effect.effective_term)) and effect.effective_term != 0
    return {
        "limits": {k: eigenvalue_limit(model, n, 0) for k in KINDS},
        "limits_equal": True,
        "empirical_var": var,
        "theory_var": th_var,
        "empirical_diff": diff,
        "full_delta": effect.full_delta,
        "effective_term": effect.effective_term,
        "sign": effect.sign,
        "sign_verdict": "PASS" if sign_ok else "FAIL",
        "reps": config.reps,
    }


def records_csv(records, model: PopulationModel) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    M = model.M
    proj_keys = sorted(records[0].proj_stat) if records else []
    header = ["rep", "kind", "seed"]
    header += [f"lambda_{j + 1}" for j in range(M)] + [f"theta_{j + 1}" for j in range(M)]
    header += [f"proj_{name}_{k + 1}" for name, k in proj_keys]
    w.writerow(header)
    for rec in records:
        row = [rec.rep_index, rec.kind, rec.seed_used]
        row += [repr(float(v)) for v in rec.lam] + [repr(float(v)) for v in rec.theta]
        row += [repr(float(rec.proj_stat[key])) for key in proj_keys]
        w.writerow(row)
    return buf.getvalue()


def plot_csv(records, config: ExperimentConfig, report: SummaryReport, theory: dict | None = None) -> str:
    """Long-format histogram bins and theoretical Normal density samples."""
    theory = theory_for(config) if theory is None else theory
    series = extract_series(records, config, theory)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["statistic", "kind", "type", "x0", "x1", "value"])
    for (name, kind), th in theory.items():
        x = np.asarray(series[(name, kind)], dtype=float)
        if x.size == 0:
            continue
        counts, edges = np.histogram(x, bins=HIST_BINS, density=True)
        for c, a, b in zip(counts, edges[:-1], edges[1:]):
            w.writerow([name, kind, "bin", repr(float(a)), repr(float(b)), repr(float(c))])
        if th.normal and th.var > 0:
            sd = np.sqrt(th.var)
            grid = np.linspace(-4 * sd, 4 * sd, DENSITY_POINTS)
            dens = stats.norm.pdf(grid, scale=sd)
            for g, d in zip(grid, dens):
                w.writerow([name, kind, "density", repr(float(g)), repr(float(g)), repr(float(d))])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_outputs(out_dir: str, records, config: ExperimentConfig, report: SummaryReport, theory=None) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "records": os.path.join(out_dir, "records.csv"),
        "report": os.path.join(out_dir, "report.json"),
        "plot": os.path.join(out_dir, "plot_data.csv"),
    }
    write_atomic(paths["records"], records_csv(records, config.model))
    write_atomic(paths["report"], json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    write_atomic(paths["plot"], plot_csv(records, config, report, theory))
    return paths
