"""Command-line interface.

Exit codes: 0 success, 1 input error or failed verification checks,
2 domain error, 3 insufficient data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

from . import __version__
from .errors import InputError, InsufficientData, SpikeLimitsError
from .harness import (
    MIN_RECORDS,
    ExperimentConfig,
    compare_normalization,
    records_csv,
    resolve_projections,
    run,
    summarize,
    theory_for,
    write_atomic,
    write_outputs,
)
from .limits import (
    eigenvalue_clt_block,
    eigvec_limit,
    eigvec_variance,
    normalization_effect,
    normalize_kind,
    projection_context,
    rmt_point,
)
from .model import model_from_json
from .simulate import NU4, SourceDistribution

log = logging.getLogger("spike_limits")


def _load_json(path: str) -> tuple[dict, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return doc, hashlib.sha256(text.encode()).hexdigest()[:16]


def _load_model(path: str, n: int | None):
    """Accept either a model document or an experiment config with a 'model' entry."""
    doc, digest = _load_json(path)
    if isinstance(doc, dict) and "model" in doc:
        n = n if n is not None else doc.get("n")
        doc = doc["model"]
    if n is None:
        raise InputError("--n is required")
    return model_from_json(doc), int(n), digest


def _spike_index(model, spike: int) -> int:
    if not 1 <= spike <= model.K:
        raise InputError(f"--spike must be between 1 and {model.K}")
    return spike - 1


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_limits(args) -> int:
    model, n, digest = _load_model(args.model, args.n)
    k = _spike_index(model, args.spike)
    pt = rmt_point(model, n, k)
    P = resolve_projections(model, [f"V{k + 1}"])[f"V{k + 1}"]
    doc = pt.to_json()
    doc.update(
        spike_k=k + 1,
        n=n,
        p=model.p,
        eigenvalue_limit=pt.phi,
        eigvec_limit=eigvec_limit(model, n, P, k),
        config_hash=digest,
        version=__version__,
    )
    _emit(doc)
    return 0


def cmd_variance(args) -> int:
    model, n, digest = _load_model(args.model, args.n)
    k = _spike_index(model, args.spike)
    kind = normalize_kind(args.kind)
    nu4 = SourceDistribution(args.dist).nu4
    item = args.projection or f"V{k + 1}"
    P = resolve_projections(model, [item])[item]
    ctx = projection_context(model, P)
    ev = eigvec_variance(model, n, ctx, k, kind, nu4)
    doc = ev.to_json()
    doc.update(
        limit=eigvec_limit(model, n, ctx, k),
        projection=item,
        eigenvalue_block=eigenvalue_clt_block(model, n, k, kind, nu4).cov.tolist(),
        n=n,
        config_hash=digest,
        version=__version__,
    )
    _emit(doc)
    return 0


def _load_config(args) -> ExperimentConfig:
    doc, _ = _load_json(args.config)
    overrides = {"master_seed": args.seed, "reps": args.reps, "n": args.n}
    if getattr(args, "dist", None):
        overrides["dist"] = args.dist
    return ExperimentConfig.from_json(doc, **overrides)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    t0 = time.perf_counter()
    records = run(cfg)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "records.csv")
    write_atomic(path, records_csv(records, cfg.model))
    log.info("wrote %d records to %s in %.2fs", len(records), path, time.perf_counter() - t0)
    return 0


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    if cfg.reps < MIN_RECORDS:
        raise InsufficientData(f"reps={cfg.reps} is below the {MIN_RECORDS} needed for distributional tests")
    t0 = time.perf_counter()
    theory = theory_for(cfg)
    records = run(cfg)
    report = summarize(records, cfg, theory)
    paths = write_outputs(args.out, records, cfg, report, theory)
    log.info("wrote %s in %.2fs", ", ".join(paths.values()), time.perf_counter() - t0)
    if not report.passed:
        for f in report.failures():
            print(f"FAIL {f}", file=sys.stderr)
        return 1
    return 0


def cmd_normalize_effect(args) -> int:
    if args.config:
        cfg = _load_config(args)
        model, n = cfg.model, cfg.n
        digest = cfg.config_hash()
    else:
        if not args.model:
            raise InputError("a model file or --config is required")
        doc, digest = _load_json(args.model)
        n = args.n
        if isinstance(doc, dict) and "model" in doc:
            n = n if n is not None else doc.get("n")
            doc = doc["model"]
        model = model_from_json(doc)
    nu4 = SourceDistribution(args.dist or "gaussian").nu4
    doc = normalization_effect(model, n, nu4).to_json()
    doc.update(config_hash=digest, version=__version__, n=n)
    if args.config:
        doc["empirical"] = compare_normalization(cfg)
    _emit(doc)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spike-limits", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("limits", help="first-order limits and scalar functions at a spike")
    p.add_argument("model", help="model JSON (or experiment config)")
    p.add_argument("--n", type=int)
    p.add_argument("--spike", type=int, default=1, help="1-based spike group")
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("variance", help="limiting variance breakdown for an eigenvector projection")
    p.add_argument("model")
    p.add_argument("--n", type=int)
    p.add_argument("--spike", type=int, default=1)
    p.add_argument("--kind", default="covariance", choices=["covariance", "correlation"])
    p.add_argument("--projection", help="Vk, ej or orthogonal (default V<spike>)")
    p.add_argument("--dist", default="gaussian", choices=sorted(NU4))
    p.set_defaults(func=cmd_variance)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "run replications and write records.csv"),
        ("verify", cmd_verify, "run replications and compare against theory"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", nargs="?")
        p.add_argument("--config", dest="config_flag")
        p.add_argument("--out", default=".")
        p.add_argument("--seed", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--dist", choices=sorted(NU4))
        p.set_defaults(func=func)

    p = sub.add_parser("normalize-effect", help="effect of normalization on the leading spike")
    p.add_argument("model", nargs="?")
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--dist", choices=sorted(NU4))
    p.set_defaults(func=cmd_normalize_effect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command in ("simulate", "verify"):
        args.config = args.config or args.config_flag
        if not args.config:
            print("error: a config file is required", file=sys.stderr)
            return 1
    try:
        return args.func(args)
    except SpikeLimitsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
