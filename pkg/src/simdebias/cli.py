"""Command-line interface: ``simdebias {coverage,hermite,infer,tune,replay}``.

Exit codes: 0 success, 2 input or configuration error, 3 too many failed
Monte Carlo replicates.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config_text, parse_int_list
from .debias import Dataset, SplitPlan, infer
from .design import CovarianceModel
from .exceptions import ConfigError, InputError, ReplicateFailureError, SimDebiasError
from .jackknife import JackknifePlan, select_degree
from .lasso import tune_nodewise_lambda
from .simulation import (
    coverage_csv,
    degree_csv,
    mse_tsv,
    run_coverage_experiment,
    run_hermite_experiment,
    run_mse_curve,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FAILURES = 3
SEED_ENV = "SIMDEBIAS_SEED"
INFER_COLUMNS = ["target", "estimate", "se", "ci_lo", "ci_hi", "method", "n", "p"]


class UsageError(SimDebiasError):
    pass


def blob_sha1(data):
    """Git-style blob hash of `data` (bytes)."""
    h = hashlib.sha1(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None


def _read_bytes(path, what):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror}") from None


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    return str(path)


def _safe(label):
    return "".join(c if c.isalnum() or c in "-_.=" else "_" for c in label).strip("_")


def write_manifest(out_path, manifest):
    return _write(out_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# data files


def read_data_csv(path):
    """Read ``y,x1,...,xp`` with a header row; returns ``(X, y, names)``."""
    raw = _read_bytes(path, "data file")
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError:
        raise InputError(f"{path}: not valid UTF-8") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0].lower() != "y":
        raise InputError(f"{path}: the header row must start with 'y', got {rows[0][:1]}")
    width = len(header)
    if width - 1 < 2:
        raise InputError(f"{path}: need at least 2 predictor columns, got {width - 1}")
    body = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise InputError(f"{path}: row {line_no} has {len(row)} fields, expected {width}")
        values = []
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: row {line_no}, column {header[j]!r}: cannot parse {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: row {line_no}, column {header[j]!r}: non-finite value {cell!r}")
            values.append(v)
        body.append(values)
    if len(body) < 4:
        raise InputError(f"{path}: need at least 4 data rows, got {len(body)}")
    arr = np.array(body)
    return arr[:, 1:], arr[:, 0], header[1:]


def read_sigma_csv(path, p):
    raw = _read_bytes(path, "covariance file").decode("utf-8-sig", errors="replace")
    rows = [r for r in csv.reader(raw.splitlines()) if r and any(c.strip() for c in r)]
    if len(rows) != p or any(len(r) != p for r in rows):
        raise InputError(f"{path}: covariance must be {p} x {p} without a header")
    try:
        S = np.array([[float(c) for c in r] for r in rows])
    except ValueError:
        raise InputError(f"{path}: covariance has a non-numeric entry") from None
    if not np.all(np.isfinite(S)):
        i, j = np.argwhere(~np.isfinite(S))[0]
        raise InputError(f"{path}: non-finite covariance entry at row {i + 1}, column {j + 1}")
    return CovarianceModel.explicit(S)


def parse_targets(text, p):
    targets = parse_int_list(text, name="target")
    for t in targets:
        if not 1 <= t <= p:
            raise InputError(f"target {t} is out of range 1..{p}")
    return [t - 1 for t in targets]


# ---------------------------------------------------------------------------
# commands


def _config_seed(cells):
    seeds = sorted({cfg.master_seed for _, cfg in cells})
    return seeds[0] if len(seeds) == 1 else seeds


def _experiment(args, kind):
    seed = resolve_seed(args.seed)
    config_bytes = _read_bytes(args.config, "config file")
    text = config_bytes.decode("utf-8")
    cells = load_config_text(text, seed=seed, source=args.config)
    out = Path(args.out)
    manifest = {
        "command": kind,
        "version": __version__,
        "config_path": str(args.config),
        "config_text": text,
        "config": [dict(cfg.to_dict(), label=label) for label, cfg in cells],
        "inputs": {str(args.config): blob_sha1(config_bytes)},
        "master_seed": seed if seed is not None else _config_seed(cells),
        "threads": args.threads,
        "started": _now(),
        "outputs": {},
        "failures": {},
        "status": "ok",
    }
    tables = []
    code = EXIT_OK
    for label, cfg in cells:
        try:
            if kind == "coverage":
                table = run_coverage_experiment(cfg, threads=args.threads, label=label)
            else:
                if not cfg.degrees:
                    raise ConfigError(f"[{label}] the hermite command needs a 'degrees' key")
                table = run_hermite_experiment(cfg, threads=args.threads, label=label)
                tsv = mse_tsv(run_mse_curve(cfg, table=table))
                manifest["outputs"][f"mse:{label}"] = _write(out / f"mse_{_safe(label)}.tsv", tsv)
        except ReplicateFailureError as exc:
            print(f"error: [{label}] {exc}", file=sys.stderr)
            manifest["failures"][label] = exc.failures
            manifest["status"] = "replicate-failure"
            code = EXIT_FAILURES
            break
        manifest["failures"][label] = table.failures
        tables.append(table)
    stem = "coverage" if kind == "coverage" else "hermite"
    if tables:
        body = coverage_csv(tables) if kind == "coverage" else degree_csv(tables)
        manifest["outputs"]["csv"] = _write(out / f"{stem}.csv", body)
        doc = json.dumps([t.to_dict() for t in tables], indent=2, sort_keys=True) + "\n"
        manifest["outputs"]["json"] = _write(out / f"{stem}.json", doc)
    manifest["finished"] = _now()
    write_manifest(out / "manifest.json", manifest)
    if code == EXIT_OK:
        print(manifest["outputs"].get("csv", ""))
    return code


def cmd_coverage(args):
    return _experiment(args, "coverage")


def cmd_hermite(args):
    return _experiment(args, "hermite")


def cmd_infer(args):
    seed = resolve_seed(args.seed)
    X, y, _ = read_data_csv(args.data)
    n, p = X.shape
    targets = parse_targets(args.target, p)
    cov = read_sigma_csv(args.sigma, p) if args.sigma else None
    if args.hermite is not None and args.hermite < 1:
        raise InputError("--hermite degree must be >= 1")
    data = Dataset(X, y, SplitPlan.halves(n))
    started = _now()
    ests = infer(
        data, targets, cov=cov, degree=args.hermite, crossfit=args.crossfit,
        level=args.level, rng=np.random.default_rng(seed),
    )
    lines = [",".join(INFER_COLUMNS)]
    for e in ests:
        nums = [f"{v:.17g}" for v in (e.beta_tilde, e.se, e.ci[0], e.ci[1])]
        lines.append(",".join([str(e.k + 1), *nums, e.method, str(n), str(p)]))
    out = _write(args.out, "\n".join(lines) + "\n")
    inputs = {str(args.data): blob_sha1(_read_bytes(args.data, "data file"))}
    if args.sigma:
        inputs[str(args.sigma)] = blob_sha1(_read_bytes(args.sigma, "covariance file"))
    manifest = {
        "command": "infer",
        "version": __version__,
        "arguments": {
            "data": str(args.data), "target": args.target, "sigma": args.sigma, "hermite": args.hermite,
            "crossfit": args.crossfit, "level": args.level,
        },
        "inputs": inputs,
        "master_seed": seed,
        "started": started,
        "finished": _now(),
        "outputs": {"csv": out},
        "failures": {},
        "status": "ok",
    }
    write_manifest(args.manifest or f"{args.out}.manifest.json", manifest)
    return EXIT_OK


def cmd_tune(args):
    seed = resolve_seed(args.seed)
    X, y, _ = read_data_csv(args.data)
    n, p = X.shape
    if (args.nodewise is None) == (args.degrees is None):
        raise UsageError("give exactly one of --nodewise K or --degrees LIST")
    if args.nodewise is not None:
        (k,) = parse_targets(str(args.nodewise), p)
        if p < 3:
            raise InputError("node-wise tuning needs at least 3 columns")
        tuning = tune_nodewise_lambda(X, k)
        print(f"{tuning.lam:.17g}")
        return EXIT_OK
    degrees = parse_int_list(args.degrees, name="degrees")
    (k,) = parse_targets(str(args.target), p)
    cov = read_sigma_csv(args.sigma, p) if args.sigma else None
    data = Dataset(X, y, SplitPlan.halves(n))
    if len(degrees) == 1:
        print(degrees[0])
        return EXIT_OK
    plan = JackknifePlan(data.n1, args.block)
    print(select_degree(data, degrees, plan, cov=cov, k=k, rng=np.random.default_rng(seed)))
    return EXIT_OK


def cmd_replay(args):
    raw = _read_bytes(args.manifest, "manifest")
    try:
        manifest = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.manifest}: not a manifest ({exc})") from None
    kind = manifest.get("command")
    if kind not in ("coverage", "hermite"):
        raise ConfigError(f"{args.manifest}: only coverage and hermite runs can be replayed, got {kind!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config_path = out / "replayed_config.ini"
    _write(config_path, manifest["config_text"])
    seed = manifest["master_seed"]
    ns = argparse.Namespace(
        config=str(config_path), out=str(out), threads=args.threads,
        seed=seed if isinstance(seed, int) else None,
    )
    return _experiment(ns, kind)


def build_parser():
    parser = argparse.ArgumentParser(prog="simdebias", description="Debiased inference for single-index models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="INI experiment file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
        p.add_argument("--seed", type=int, default=None, help=f"master seed (default: ${SEED_ENV}, then the file)")
        return p

    experiment("coverage", "coverage / TPR / FPR tables").set_defaults(func=cmd_coverage)
    experiment("hermite", "per-degree accuracy tables and MSE curves").set_defaults(func=cmd_hermite)

    p = sub.add_parser("infer", help="debiased estimates on a data file")
    p.add_argument("data", help="CSV with header y,x1,...,xp")
    p.add_argument("--target", required=True, help="1-based coordinates, e.g. 1,2 or 1-5")
    p.add_argument("--sigma", help="known covariance, p x p CSV without header")
    p.add_argument("--hermite", type=int, metavar="M", help="use the degree-M Hermite estimator")
    p.add_argument("--crossfit", action="store_true", help="swap sub-sample roles and average")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--manifest", help="manifest path (default: OUT.manifest.json)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("tune", help="print a tuned node-wise penalty or Hermite degree")
    p.add_argument("data", help="CSV with header y,x1,...,xp")
    p.add_argument("--nodewise", type=int, metavar="K", help="1-based column for the node-wise penalty")
    p.add_argument("--degrees", metavar="LIST", help="candidate degrees, e.g. 1-10")
    p.add_argument("--target", default="1", help="coordinate for degree selection (1-based)")
    p.add_argument("--sigma", help="known covariance CSV (degree mode)")
    p.add_argument("--block", type=int, default=10, help="jackknife leave-out size")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("replay", help="re-run an experiment from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ReplicateFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    except (ConfigError, InputError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SimDebiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
