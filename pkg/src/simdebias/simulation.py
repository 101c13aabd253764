"""Monte Carlo experiments: interval coverage, Hermite accuracy and MSE curves.

Replicate ``r`` draws everything from ``SeedSequence([master_seed, r])`` so a
run gives the same numbers whatever the number of worker processes.
"""

import csv
import io
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .debias import (
    Dataset,
    SplitPlan,
    crossfit_average,
    debias_split,
    fit_pilot,
    hermite_estimates,
    prepare_hermite,
)
from .design import CovarianceModel, DesignSpec, LinkModel, RadialLaw, make_tau, population_mu
from .exceptions import ConfigError, ConvergenceWarning, ReplicateFailureError

FAILURE_LIMIT = 0.05
TPR_COORDINATES = 5


@dataclass
class ExperimentConfig:
    """One experiment cell.

    ``n`` is the size of each sub-sample, so every replicate draws ``2n`` rows.
    An empty ``degrees`` tuple means linear debiasing (coverage experiments);
    otherwise the efficient estimator of ``beta_{target}`` is computed at each
    listed degree.
    """

    n: int
    p: int
    s: int = 5
    kappa: float = 0.0
    link: LinkModel = field(default_factory=LinkModel.sign_plus_noise)
    design: str = "gaussian"
    radial: str = "uniform"
    mean_shift: float = 0.0
    sigma_known: bool = True
    degrees: tuple = ()
    replicates: int = 200
    master_seed: int = 0
    level: float = 0.95
    crossfit: bool = False
    null_probe_count: int = 10
    tau_pattern: str = "triangular"
    target: int = 0

    def __post_init__(self):
        self.degrees = tuple(int(m) for m in self.degrees)
        self.validate()

    def validate(self):
        if self.n < 10:
            raise ConfigError(f"n must be at least 10, got {self.n}")
        if self.s < 1 or self.p < 2 * self.s:
            raise ConfigError(f"need s >= 1 and p >= 2s, got p={self.p}, s={self.s}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if not -1.0 < self.kappa < 1.0:
            raise ConfigError(f"kappa must lie in (-1, 1), got {self.kappa}")
        if self.design not in ("gaussian", "elliptical"):
            raise ConfigError(f"design must be 'gaussian' or 'elliptical', got {self.design!r}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"level must lie in (0, 1), got {self.level}")
        if self.tau_pattern not in ("triangular", "sine"):
            raise ConfigError(f"unknown tau pattern {self.tau_pattern!r}")
        if self.null_probe_count < 0:
            raise ConfigError("null_probe_count must be non-negative")
        if any(m < 1 for m in self.degrees):
            raise ConfigError("Hermite degrees must be >= 1")
        if not 0 <= self.target < self.p:
            raise ConfigError(f"target {self.target} out of range for p={self.p}")

    @property
    def cov(self):
        return CovarianceModel.ar1(self.p, self.kappa)

    @property
    def design_spec(self):
        radial = RadialLaw(self.radial) if self.design == "elliptical" else None
        return DesignSpec(self.cov, radial, self.mean_shift)

    def index_vector(self):
        return make_tau(self.tau_pattern, self.cov, self.s)

    def slope(self):
        spec = self.design_spec
        return population_mu(self.link, spec.radial, self.p)

    def to_dict(self):
        d = asdict(self)
        d["link"] = self.link.label()
        d["degrees"] = list(self.degrees)
        return d


@dataclass
class ReplicateRecord:
    """Outcome of one replicate; ``error`` is set when it failed."""

    index: int
    support: list = field(default_factory=list)
    nulls: list = field(default_factory=list)
    degrees: dict = field(default_factory=dict)
    error: str = None

    @property
    def failed(self):
        return self.error is not None


@dataclass
class CoverageCell:
    cov_S: float
    cov_Sc: float
    len_S: float
    len_Sc: float
    FPR: float
    TPR: float
    TPR_j: list
    mc_se: dict


@dataclass
class DegreeRow:
    """Accuracy of the estimate at one degree, scaled by sqrt(n)."""

    degree: int
    bias: float
    std_error: float
    rmse: float
    mse: float
    mse_mc_se: float
    mean_se: float
    coverage: float


@dataclass
class MetricsTable:
    replicates: int
    failures: int
    coverage: CoverageCell = None
    degree_rows: list = field(default_factory=list)
    label: str = ""
    failure_reasons: list = field(default_factory=list)

    def to_dict(self):
        return {
            "label": self.label,
            "replicates": self.replicates,
            "failures": self.failures,
            "coverage": None if self.coverage is None else asdict(self.coverage),
            "degree_rows": [asdict(r) for r in self.degree_rows],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def row(self, name):
        for r in self.degree_rows:
            if r.degree == name:
                return r
        raise KeyError(name)


COVERAGE_COLUMNS = [
    "cell", "replicates", "failures", "cov_S", "cov_Sc", "len_S", "len_Sc", "FPR", "TPR",
    "TPR_1", "TPR_2", "TPR_3", "TPR_4", "TPR_5",
    "cov_S_mcse", "cov_Sc_mcse", "len_S_mcse", "len_Sc_mcse", "FPR_mcse", "TPR_mcse",
]
DEGREE_COLUMNS = [
    "cell", "degree", "replicates", "failures", "bias", "std_error", "rmse", "mse", "mse_mcse",
    "mean_se", "coverage",
]


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def coverage_csv(tables):
    """CSV text, one row per coverage cell, metrics to 6 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COVERAGE_COLUMNS)
    for t in tables:
        c = t.coverage
        tpr = list(c.TPR_j) + [None] * (TPR_COORDINATES - len(c.TPR_j))
        w.writerow([_fmt(v) for v in [
            t.label, t.replicates, t.failures, c.cov_S, c.cov_Sc, c.len_S, c.len_Sc, c.FPR, c.TPR, *tpr,
            c.mc_se["cov_S"], c.mc_se["cov_Sc"], c.mc_se["len_S"], c.mc_se["len_Sc"],
            c.mc_se["FPR"], c.mc_se["TPR"],
        ]])
    return buf.getvalue()


def degree_csv(tables):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DEGREE_COLUMNS)
    for t in tables:
        for r in t.degree_rows:
            w.writerow([_fmt(v) for v in [
                t.label, r.degree, t.replicates, t.failures, r.bias, r.std_error, r.rmse, r.mse,
                r.mse_mc_se, r.mean_se, r.coverage,
            ]])
    return buf.getvalue()


def mse_tsv(curve):
    lines = ["degree\tmse\tmc_se"]
    lines += [f"{m}\t{mse:.6g}\t{se:.6g}" for m, mse, se in curve]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# replicate generation


def replicate_streams(master_seed, r):
    """Independent generators (design, noise, folds, nulls) for replicate `r`."""
    ss = np.random.SeedSequence([int(master_seed), int(r)])
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def simulate_dataset(config, r, index=None):
    """The ``2n`` rows of replicate `r`, split and (with a mean shift) centered.

    Responses are generated from the zero-mean design; the estimators see the
    shifted design, centered separately within each sub-sample.
    """
    design_rng, noise_rng, _, _ = replicate_streams(config.master_seed, r)
    index = config.index_vector() if index is None else index
    X = config.design_spec.sample(2 * config.n, design_rng)
    y = config.link.respond(X @ index.tau, noise_rng)
    plan = SplitPlan.halves(2 * config.n)
    if config.mean_shift != 0.0:
        X += config.mean_shift
        for part in (plan.s1, plan.s2):
            X[part] -= X[part].mean(axis=0)
    return Dataset(X, y, plan)


def _fail_on_nonconvergence():
    warnings.simplefilter("error", ConvergenceWarning)


def coverage_replicate(config, r, index=None):
    """Linear debiasing of the support and of random null coordinates."""
    index = config.index_vector() if index is None else index
    try:
        with warnings.catch_warnings():
            _fail_on_nonconvergence()
            data = simulate_dataset(config, r, index)
            _, _, fold_rng, null_rng = replicate_streams(config.master_seed, r)
            support = index.support
            rest = np.setdiff1d(np.arange(config.p), support)
            nulls = np.sort(null_rng.choice(rest, size=min(config.null_probe_count, rest.size), replace=False))
            targets = np.concatenate([support, nulls]).tolist()
            cov = config.cov if config.sigma_known else None
            ests, pilot = debias_split(data, targets, cov=cov, level=config.level, rng=fold_rng)
            if config.crossfit:
                swapped = Dataset(data.X, data.y, data.plan.swapped())
                other, _ = debias_split(swapped, targets, cov=cov, level=config.level, rng=fold_rng)
                ests = [crossfit_average(a, b) for a, b in zip(ests, other)]
        s = support.size
        return ReplicateRecord(r, support=ests[:s], nulls=ests[s:])
    except Exception as exc:  # recorded and counted by the caller
        return ReplicateRecord(r, error=f"{type(exc).__name__}: {exc}")


def hermite_replicate(config, r, index=None, sigma_modes=None):
    """Efficient estimates of ``beta_target`` at every configured degree.

    `sigma_modes` lists ``"known"``/``"estimated"``; the modes share the data
    and the pilot.  The record maps ``(mode, degree)`` to the estimate.
    """
    index = config.index_vector() if index is None else index
    modes = sigma_modes or (("known",) if config.sigma_known else ("estimated",))
    try:
        with warnings.catch_warnings():
            _fail_on_nonconvergence()
            data = simulate_dataset(config, r, index)
            _, _, fold_rng, _ = replicate_streams(config.master_seed, r)
            X21, y21 = data.part("s21")
            pilot = fit_pilot(X21, y21, rng=fold_rng)
            out = {}
            for mode in modes:
                cov = config.cov if mode == "known" else None
                state = prepare_hermite(data, config.target, max(config.degrees), cov=cov, pilot=pilot)
                for est in hermite_estimates(data, state, config.degrees, config.level):
                    out[(mode, est.degree)] = est
        return ReplicateRecord(r, degrees=out)
    except Exception as exc:
        return ReplicateRecord(r, error=f"{type(exc).__name__}: {exc}")


def crossfit_replicate(config, r, index=None):
    """Single-half and cross-fit averaged linear estimates of ``beta_target``."""
    index = config.index_vector() if index is None else index
    try:
        with warnings.catch_warnings():
            _fail_on_nonconvergence()
            data = simulate_dataset(config, r, index)
            _, _, fold_rng, _ = replicate_streams(config.master_seed, r)
            cov = config.cov if config.sigma_known else None
            (a,), _ = debias_split(data, [config.target], cov=cov, level=config.level, rng=fold_rng)
            swapped = Dataset(data.X, data.y, data.plan.swapped())
            (b,), _ = debias_split(swapped, [config.target], cov=cov, level=config.level, rng=fold_rng)
        return ReplicateRecord(r, degrees={"single": a, "swapped": b, "average": crossfit_average(a, b)})
    except Exception as exc:
        return ReplicateRecord(r, error=f"{type(exc).__name__}: {exc}")


def _job(args):
    kind, config, r, extra = args
    if kind == "coverage":
        return coverage_replicate(config, r)
    if kind == "hermite":
        return hermite_replicate(config, r, sigma_modes=extra)
    return crossfit_replicate(config, r)


def default_workers():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def run_replicates(kind, config, *, threads=None, replicates=None, extra=None):
    """Run replicates ``0 .. R-1`` and return their records in index order."""
    R = config.replicates if replicates is None else int(replicates)
    workers = default_workers() if threads is None else max(1, int(threads))
    jobs = [(kind, config, r, extra) for r in range(R)]
    if workers == 1 or R == 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, R)) as pool:
        return list(pool.map(_job, jobs, chunksize=max(1, R // (4 * workers))))


def check_failures(records):
    failed = [(rec.index, rec.error) for rec in records if rec.failed]
    if len(failed) > FAILURE_LIMIT * len(records):
        raise ReplicateFailureError(len(failed), len(records), failed)
    return failed


# ---------------------------------------------------------------------------
# metrics


def _rate(hits):
    hits = np.asarray(hits, dtype=np.float64)
    if hits.size == 0:
        return math.nan, math.nan
    p = float(hits.mean())
    return p, math.sqrt(p * (1.0 - p) / hits.size)


def _mean(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return math.nan, math.nan
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.nan
    return float(values.mean()), se


def compute_metrics(records, truth, mu, *, label=""):
    """Coverage, interval length and rejection rates over the successful replicates.

    The true coefficients are ``mu * truth.tau``.  Rates carry binomial Monte
    Carlo standard errors (each interval counted once); lengths carry the
    standard error of the mean.
    """
    if not records:
        raise ValueError("no replicate records")
    beta = mu * np.asarray(truth.tau)
    ok = [rec for rec in records if not rec.failed]
    sup = [e for rec in ok for e in rec.support]
    nul = [e for rec in ok for e in rec.nulls]
    cov_S, cov_S_se = _rate([e.covers(beta[e.k]) for e in sup])
    cov_Sc, cov_Sc_se = _rate([e.covers(beta[e.k]) for e in nul])
    len_S, len_S_se = _mean([e.length for e in sup])
    len_Sc, len_Sc_se = _mean([e.length for e in nul])
    fpr, fpr_se = _rate([e.excludes_zero() for e in nul])
    tpr, tpr_se = _rate([e.excludes_zero() for e in sup])
    support = np.flatnonzero(beta)
    tpr_j = []
    for k in support[:TPR_COORDINATES]:
        tpr_j.append(_rate([e.excludes_zero() for e in sup if e.k == k])[0])
    cell = CoverageCell(
        cov_S, cov_Sc, len_S, len_Sc, fpr, tpr, tpr_j,
        {"cov_S": cov_S_se, "cov_Sc": cov_Sc_se, "len_S": len_S_se, "len_Sc": len_Sc_se, "FPR": fpr_se, "TPR": tpr_se},
    )
    failed = [(rec.index, rec.error) for rec in records if rec.failed]
    return MetricsTable(len(records), len(failed), coverage=cell, label=label, failure_reasons=failed)


def degree_row(estimates, truth_value, n, degree):
    """sqrt(n)-scaled bias, spread and RMSE of a set of estimates."""
    b = np.array([e.beta_tilde for e in estimates])
    err = b - truth_value
    root_n = math.sqrt(n)
    bias = root_n * float(err.mean())
    std = root_n * float(err.std())
    rmse = root_n * math.sqrt(float(np.mean(err**2)))
    sq = n * err**2
    mse_se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else math.nan
    mean_se = root_n * float(np.mean([e.se for e in estimates]))
    cover = float(np.mean([e.covers(truth_value) for e in estimates]))
    return DegreeRow(degree, bias, std, rmse, rmse**2, mse_se, mean_se, cover)


def degree_metrics(records, truth_value, n, keys, *, label=""):
    ok = [rec for rec in records if not rec.failed]
    rows = []
    for key in keys:
        degree = key[1] if isinstance(key, tuple) else key
        rows.append(degree_row([rec.degrees[key] for rec in ok], truth_value, n, degree))
    failed = [(rec.index, rec.error) for rec in records if rec.failed]
    return MetricsTable(len(records), len(failed), degree_rows=rows, label=label, failure_reasons=failed)


# ---------------------------------------------------------------------------
# experiments


def run_coverage_experiment(config, *, threads=None, records=None, label=""):
    """Coverage, length and error-rate table for linear debiasing.

    Pass `records` to reuse replicates that were already run.
    """
    if records is None:
        records = run_replicates("coverage", config, threads=threads)
    check_failures(records)
    return compute_metrics(records, config.index_vector(), config.slope(), label=label)


def _require_degrees(config):
    if not config.degrees:
        raise ConfigError("the Hermite experiment needs at least one degree")


def run_hermite_experiment(config, *, threads=None, label=""):
    """Per-degree accuracy of the efficient estimator of ``beta_target``."""
    _require_degrees(config)
    mode = "known" if config.sigma_known else "estimated"
    records = run_replicates("hermite", config, threads=threads, extra=(mode,))
    check_failures(records)
    truth = config.slope() * config.index_vector().tau[config.target]
    return degree_metrics(records, truth, config.n, [(mode, m) for m in config.degrees], label=label)


def run_hermite_pair(config, *, threads=None):
    """Known- and estimated-covariance tables from the same replicates and pilots."""
    _require_degrees(config)
    records = run_replicates("hermite", config, threads=threads, extra=("known", "estimated"))
    check_failures(records)
    truth = config.slope() * config.index_vector().tau[config.target]
    return tuple(
        degree_metrics(records, truth, config.n, [(mode, m) for m in config.degrees], label=mode)
        for mode in ("known", "estimated")
    )


def run_mse_curve(config, *, threads=None, table=None):
    """``(degree, mse, mc_se)`` triples, with mse scaled by n."""
    table = run_hermite_experiment(config, threads=threads) if table is None else table
    return [(r.degree, r.mse, r.mse_mc_se) for r in table.degree_rows]


def run_crossfit_experiment(config, *, threads=None):
    """Single-half versus cross-fit averaged estimates of ``beta_target``.

    Returns
    -------
    table : MetricsTable
        Rows ``single`` and ``average`` (the degree field holds the label).
    ratio : float
        Empirical variance of the average over that of the single half.
    """
    records = run_replicates("crossfit", config, threads=threads)
    check_failures(records)
    truth = config.slope() * config.index_vector().tau[config.target]
    table = degree_metrics(records, truth, config.n, ["single", "average"], label="crossfit")
    ok = [rec for rec in records if not rec.failed]
    single = np.var([rec.degrees["single"].beta_tilde for rec in ok], ddof=1)
    average = np.var([rec.degrees["average"].beta_tilde for rec in ok], ddof=1)
    return table, float(average / single)
