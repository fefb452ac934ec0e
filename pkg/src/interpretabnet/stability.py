"""InterpreStability: how consistently a model ranks features across data subsets.

Train K models on random subsets, take each model's mask-based importance
vector, correlate every pair of vectors, bin the coefficients and reduce
them to one score in [0, 1].

The score is the bin-proportion-weighted sum: with P = K(K-1)/2 distinct
model pairs, ``score = sum_b proportion_b * weight_b``, which is the mean
pair weight. Coefficients <= 0 (or > 1, or undefined) are "odd" and weigh
0. When every off-diagonal coefficient exceeds 0.9 the score is instead the
mean of all K*K matrix entries, diagonal included.
"""
import csv
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import images
from .data import SplitSpec, stratified_split
from .errors import ConfigError, DataError, MetricUndefinedError
from .metrics import pearson
from .model import ArchConfig, ImportanceVector

log = logging.getLogger(__name__)

BIN_LABELS = ("[0, 0.3)", "[0.3, 0.5)", "[0.5, 0.7)", "[0.7, 0.9)", "[0.9, 1]")
LEVELS = ((0.9, "very high"), (0.7, "high"), (0.5, "moderate"), (0.3, "low"), (0.0, "little if any"))
METHOD_BINNED = "bin-proportion weighted sum (mean pair weight over the upper triangle)"
METHOD_MEAN = "mean of all matrix entries (every off-diagonal coefficient > 0.9)"


@dataclass
class StabilityConfig:
    k_models: int = 9
    subset_sizes: tuple = (2333, 5000, 10000)
    sampling_seed: int = 0
    training_seed: int = 0
    bin_edges: tuple = (0.3, 0.5, 0.7, 0.9)
    bin_weights: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)
    odd_weight: float = 0.0
    # "subsets": one random subset per model; "resplit": each model re-splits the full data
    mode: str = "subsets"
    pretrain: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        self.subset_sizes = tuple(int(s) for s in self.subset_sizes)
        self.bin_edges = tuple(float(e) for e in self.bin_edges)
        self.bin_weights = tuple(float(w) for w in self.bin_weights)
        if self.k_models < 2:
            raise ConfigError("k_models must be >= 2")
        w = self.bin_weights
        if len(w) != len(self.bin_edges) + 1:
            raise ConfigError("need one more bin weight than bin edges")
        if any(b < a for a, b in zip(w, w[1:])) or min(w) < 0 or max(w) > 1:
            raise ConfigError("bin weights must be ascending within [0, 1]")
        if self.mode not in ("subsets", "resplit"):
            raise ConfigError(f"unknown stability mode {self.mode!r}")


@dataclass
class PairRecord:
    i: int
    j: int
    rho: float
    bin: int  # -1 for odd behaviour
    weight: float


@dataclass
class StabilityReport:
    corr: np.ndarray
    bin_proportions: np.ndarray
    odd_proportion: float
    score: float
    all_very_high: bool
    pairs: list
    weights: tuple
    bin_edges: tuple
    method: str
    level: str
    label: str = ""
    error: str = ""
    model_ids: list = field(default_factory=list)

    def to_dict(self):
        return {
            "label": self.label,
            "score": self.score,
            "level": self.level,
            "method": self.method,
            "all_very_high": self.all_very_high,
            "bin_labels": list(BIN_LABELS),
            "bin_edges": list(self.bin_edges),
            "bin_weights": list(self.weights),
            "bin_proportions": [float(p) for p in self.bin_proportions],
            "odd_proportion": self.odd_proportion,
            "corr": [[None if np.isnan(v) else float(v) for v in row] for row in self.corr],
            "pairs": [asdict(p) | {"rho": None if np.isnan(p.rho) else p.rho} for p in self.pairs],
            "model_ids": list(self.model_ids),
            "error": self.error,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def stability_level(score):
    for floor, name in LEVELS:
        if score >= floor:
            return name
    return LEVELS[-1][1]


def bin_index(rho, edges=StabilityConfig.bin_edges):
    """Bin of a coefficient (lower edges inclusive), or -1 for odd behaviour."""
    if rho is None or np.isnan(rho):
        return -1
    if rho <= 0 or rho > 1:
        return -1
    return int(np.searchsorted(edges, rho, side="right"))


def bin_weight(rho, weights=StabilityConfig.bin_weights, edges=StabilityConfig.bin_edges, odd_weight=0.0):
    if rho is None or np.isnan(rho):
        warnings.warn("undefined correlation treated as odd behaviour", RuntimeWarning, stacklevel=2)
        return odd_weight
    b = bin_index(rho, edges)
    return odd_weight if b < 0 else weights[b]


def score_from_proportions(proportions, weights=StabilityConfig.bin_weights):
    """Weighted sum of bin proportions (used to check published summaries)."""
    p = np.asarray(proportions, dtype=np.float64)
    return float(np.dot(p, np.asarray(weights[:len(p)])))


def correlation_matrix(importances):
    """Pairwise Pearson matrix; pairs involving a constant vector are NaN."""
    vecs = [np.asarray(getattr(v, "scores", v), dtype=np.float64).ravel() for v in importances]
    if len(vecs) < 2:
        raise DataError("need at least two importance vectors")
    n = vecs[0].size
    if n < 2 or any(v.size != n for v in vecs):
        raise DataError("importance vectors must share a feature count >= 2")
    k = len(vecs)
    corr = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            try:
                r = pearson(vecs[i], vecs[j])
            except MetricUndefinedError:
                r = np.nan
            corr[i, j] = corr[j, i] = r
    return corr


def interpre_stability(corr, config=None, label=""):
    config = config or StabilityConfig()
    c = np.asarray(corr, dtype=np.float64)
    k = c.shape[0]
    if c.ndim != 2 or c.shape[1] != k or k < 2:
        raise DataError(f"correlation matrix must be square with K >= 2, got {c.shape}")
    if not np.allclose(c, c.T, atol=1e-12, rtol=0, equal_nan=True):
        raise DataError("correlation matrix is not symmetric")
    if not np.allclose(np.diag(c), 1.0, atol=1e-12, rtol=0):
        raise DataError("correlation matrix needs a unit diagonal")

    n_bins = len(config.bin_weights)
    counts = np.zeros(n_bins)
    odd = 0
    pairs = []
    iu, ju = np.triu_indices(k, 1)
    for i, j in zip(iu, ju):
        rho = c[i, j]
        b = bin_index(rho, config.bin_edges)
        w = config.odd_weight if b < 0 else config.bin_weights[b]
        if b < 0:
            odd += 1
        else:
            counts[b] += 1
        pairs.append(PairRecord(int(i), int(j), float(rho), b, float(w)))
    n_pairs = len(pairs)
    proportions = counts / n_pairs
    off = c[iu, ju]
    all_very_high = bool(np.all(off > 0.9))
    if all_very_high:
        score = float(c.mean())
        method = METHOD_MEAN
    else:
        score = float(sum(p.weight for p in pairs) / n_pairs)
        method = METHOD_BINNED
    return StabilityReport(c, proportions, odd / n_pairs, score, all_very_high, pairs,
                           config.bin_weights, config.bin_edges, method, stability_level(score), label)


def stability_from_importances(importances, config=None, label=""):
    report = interpre_stability(correlation_matrix(importances), config, label)
    report.model_ids = [getattr(v, "model_id", "") for v in importances]
    return report


def load_importance_table(path):
    """Importance vectors from a CSV with one model per row (header = feature names).

    A leading ``model_id`` column is optional.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    has_id = header[0] == "model_id"
    names = header[1:] if has_id else header
    out = []
    for n, r in enumerate(body):
        vals = np.array([float(v) for v in (r[1:] if has_id else r)])
        mid = r[0] if has_id else f"row{n}"
        total = vals.sum()
        out.append(ImportanceVector(vals / total if total > 0 else vals, mid, "", float(total), names))
    return out


# ---------------------------------------------------------------------------
# experiment harness
# ---------------------------------------------------------------------------

def sample_subsets(train, size, k, seed):
    """``k`` independent uniform subsets of ``size`` rows each, reproducible from ``seed``."""
    if size > train.n_samples:
        raise ConfigError(f"subset size {size} exceeds the {train.n_samples} available rows")
    rng = np.random.default_rng(seed)
    return [train.subset(rng.choice(train.n_samples, size=size, replace=False), subset_size=size, subset=m)
            for m in range(k)]


def derive_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _train_one(job):
    from .training import TrainConfig, finetune, pretrain

    subset, val, test, arch, tcfg, seed, do_pretrain, model_id = job
    tcfg = TrainConfig(**(asdict(tcfg) | {"seed": seed}))
    init = None
    if do_pretrain:
        pcfg = TrainConfig.pretraining(**{k: v for k, v in asdict(tcfg).items()
                                          if k not in ("batch", "virtual_batch", "scheduler")})
        init, _ = pretrain(subset.features, val.features, pcfg, arch)
    model, trainlog = finetune(subset.features, subset.labels, val.features, val.labels, tcfg, arch, init)
    imp = model.importance(test.features, model_id=model_id, feature_names=subset.columns)
    return imp, trainlog.stop_reason


def _run_jobs(jobs, n_jobs):
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_train_one, jobs))
    return [_train_one(j) for j in jobs]


def run_stability_experiment(train, val, test, arch=None, train_config=None, config=None,
                             outdir=None, label="InterpreTabNet", full=None):
    """Train ``k_models`` models per subset size and score their importance stability.

    Returns ``{subset_size: StabilityReport}``. In ``resplit`` mode the
    ``full`` labelled dataset is re-split per model instead (subset size is
    then reported as the training-split size). With ``outdir`` set, JSON
    reports, PPM heatmaps with CSV sidecars, and a ``summary.csv`` are written.
    """
    from .training import TrainConfig

    arch = arch or ArchConfig()
    train_config = train_config or TrainConfig.finetuning()
    config = config or StabilityConfig()
    reports = {}
    plans = []
    if config.mode == "resplit":
        if full is None:
            raise ConfigError("resplit mode needs the full labelled dataset")
        jobs = []
        for m in range(config.k_models):
            tr, va, te = stratified_split(full, SplitSpec(seed=derive_seed(config.sampling_seed, m)))
            seed = derive_seed(config.training_seed, 0, m)
            jobs.append((tr, va, te, arch, train_config, seed, config.pretrain, f"{label}-resplit-m{m}"))
        plans.append((full.n_samples, jobs))
    else:
        for s_idx, size in enumerate(config.subset_sizes):
            try:
                subsets = sample_subsets(train, size, config.k_models,
                                         derive_seed(config.sampling_seed, size))
            except ConfigError as exc:
                plans.append((size, exc))
                continue
            jobs = [(sub, val, test, arch, train_config, derive_seed(config.training_seed, size, m),
                     config.pretrain, f"{label}-n{size}-m{m}") for m, sub in enumerate(subsets)]
            plans.append((size, jobs))

    for size, jobs in plans:
        if isinstance(jobs, Exception):
            reports[size] = _failed_report(config, f"{label} @ {size}", str(jobs))
            continue
        try:
            results = _run_jobs(jobs, config.n_jobs)
        except Exception as exc:  # one failed training voids this subset size only
            log.exception("stability run for subset size %s failed", size)
            reports[size] = _failed_report(config, f"{label} @ {size}", f"{type(exc).__name__}: {exc}")
            continue
        imps = [r[0] for r in results]
        for imp in imps:
            imp.subset_id = str(size)
        reports[size] = stability_from_importances(imps, config, label=f"{label} @ {size}")

    if outdir is not None:
        write_reports(reports, outdir, label)
    return reports


def _failed_report(config, label, error):
    n = len(config.bin_weights)
    return StabilityReport(np.full((0, 0), np.nan), np.zeros(n), 0.0, float("nan"), False, [],
                           config.bin_weights, config.bin_edges, "", "", label, error)


def export_heatmap(corr, path, cell=24):
    """Write ``path`` (binary PPM) and ``path`` + ``.csv`` with the exact matrix."""
    corr = np.asarray(corr, dtype=np.float64)
    images.write_ppm(path, images.heatmap(corr, cell))
    with open(path + ".csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in corr:
            w.writerow(["nan" if np.isnan(v) else repr(float(v)) for v in row])
    return path


def read_matrix_csv(path):
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])


SUMMARY_HEADER = ["model", "data_volume"] + list(BIN_LABELS) + ["odd", "InterpreStability", "error"]


def summary_rows(reports, label):
    rows = []
    for size, rep in reports.items():
        rows.append([label, size] + [f"{p:.4f}" for p in rep.bin_proportions]
                    + [f"{rep.odd_proportion:.4f}", f"{rep.score:.4f}", rep.error])
    return rows


def write_reports(reports, outdir, label):
    os.makedirs(outdir, exist_ok=True)
    for size, rep in reports.items():
        rep.save(os.path.join(outdir, f"stability_{size}.json"))
        if not rep.error:
            export_heatmap(rep.corr, os.path.join(outdir, f"heatmap_{size}.ppm"))
    with open(os.path.join(outdir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        w.writerows(summary_rows(reports, label))
