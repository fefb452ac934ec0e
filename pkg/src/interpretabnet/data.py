"""CSV ingestion, credit-card cleaning, stratified splitting and scaling."""
import csv
import json
import os
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import ConfigError, DataError, SchemaError

CREDIT_LABELS = ("default.payment.next.month", "default payment next month")
PAY_COLUMNS = ("PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6")
BUNDLED = ("iris", "breast_cancer", "digits")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray = None
    columns: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    label_name: str = ""
    stats: dict = None
    provenance: dict = field(default_factory=dict)
    # original row numbers, so splits can be traced back to the source file
    index: np.ndarray = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {self.features.shape}")
        n, f = self.features.shape
        if not self.columns:
            self.columns = [f"x{i}" for i in range(f)]
        if not self.kinds:
            self.kinds = ["numeric"] * f
        if len(self.columns) != f or len(self.kinds) != f:
            raise SchemaError("schema length does not match the feature count")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise DataError(f"expected {n} labels, got shape {self.labels.shape}")
            if n and self.labels.min() < 0:
                raise DataError("labels must be non-negative class indices")
        if self.index is None:
            self.index = np.arange(n)
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain missing or non-finite values")

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1 if self.labels is not None and self.labels.size else 0

    def subset(self, rows, **provenance):
        rows = np.asarray(rows)
        prov = dict(self.provenance, **provenance)
        return replace(self, features=self.features[rows],
                       labels=None if self.labels is None else self.labels[rows],
                       index=self.index[rows], provenance=prov)

    def column(self, name):
        try:
            return self.features[:, self.columns.index(name)]
        except ValueError:
            raise SchemaError(f"column {name!r} not present") from None


@dataclass
class SplitSpec:
    ratios: tuple = (0.7, 0.1, 0.2)
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        if len(self.ratios) != 3 or min(self.ratios) <= 0 or abs(sum(self.ratios) - 1) > 1e-9:
            raise ConfigError(f"split ratios must be three positive numbers summing to 1, got {self.ratios}")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def load_csv(path, label=None, kinds=None):
    """Read a headered numeric CSV.

    ``label`` names the class column (a string or a tuple of accepted
    names); it is removed from the features. Every other column must parse
    as a number.
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {line_no} has {len(row)} cells, header has {len(header)}")
            values = []
            for col, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    raise DataError(f"{path}: missing value at row {line_no}, column {col + 1} ({header[col]})")
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: cannot parse {cell!r} at row {line_no}, "
                                    f"column {col + 1} ({header[col]})") from None
            rows.append(values)
    table = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))

    label_col = None
    if label is not None:
        names = (label,) if isinstance(label, str) else tuple(label)
        label_col = next((header.index(n) for n in names if n in header), None)
        if label_col is None:
            raise SchemaError(f"{path}: label column {names} not found")
    feature_cols = [i for i in range(len(header)) if i != label_col]
    labels = None
    if label_col is not None:
        raw = table[:, label_col]
        if np.any(raw != np.round(raw)):
            raise DataError(f"{path}: label column holds non-integer values")
        labels = raw.astype(np.int64)
    sidecar = _read_sidecar(path)
    columns = [header[i] for i in feature_cols]
    if kinds is None:
        kinds = sidecar.get("kinds") if sidecar.get("columns") == columns else None
    prov = dict(sidecar.get("provenance", {}))
    prov.setdefault("source", os.path.abspath(path))
    prov.setdefault("cleaners", [])
    stats = sidecar.get("stats")
    if stats is not None:
        stats = {k: np.asarray(v, dtype=np.float64) if isinstance(v, list) else v for k, v in stats.items()}
    index = sidecar.get("index")
    return Dataset(table[:, feature_cols], labels, columns, list(kinds or []),
                   header[label_col] if label_col is not None else "", stats, prov,
                   None if index is None else np.asarray(index, dtype=np.int64))


def _read_sidecar(path):
    side = path + ".json"
    if not os.path.exists(side):
        return {}
    with open(side) as fh:
        return json.load(fh)


def _fmt(v):
    if v.is_integer() and abs(v) < 2 ** 53:
        return str(int(v))
    return repr(float(v))


def save_csv(ds, path):
    """Write features (+ label column) as CSV and schema/provenance as ``<path>.json``."""
    header = list(ds.columns)
    if ds.labels is not None:
        header.append(ds.label_name or "label")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n_samples):
            row = [_fmt(v) for v in ds.features[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            w.writerow(row)
    side = {
        "columns": list(ds.columns),
        "kinds": list(ds.kinds),
        "label_name": ds.label_name,
        "n_samples": ds.n_samples,
        "provenance": ds.provenance,
        "stats": None if ds.stats is None else {
            k: v.tolist() if isinstance(v, np.ndarray) else v for k, v in ds.stats.items()},
        "index": ds.index.tolist(),
    }
    with open(path + ".json", "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


def load_bundled(name):
    """Iris, Breast Cancer Wisconsin or Digits from the packaged CSV fixtures."""
    if name not in BUNDLED:
        raise DataError(f"unknown bundled dataset {name!r}; choose from {BUNDLED}")
    ref = resources.files("interpretabnet") / "datasets" / f"{name}.csv"
    with resources.as_file(ref) as p:
        ds = load_csv(str(p), label="target")
    ds.provenance["source"] = f"bundled:{name}"
    return ds


def load_credit_csv(path):
    return load_csv(path, label=CREDIT_LABELS)


# ---------------------------------------------------------------------------
# cleaning
# ---------------------------------------------------------------------------

def clean_credit(ds):
    """Recode the anomalies of the credit-card default data.

    EDUCATION 0/5/6 -> 4, MARRIAGE 0 -> 3, PAY_0 renamed PAY_1, PAY_* -2 -> -1,
    and the ID column is dropped. Recoded cell counts are recorded in
    ``provenance["recoded"]``. Applying it twice changes nothing.
    """
    cols = list(ds.columns)
    pay_first = "PAY_0" if "PAY_0" in cols else "PAY_1"
    required = ("EDUCATION", "MARRIAGE", pay_first) + PAY_COLUMNS
    missing = [c for c in required if c not in cols]
    if missing:
        raise SchemaError(f"credit data is missing expected columns: {missing}")
    x = ds.features.copy()
    counts = {}

    edu = cols.index("EDUCATION")
    bad = np.isin(x[:, edu], (0, 5, 6))
    counts["EDUCATION"] = int(bad.sum())
    x[bad, edu] = 4

    mar = cols.index("MARRIAGE")
    bad = x[:, mar] == 0
    counts["MARRIAGE"] = int(bad.sum())
    x[bad, mar] = 3

    if pay_first == "PAY_0":
        cols[cols.index("PAY_0")] = "PAY_1"
    n_pay = 0
    for name in ("PAY_1",) + PAY_COLUMNS:
        j = cols.index(name)
        bad = x[:, j] == -2
        n_pay += int(bad.sum())
        x[bad, j] = -1
    counts["PAY"] = n_pay

    keep = [i for i, c in enumerate(cols) if c != "ID"]
    prov = dict(ds.provenance)
    cleaners = list(prov.get("cleaners", []))
    if "credit" not in cleaners:
        cleaners.append("credit")
    prov["cleaners"] = cleaners
    prov["recoded"] = counts
    return replace(ds, features=x[:, keep], columns=[cols[i] for i in keep],
                   kinds=[ds.kinds[i] for i in keep], provenance=prov)


CLEANERS = {"credit": clean_credit, "none": lambda ds: ds}


# ---------------------------------------------------------------------------
# splitting and scaling
# ---------------------------------------------------------------------------

def _largest_remainder(total, weights):
    """Integer allocation of ``total`` proportional to ``weights``."""
    weights = np.asarray(weights, dtype=np.float64)
    quotas = total * weights / weights.sum()
    base = np.floor(quotas).astype(int)
    short = total - base.sum()
    if short > 0:
        frac = quotas - base
        order = sorted(range(len(frac)), key=lambda i: (-frac[i], i))
        for i in order[:short]:
            base[i] += 1
    return base


def stratified_split(ds, spec=None):
    """Partition into (train, val, test), preserving class proportions."""
    spec = spec or SplitSpec()
    if ds.labels is None:
        raise DataError("stratified split needs a labelled dataset")
    n = ds.n_samples
    sizes = _largest_remainder(n, spec.ratios)
    rng = np.random.default_rng(spec.seed)
    parts = [[], [], []]
    if spec.stratified:
        classes, counts = np.unique(ds.labels, return_counts=True)
        if counts.min() < 3:
            raise DataError("every class needs at least 3 samples for a three-way split")
        alloc = _controlled_rounding(counts, sizes)
        for k, c in enumerate(classes):
            members = rng.permutation(np.flatnonzero(ds.labels == c))
            test_end = alloc[k, 2]
            val_end = test_end + alloc[k, 1]
            parts[2].append(members[:test_end])
            parts[1].append(members[test_end:val_end])
            parts[0].append(members[val_end:])
    else:
        order = rng.permutation(n)
        parts = [[order[sizes[2] + sizes[1]:]], [order[sizes[2]:sizes[2] + sizes[1]]], [order[:sizes[2]]]]
    names = ("train", "val", "test")
    return tuple(ds.subset(np.sort(np.concatenate(p)), split=name, split_seed=spec.seed)
                 for p, name in zip(parts, names))


def _controlled_rounding(counts, sizes):
    """Class x split table whose cells are the floor or ceiling of
    ``counts[k] * sizes[s] / n`` and whose row and column sums are exact.

    Such a rounding always exists; start from the floors, hand out the
    remaining units by largest fraction, then repair with augmenting paths.
    """
    n = int(sum(sizes))
    num = np.outer(counts, sizes).astype(np.int64)
    alloc, frac = num // n, num % n
    row_need = np.asarray(counts) - alloc.sum(axis=1)
    col_need = np.asarray(sizes) - alloc.sum(axis=0)
    up = np.zeros_like(alloc, dtype=bool)
    cells = sorted(zip(*np.nonzero(frac)), key=lambda c: (-frac[c], c))
    for k, s in cells:
        if row_need[k] and col_need[s]:
            up[k, s] = True
            row_need[k] -= 1
            col_need[s] -= 1
    while row_need.any():
        path = _augmenting_path(int(np.flatnonzero(row_need)[0]), frac > 0, up, col_need)
        if path is None:
            raise DataError("could not allocate classes to splits")
        for k, s, flip in path:
            up[k, s] = flip
        row_need[path[0][0]] -= 1
        col_need[path[-1][1]] -= 1
    return alloc + up


def _augmenting_path(start, allowed, up, col_need):
    """BFS over rows -> unused cells -> columns -> used cells -> rows."""
    n_rows, n_cols = up.shape
    prev_col, prev_row = {}, {start: None}
    queue = [start]
    while queue:
        k = queue.pop(0)
        for s in range(n_cols):
            if not allowed[k, s] or up[k, s] or s in prev_col:
                continue
            prev_col[s] = k
            if col_need[s]:
                path, col = [], s
                while col is not None:
                    row = prev_col[col]
                    path.append((row, col, True))
                    col = prev_row[row]
                    if col is not None:
                        path.append((row, col, False))
                return path[::-1]
            for k2 in range(n_rows):
                if up[k2, s] and k2 not in prev_row:
                    prev_row[k2] = s
                    queue.append(k2)
    return None


def compute_stats(ds, method="zscore"):
    x = ds.features
    if method == "zscore":
        return {"method": method, "mean": x.mean(axis=0), "std": x.std(axis=0)}
    if method == "minmax":
        return {"method": method, "min": x.min(axis=0), "max": x.max(axis=0)}
    raise ConfigError(f"unknown normalisation {method!r}")


def standardize(ds, stats=None, method="zscore"):
    """Scale columns with ``stats`` (computed from ``ds`` itself if omitted).

    Pass the training split's stats when scaling validation and test data.
    Constant columns are left unchanged.
    """
    stats = stats or compute_stats(ds, method)
    x = ds.features.copy()
    if stats["method"] == "zscore":
        loc, scale = stats["mean"], stats["std"]
    else:
        loc, scale = stats["min"], stats["max"] - stats["min"]
    flat = scale == 0
    if flat.any():
        names = [ds.columns[i] for i in np.flatnonzero(flat)]
        warnings.warn(f"zero-variance columns left unscaled: {names}", RuntimeWarning, stacklevel=2)
    ok = ~flat
    x[:, ok] = (x[:, ok] - loc[ok]) / scale[ok]
    return replace(ds, features=x, stats=stats)


def reorder_by_importance(ds, importance):
    """Move columns into descending order of importance (stable on ties)."""
    scores = np.asarray(getattr(importance, "scores", importance), dtype=np.float64).ravel()
    if scores.size != ds.n_features:
        raise DataError(f"importance has {scores.size} entries, dataset has {ds.n_features} features")
    order = np.argsort(-scores, kind="stable")
    stats = ds.stats
    if stats is not None:
        stats = {k: v[order] if isinstance(v, np.ndarray) else v for k, v in stats.items()}
    prov = dict(ds.provenance, column_order=[ds.columns[i] for i in order])
    return replace(ds, features=ds.features[:, order], columns=[ds.columns[i] for i in order],
                   kinds=[ds.kinds[i] for i in order], stats=stats, provenance=prov)
