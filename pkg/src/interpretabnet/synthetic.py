"""Seeded synthetic datasets for tests, demos and dry runs.

``credit_like`` mimics the column layout and value codes of the UCI
"Default of Credit Card Clients" table (including its anomalous codes) so
the preprocessing pipeline can be exercised without the real file. It is
not a substitute for that data when judging model quality.
"""
import csv

import numpy as np

CREDIT_COLUMNS = (
    ["ID", "LIMIT_BAL", "SEX", "EDUCATION", "MARRIAGE", "AGE", "PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6"]
    + [f"BILL_AMT{i}" for i in range(1, 7)]
    + [f"PAY_AMT{i}" for i in range(1, 7)]
    + ["default.payment.next.month"]
)


def credit_like(n=30000, n_pos=6636, seed=0):
    """Return (header, int matrix) with exactly ``n_pos`` positive labels."""
    rng = np.random.default_rng(seed)
    limit = rng.choice(np.arange(10, 101) * 10000, size=n)
    sex = rng.choice([1, 2], size=n, p=[0.4, 0.6])
    edu = rng.choice([0, 1, 2, 3, 4, 5, 6], size=n, p=[0.0005, 0.35, 0.47, 0.164, 0.004, 0.0093, 0.0022])
    mar = rng.choice([0, 1, 2, 3], size=n, p=[0.002, 0.455, 0.532, 0.011])
    age = rng.integers(21, 76, size=n)
    risk = rng.normal(size=n)
    pays = []
    for k in range(6):
        drift = risk + 0.5 * rng.normal(size=n)
        pay = np.clip(np.round(drift * 1.2 - 0.3), -2, 8).astype(int)
        pays.append(pay)
    bills = [np.maximum(0, rng.normal(0.4, 0.3, size=n) * limit).round().astype(int) for _ in range(6)]
    paid = [np.maximum(0, (rng.exponential(0.05, size=n) - 0.01 * risk) * limit).round().astype(int)
            for _ in range(6)]
    score = 1.4 * risk + 0.3 * (pays[0] > 0) - 0.2 * np.log(limit / 1e5) + 0.7 * rng.normal(size=n)
    labels = np.zeros(n, dtype=int)
    labels[np.argsort(-score, kind="stable")[:n_pos]] = 1
    table = np.column_stack([np.arange(1, n + 1), limit, sex, edu, mar, age] + pays + bills + paid + [labels])
    return list(CREDIT_COLUMNS), table.astype(np.int64)


def write_credit_like(path, n=30000, n_pos=6636, seed=0):
    header, table = credit_like(n, n_pos, seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(table.tolist())
    return path


def separable(n=200, seed=0, margin=0.3):
    """Two Gaussian-ish features, label = sign of their sum with a gap."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(4 * n, 2))
    s = x.sum(axis=1)
    keep = np.abs(s) > margin
    x = x[keep][:n]
    y = (x.sum(axis=1) > 0).astype(np.int64)
    return x, y


def determinative(n=1000, n_noise=3, seed=0):
    """Feature 0 fixes the label; the remaining columns are pure noise."""
    rng = np.random.default_rng(seed)
    signal = rng.normal(size=n)
    noise = rng.normal(size=(n, n_noise))
    y = (signal > 0).astype(np.int64)
    return np.column_stack([signal, noise]), y
