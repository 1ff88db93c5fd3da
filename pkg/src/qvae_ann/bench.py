"""Ground truth, recall/speedup measurement and the desk-scale experiments.

Timing is latency mode: queries run one after another, each timed with a
monotonic nanosecond clock, repeated and reduced by the median. Index and
model construction are never inside a timed region.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation
from .index import (
    InvertedIndex,
    QueryConfig,
    _gather,
    build_index,
    hamming_sorted_buckets,
    linear_search,
    query,
)
from .model import QvaeConfig, hash_codes, train

log = logging.getLogger(__name__)

CSV_COLUMNS = ("budget_fraction", "query_id", "recall", "t_linear_ns", "t_qvae_ns")
# c_max / n grid for recall-vs-budget sweeps: 0.01% doubling to 2.56%
DOUBLING_BUDGETS = tuple(1e-4 * 2**i for i in range(9))

__all__ = [
    "ExperimentResult", "TransverseRow", "linear_search", "recall", "measure_speedup",
    "recall_curves", "speedup_at_recall", "run_recall_sweep", "run_transverse_sweep",
    "write_csv", "budget_grid",
]


def recall(approx_ids, exact_ids, k) -> float:
    """``|approx & exact| / k``."""
    if len(approx_ids) > k or len(exact_ids) > k:
        raise ContractViolation("id lists must not be longer than k")
    return len(np.intersect1d(approx_ids, exact_ids)) / k


def _time_ns(fn, repeats):
    samples = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        out = fn()
        samples.append(time.perf_counter_ns() - t0)
    return out, int(np.median(samples))


@dataclass
class ExperimentResult:
    budgets: np.ndarray  # c_max / n per column
    query_ids: np.ndarray
    recalls: np.ndarray  # (n_queries, n_budgets)
    t_linear_ns: np.ndarray  # (n_queries,)
    t_qvae_ns: np.ndarray  # (n_queries, n_budgets)
    random_recalls: np.ndarray | None = None  # random-iteration control, same shape
    k: int = 100
    n: int = 0
    m: int = 0
    notes: list = field(default_factory=list)

    def speedup(self) -> np.ndarray:
        """``mean t_linear / mean t_qvae`` for each budget."""
        return self.t_linear_ns.mean() / self.t_qvae_ns.mean(axis=0)

    def summary(self) -> list[dict]:
        rows = []
        sp = self.speedup()
        for j, f in enumerate(self.budgets):
            r = self.recalls[:, j]
            q1, med, q3 = np.percentile(r, [25, 50, 75])
            row = dict(budget_fraction=float(f), c_max=_budget_to_cmax(f, self.n, self.k),
                       mean=float(r.mean()), median=float(med), q1=float(q1), q3=float(q3),
                       min=float(r.min()), max=float(r.max()), speedup=float(sp[j]))
            if self.random_recalls is not None:
                row["random_mean"] = float(self.random_recalls[:, j].mean())
            rows.append(row)
        return rows


def _budget_to_cmax(f, n, k):
    return int(min(n, max(k, round(f * n))))


def budget_grid(n, k, budgets=DOUBLING_BUDGETS, extra=(0.01,)):
    """Budget fractions usable at this scale: those with ``f * n >= k``, plus ``extra``."""
    fs = sorted({float(f) for f in (*budgets, *extra) if f * n >= k and f <= 1.0})
    return np.array(fs)


def _query_vectors(data, queries):
    queries = np.asarray(queries)
    if queries.ndim == 1 and np.issubdtype(queries.dtype, np.integer):
        return queries, data[queries]
    q = np.atleast_2d(queries)
    return np.full(len(q), -1, dtype=np.int64), q


def measure_speedup(data, index: InvertedIndex, model, queries, cfg: QueryConfig,
                    repeats=3) -> ExperimentResult:
    """Recall and latency of the index at one budget against linear search.

    ``queries`` are row ids of ``data`` or raw query vectors.
    """
    qids, qvecs = _query_vectors(data, queries)
    n = len(data)
    rec = np.empty((len(qvecs), 1))
    t_lin = np.empty(len(qvecs), dtype=np.int64)
    t_q = np.empty((len(qvecs), 1), dtype=np.int64)
    for i, x in enumerate(qvecs):
        exact, t_lin[i] = _time_ns(lambda: linear_search(data, x, cfg.k), repeats)
        approx, t_q[i, 0] = _time_ns(lambda: query(index, data, model, x, cfg), repeats)
        rec[i, 0] = recall(approx.ids, exact.ids, cfg.k)
    return ExperimentResult(np.array([cfg.c_max / n]), qids, rec, t_lin, t_q,
                            k=cfg.k, n=n, m=index.m)


def recall_curves(data, index: InvertedIndex, model, queries, k) -> np.ndarray:
    """Recall for every budget ``c_max = 1..n`` at once, one row per query.

    Uses the fact that the refinement visits a fixed prefix of the
    Hamming-ordered candidate list: an exact neighbour is returned as soon
    as it has been visited.
    """
    qids, qvecs = _query_vectors(data, queries)
    codes = hash_codes(model, qvecs)
    n = len(data)
    out = np.empty((len(qvecs), n))
    for i, x in enumerate(qvecs):
        exact = linear_search(data, x, k).ids
        order, _ = hamming_sorted_buckets(index, codes[i])
        visit = _gather(order, index.offsets, index.ids, n)
        pos = np.empty(n, dtype=np.int64)
        pos[visit] = np.arange(n)
        hits = np.zeros(n)
        np.add.at(hits, pos[exact], 1.0)
        out[i] = np.cumsum(hits) / k
    return out


def speedup_at_recall(data, index, model, queries, target, k=100, repeats=3):
    """Smallest budget whose mean recall reaches ``target``, and its speedup.

    Returns ``(ExperimentResult, c_max)``.
    """
    curves = recall_curves(data, index, model, queries, k)
    mean_curve = curves.mean(axis=0)
    reach = np.flatnonzero(mean_curve >= target - 1e-12)
    c_max = int(reach[0]) + 1 if len(reach) else len(data)
    c_max = max(c_max, k)
    res = measure_speedup(data, index, model, queries, QueryConfig(k, c_max), repeats)
    return res, c_max


def run_recall_sweep(data, model, budgets, k=100, n_queries=100, seed=0, index=None,
                     repeats=3) -> ExperimentResult:
    """Recall and latency at each budget fraction for randomly drawn query rows.

    Query rows stay in the index (each query finds itself at distance 0).
    A random-iteration control visiting ``c_max`` uniformly chosen rows is
    recorded alongside.
    """
    budgets = np.asarray(budgets, dtype=np.float64)
    if np.any(budgets <= 0) or np.any(budgets > 1):
        raise ContractViolation("budget fractions must lie in (0, 1]")
    n = len(data)
    rng = np.random.default_rng(seed)
    if index is None:
        index = build_index(np.arange(n), hash_codes(model, data), model.config.d_latent)
    qids = rng.choice(n, size=min(n_queries, n), replace=False)
    rec = np.empty((len(qids), len(budgets)))
    rnd = np.empty_like(rec)
    t_lin = np.empty(len(qids), dtype=np.int64)
    t_q = np.empty((len(qids), len(budgets)), dtype=np.int64)
    for i, q in enumerate(qids):
        x = data[q]
        exact, t_lin[i] = _time_ns(lambda: linear_search(data, x, k), repeats)
        perm = rng.permutation(n)
        for j, f in enumerate(budgets):
            cfg = QueryConfig(k, _budget_to_cmax(f, n, k))
            approx, t_q[i, j] = _time_ns(lambda: query(index, data, model, x, cfg), repeats)
            rec[i, j] = recall(approx.ids, exact.ids, k)
            rnd[i, j] = len(np.intersect1d(perm[:cfg.c_max], exact.ids)) / k
    return ExperimentResult(budgets, qids, rec, t_lin, t_q, random_recalls=rnd,
                            k=k, n=n, m=index.m,
                            notes=["query rows are part of the indexed data"])


@dataclass
class TransverseRow:
    gamma: float
    seed: int
    m: int
    c_max: int
    recall: float
    speedup: float


def run_transverse_sweep(data, gammas, recall_target=0.8, seeds=(0,), base_config=None,
                         k=100, n_queries=50, repeats=3, train_fn=train):
    """Train one simulated-QBM model per (gamma, seed) and report m and speedup."""
    base = base_config or QvaeConfig(d_data=data.shape[1], prior="simulated-qbm")
    n = len(data)
    rows = []
    for gamma in gammas:
        for seed in seeds:
            cfg = replace(base, prior="simulated-qbm", gamma=float(gamma), seed=int(seed))
            model = train_fn(data, cfg, np.random.default_rng(seed))
            index = build_index(np.arange(n), hash_codes(model, data), cfg.d_latent)
            qids = np.random.default_rng(10_000 + seed).choice(n, min(n_queries, n), replace=False)
            res, c_max = speedup_at_recall(data, index, model, qids, recall_target, k, repeats)
            rows.append(TransverseRow(float(gamma), int(seed), index.m, c_max,
                                      float(res.recalls.mean()), float(res.speedup()[0])))
            log.info("gamma %.2f seed %d: m=%d c_max=%d recall=%.3f speedup=%.1f",
                     gamma, seed, index.m, c_max, rows[-1].recall, rows[-1].speedup)
    return rows


def write_csv(path, result: ExperimentResult) -> None:
    """One line per (budget, query) with the fixed column set."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for j, f in enumerate(result.budgets):
            for i, q in enumerate(result.query_ids):
                w.writerow([f"{f:.6g}", int(q), f"{result.recalls[i, j]:.6g}",
                            int(result.t_linear_ns[i]), int(result.t_qvae_ns[i, j])])


def write_transverse_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "seed", "m", "c_max", "recall", "speedup"])
        for r in rows:
            w.writerow([r.gamma, r.seed, r.m, r.c_max, f"{r.recall:.6g}", f"{r.speedup:.6g}"])
