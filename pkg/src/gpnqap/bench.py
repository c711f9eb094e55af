"""Benchmark harness: solve instances with several methods and tabulate cost, gap and time."""

from __future__ import annotations

import csv
import math
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import greedy_incremental, greedy_two_stage, random_perm, two_opt_swap
from .dfp import zero_ratio
from .errors import DimensionMismatch
from .instances import QapInstance, TspInstance, read_instance, tsp_to_qap
from .solver import (MatrixTspGpn, TwoStageGpn, check_objective_range, decode_qap_batch,
                     decode_tsp_batch, evaluate_qap_cost, evaluate_tour, gap_percent)

CSV_HEADER = ("instance", "n", "method", "cost", "best_known", "gap_percent", "time_s", "zero_ratio")
METHODS = ("gpn", "gpn+lstm", "greedy", "greedy_inc", "random", "two_opt")
DEFAULT_METHODS = ("gpn", "gpn+lstm", "greedy", "random", "two_opt")


@dataclass
class ModelSet:
    """Models used by the learned methods.

    ``qap`` may be a :class:`TwoStageGpn` or a model bank exposing ``route``;
    TSP instances fall back to ``qap`` (via the QAP reduction) when no
    matrix-TSP model is set.
    """

    tsp: Optional[MatrixTspGpn] = None
    tsp_lstm: Optional[MatrixTspGpn] = None
    qap: object = None

    def for_method(self, method, inst):
        if isinstance(inst, TspInstance):
            if method == "gpn+lstm":
                return self.tsp_lstm
            return self.tsp if self.tsp is not None else self._qap(inst)
        return self._qap(inst) if method == "gpn" else None

    def _qap(self, inst):
        if self.qap is None or isinstance(self.qap, TwoStageGpn):
            return self.qap
        q = tsp_to_qap(inst) if isinstance(inst, TspInstance) else inst
        return self.qap.route(q)

    @classmethod
    def fresh(cls, seed=0, hidden_dim=128, layers=3) -> "ModelSet":
        """Untrained models with matched dimensions and seeds."""
        return cls(MatrixTspGpn(hidden_dim, layers, False, rng=np.random.default_rng(seed)),
                   MatrixTspGpn(hidden_dim, layers, True, rng=np.random.default_rng(seed)),
                   TwoStageGpn(hidden_dim, layers, rng=np.random.default_rng(seed)))


@dataclass
class BenchRow:
    """One (instance, method) result.  ``zero_ratio`` is a percentage, QAP rows only."""

    instance: str
    n: int
    method: str
    cost: float
    best_known: Optional[float] = None
    gap_percent: Optional[float] = None
    time_s: float = 0.0
    zero_ratio: Optional[float] = None

    def __post_init__(self):
        if (self.best_known is None) != (self.gap_percent is None):
            raise ValueError("gap_percent must be present exactly when best_known is")


def make_row(name, n, method, cost, best_known, elapsed, zr=None) -> BenchRow:
    gap = gap_percent(cost, best_known) if best_known is not None else None
    return BenchRow(name, n, method, cost, best_known, gap, elapsed, zr)


# ---------------------------------------------------------------------------
# CSV

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_cell(getattr(r, k)) for k in CSV_HEADER])


def read_csv(path) -> list:
    def opt(s):
        return float(s) if s != "" else None

    with open(path, newline="") as fh:
        return [BenchRow(r["instance"], int(r["n"]), r["method"], float(r["cost"]),
                         opt(r["best_known"]), opt(r["gap_percent"]), float(r["time_s"]),
                         opt(r["zero_ratio"]))
                for r in csv.DictReader(fh)]


def load_best_known(path=None) -> dict:
    """Two-column ``name,cost`` table; the bundled table when ``path`` is None."""
    if path is None:
        text = resources.files("gpnqap").joinpath("data/best_known.csv").read_text()
    else:
        text = Path(path).read_text()
    out = {}
    for row in csv.reader(text.splitlines()):
        if not row or row[0].strip().lower() in ("name", "instance"):
            continue
        if len(row) != 2:
            raise DimensionMismatch(f"best-known table row needs 2 columns: {row}")
        out[row[0].strip()] = float(row[1])
    return out


def format_table(rows) -> str:
    """Fixed-width text table with paper-style precision."""
    head = ("instance", "n", "method", "cost", "best", "gap[%]", "time[s]", "zero[%]")
    body = []
    for r in rows:
        body.append((r.instance, str(r.n), r.method, f"{r.cost:.10g}",
                     "" if r.best_known is None else f"{r.best_known:.10g}",
                     "" if r.gap_percent is None else f"{r.gap_percent:.4g}",
                     f"{r.time_s:.3f}",
                     "" if r.zero_ratio is None else f"{r.zero_ratio:.4g}"))
    widths = [max([len(h)] + [len(b[i]) for b in body]) for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# solving

def thread_count() -> int:
    """Worker cap from ``GPN_THREADS`` (default 1)."""
    raw = os.environ.get("GPN_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"GPN_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"GPN_THREADS must be a positive integer, got {raw!r}")
    return value


def instance_rng(seed: int, name: str):
    """Per-instance stream, independent of the order instances are processed in."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def decode_best(model, inst, mode="greedy", samples=1, rng=None):
    """Decode ``inst``; in sample mode keep the best of ``samples`` draws.

    Sample ``i`` uses its own stream spawned from one draw of ``rng``, so the
    first ``k`` samples are the same whatever ``samples`` is and more samples
    never give a worse best.

    Returns ``(perm, cost, elapsed)`` with the cost re-evaluated from the
    permutation and ``elapsed`` covering the decode only.
    """
    count = samples if mode == "sample" else 1
    if count < 1:
        raise ValueError("samples must be at least 1")
    check_objective_range(inst)
    if mode == "sample":
        if rng is None:
            raise ValueError("sampling needs an rng")
        root = np.random.SeedSequence(int(rng.integers(2**63)))
        rng = [np.random.default_rng(s) for s in root.spawn(count)]
    if isinstance(model, MatrixTspGpn):
        if not isinstance(inst, TspInstance):
            raise DimensionMismatch("a matrix-TSP model cannot solve a QAP instance")
        if inst.n < 2:
            raise DimensionMismatch("matrix TSP decoding needs at least 2 cities")
        stack = np.repeat(inst.dist[None], count, axis=0)
        t0 = time.perf_counter()
        perms, _ = decode_tsp_batch(model, stack, mode, rng)
        elapsed = time.perf_counter() - t0
        costs = [evaluate_tour(inst, p) for p in perms]
    else:
        q = tsp_to_qap(inst) if isinstance(inst, TspInstance) else inst
        dist = np.repeat(q.dist[None], count, axis=0)
        flow = np.repeat(q.flow[None], count, axis=0)
        t0 = time.perf_counter()
        perms, _, _ = decode_qap_batch(model, dist, flow, mode, rng)
        elapsed = time.perf_counter() - t0
        costs = [evaluate_qap_cost(q, p) for p in perms]
    best = int(np.argmin(costs))
    return perms[best], float(costs[best]), elapsed


def _cost(inst, perm) -> float:
    if isinstance(inst, TspInstance):
        return evaluate_tour(inst, perm)
    return evaluate_qap_cost(inst, perm)


def run_method(method, inst, models, seed=0, mode="greedy", samples=1):
    """``(perm, cost, elapsed)`` for one method, or ``None`` if it does not apply."""
    rng = instance_rng(seed, f"{inst.name}/{method}")
    check_objective_range(inst)
    if method in ("gpn", "gpn+lstm"):
        model = models.for_method(method, inst)
        if model is None:
            return None
        perm, _, elapsed = decode_best(model, inst, mode, samples, rng)
    else:
        q = tsp_to_qap(inst) if isinstance(inst, TspInstance) else inst
        if method == "greedy":
            res = greedy_two_stage(q)
        elif method == "greedy_inc":
            res = greedy_incremental(q)
        elif method == "random":
            res = random_perm(q.n, rng, q)
        elif method == "two_opt":
            res = two_opt_swap(q, rng.permutation(q.n).astype(np.intp))
        else:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        perm, elapsed = res.perm, res.elapsed
    return perm, _cost(inst, perm), elapsed


def bench_instance(inst, methods, models, best_known=None, seed=0, mode="greedy", samples=1):
    zr = 100.0 * zero_ratio(inst) if isinstance(inst, QapInstance) else None
    best = (best_known or {}).get(inst.name)
    rows = []
    for method in methods:
        out = run_method(method, inst, models, seed, mode, samples)
        if out is None:
            continue
        perm, cost, elapsed = out
        rows.append(make_row(inst.name, inst.n, method, cost, best, elapsed, zr))
    return rows


def list_instances(directory) -> list:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in (".tsp", ".dat"))


def run_bench(paths, methods=DEFAULT_METHODS, models=None, best_known=None, seed=0,
              mode="greedy", samples=1, threads=None) -> list:
    """Bench every instance file; rows sorted by instance then method."""
    models = models or ModelSet()
    instances = [read_instance(p) for p in paths]
    work = threads or thread_count()

    def one(inst):
        return bench_instance(inst, methods, models, best_known, seed, mode, samples)

    if work > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=work) as pool:
            chunks = list(pool.map(one, instances))
    else:
        chunks = [one(i) for i in instances]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r.instance, r.method))
    return rows


def rows_equal(a: BenchRow, b: BenchRow) -> bool:
    """Equality treating ``None`` fields alike and floats exactly."""
    for k in CSV_HEADER:
        x, y = getattr(a, k), getattr(b, k)
        if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
            continue
        if x != y:
            return False
    return True
