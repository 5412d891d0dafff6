"""Wall-clock scaling study for the scan kernels.

Times the parallel and sequential scans across a geometric grid of sequence
lengths, plus a naive quadratic self-attention forward as the contrast case,
and fits log-log slopes. Median-of-repetitions with warm-up discarded.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .ssm import _scan_core_parallel, _scan_core_sequential

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


@dataclass
class BenchRecord:
    kernel: str
    L: int
    C: int
    N: int
    threads: int
    repetitions: int
    t_median: float
    t_min: float
    t_max: float
    throughput: float  # elements / second


CSV_FIELDS = [f.name for f in fields(BenchRecord)]


def _time(fn, repetitions: int, warmup: int = 2) -> tuple[float, float, float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), float(min(times)), float(max(times))


def _scan_instance(rng: np.random.Generator, L: int, C: int, N: int):
    lanes = C * N
    a = np.exp(-rng.uniform(0.02, 2.0, size=(1, L, lanes))).astype(np.float32)
    s = rng.standard_normal((1, L, lanes)).astype(np.float32)
    return a, s


def bench_scan(kernel: str, L: int, C: int, N: int, repetitions: int = 5,
               chunk: int = 256, threads: int = 1, rng=None) -> BenchRecord:
    rng = rng or np.random.default_rng(0)
    a, s = _scan_instance(rng, L, C, N)
    if kernel == "scan_parallel":
        fn = lambda: _scan_core_parallel(a, s, chunk)
    elif kernel == "scan_sequential":
        fn = lambda: _scan_core_sequential(a, s)
    else:
        raise ValueError(f"unknown scan kernel '{kernel}'")
    med, lo, hi = _run_limited(fn, repetitions, threads)
    return BenchRecord(kernel, L, C, N, threads, repetitions, med, lo, hi, L * C * N / med)


def naive_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, block: int = 0) -> np.ndarray:
    """softmax(Q K^T / sqrt(d)) V computed in row blocks; O(L^2 d) work.

    The block size caps the score-matrix footprint so large L stays within a
    fixed memory budget instead of materializing the full L x L matrix."""
    L, d = q.shape
    if block <= 0:
        # Keep each score block ~8 MB so the allocator reuses heap pages
        # instead of faulting fresh mmaps every block.
        block = max(32, min(2048, (1 << 21) // L))
    out = np.empty_like(v)
    scale = 1.0 / np.sqrt(d)
    for start in range(0, L, block):
        rows = q[start:start + block] @ k.T * scale
        rows -= rows.max(axis=1, keepdims=True)
        np.exp(rows, out=rows)
        rows /= rows.sum(axis=1, keepdims=True)
        out[start:start + block] = rows @ v
    return out


def bench_attention(L: int, d: int = 8, repetitions: int = 5, threads: int = 1,
                    rng=None) -> BenchRecord:
    rng = rng or np.random.default_rng(0)
    q = rng.standard_normal((L, d)).astype(np.float32)
    k = rng.standard_normal((L, d)).astype(np.float32)
    v = rng.standard_normal((L, d)).astype(np.float32)
    med, lo, hi = _run_limited(lambda: naive_attention(q, k, v), repetitions, threads,
                               warmup=1)
    return BenchRecord("attention_naive", L, d, 0, threads, repetitions, med, lo, hi, L * d / med)


def _run_limited(fn, repetitions: int, threads: int, warmup: int = 2):
    if threadpool_limits is not None and threads > 0:
        with threadpool_limits(limits=threads):
            return _time(fn, repetitions, warmup)
    return _time(fn, repetitions, warmup)


def fit_loglog_slope(sizes, times) -> float:
    return float(np.polyfit(np.log(np.asarray(sizes, dtype=np.float64)),
                            np.log(np.asarray(times, dtype=np.float64)), 1)[0])


def scaling_bench(l_grid, c_grid=(8,), n_state: int = 4, threads: int = 1,
                  repetitions: int = 5, chunk: int = 256,
                  include_attention: bool = True,
                  include_sequential: bool = True) -> list[BenchRecord]:
    """Time the kernels across the length grid (at c_grid[0]) and across the
    channel grid (at the smallest length)."""
    records = []
    c0 = c_grid[0]
    for L in l_grid:
        records.append(bench_scan("scan_parallel", L, c0, n_state, repetitions, chunk, threads))
        if include_sequential:
            records.append(bench_scan("scan_sequential", L, c0, n_state, repetitions, chunk, threads))
    for C in c_grid[1:]:
        records.append(bench_scan("scan_parallel", min(l_grid), C, n_state, repetitions, chunk, threads))
    if include_attention:
        for L in l_grid:
            records.append(bench_attention(L, 8, repetitions, threads))
    return records


def slope_of(records: list[BenchRecord], kernel: str) -> float:
    rows = sorted((r for r in records if r.kernel == kernel), key=lambda r: r.L)
    return fit_loglog_slope([r.L for r in rows], [r.t_median for r in rows])


def write_csv(records: list[BenchRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in records:
            writer.writerow(asdict(r))
