"""
Runner module for gapmor.
Dispatches reductions and executes sweeps over orders and methods.
"""

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

from . import norms, reduction
from .config import METRICS, SweepSpec
from .linalg import NumericalError
from .lti import ClosedLoopFactorization, StateSpace, coprime_factorize
from .reduction import METHODS, LqgBtResult, ReductionResult

logger = logging.getLogger(__name__)

COLUMNS = ("r", "method", "metric", "value", "converged", "iterations", "seconds", "status")

Result = Union[ReductionResult, LqgBtResult]


class RunnerError(Exception):
    """Base exception for runner errors."""
    pass


@dataclass
class SweepRow:
    """One cell of a sweep table."""
    r: int
    method: str
    metric: str
    value: Optional[float]
    converged: Optional[bool]
    iterations: Optional[int]
    seconds: float
    error: Optional[str] = None
    resolved: bool = True

    @property
    def status(self) -> str:
        if self.error is not None:
            return f"failed: {self.error}"
        if not self.resolved:
            return "unresolved"
        if self.converged is False:
            return "not-converged"
        return "ok"

    @property
    def succeeded(self) -> bool:
        return self.value is not None


def run_reduction(
    sys: StateSpace,
    method: str,
    r: int,
    tol: float = 1e-6,
    max_iter: int = 100,
    seed: int = 0,
    init: str = "spectrum",
    balancing: str = "lc-lo",
) -> Result:
    """
    Run one reduction method.

    Args:
        sys: System to reduce
        method: One of irka, gap-irka, lqgbt
        r: Reduced order
        init: Shift initialization for irka and gap-irka

    Returns:
        ReductionResult or LqgBtResult

    Raises:
        RunnerError: If the method is unknown
    """
    if method == "irka":
        return reduction.irka(sys, r, tol=tol, max_iter=max_iter, init=init, seed=seed)
    if method == "gap-irka":
        return reduction.gap_irka(sys, r, tol=tol, max_iter=max_iter, init=init, seed=seed)
    if method == "lqgbt":
        return reduction.lqgbt(sys, r, balancing=balancing)
    raise RunnerError(f"Unknown method: {method}")


def compute_metric(sys: StateSpace, rom: StateSpace, metric: str,
                   full: Optional[ClosedLoopFactorization] = None) -> norms.NormResult:
    """Evaluate h2gap or linfgap between a system and its reduced model."""
    if metric == "h2gap":
        return norms.h2_gap(sys, rom, full)
    if metric == "linfgap":
        return norms.linf_gap(sys, rom, full)
    raise RunnerError(f"Unknown metric: {metric}")


def _run_cell(sys: StateSpace, full: ClosedLoopFactorization, spec: SweepSpec,
              r: int, method: str) -> List[SweepRow]:
    start = time.perf_counter()
    try:
        result = run_reduction(sys, method, r, spec.tol, spec.max_iter, spec.seed,
                               init=spec.init, balancing=spec.balancing)
    except (NumericalError, ValueError) as e:
        logger.warning("%s r=%d failed: %s", method, r, e)
        elapsed = time.perf_counter() - start
        return [SweepRow(r, method, metric, None, None, None, elapsed, type(e).__name__)
                for metric in spec.metrics]

    rows = []
    for metric in spec.metrics:
        value, error, resolved = None, None, True
        try:
            measured = compute_metric(sys, result.rom, metric, full)
            value, resolved = measured.value, measured.resolved
        except (NumericalError, ValueError) as e:
            logger.warning("%s r=%d: %s failed: %s", method, r, metric, e)
            error = type(e).__name__
        rows.append(SweepRow(r, method, metric, value, result.converged, result.iterations,
                             time.perf_counter() - start, error, resolved))
    return rows


def run_sweep(sys: StateSpace, spec: SweepSpec,
              progress: Optional[Callable[[int, str], None]] = None) -> List[SweepRow]:
    """
    Reduce ``sys`` for every (order, method) pair and evaluate the metrics.

    The full-order factorization is computed once and shared. Cells run on
    a thread pool of ``spec.workers`` threads; rows are returned ordered by
    (r, method, metric) regardless of completion order.

    Raises:
        NumericalError: If the full-order system cannot be factorized
    """
    full = coprime_factorize(sys)
    cells = [(r, method) for r in spec.orders for method in spec.methods]

    def work(cell):
        r, method = cell
        rows = _run_cell(sys, full, spec, r, method)
        if progress is not None:
            progress(r, method)
        return rows

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(work, cells))
    else:
        results = [work(cell) for cell in cells]

    rows = [row for group in results for row in group]
    rows.sort(key=lambda row: (row.r, METHODS.index(row.method), METRICS.index(row.metric)))
    return rows


def _cells(row: SweepRow, deterministic: bool) -> List[str]:
    return [
        str(row.r),
        row.method,
        row.metric,
        "" if row.value is None else f"{row.value:.6e}",
        "" if row.converged is None else str(row.converged).lower(),
        "" if row.iterations is None else str(row.iterations),
        "n/a" if deterministic else f"{row.seconds:.3f}",
        row.status,
    ]


def format_csv(rows: List[SweepRow], timestamp: Optional[str] = None) -> str:
    """
    Render rows as CSV.

    A ``# generated <timestamp>`` line is prepended when a timestamp is
    given; without one the seconds column reads "n/a" so that repeated
    runs produce identical output.
    """
    buf = io.StringIO()
    if timestamp is not None:
        buf.write(f"# generated {timestamp}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow(_cells(row, timestamp is None))
    return buf.getvalue()


def format_markdown(rows: List[SweepRow], timestamp: Optional[str] = None) -> str:
    """Render rows as a Markdown table built from the same cells as the CSV."""
    lines = []
    if timestamp is not None:
        lines.append(f"<!-- generated {timestamp} -->")
    lines.append("| " + " | ".join(COLUMNS) + " |")
    lines.append("|" + "|".join("---" for _ in COLUMNS) + "|")
    for row in rows:
        cells = [c if c else "-" for c in _cells(row, timestamp is None)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
