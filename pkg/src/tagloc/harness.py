"""Batch execution of (scenario, method, seed) runs.

Jobs are independent, so they can go to a process pool. Results are always
collected back in submission order, which keeps every output independent
of ``jobs``.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .localizer import METHODS, RunRecord, method_flags
from .map_builder import TagMap
from .metrics import DEFAULT_SUCCESS_THRESHOLD, ErrorReport, position_errors, summarize
from .sim import Scenario, Stream, run_method, synthesize_stream


@dataclass
class MethodResult:
    record: RunRecord
    report: ErrorReport | None  # None if the method never produced an estimate


def check_methods(methods) -> list[str]:
    methods = list(methods)
    if not methods:
        raise ValueError(f"no methods given; valid: {', '.join(METHODS)}")
    for m in methods:
        method_flags(m)
    return methods


def _evaluate(record: RunRecord, threshold: float) -> MethodResult:
    err = position_errors(record.estimates, record.truth)
    report = summarize(err, threshold) if np.any(~np.isnan(err)) else None
    return MethodResult(record, report)


def _run_one(args) -> MethodResult:
    method, stream, scenario, tag_map, threshold = args
    return _evaluate(run_method(method, stream, scenario, tag_map), threshold)


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_methods(
    scenario: Scenario,
    methods,
    stream: Stream | None = None,
    tag_map: TagMap | None = None,
    jobs: int = 1,
    success_threshold: float = DEFAULT_SUCCESS_THRESHOLD,
) -> dict[str, MethodResult]:
    methods = check_methods(methods)
    if stream is None:
        stream = synthesize_stream(scenario)
    items = [(m, stream, scenario, tag_map, success_threshold) for m in methods]
    return dict(zip(methods, _map(_run_one, items, jobs)))


def _sweep_one(args):
    scenario, methods, threshold = args
    stream = synthesize_stream(scenario)
    out = {}
    for m in methods:
        res = _evaluate(run_method(m, stream, scenario), threshold)
        out[m] = res
    return out


def sweep(
    scenario: Scenario,
    methods,
    seeds,
    jobs: int = 1,
    success_threshold: float = DEFAULT_SUCCESS_THRESHOLD,
) -> list[dict[str, MethodResult]]:
    """Monte-Carlo over seeds; entry ``i`` holds the results for ``seeds[i]``."""
    methods = check_methods(methods)
    items = [(dataclasses.replace(scenario, seed=int(s)), methods, success_threshold) for s in seeds]
    return _map(_sweep_one, items, jobs)
