"""Shared numeric and hashing helpers used across the pipeline.

One percentile convention (linear interpolation between order statistics)
is used everywhere a percentile appears: temporal window selection,
proximity thresholds, enrichment cutoffs, and severity thresholds.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any, Iterable

import numpy as np


class NumericError(RuntimeError):
    """Raised when a computation produces NaN/Inf or is otherwise ill-posed."""


def percentile_linear(values: Iterable[float], q: float) -> float:
    """Percentile with linear interpolation between order statistics.

    ``q`` is in [0, 100]. For sorted values v_0..v_{n-1}, the index is
    ``q/100 * (n-1)`` and the result interpolates linearly between the
    two neighboring order statistics.
    """
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("percentile of empty sequence")
    if not 0.0 <= q <= 100.0:
        raise ValueError(f"percentile q={q} outside [0, 100]")
    return float(np.percentile(arr, q, method="linear"))


def zstandardize(matrix: np.ndarray, mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-wise z-scores using population standard deviation.

    Statistics are estimated over rows selected by ``mask`` (all rows when
    None) but applied to every row. Constant columns map to zeros.

    Returns (standardized, means, sds).
    """
    m = np.asarray(matrix, dtype=float)
    rows = m if mask is None else m[np.asarray(mask, dtype=bool)]
    mean = rows.mean(axis=0)
    sd = rows.std(axis=0)  # population sd (ddof=0)
    safe = np.where(sd > 0.0, sd, 1.0)
    out = (m - mean) / safe
    out[:, sd == 0.0] = 0.0
    return out, mean, sd


def mode_value(values: Iterable[float]) -> float:
    """Most common value; ties broken toward the smallest value."""
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    if not counts:
        raise ValueError("mode of empty sequence")
    best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    return best[0]


def check_finite(name: str, array: np.ndarray) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"non-finite values in {name}")


def canonical_json(obj: Any) -> str:
    """Deterministic JSON text: sorted keys, no whitespace variance."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(obj: Any) -> str:
    """Stable short hash identifying the configuration that produced an artifact."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz's method)."""
    max_iter = 300
    eps = 3e-14
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise NumericError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) via the standard continued fraction."""
    if not (a > 0 and b > 0):
        raise ValueError("betainc requires a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = a * math.log(x) + b * math.log(1.0 - x) - log_beta(a, b)
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f_stat: float, df_between: int, df_within: int) -> float:
    """Survival function P(F >= f_stat) of the F distribution."""
    if f_stat <= 0.0:
        return 1.0
    if math.isinf(f_stat):
        return 0.0
    x = df_within / (df_within + df_between * f_stat)
    return betainc_regularized(df_within / 2.0, df_between / 2.0, x)
