"""Cluster interpretation: operational profiles, survival inputs, priorities."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..graphbuild import RISK_CATEGORIES
from ..ingest import CleanDataset
from .density import NOISE


@dataclass
class ClusterProfile:
    cluster: int
    size: int
    incidents_per_year: float
    mean_recovery_minutes: float
    mean_cmi: float
    mean_risk: dict[str, float]
    priority: float
    members: list[str] = field(default_factory=list)


def priority_score(risk_weather: float, risk_equipment: float,
                   incidents_per_year: float) -> float:
    """Multiplicative ranking metric: weather risk x equipment risk x incident rate."""
    return risk_weather * risk_equipment * incidents_per_year


def profile_clusters(labels: np.ndarray, clean: CleanDataset,
                     risk_matrix: np.ndarray) -> list[ClusterProfile]:
    """Per-cluster operational statistics and the priority ranking (descending).

    ``risk_matrix`` rows align with clean.substations and hold the normalized
    frequencies of the four risk drivers. Noise nodes are excluded; an empty
    cluster id raises a warning and is dropped.
    """
    labels = np.asarray(labels)
    ids = [s.id for s in clean.substations]
    index = {sid: k for k, sid in enumerate(ids)}
    if len(labels) != len(ids):
        raise ValueError("labels do not align with the substation list")

    t_min = min((i.t_off for i in clean.incidents), default=None)
    t_max = max((i.t_off for i in clean.incidents), default=None)
    years = ((t_max - t_min).total_seconds() / (365.25 * 24 * 3600)
             if t_min is not None and t_max > t_min else 1.0)

    by_sub: dict[int, list] = {k: [] for k in range(len(ids))}
    for inc in clean.incidents:
        by_sub[index[inc.substation]].append(inc)

    profiles: list[ClusterProfile] = []
    for c in sorted(set(labels.tolist())):
        if c == NOISE:
            continue
        members = np.flatnonzero(labels == c)
        incidents = [i for m in members for i in by_sub[int(m)]]
        if len(members) == 0:
            warnings.warn(f"cluster {c} is empty; excluded from profiling")
            continue
        durations = np.array([i.duration_minutes for i in incidents])
        cmi = np.array([i.duration_minutes * i.customers_affected for i in incidents])
        mean_risk = {cat: float(risk_matrix[members, j].mean())
                     for j, cat in enumerate(RISK_CATEGORIES)}
        rate = len(incidents) / years
        profiles.append(ClusterProfile(
            cluster=int(c), size=int(len(members)),
            incidents_per_year=float(rate),
            mean_recovery_minutes=float(durations.mean()) if len(durations) else 0.0,
            mean_cmi=float(cmi.mean()) if len(cmi) else 0.0,
            mean_risk=mean_risk,
            priority=priority_score(mean_risk["weather"], mean_risk["equipment"], rate),
            members=[ids[int(m)] for m in members]))
    profiles.sort(key=lambda p: -p.priority)
    return profiles


def recurrence_times(labels: np.ndarray, clean: CleanDataset, cluster: int
                     ) -> tuple[list[float], list[bool]]:
    """Inter-outage gaps (days) for one cluster's substations, for survival fits.

    Consecutive incident gaps are events; each substation's final open
    interval (last incident to the end of observation) is censored.
    """
    labels = np.asarray(labels)
    ids = [s.id for s in clean.substations]
    members = {ids[int(m)] for m in np.flatnonzero(labels == cluster)}
    t_end = max((i.t_off for i in clean.incidents), default=None)
    if t_end is None:
        return [], []
    times: list[float] = []
    censored: list[bool] = []
    by_sub: dict[str, list] = {}
    for inc in clean.incidents:
        if inc.substation in members:
            by_sub.setdefault(inc.substation, []).append(inc.t_off)
    for sid, stamps in sorted(by_sub.items()):
        stamps.sort()
        for a, b in zip(stamps, stamps[1:]):
            times.append((b - a).total_seconds() / 86400.0)
            censored.append(False)
        tail = (t_end - stamps[-1]).total_seconds() / 86400.0
        if tail > 0:
            times.append(tail)
            censored.append(True)
    return times, censored
