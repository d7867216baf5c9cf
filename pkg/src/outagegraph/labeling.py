"""Binary needs-replacement targets with leakage-safe temporal cutoffs.

A substation is labeled positive when, using only incidents at or before
the active cutoff:

  1. it has an incident whose cause is "severe" and whose equipment is
     "critical" (thresholds below),
  2. its historical SAIDI exceeds the severity reference Q90, and
  3. no major incident follows that trigger within the quiet window
     (180 days).

Severe causes are causes whose mean duration and maximum customers affected
both exceed the 90th percentile of the per-cause aggregate distributions.
Critical equipment combines high failure frequency (above a configurable
count quantile) with mean SAIDI above the 90th percentile of per-equipment
values. The SAIDI severity reference Q90 is taken over per-incident outage
durations (hours) so that any fraction of substations can exceed it.

A "major" incident is one with a severe cause or duration above the global
90th-percentile duration.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Sequence

from .ingest import IncidentRecord
from .util import percentile_linear

QUIET_WINDOW_DAYS = 180


@dataclass(frozen=True)
class SeverityThresholds:
    duration_p90: float        # minutes, per-incident
    customers_p90: float       # count, per-incident
    saidi_p90: float           # hours, severity reference for substation SAIDI
    severe_causes: frozenset[str]
    critical_equipment: frozenset[str]
    cutoff: datetime


@dataclass(frozen=True)
class MaintenanceLabel:
    substation: str
    y: int
    cutoff: datetime
    evidence: str | None       # triggering incident id when y=1
    truncated: bool = False    # quiet window extended past the cutoff


def substation_saidi_hours(incidents: Sequence[IncidentRecord]) -> float:
    """Customer-weighted mean outage duration in hours (plain mean if no customer data)."""
    if not incidents:
        return 0.0
    wsum = sum(i.customers_affected for i in incidents)
    if wsum > 0:
        return sum(i.duration_minutes * i.customers_affected for i in incidents) / wsum / 60.0
    return sum(i.duration_minutes for i in incidents) / len(incidents) / 60.0


def compute_thresholds(incidents: Sequence[IncidentRecord], cutoff: datetime,
                       equipment_count_quantile: float = 75.0) -> SeverityThresholds:
    """Severity thresholds from incidents at or before the cutoff."""
    window = [i for i in incidents if i.t_off <= cutoff]
    if not window:
        raise ValueError("no incidents at or before the cutoff")

    durations = [i.duration_minutes for i in window]
    customers = [float(i.customers_affected) for i in window]
    duration_p90 = percentile_linear(durations, 90.0)
    customers_p90 = percentile_linear(customers, 90.0)
    saidi_p90 = percentile_linear([d / 60.0 for d in durations], 90.0)

    by_cause: dict[str, list[IncidentRecord]] = {}
    for inc in window:
        by_cause.setdefault(inc.cause, []).append(inc)
    cause_mean_dur = {c: sum(i.duration_minutes for i in v) / len(v) for c, v in by_cause.items()}
    cause_max_cust = {c: max(float(i.customers_affected) for i in v) for c, v in by_cause.items()}
    dur_cut = percentile_linear(list(cause_mean_dur.values()), 90.0)
    cust_cut = percentile_linear(list(cause_max_cust.values()), 90.0)
    severe = frozenset(c for c in by_cause
                       if cause_mean_dur[c] > dur_cut and cause_max_cust[c] > cust_cut)

    by_equip: dict[str, list[IncidentRecord]] = {}
    for inc in window:
        by_equip.setdefault(inc.equipment, []).append(inc)
    counts = {e: len(v) for e, v in by_equip.items()}
    equip_saidi = {e: substation_saidi_hours(v) for e, v in by_equip.items()}
    count_cut = percentile_linear(list(counts.values()), equipment_count_quantile)
    saidi_cut = percentile_linear(list(equip_saidi.values()), 90.0)
    critical = frozenset(e for e in by_equip
                         if counts[e] > count_cut and equip_saidi[e] > saidi_cut)

    return SeverityThresholds(duration_p90=duration_p90, customers_p90=customers_p90,
                              saidi_p90=saidi_p90, severe_causes=severe,
                              critical_equipment=critical, cutoff=cutoff)


def is_major(inc: IncidentRecord, thresholds: SeverityThresholds) -> bool:
    return inc.cause in thresholds.severe_causes or inc.duration_minutes > thresholds.duration_p90


def label_substations(incidents: Sequence[IncidentRecord],
                      thresholds: SeverityThresholds,
                      cutoff: datetime,
                      substation_ids: Sequence[str]) -> list[MaintenanceLabel]:
    """Apply the positive-label rule per substation using data <= cutoff."""
    if cutoff != thresholds.cutoff:
        raise ValueError("thresholds were computed for a different cutoff")
    window = [i for i in incidents if i.t_off <= cutoff]
    by_sub: dict[str, list[IncidentRecord]] = {sid: [] for sid in substation_ids}
    for inc in window:
        if inc.substation in by_sub:
            by_sub[inc.substation].append(inc)

    quiet = timedelta(days=QUIET_WINDOW_DAYS)
    labels: list[MaintenanceLabel] = []
    for sid in substation_ids:
        subset = sorted(by_sub[sid], key=lambda i: (i.t_off, i.id))
        if not subset:
            labels.append(MaintenanceLabel(sid, 0, cutoff, None))
            continue
        saidi = substation_saidi_hours(subset)
        if saidi <= thresholds.saidi_p90:
            labels.append(MaintenanceLabel(sid, 0, cutoff, None))
            continue
        y, evidence, truncated = 0, None, False
        for trig in subset:
            if trig.cause not in thresholds.severe_causes:
                continue
            if trig.equipment not in thresholds.critical_equipment:
                continue
            window_end = trig.t_off + quiet
            followers = [i for i in subset
                         if trig.t_off < i.t_off <= window_end and i.id != trig.id]
            if any(is_major(i, thresholds) for i in followers):
                continue
            y, evidence = 1, trig.id
            truncated = window_end > cutoff
            break
        labels.append(MaintenanceLabel(sid, y, cutoff, evidence, truncated))
    return labels


@dataclass(frozen=True)
class FoldCutoff:
    fold: int
    cutoff: datetime


def fold_cutoff_labels(incidents: Sequence[IncidentRecord],
                       fold_cutoffs: Sequence[FoldCutoff],
                       substation_ids: Sequence[str],
                       equipment_count_quantile: float = 75.0
                       ) -> dict[int, list[MaintenanceLabel]]:
    """Per-fold labels where post-cutoff incidents contribute nothing.

    Thresholds and labels are recomputed per fold from the truncated incident
    stream, so moving a cutoff earlier can never use later evidence.
    """
    if not incidents:
        raise ValueError("no incidents")
    first = min(i.t_off for i in incidents)
    out: dict[int, list[MaintenanceLabel]] = {}
    for fc in fold_cutoffs:
        if fc.cutoff < first:
            raise ValueError(f"fold {fc.fold} cutoff {fc.cutoff} precedes the first incident")
        visible = [i for i in incidents if i.t_off <= fc.cutoff]
        thresholds = compute_thresholds(visible, fc.cutoff, equipment_count_quantile)
        out[fc.fold] = label_substations(visible, thresholds, fc.cutoff, substation_ids)
    return out


def labels_to_rows(labels: Sequence[MaintenanceLabel]) -> list[dict]:
    return [{"substation_id": lb.substation, "y": lb.y,
             "cutoff": lb.cutoff.strftime("%Y-%m-%d %H:%M:%S"),
             "evidence_id": lb.evidence or "", "truncated": int(lb.truncated)}
            for lb in labels]
