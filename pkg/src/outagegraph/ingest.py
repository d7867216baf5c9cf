"""Incident-log ingestion: cleaning, identifier reconciliation, voltage imputation.

Raw tables arrive as CSV (incidents, substations, lines, feeders). Cleaning
retains exactly the records with ordered timestamps and a resolvable
substation; everything else lands in the rejects list with a reason code.
Substation names are reconciled by normalized Levenshtein similarity, and
missing voltages are imputed by a three-stage fallback (line-description
tags, feeder-mode voting, regional default).
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

from .util import mode_value

# Rejection reason codes emitted by clean_dataset.
MISSING_TIME = "MISSING_TIME"
INVERTED_TIME = "INVERTED_TIME"
NO_SUBSTATION = "NO_SUBSTATION"

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"

# Similarity thresholds: incident-to-substation matching uses a [0, 1]
# similarity with default 0.85; line-endpoint matching uses a 0-100 score
# where >= 64 auto-accepts and [55, 64) goes to manual review.
DEFAULT_TAU = 0.85
LINE_ACCEPT_SCORE = 64
LINE_REVIEW_SCORE = 55


class ConfigurationError(ValueError):
    """Raised when an input table required for cleaning is unusable."""


@dataclass(frozen=True)
class IncidentRecord:
    """One outage event after cleaning."""

    id: str
    substation: str
    t_off: datetime
    t_on: datetime
    cause: str
    equipment: str
    customers_affected: int
    feeder: str
    city: str

    @property
    def duration_minutes(self) -> float:
        return (self.t_on - self.t_off).total_seconds() / 60.0


@dataclass(frozen=True)
class SubstationRecord:
    id: str
    lat: float
    lon: float
    voltage_kv: float | None
    plant_class: str


@dataclass(frozen=True)
class LineRecord:
    name: str
    endpoint_a: str
    endpoint_b: str
    const_volt: float
    shape_length_km: float


@dataclass(frozen=True)
class FeederRecord:
    feeder: str
    substation: str
    voltage_kv: float


@dataclass
class CleanDataset:
    incidents: list[IncidentRecord]
    substations: list[SubstationRecord]
    lines: list[LineRecord]
    rejects: list[tuple[str, str]] = field(default_factory=list)

    def substation_ids(self) -> list[str]:
        return [s.id for s in self.substations]


# ---------------------------------------------------------------------------
# Name normalization and fuzzy matching
# ---------------------------------------------------------------------------

_PUNCT_RE = re.compile(r"[^A-Z0-9 ]+")
_WS_RE = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    """Uppercase, strip punctuation, collapse whitespace."""
    up = name.upper()
    up = _PUNCT_RE.sub(" ", up)
    return _WS_RE.sub(" ", up).strip()


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance (insert/delete/substitute, unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def similarity(a: str, b: str) -> float:
    """1 - levenshtein/max-length on normalized strings; 1.0 iff equal."""
    na, nb = normalize_name(a), normalize_name(b)
    if na == nb:
        return 1.0
    longest = max(len(na), len(nb))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(na, nb) / longest


@dataclass(frozen=True)
class MatchResult:
    matched_id: str | None
    score: float  # similarity in [0, 1]
    needs_review: bool = False


def fuzzy_match(name: str, candidates: Sequence[str], tau: float = DEFAULT_TAU) -> MatchResult:
    """Best-candidate match at similarity >= tau; empty candidates -> no match."""
    if not candidates:
        return MatchResult(None, 0.0)
    best_id, best_score = None, -1.0
    for cand in candidates:
        s = similarity(name, cand)
        if s > best_score:
            best_id, best_score = cand, s
    if best_score >= tau:
        return MatchResult(best_id, best_score)
    return MatchResult(None, best_score)


def line_endpoint_match(name: str, candidates: Sequence[str]) -> MatchResult:
    """Line-endpoint matching on the 0-100 score scale.

    score = round(100 * similarity); >= 64 accepts, [55, 64) flags for
    review (excluded from automated runs but emitted to a review file).
    """
    if not candidates:
        return MatchResult(None, 0.0)
    best_id, best_score = None, -1.0
    for cand in candidates:
        s = similarity(name, cand)
        if s > best_score:
            best_id, best_score = cand, s
    score100 = round(100 * best_score)
    if score100 >= LINE_ACCEPT_SCORE:
        return MatchResult(best_id, best_score)
    if score100 >= LINE_REVIEW_SCORE:
        return MatchResult(best_id, best_score, needs_review=True)
    return MatchResult(None, best_score)


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------

def parse_timestamp(text: str) -> datetime | None:
    text = text.strip()
    if not text:
        return None
    try:
        return datetime.strptime(text, TIMESTAMP_FORMAT)
    except ValueError:
        return None


@dataclass(frozen=True)
class RawIncident:
    """An incident row as read from CSV, before validation."""

    id: str
    substation_raw: str
    t_off_raw: str
    t_on_raw: str
    cause: str
    equipment: str
    customers_affected: int
    feeder: str
    city: str


def clean_dataset(raw_incidents: Sequence[RawIncident],
                  substations: Sequence[SubstationRecord],
                  lines: Sequence[LineRecord] = (),
                  tau: float = DEFAULT_TAU) -> CleanDataset:
    """Retain incidents with ordered timestamps and a resolvable substation.

    |retained| + |rejects| always equals |raw|. Rejects carry machine-readable
    reasons (MISSING_TIME, INVERTED_TIME, NO_SUBSTATION). Matching is exact
    on normalized names first, then fuzzy at similarity >= tau.
    """
    if not substations:
        raise ConfigurationError("substation table is empty")
    ids = [s.id for s in substations]
    by_norm = {normalize_name(s.id): s.id for s in substations}

    match_cache: dict[str, str | None] = {}

    def resolve(name: str) -> str | None:
        key = normalize_name(name)
        if key in by_norm:
            return by_norm[key]
        if key not in match_cache:
            match_cache[key] = fuzzy_match(name, ids, tau=tau).matched_id
        return match_cache[key]

    retained: list[IncidentRecord] = []
    rejects: list[tuple[str, str]] = []
    for raw in raw_incidents:
        t_off = parse_timestamp(raw.t_off_raw)
        t_on = parse_timestamp(raw.t_on_raw)
        if t_off is None or t_on is None:
            rejects.append((raw.id, MISSING_TIME))
            continue
        if t_off > t_on:
            rejects.append((raw.id, INVERTED_TIME))
            continue
        sub = resolve(raw.substation_raw)
        if sub is None:
            rejects.append((raw.id, NO_SUBSTATION))
            continue
        retained.append(IncidentRecord(
            id=raw.id, substation=sub, t_off=t_off, t_on=t_on,
            cause=raw.cause, equipment=raw.equipment,
            customers_affected=raw.customers_affected,
            feeder=raw.feeder, city=raw.city,
        ))
    return CleanDataset(incidents=retained, substations=list(substations),
                        lines=list(lines), rejects=rejects)


# ---------------------------------------------------------------------------
# Voltage imputation
# ---------------------------------------------------------------------------

_KV_RE = re.compile(r"(\d+(?:\.\d+)?)\s*KV")

# Provenance tags recorded with each imputed voltage.
FROM_LINE_TAG = "LINE_TAG"
FROM_FEEDER_MODE = "FEEDER_MODE"
FROM_REGIONAL = "REGIONAL_DEFAULT"
UNRESOLVED = "UNRESOLVED"


def extract_voltage_tag(description: str) -> float | None:
    """Pull a voltage like '69kV' out of a line description."""
    m = _KV_RE.search(description.upper())
    return float(m.group(1)) if m else None


def _haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    # Duplicated tiny geodesic here to keep ingest free of graphbuild imports.
    r = 6371.0
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(min(1.0, math.sqrt(a)))


def impute_voltage(substation: SubstationRecord,
                   lines: Sequence[LineRecord],
                   feeders: Sequence[FeederRecord],
                   all_substations: Sequence[SubstationRecord],
                   region_radius_km: float = 50.0) -> tuple[float | None, str]:
    """First applicable of line-tag extraction, feeder mode, regional mode.

    Never overwrites an existing voltage. Returns (voltage, provenance).
    """
    if substation.voltage_kv is not None:
        return substation.voltage_kv, "EXISTING"

    norm_id = normalize_name(substation.id)
    tagged = [extract_voltage_tag(ln.name) for ln in lines
              if norm_id in (normalize_name(ln.endpoint_a), normalize_name(ln.endpoint_b))]
    tagged = [t for t in tagged if t is not None]
    if tagged:
        return mode_value(tagged), FROM_LINE_TAG

    feeder_volts = [f.voltage_kv for f in feeders
                    if normalize_name(f.substation) == norm_id and f.voltage_kv > 0]
    if feeder_volts:
        return mode_value(feeder_volts), FROM_FEEDER_MODE

    regional = [s.voltage_kv for s in all_substations
                if s.voltage_kv is not None and s.id != substation.id
                and _haversine_km(substation.lat, substation.lon, s.lat, s.lon) <= region_radius_km]
    if regional:
        return mode_value(regional), FROM_REGIONAL

    return None, UNRESOLVED


def impute_all_voltages(substations: Sequence[SubstationRecord],
                        lines: Sequence[LineRecord],
                        feeders: Sequence[FeederRecord],
                        region_radius_km: float = 50.0) -> tuple[list[SubstationRecord], list[tuple[str, str]]]:
    """Impute every missing voltage; returns (updated records, provenance log)."""
    updated: list[SubstationRecord] = []
    provenance: list[tuple[str, str]] = []
    for sub in substations:
        volt, tag = impute_voltage(sub, lines, feeders, substations, region_radius_km)
        if tag not in ("EXISTING",):
            provenance.append((sub.id, tag))
        if volt is not None and sub.voltage_kv is None:
            updated.append(SubstationRecord(sub.id, sub.lat, sub.lon, volt, sub.plant_class))
        else:
            updated.append(sub)
    return updated, provenance


# ---------------------------------------------------------------------------
# CSV input/output
# ---------------------------------------------------------------------------

INCIDENT_HEADERS = ["id", "substation", "t_off", "t_on", "cause", "equipment",
                    "customers_affected", "feeder", "city"]
SUBSTATION_HEADERS = ["id", "lat", "lon", "voltage_kv", "plant_class"]
LINE_HEADERS = ["name", "endpoint_a", "endpoint_b", "const_volt", "shape_length_km"]
FEEDER_HEADERS = ["feeder", "substation", "voltage_kv"]
REJECT_HEADERS = ["record_id", "reason"]


def read_raw_incidents(path: Path | str) -> list[RawIncident]:
    rows: list[RawIncident] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(RawIncident(
                id=row["id"], substation_raw=row["substation"],
                t_off_raw=row["t_off"], t_on_raw=row["t_on"],
                cause=row["cause"], equipment=row["equipment"],
                customers_affected=int(row["customers_affected"] or 0),
                feeder=row.get("feeder", ""), city=row.get("city", ""),
            ))
    return rows


def read_substations(path: Path | str) -> list[SubstationRecord]:
    rows: list[SubstationRecord] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            raw_volt = (row.get("voltage_kv") or "").strip()
            rows.append(SubstationRecord(
                id=row["id"], lat=float(row["lat"]), lon=float(row["lon"]),
                voltage_kv=float(raw_volt) if raw_volt else None,
                plant_class=row.get("plant_class", ""),
            ))
    return rows


def read_lines(path: Path | str) -> list[LineRecord]:
    rows: list[LineRecord] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(LineRecord(
                name=row["name"], endpoint_a=row["endpoint_a"], endpoint_b=row["endpoint_b"],
                const_volt=float(row["const_volt"]),
                shape_length_km=float(row["shape_length_km"]),
            ))
    return rows


def read_feeders(path: Path | str) -> list[FeederRecord]:
    rows: list[FeederRecord] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(FeederRecord(
                feeder=row["feeder"], substation=row["substation"],
                voltage_kv=float(row["voltage_kv"]),
            ))
    return rows


def write_incidents_csv(path: Path | str, incidents: Iterable[IncidentRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(INCIDENT_HEADERS)
        for inc in incidents:
            writer.writerow([
                inc.id, inc.substation,
                inc.t_off.strftime(TIMESTAMP_FORMAT), inc.t_on.strftime(TIMESTAMP_FORMAT),
                inc.cause, inc.equipment, inc.customers_affected, inc.feeder, inc.city,
            ])


def write_rejects_csv(path: Path | str, rejects: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REJECT_HEADERS)
        for record_id, reason in rejects:
            writer.writerow([record_id, reason])
