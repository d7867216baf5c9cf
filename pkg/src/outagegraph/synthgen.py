"""Deterministic synthetic scenario generator with planted ground truth.

Every acceptance property is validated against scenarios produced here:
planted invalid records (cleaning), planted physical lines (spatial
recovery), boosted co-failure pairs (causal enrichment), maintenance-positive
substations (labeling rate), geographically and statistically distinct risk
clusters (embedding + clustering), and an ablation scenario that hides
complementary label signal in each of the three edge layers.

Output is the same CSV schema the ingest stage consumes, plus a
ground_truth.json recording every planted fact. A fixed seed fully
determines every byte of output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .ingest import (
    FeederRecord,
    LineRecord,
    RawIncident,
    SubstationRecord,
    TIMESTAMP_FORMAT,
)
from .util import canonical_json

CAUSES = ["WEATHER", "EQUIPMENT FAILURE", "VEGETATION", "LIGHTNING",
          "ANIMAL", "PLANNED", "UNKNOWN"]
DEFAULT_CAUSE_MIX = {
    "WEATHER": 0.25, "EQUIPMENT FAILURE": 0.19, "VEGETATION": 0.12,
    "LIGHTNING": 0.10, "ANIMAL": 0.12, "PLANNED": 0.10, "UNKNOWN": 0.12,
}
EQUIPMENT_MIX = {
    "FUSE": 0.22, "BREAKER": 0.18, "SWITCH": 0.15, "RECLOSER": 0.12,
    "CABLE": 0.10, "REGULATOR": 0.08, "MAIN TRANSFORMER": 0.15,
}

# Cause/equipment used to plant maintenance triggers. The cause is extreme in
# both duration and customers so it alone becomes "severe"; the equipment is
# frequent and long-duration so it alone becomes "critical".
SEVERE_CAUSE = "ICE STORM"
CRITICAL_EQUIPMENT = "MAIN TRANSFORMER"

VOLTAGE_CLASSES = [69.0, 138.0, 13.8]


class ScenarioError(ValueError):
    """Raised when a scenario configuration is internally inconsistent."""


@dataclass
class CausalPlant:
    u: int                      # substation index
    v: int
    cause: str = "LIGHTNING"
    boost: float = 10.0
    events: int = 6             # aligned co-occurrences to inject


@dataclass
class ClusterPlant:
    size: int
    center_lat: float
    center_lon: float
    spread_deg: float = 0.12
    voltage_kv: float = 69.0
    cause_mix: dict[str, float] | None = None  # None -> default mix


@dataclass
class AblationPlant:
    group_size: int = 12        # positives per structural group
    causal_decoys: int = 30     # negatives sharing the causal hub's spatial ties
    events_per_pair: int = 8
    # Per-layer overrides; None falls back to group_size. Zeroing a layer
    # concentrates the label signal in the remaining ones.
    spatial_size: int | None = None
    temporal_size: int | None = None
    causal_size: int | None = None

    def sizes(self) -> tuple[int, int, int]:
        return (self.group_size if self.spatial_size is None else self.spatial_size,
                self.group_size if self.temporal_size is None else self.temporal_size,
                self.group_size if self.causal_size is None else self.causal_size)


@dataclass
class ScenarioConfig:
    n_substations: int = 100
    n_extra_lines: int = 40
    days: int = 365
    start: str = "2019-01-01 00:00:00"
    n_incidents: int = 0               # 0 -> derived from rate_per_day
    rate_per_day: float = 0.05         # per-substation baseline incident rate
    cause_mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CAUSE_MIX))
    planted_invalid: int = 0
    planted_causal_pairs: list[CausalPlant] = field(default_factory=list)
    clusters: list[ClusterPlant] | None = None
    planted_positive_rate: float = 0.0
    negative_decoy_fraction: float = 0.10
    ablation: AblationPlant | None = None
    voltage_missing_fraction: float = 0.0
    line_name_noise: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        doc = asdict(self)
        return doc


@dataclass
class _Event:
    sub: int
    time_min: float
    cause: str
    equipment: str
    duration_min: float
    customers: int


@dataclass
class ScenarioData:
    raw_incidents: list[RawIncident]
    substations: list[SubstationRecord]
    lines: list[LineRecord]
    feeders: list[FeederRecord]
    truth: dict


def _sample_mix(rng: np.random.Generator, mix: dict[str, float], n: int) -> list[str]:
    names = sorted(mix)
    probs = np.array([mix[k] for k in names], dtype=float)
    probs = probs / probs.sum()
    return [names[i] for i in rng.choice(len(names), size=n, p=probs)]


def generate(cfg: ScenarioConfig) -> ScenarioData:
    """Build the full scenario in memory. Same config -> identical output."""
    rng = np.random.default_rng(cfg.seed)
    start = datetime.strptime(cfg.start, TIMESTAMP_FORMAT)
    total_minutes = cfg.days * 24 * 60

    if cfg.n_substations <= 0 or cfg.days <= 0:
        raise ScenarioError("n_substations and days must be positive")

    # --- substations ------------------------------------------------------
    clusters = cfg.clusters or [ClusterPlant(
        size=cfg.n_substations, center_lat=35.3, center_lon=-97.4, spread_deg=0.8)]
    if sum(c.size for c in clusters) != cfg.n_substations:
        raise ScenarioError("cluster sizes must sum to n_substations")

    subs: list[SubstationRecord] = []
    cluster_of: dict[str, int] = {}
    cities: list[str] = []
    for ci, cl in enumerate(clusters):
        volt = cl.voltage_kv if cfg.clusters else VOLTAGE_CLASSES[ci % len(VOLTAGE_CLASSES)]
        for j in range(cl.size):
            sid = f"SUB_{len(subs):04d}"
            lat = cl.center_lat + rng.normal(0.0, cl.spread_deg)
            lon = cl.center_lon + rng.normal(0.0, cl.spread_deg)
            missing = rng.random() < cfg.voltage_missing_fraction
            subs.append(SubstationRecord(sid, round(lat, 6), round(lon, 6),
                                         None if missing else volt, "DISTRIBUTION"))
            cluster_of[sid] = ci
            cities.append(f"CITY_{ci}_{j % 3}")

    # --- rate -------------------------------------------------------------
    rate = cfg.rate_per_day
    if cfg.n_incidents > 0:
        rate = cfg.n_incidents / (cfg.n_substations * cfg.days)
    if rate <= 0:
        raise ScenarioError("incident rate must be positive")

    # --- lines ------------------------------------------------------------
    lines: list[LineRecord] = []
    planted_lines: list[tuple[str, str]] = []
    line_pairs: set[tuple[int, int]] = set()

    def add_line(u: int, v: int) -> None:
        key = (min(u, v), max(u, v))
        if key in line_pairs or u == v:
            return
        line_pairs.add(key)
        su, sv = subs[key[0]], subs[key[1]]
        volt = su.voltage_kv or sv.voltage_kv or 69.0
        dist = _hav(su.lat, su.lon, sv.lat, sv.lon)
        name_a, name_b = su.id, sv.id
        if cfg.line_name_noise > 0 and rng.random() < cfg.line_name_noise:
            name_a = name_a[0] + name_a  # doubled first letter: 1 edit from truth
        lines.append(LineRecord(
            name=f"LINE_{len(lines):04d} {volt:g}kV",
            endpoint_a=name_a, endpoint_b=name_b,
            const_volt=volt, shape_length_km=round(dist * 1.1, 3)))
        planted_lines.append((su.id, sv.id))

    offset = 0
    for cl in clusters:
        members = list(range(offset, offset + cl.size))
        for a, b in zip(members, members[1:]):
            add_line(a, b)
        offset += cl.size
    for _ in range(cfg.n_extra_lines):
        ci = int(rng.integers(0, len(clusters)))
        base = sum(c.size for c in clusters[:ci])
        size = clusters[ci].size
        if size >= 2:
            u, v = rng.choice(size, size=2, replace=False)
            add_line(base + int(u), base + int(v))

    # --- baseline events ---------------------------------------------------
    events: list[list[_Event]] = []
    offset = 0
    for ci, cl in enumerate(clusters):
        mix = cl.cause_mix or cfg.cause_mix
        for j in range(cl.size):
            n_ev = int(rng.poisson(rate * cfg.days))
            times = np.sort(rng.uniform(0.0, total_minutes, size=n_ev))
            causes = _sample_mix(rng, mix, n_ev)
            equips = _sample_mix(rng, EQUIPMENT_MIX, n_ev)
            durations = np.clip(rng.lognormal(math.log(45.0), 0.5, size=n_ev), 5.0, 240.0)
            customers = rng.poisson(45.0, size=n_ev) + 5
            events.append([_Event(offset + j, float(t), c, e, float(d), int(cu))
                           for t, c, e, d, cu in zip(times, causes, equips, durations, customers)])
        offset += cl.size

    truth: dict = {
        "config": cfg.to_dict(),
        "substation_ids": [s.id for s in subs],
        "cluster_of": cluster_of if cfg.clusters else {},
        "planted_lines": [list(p) for p in planted_lines],
        "planted_causal_pairs": [],
        "planted_positives": [],
        "negative_decoys": [],
        "ablation": None,
        "invalid_records": [],
    }

    # --- planted causal pairs ----------------------------------------------
    for plant in cfg.planted_causal_pairs:
        if not (0 <= plant.u < len(subs) and 0 <= plant.v < len(subs)) or plant.u == plant.v:
            raise ScenarioError(f"bad causal plant pair ({plant.u}, {plant.v})")
        if plant.events < 3:
            raise ScenarioError("causal plants need at least 3 aligned events")
        add_line(plant.u, plant.v)
        anchor_times = np.sort(rng.uniform(0.05 * total_minutes, 0.95 * total_minutes,
                                           size=plant.events))
        for t in anchor_times:
            lag = float(rng.uniform(5.0, 120.0))
            for sub_idx, tt in ((plant.u, float(t)), (plant.v, float(t) + lag)):
                events[sub_idx].append(_Event(sub_idx, tt, plant.cause, "SWITCH",
                                              float(rng.uniform(20.0, 60.0)),
                                              int(rng.poisson(40.0) + 5)))
        truth["planted_causal_pairs"].append({
            "u": subs[plant.u].id, "v": subs[plant.v].id,
            "cause": plant.cause, "boost": plant.boost, "events": plant.events})

    # --- maintenance positives ----------------------------------------------
    trigger_day_lo = cfg.days - 290
    if cfg.planted_positive_rate > 0 or cfg.ablation is not None:
        if trigger_day_lo <= 30:
            raise ScenarioError("scenario too short to host maintenance triggers")

    def plant_trigger(sub_idx: int, quiet: bool) -> None:
        """Severe-cause/critical-equipment trigger; quiet or majored follow-up.

        The trigger outage is far longer than the long-duration history, so a
        substation's customer-weighted mean duration clears the per-incident
        p90 reference even when every substation gets this treatment.
        """
        t_trig = float(rng.uniform(trigger_day_lo, trigger_day_lo + 20) * 1440.0)
        for _ in range(6):  # long-duration history establishing high SAIDI
            t = float(rng.uniform(0.0, t_trig - 10 * 1440.0))
            events[sub_idx].append(_Event(sub_idx, t, _sample_mix(rng, cfg.cause_mix, 1)[0],
                                          CRITICAL_EQUIPMENT,
                                          float(rng.uniform(560.0, 640.0)),
                                          int(rng.uniform(2000, 3000))))
        events[sub_idx].append(_Event(sub_idx, t_trig, SEVERE_CAUSE, CRITICAL_EQUIPMENT,
                                      float(rng.uniform(1440.0, 1560.0)),
                                      int(rng.uniform(3800, 4600))))
        window_end = t_trig + 185 * 1440.0
        for ev in events[sub_idx]:
            # Keep the quiet window clean of anything that could count as
            # "major"; short events (including planted bursts) stay untouched.
            if (t_trig < ev.time_min <= window_end
                    and (ev.duration_min > 120.0 or ev.cause == SEVERE_CAUSE)):
                ev.cause = "ANIMAL"
                ev.equipment = "FUSE"
                ev.duration_min = float(rng.uniform(10.0, 40.0))
        if not quiet:
            # A severe-cause follow-up inside the quiet window forces y=0.
            t_major = t_trig + float(rng.uniform(20, 80)) * 1440.0
            events[sub_idx].append(_Event(sub_idx, t_major, SEVERE_CAUSE, "BREAKER",
                                          float(rng.uniform(560.0, 640.0)), 50))

    if cfg.planted_positive_rate > 0 and cfg.ablation is None:
        n_pos = int(round(cfg.planted_positive_rate * len(subs)))
        order = rng.permutation(len(subs))
        positives = sorted(int(i) for i in order[:n_pos])
        n_decoy = int(round(cfg.negative_decoy_fraction * len(subs)))
        decoys = sorted(int(i) for i in order[n_pos:n_pos + n_decoy])
        for i in positives:
            plant_trigger(i, quiet=True)
        for i in decoys:
            plant_trigger(i, quiet=False)
        truth["planted_positives"] = [subs[i].id for i in positives]
        truth["negative_decoys"] = [subs[i].id for i in decoys]

    # --- ablation scenario ---------------------------------------------------
    if cfg.ablation is not None:
        _plant_ablation(cfg, rng, subs, cities, cluster_of, events, add_line,
                        plant_trigger, truth, total_minutes)

    # --- feeders --------------------------------------------------------------
    feeders: list[FeederRecord] = []
    cluster_volt = {ci: (cl.voltage_kv if cfg.clusters else VOLTAGE_CLASSES[ci % len(VOLTAGE_CLASSES)])
                    for ci, cl in enumerate(clusters)}
    for s in subs:
        volt = s.voltage_kv if s.voltage_kv is not None else cluster_volt[cluster_of.get(s.id, 0)]
        for fi in range(2):
            feeders.append(FeederRecord(f"FD_{s.id}_{fi}", s.id, volt))

    # --- flatten, sort, emit ----------------------------------------------------
    flat = [ev for per_sub in events for ev in per_sub]
    flat.sort(key=lambda e: (e.time_min, e.sub, e.cause))
    raw: list[RawIncident] = []
    feeder_names = {s.id: f"FD_{s.id}_0" for s in subs}
    for k, ev in enumerate(flat):
        t_off = start + timedelta(seconds=round(ev.time_min * 60.0))
        t_on = t_off + timedelta(seconds=round(ev.duration_min * 60.0))
        sid = subs[ev.sub].id
        raw.append(RawIncident(
            id=f"INC_{k:06d}", substation_raw=sid,
            t_off_raw=t_off.strftime(TIMESTAMP_FORMAT),
            t_on_raw=t_on.strftime(TIMESTAMP_FORMAT),
            cause=ev.cause, equipment=ev.equipment,
            customers_affected=ev.customers,
            feeder=feeder_names[sid], city=cities[ev.sub]))

    # --- planted invalid rows -----------------------------------------------
    kinds = ["MISSING_OFF", "MISSING_ON", "INVERTED", "BAD_SUBSTATION"]
    for k in range(cfg.planted_invalid):
        kind = kinds[k % len(kinds)]
        rid = f"REJ_{k:04d}"
        t = start + timedelta(minutes=60 * k + 30)
        t_off, t_on = t.strftime(TIMESTAMP_FORMAT), (t + timedelta(minutes=45)).strftime(TIMESTAMP_FORMAT)
        sid = subs[k % len(subs)].id
        if kind == "MISSING_OFF":
            row = RawIncident(rid, sid, "", t_on, "WEATHER", "FUSE", 10, "", "")
            reason = "MISSING_TIME"
        elif kind == "MISSING_ON":
            row = RawIncident(rid, sid, t_off, "", "WEATHER", "FUSE", 10, "", "")
            reason = "MISSING_TIME"
        elif kind == "INVERTED":
            row = RawIncident(rid, sid, t_on, t_off, "WEATHER", "FUSE", 10, "", "")
            reason = "INVERTED_TIME"
        else:
            row = RawIncident(rid, "NO SUCH STATION XYZQ", t_off, t_on, "WEATHER", "FUSE", 10, "", "")
            reason = "NO_SUBSTATION"
        raw.append(row)
        truth["invalid_records"].append([rid, reason])

    truth["n_incidents"] = len(raw)
    return ScenarioData(raw_incidents=raw, substations=subs, lines=lines,
                        feeders=feeders, truth=truth)


def _plant_ablation(cfg: ScenarioConfig, rng: np.random.Generator,
                    subs: list[SubstationRecord], cities: list[str],
                    cluster_of: dict[str, int],
                    events: list[list[_Event]], add_line, plant_trigger,
                    truth: dict, total_minutes: float) -> None:
    """Hide label signal in each layer behind hub-adjacency.

    Three hub substations carry a distinctive plant class. Group members are
    positives detectable only through their layer's edges to the hub: lines
    (spatial), aligned incident bursts (temporal), or cause-specific aligned
    bursts that only enrichment separates from decoys (causal). Every
    substation receives the same long-incident/trigger treatment, so node
    features alone carry no label signal.
    """
    ab = cfg.ablation
    n_regular = len(subs)
    gs, gt, gc = ab.sizes()
    need = gs + gt + gc + ab.causal_decoys
    if need > n_regular:
        raise ScenarioError("ablation groups larger than the substation pool")

    hubs: dict[str, int] = {}
    for name in ("spatial", "temporal", "causal"):
        idx = len(subs)
        sid = f"HUB_{name.upper()}"
        anchor = subs[0]
        subs.append(SubstationRecord(sid, anchor.lat + 1.5, anchor.lon + 1.5
                                     + 0.3 * len(hubs), 69.0, "HUB"))
        cities.append(f"CITY_HUB_{name}")
        cluster_of[sid] = -1
        events.append([])
        hubs[name] = idx

    order = rng.permutation(n_regular)
    group_spatial = sorted(int(i) for i in order[:gs])
    group_temporal = sorted(int(i) for i in order[gs:gs + gt])
    group_causal = sorted(int(i) for i in order[gs + gt:gs + gt + gc])
    decoys = sorted(int(i) for i in order[gs + gt + gc:need])

    for i in group_spatial:
        add_line(hubs["spatial"], i)
    for i in group_causal + decoys:
        add_line(hubs["causal"], i)

    # Temporal bursts: hub emits anchor events; members repurpose their own
    # baseline events onto those anchors so per-node totals stay untouched.
    anchors_t = np.sort(rng.uniform(0.05 * total_minutes, 0.60 * total_minutes,
                                    size=ab.events_per_pair))
    for t in anchors_t:
        events[hubs["temporal"]].append(_Event(hubs["temporal"], float(t), "WEATHER",
                                               "SWITCH", 30.0, 20))
    for i in group_temporal:
        _repurpose(rng, events[i], ab.events_per_pair,
                   [float(t) + float(rng.uniform(5.0, 30.0)) for t in anchors_t])

    # Causal bursts: aligned LIGHTNING co-occurrences with the causal hub.
    # Decoys get the same lightning volume at unaligned times, so cause counts
    # cannot separate members from decoys; only enrichment can.
    anchors_c = np.sort(rng.uniform(0.05 * total_minutes, 0.60 * total_minutes,
                                    size=ab.events_per_pair))
    for t in anchors_c:
        events[hubs["causal"]].append(_Event(hubs["causal"], float(t), "LIGHTNING",
                                             "SWITCH", 30.0, 20))
    for i in group_causal:
        moved = _repurpose(rng, events[i], ab.events_per_pair,
                           [float(t) + float(rng.uniform(5.0, 100.0)) for t in anchors_c])
        for ev in moved:
            ev.cause = "LIGHTNING"
    for i in decoys:
        chosen = _pick(rng, events[i], ab.events_per_pair)
        for ev in chosen:
            ev.cause = "LIGHTNING"

    positives = set(group_spatial) | set(group_temporal) | set(group_causal)
    for i in range(len(subs)):
        plant_trigger(i, quiet=(i in positives))

    truth["ablation"] = {
        "spatial": [subs[i].id for i in group_spatial],
        "temporal": [subs[i].id for i in group_temporal],
        "causal": [subs[i].id for i in group_causal],
        "causal_decoys": [subs[i].id for i in decoys],
        "hubs": {k: subs[v].id for k, v in hubs.items()},
    }
    truth["planted_positives"] = sorted(subs[i].id for i in positives)


def _pick(rng: np.random.Generator, evs: list[_Event], n: int) -> list[_Event]:
    if len(evs) < n:
        raise ScenarioError("not enough baseline events to repurpose; raise the rate")
    idx = rng.choice(len(evs), size=n, replace=False)
    return [evs[int(i)] for i in idx]


def _repurpose(rng: np.random.Generator, evs: list[_Event], n: int,
               new_times: list[float]) -> list[_Event]:
    chosen = _pick(rng, evs, n)
    for ev, t in zip(chosen, new_times):
        ev.time_min = t
        ev.duration_min = float(rng.uniform(20.0, 60.0))
    return chosen


def _hav(lat1, lon1, lat2, lon2) -> float:
    r = 6371.0
    p1, p2 = math.radians(lat1), math.radians(lat2)
    a = (math.sin((p2 - p1) / 2) ** 2
         + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2)
    return 2 * r * math.asin(min(1.0, math.sqrt(a)))


# ---------------------------------------------------------------------------
# File output
# ---------------------------------------------------------------------------

def write_scenario(data: ScenarioData, outdir: Path | str) -> dict[str, Path]:
    """Write incidents/substations/lines/feeders CSVs and ground_truth.json."""
    import csv

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {name: outdir / f"{name}.csv"
             for name in ("incidents", "substations", "lines", "feeders")}
    paths["ground_truth"] = outdir / "ground_truth.json"

    with open(paths["incidents"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "substation", "t_off", "t_on", "cause", "equipment",
                    "customers_affected", "feeder", "city"])
        for r in data.raw_incidents:
            w.writerow([r.id, r.substation_raw, r.t_off_raw, r.t_on_raw, r.cause,
                        r.equipment, r.customers_affected, r.feeder, r.city])

    with open(paths["substations"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lat", "lon", "voltage_kv", "plant_class"])
        for s in data.substations:
            w.writerow([s.id, s.lat, s.lon,
                        "" if s.voltage_kv is None else s.voltage_kv, s.plant_class])

    with open(paths["lines"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "endpoint_a", "endpoint_b", "const_volt", "shape_length_km"])
        for ln in data.lines:
            w.writerow([ln.name, ln.endpoint_a, ln.endpoint_b, ln.const_volt,
                        ln.shape_length_km])

    with open(paths["feeders"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feeder", "substation", "voltage_kv"])
        for fd in data.feeders:
            w.writerow([fd.feeder, fd.substation, fd.voltage_kv])

    with open(paths["ground_truth"], "w") as fh:
        fh.write(canonical_json(data.truth))
    return paths


# ---------------------------------------------------------------------------
# Scenario presets used throughout the test suite
# ---------------------------------------------------------------------------

def scenario_causal_recovery(n_substations: int = 200, n_pairs: int = 20,
                             boost: float = 10.0, seed: int = 7) -> ScenarioConfig:
    rng = np.random.default_rng(seed + 1000)
    order = rng.permutation(n_substations)
    pairs = [CausalPlant(int(order[2 * i]), int(order[2 * i + 1]), boost=boost)
             for i in range(n_pairs)]
    return ScenarioConfig(n_substations=n_substations, n_extra_lines=60,
                          planted_causal_pairs=pairs, seed=seed)


def scenario_null(n_substations: int = 200, seed: int = 11) -> ScenarioConfig:
    return ScenarioConfig(n_substations=n_substations, n_extra_lines=60, seed=seed)


def scenario_ablation(seed: int = 3) -> ScenarioConfig:
    return ScenarioConfig(n_substations=120, n_extra_lines=50, rate_per_day=0.06,
                          ablation=AblationPlant(), seed=seed)


def scenario_clusters(n_clusters: int = 5, size: int = 30, seed: int = 5) -> ScenarioConfig:
    dominant = ["VEGETATION", "LIGHTNING", "WEATHER", "EQUIPMENT FAILURE", "PLANNED"]
    clusters = []
    for k in range(n_clusters):
        mix = {c: 0.05 for c in CAUSES}
        mix[dominant[k % len(dominant)]] = 0.7
        clusters.append(ClusterPlant(
            size=size, center_lat=34.0 + 1.1 * (k % 3), center_lon=-99.0 + 1.4 * (k // 3),
            spread_deg=0.10, voltage_kv=69.0, cause_mix=mix))
    return ScenarioConfig(n_substations=n_clusters * size, n_extra_lines=60,
                          rate_per_day=0.15, clusters=clusters, seed=seed)


def scenario_positive_rate(rate: float = 0.19, n_substations: int = 300,
                           seed: int = 13) -> ScenarioConfig:
    return ScenarioConfig(n_substations=n_substations, n_extra_lines=80,
                          planted_positive_rate=rate, seed=seed)
