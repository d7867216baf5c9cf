"""Weighted multilayer graph construction from the clean dataset.

Three typed edge layers over one substation node set:

* spatial  -- matched physical lines (unit weight) plus distance-decay
  proximity links between same-voltage pairs co-affected by weather,
* temporal -- exponentially time-decayed co-occurrence pairs filtered by an
  adaptive count threshold,
* causal   -- per-cause co-failure pairs whose Poisson enrichment z-score
  clears the upper-percentile cut, restricted to spatially adjacent pairs.

All percentile rules use linear interpolation (see util.percentile_linear).
The assembled graph serializes to a single JSON document that reloads
bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import CleanDataset, line_endpoint_match
from .util import NumericError, config_hash, percentile_linear, zstandardize

EARTH_RADIUS_KM = 6371.0

RISK_CATEGORIES = ("vegetation", "lightning", "weather", "equipment")

# Keyword buckets for mapping free-text causes onto the four risk categories.
_RISK_KEYWORDS = {
    "vegetation": ("VEGETATION", "TREE", "LIMB", "BRANCH"),
    "lightning": ("LIGHTNING",),
    "weather": ("WEATHER", "STORM", "WIND", "ICE", "SNOW", "RAIN", "TORNADO", "HAIL"),
    "equipment": ("EQUIPMENT", "FAILURE", "TRANSFORMER", "BREAKER", "CABLE"),
}


def classify_cause(cause: str) -> str | None:
    """Map a cause string to a risk category, or None if unclassified."""
    up = cause.upper()
    for category, keywords in _RISK_KEYWORDS.items():
        if any(k in up for k in keywords):
            return category
    return None


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on the mean-radius sphere (kilometers)."""
    for v in (lat1, lon1, lat2, lon2):
        if not math.isfinite(v):
            raise NumericError(f"non-finite coordinate: {v}")
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


@dataclass(frozen=True)
class SpatialEdge:
    u: int
    v: int
    has_line: int
    is_nearby: int
    line_voltage_kv: float | None
    line_length_km: float
    distance_km: float
    shared_cities: int
    shared_feeders: int
    weight: float


@dataclass(frozen=True)
class TemporalEdge:
    u: int
    v: int
    weight: float
    cooccurrence_count: int


@dataclass(frozen=True)
class CausalEdge:
    u: int
    v: int
    cause: str
    z_score: float
    cooccur_ratio: float
    window_hrs: float
    cooccur_count: int


@dataclass
class GraphConfig:
    theta_max_hrs: float = 168.0          # cap on per-cause co-occurrence windows
    proximity_percentile: float = 75.0
    temporal_percentile: float = 80.0
    z_percentile: float = 85.0
    decay_minutes: float = 60.0
    weather_window_minutes: float = 60.0  # co-affection window for proximity pairs
    min_cooccur: int = 3

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NodeFeatures:
    ids: list[str]
    feature_names: list[str]
    raw: np.ndarray            # (n, d) unstandardized
    standardized: np.ndarray   # (n, d) z-scored numeric block, raw lat/lon & one-hot
    means: np.ndarray
    sds: np.ndarray
    standardize_mask: np.ndarray  # bool per column: True where z-scoring applies


@dataclass
class MultilayerGraph:
    nodes: NodeFeatures
    spatial: list[SpatialEdge]
    temporal: list[TemporalEdge]
    causal: list[CausalEdge]
    metadata: dict

    @property
    def n_nodes(self) -> int:
        return len(self.nodes.ids)

    def index_of(self) -> dict[str, int]:
        return {sid: k for k, sid in enumerate(self.nodes.ids)}


# ---------------------------------------------------------------------------
# Spatial layer
# ---------------------------------------------------------------------------

def _epoch_minutes(ts: datetime) -> float:
    return ts.timestamp() / 60.0


def build_spatial_layer(clean: CleanDataset, cfg: GraphConfig | None = None
                        ) -> tuple[list[SpatialEdge], list[dict], dict]:
    """Physical-line edges plus weather-co-affection proximity edges.

    Returns (edges, review_rows, info). Review rows are line endpoints whose
    match score fell in the manual-review band; they are excluded from the
    automated graph.
    """
    cfg = cfg or GraphConfig()
    subs = clean.substations
    index = {s.id: k for k, s in enumerate(subs)}
    ids = list(index)

    cities: dict[int, set[str]] = {k: set() for k in range(len(subs))}
    feeders: dict[int, set[str]] = {k: set() for k in range(len(subs))}
    for inc in clean.incidents:
        k = index.get(inc.substation)
        if k is None:
            continue
        if inc.city:
            cities[k].add(inc.city)
        if inc.feeder:
            feeders[k].add(inc.feeder)

    def shared(u: int, v: int) -> tuple[int, int]:
        return len(cities[u] & cities[v]), len(feeders[u] & feeders[v])

    edges: dict[tuple[int, int], SpatialEdge] = {}
    review_rows: list[dict] = []
    for line in clean.lines:
        ma = line_endpoint_match(line.endpoint_a, ids)
        mb = line_endpoint_match(line.endpoint_b, ids)
        if ma.needs_review or mb.needs_review:
            review_rows.append({
                "line": line.name,
                "endpoint_a": line.endpoint_a, "endpoint_b": line.endpoint_b,
                "score_a": round(100 * ma.score), "score_b": round(100 * mb.score),
            })
            continue
        if ma.matched_id is None or mb.matched_id is None:
            continue
        u, v = index[ma.matched_id], index[mb.matched_id]
        if u == v:
            continue
        if u > v:
            u, v = v, u
        sc, sf = shared(u, v)
        dist = haversine_km(subs[u].lat, subs[u].lon, subs[v].lat, subs[v].lon)
        edges[(u, v)] = SpatialEdge(u=u, v=v, has_line=1, is_nearby=0,
                                    line_voltage_kv=line.const_volt,
                                    line_length_km=line.shape_length_km,
                                    distance_km=dist, shared_cities=sc,
                                    shared_feeders=sf, weight=1.0)

    # Proximity sub-layer: pairs of substations co-affected by weather
    # incidents within the co-affection window, same voltage class, and
    # closer than the chosen percentile of co-affected-pair distances.
    weather = sorted((inc for inc in clean.incidents
                      if classify_cause(inc.cause) == "weather"),
                     key=lambda i: (i.t_off, i.id))
    times = [_epoch_minutes(i.t_off) for i in weather]
    co_pairs: list[tuple[int, int]] = []
    co_distances: list[float] = []
    for a in range(len(weather)):
        b = a + 1
        while b < len(weather) and times[b] - times[a] <= cfg.weather_window_minutes:
            ua = index.get(weather[a].substation)
            vb = index.get(weather[b].substation)
            if ua is not None and vb is not None and ua != vb:
                u, v = (ua, vb) if ua < vb else (vb, ua)
                co_pairs.append((u, v))
                co_distances.append(haversine_km(subs[u].lat, subs[u].lon,
                                                 subs[v].lat, subs[v].lon))
            b += 1

    info = {"proximity_threshold_km": None, "n_weather_cooccurrences": len(co_pairs)}
    if co_pairs:
        threshold = percentile_linear(co_distances, cfg.proximity_percentile)
        info["proximity_threshold_km"] = threshold
        for (u, v), dist in sorted(set(zip(co_pairs, co_distances))):
            if (u, v) in edges or dist > threshold:
                continue
            volt_u, volt_v = subs[u].voltage_kv, subs[v].voltage_kv
            if volt_u is None or volt_v is None or volt_u != volt_v:
                continue
            sc, sf = shared(u, v)
            edges[(u, v)] = SpatialEdge(u=u, v=v, has_line=0, is_nearby=1,
                                        line_voltage_kv=None, line_length_km=0.0,
                                        distance_km=dist, shared_cities=sc,
                                        shared_feeders=sf,
                                        weight=1.0 / (1.0 + dist))

    return [edges[k] for k in sorted(edges)], review_rows, info


# ---------------------------------------------------------------------------
# Temporal layer
# ---------------------------------------------------------------------------

def build_temporal_layer(clean: CleanDataset, cfg: GraphConfig | None = None
                         ) -> tuple[list[TemporalEdge], dict]:
    """Time-decayed co-occurrence edges with adaptive count filtering.

    theta = chosen percentile of consecutive global inter-arrival gaps.
    Each incident at u pairs with subsequent incidents at v within theta
    minutes; pair weight exp(-dt/decay); aggregated per ordered (u, v) with
    mean weight; pairs kept when count >= max(min_cooccur, median count).
    """
    cfg = cfg or GraphConfig()
    index = {s.id: k for k, s in enumerate(clean.substations)}
    incs = sorted(clean.incidents, key=lambda i: (i.t_off, i.id))
    if len(incs) < 2:
        return [], {"theta_minutes": None, "k": None}

    times = np.array([_epoch_minutes(i.t_off) for i in incs])
    nodes = np.array([index[i.substation] for i in incs])
    gaps = np.diff(times)
    theta = percentile_linear(gaps, cfg.temporal_percentile)

    weight_sum: dict[tuple[int, int], float] = {}
    counts: dict[tuple[int, int], int] = {}
    limits = np.searchsorted(times, times + theta, side="right")
    for a in range(len(incs)):
        u = nodes[a]
        for b in range(a + 1, limits[a]):
            v = nodes[b]
            if v == u:
                continue
            w = math.exp(-(times[b] - times[a]) / cfg.decay_minutes)
            key = (int(u), int(v))
            weight_sum[key] = weight_sum.get(key, 0.0) + w
            counts[key] = counts.get(key, 0) + 1

    info: dict = {"theta_minutes": theta, "k": None, "n_candidate_pairs": len(counts)}
    if not counts:
        return [], info
    k = max(float(cfg.min_cooccur), float(np.median(list(counts.values()))))
    info["k"] = k
    edges = [TemporalEdge(u=u, v=v, weight=weight_sum[(u, v)] / counts[(u, v)],
                          cooccurrence_count=counts[(u, v)])
             for (u, v) in sorted(counts) if counts[(u, v)] >= k]
    return edges, info


def temporal_pair_weight(dt_minutes: float, decay_minutes: float = 60.0) -> float:
    """exp(-|dt|/decay): 1.0 at dt=0, strictly decreasing in |dt|."""
    return math.exp(-abs(dt_minutes) / decay_minutes)


# ---------------------------------------------------------------------------
# Causal layer
# ---------------------------------------------------------------------------

def poisson_enrichment(obs: int, rate_u_per_day: float, rate_v_per_day: float,
                       window_hrs: float, period_days: float) -> tuple[float, float]:
    """Expected co-occurrences under independence and the resulting z-score.

    E = rate_u * rate_v * window_days * period_days; Z = (obs - E) / sqrt(E).
    """
    expected = rate_u_per_day * rate_v_per_day * (window_hrs / 24.0) * period_days
    if expected <= 0.0:
        raise NumericError("expected co-occurrence count is zero")
    return expected, (obs - expected) / math.sqrt(expected)


def build_causal_layer(clean: CleanDataset, spatial: Sequence[SpatialEdge],
                       cfg: GraphConfig | None = None) -> tuple[list[CausalEdge], dict]:
    """Statistically enriched per-cause co-failure edges on spatial pairs.

    For each cause, the window is min(p75 of that cause's inter-arrival
    times, theta_max). Co-occurrences are counted forward in time for both
    orientations of every spatially adjacent pair; the stronger orientation
    represents the undirected edge. Edges survive when the z-score reaches
    the configured percentile of all computed z-scores and the observed
    count is at least min_cooccur.
    """
    cfg = cfg or GraphConfig()
    index = {s.id: k for k, s in enumerate(clean.substations)}
    incs = sorted(clean.incidents, key=lambda i: (i.t_off, i.id))
    info: dict = {"theta_c_hours": {}, "z_threshold": None, "n_candidates": 0}
    if len(incs) < 2:
        return [], info

    t0 = _epoch_minutes(incs[0].t_off)
    t1 = _epoch_minutes(incs[-1].t_off)
    period_days = (t1 - t0) / (60.0 * 24.0)
    if period_days <= 0.0:
        return [], info

    by_cause: dict[str, dict[int, list[float]]] = {}
    for inc in incs:
        node = index[inc.substation]
        by_cause.setdefault(inc.cause, {}).setdefault(node, []).append(
            _epoch_minutes(inc.t_off) / 60.0)  # hours

    pairs = [(e.u, e.v) for e in spatial]

    candidates: list[tuple[float, int, int, int, str, float, float]] = []
    for cause in sorted(by_cause):
        streams = by_cause[cause]
        all_times = sorted(t for ts in streams.values() for t in ts)
        if len(all_times) < 2:
            continue
        gaps = np.diff(all_times)
        theta_c = min(percentile_linear(gaps, 75.0), cfg.theta_max_hrs)
        info["theta_c_hours"][cause] = theta_c
        if theta_c <= 0.0:
            continue
        arrays = {n: np.array(ts) for n, ts in streams.items()}
        for u, v in pairs:
            for a, b in ((u, v), (v, u)):
                ta, tb = arrays.get(a), arrays.get(b)
                if ta is None or tb is None:
                    continue
                rate_a = len(ta) / period_days
                rate_b = len(tb) / period_days
                obs = int(np.sum(np.searchsorted(tb, ta + theta_c, side="right")
                                 - np.searchsorted(tb, ta, side="left")))
                try:
                    expected, z = poisson_enrichment(obs, rate_a, rate_b, theta_c, period_days)
                except NumericError:
                    continue  # E = 0: undefined z, pair skipped
                candidates.append((z, a, b, obs, cause, expected, theta_c))

    info["n_candidates"] = len(candidates)
    if not candidates:
        return [], info
    z_threshold = percentile_linear([c[0] for c in candidates], cfg.z_percentile)
    info["z_threshold"] = z_threshold

    best: dict[tuple[int, int, str], tuple] = {}
    for z, a, b, obs, cause, expected, theta_c in candidates:
        if z < z_threshold or obs < cfg.min_cooccur:
            continue
        key = (min(a, b), max(a, b), cause)
        if key not in best or z > best[key][0]:
            best[key] = (z, obs, expected, theta_c)
    edges = [CausalEdge(u=u, v=v, cause=cause, z_score=z,
                        cooccur_ratio=obs / expected, window_hrs=theta_c,
                        cooccur_count=obs)
             for (u, v, cause), (z, obs, expected, theta_c) in sorted(best.items())]
    info["n_retained"] = len(edges)
    return edges, info


# ---------------------------------------------------------------------------
# Node features
# ---------------------------------------------------------------------------

BASE_FEATURES = ["lat", "lon", "n_connections", "avg_line_voltage_kv",
                 "total_line_length_km", "incident_count", "mean_saifi",
                 "nominal_voltage_kv"]
RISK_FEATURES = [f"risk_{c}" for c in RISK_CATEGORIES]


def assemble_features(clean: CleanDataset, spatial: Sequence[SpatialEdge]) -> NodeFeatures:
    """Per-substation feature matrix, z-scored except geospatial and one-hot.

    mean_saifi is the substation's mean customers affected per incident,
    an interruption-frequency proxy at node granularity.
    """
    subs = clean.substations
    n = len(subs)
    index = {s.id: k for k, s in enumerate(subs)}

    n_conn = np.zeros(n)
    volt_sum = np.zeros(n)
    volt_cnt = np.zeros(n)
    length_sum = np.zeros(n)
    for e in spatial:
        for end in (e.u, e.v):
            n_conn[end] += 1
            length_sum[end] += e.line_length_km
            if e.line_voltage_kv is not None:
                volt_sum[end] += e.line_voltage_kv
                volt_cnt[end] += 1
    avg_volt = np.divide(volt_sum, volt_cnt, out=np.zeros(n), where=volt_cnt > 0)

    inc_count = np.zeros(n)
    cust_sum = np.zeros(n)
    risk = np.zeros((n, len(RISK_CATEGORIES)))
    for inc in clean.incidents:
        k = index[inc.substation]
        inc_count[k] += 1
        cust_sum[k] += inc.customers_affected
        cat = classify_cause(inc.cause)
        if cat is not None:
            risk[k, RISK_CATEGORIES.index(cat)] += 1
    mean_saifi = np.divide(cust_sum, inc_count, out=np.zeros(n), where=inc_count > 0)

    classes = sorted({s.plant_class for s in subs})
    onehot = np.zeros((n, len(classes)))
    for k, s in enumerate(subs):
        onehot[k, classes.index(s.plant_class)] = 1.0

    raw = np.column_stack([
        [s.lat for s in subs], [s.lon for s in subs],
        n_conn, avg_volt, length_sum, inc_count, mean_saifi,
        [s.voltage_kv if s.voltage_kv is not None else 0.0 for s in subs],
        risk, onehot,
    ])
    names = BASE_FEATURES + RISK_FEATURES + [f"class_{c}" for c in classes]
    mask = np.array([nm not in ("lat", "lon") and not nm.startswith("class_")
                     for nm in names])

    standardized = raw.copy()
    block, means_b, sds_b = zstandardize(raw[:, mask])
    standardized[:, mask] = block
    means = np.zeros(raw.shape[1])
    sds = np.ones(raw.shape[1])
    means[mask] = means_b
    sds[mask] = sds_b
    return NodeFeatures(ids=[s.id for s in subs], feature_names=names,
                        raw=raw, standardized=standardized,
                        means=means, sds=sds, standardize_mask=mask)


def standardize_with_mask(features: NodeFeatures, row_mask: np.ndarray) -> np.ndarray:
    """Re-standardize using statistics from the rows selected by row_mask.

    Used for fold-wise training so test-fold rows never contribute to the
    scaling statistics.
    """
    out = features.raw.copy()
    cols = features.standardize_mask
    block, _, _ = zstandardize(features.raw[:, cols], mask=row_mask)
    out[:, cols] = block
    return out


# ---------------------------------------------------------------------------
# Assembly and serialization
# ---------------------------------------------------------------------------

def build_graph(clean: CleanDataset, cfg: GraphConfig | None = None) -> MultilayerGraph:
    cfg = cfg or GraphConfig()
    spatial, review, spatial_info = build_spatial_layer(clean, cfg)
    temporal, temporal_info = build_temporal_layer(clean, cfg)
    causal, causal_info = build_causal_layer(clean, spatial, cfg)
    nodes = assemble_features(clean, spatial)
    metadata = {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg.to_dict()),
        "spatial": spatial_info,
        "temporal": temporal_info,
        "causal": causal_info,
        "review_lines": review,
        "base_feature_dim": len(BASE_FEATURES),
        "total_feature_dim": len(nodes.feature_names),
        "n_nodes": len(nodes.ids),
    }
    return MultilayerGraph(nodes=nodes, spatial=spatial, temporal=temporal,
                           causal=causal, metadata=metadata)


def graph_to_dict(graph: MultilayerGraph) -> dict:
    nf = graph.nodes
    return {
        "nodes": {
            "ids": nf.ids,
            "feature_names": nf.feature_names,
            "raw": nf.raw.tolist(),
            "standardized": nf.standardized.tolist(),
            "means": nf.means.tolist(),
            "sds": nf.sds.tolist(),
            "standardize_mask": nf.standardize_mask.astype(int).tolist(),
        },
        "edges": {
            "spatial": [asdict(e) for e in graph.spatial],
            "temporal": [asdict(e) for e in graph.temporal],
            "causal": [asdict(e) for e in graph.causal],
        },
        "metadata": graph.metadata,
    }


def graph_from_dict(doc: dict) -> MultilayerGraph:
    nd = doc["nodes"]
    nodes = NodeFeatures(
        ids=list(nd["ids"]),
        feature_names=list(nd["feature_names"]),
        raw=np.array(nd["raw"], dtype=float),
        standardized=np.array(nd["standardized"], dtype=float),
        means=np.array(nd["means"], dtype=float),
        sds=np.array(nd["sds"], dtype=float),
        standardize_mask=np.array(nd["standardize_mask"], dtype=bool),
    )
    return MultilayerGraph(
        nodes=nodes,
        spatial=[SpatialEdge(**e) for e in doc["edges"]["spatial"]],
        temporal=[TemporalEdge(**e) for e in doc["edges"]["temporal"]],
        causal=[CausalEdge(**e) for e in doc["edges"]["causal"]],
        metadata=doc["metadata"],
    )


def save_graph(graph: MultilayerGraph, path: Path | str) -> None:
    with open(path, "w") as fh:
        json.dump(graph_to_dict(graph), fh, sort_keys=True, separators=(",", ":"))


def load_graph(path: Path | str) -> MultilayerGraph:
    with open(path) as fh:
        return graph_from_dict(json.load(fh))
