"""Aggregated run report: metric tables, cluster summaries, and figures.

The report stage collects whatever artifacts exist in the run directory,
verifies they all carry the same configuration hash, and emits delimited
tables plus matplotlib figures rendered to files. Figure output is
deterministic: a fixed SVG hash salt and no embedded timestamps.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import ingest
from .graphbuild import RISK_CATEGORIES
from .pipeline import MissingArtifact, PipelineConfig, _outdir, _read_json
from .util import canonical_json

plt.rcParams["svg.hashsalt"] = "outagegraph"
_SAVE_KW = {"metadata": {"Date": None}}

METRICS = ("accuracy", "precision", "recall", "f1")


def _fmt(summary: dict) -> dict:
    return {m: f"{summary[m]['mean']:.4f} ± {summary[m]['sd']:.4f}" for m in METRICS}


def build_report(cfg: PipelineConfig) -> dict:
    out = _outdir(cfg)
    figures = out / "figures"
    figures.mkdir(exist_ok=True)

    train = _maybe(cfg, out / "train_metrics.json")
    ablation = _maybe(cfg, out / "ablation.json")
    baselines = _maybe(cfg, out / "baseline_metrics.json")
    clusters = _maybe(cfg, out / "clusters.json")
    if train is None and clusters is None:
        raise MissingArtifact(str(out / "train_metrics.json"))

    effective = {k: v for k, v in cfg.to_dict().items() if k != "outdir"}
    report: dict = {"config": effective, "config_hash": cfg.hash, "tables": {}}

    # --- classifier metrics table (mean ± sd per window, per model) --------
    rows: list[dict] = []
    if train:
        for window, entry in sorted(train.items(), key=lambda kv: int(kv[0])):
            rows.append({"window_days": int(window), "model": "multilayer_gnn",
                         **_fmt(entry["summary"])})
    if baselines:
        names = {"random_forest": "random_forest", "gradient_boosting": "gradient_boosting"}
        for window, models in sorted(baselines.get("classification", {}).items(),
                                     key=lambda kv: int(kv[0])):
            for model, entry in sorted(models.items()):
                rows.append({"window_days": int(window), "model": names.get(model, model),
                             **_fmt(entry["summary"])})
    if ablation:
        for name, summary in sorted(ablation["results"].items()):
            rows.append({"window_days": ablation["window"], "model": f"ablation:{name}",
                         **_fmt(summary)})
    if rows:
        with open(out / "pdm_metrics.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["window_days", "model", *METRICS])
            w.writeheader()
            w.writerows(rows)
        report["tables"]["pdm_metrics"] = rows
        _figure_f1(rows, figures / "pdm_f1.svg")

    # --- clustering quality comparison --------------------------------------
    quality_rows: list[dict] = []
    if clusters and clusters["quality"].get("silhouette") is not None:
        q = clusters["quality"]
        avg_p = (float(np.mean([a["p"] for a in q.get("anova", {}).values()]))
                 if q.get("anova") else None)
        quality_rows.append({"method": "risk_gnn_hdbscan",
                             "silhouette": q["silhouette"],
                             "davies_bouldin": q["davies_bouldin"],
                             "avg_risk_p": avg_p, "n_clusters": q["n_clusters"]})
    if baselines:
        for method in ("kmeans", "spectral"):
            entry = baselines.get("clustering", {}).get(method)
            if entry:
                quality_rows.append({"method": method,
                                     "silhouette": entry["silhouette"],
                                     "davies_bouldin": entry["davies_bouldin"],
                                     "avg_risk_p": entry["avg_risk_p"],
                                     "n_clusters": entry["n_clusters"]})
    if quality_rows:
        with open(out / "cluster_quality.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["method", "silhouette", "davies_bouldin",
                                               "avg_risk_p", "n_clusters"])
            w.writeheader()
            w.writerows(quality_rows)
        report["tables"]["cluster_quality"] = quality_rows

    # --- cluster profile figures --------------------------------------------
    if clusters:
        report["tables"]["cluster_profiles"] = clusters["profiles"]
        report["edge_ratios"] = clusters["edge_ratios"]
        _figure_recovery_boxplot(cfg, out, clusters, figures / "recovery_boxplot.svg")
        _figure_risk_heatmap(clusters, figures / "cluster_risk.svg")
    if train:
        _figure_history(train, figures / "training_loss.svg")
    _figure_cause_mix(cfg, out, figures / "cause_mix.svg")

    (out / "report.json").write_text(canonical_json(
        {"config_hash": cfg.hash, "payload": report}))
    return report


def _maybe(cfg: PipelineConfig, path: Path):
    if not path.exists():
        return None
    return _read_json(cfg, path)  # raises ConfigError on hash mismatch


def _figure_f1(rows: list[dict], path: Path) -> None:
    windows = sorted({r["window_days"] for r in rows})
    models = sorted({r["model"] for r in rows})
    fig, ax = plt.subplots(figsize=(8, 4.5))
    width = 0.8 / len(models)
    for mi, model in enumerate(models):
        xs, means, sds = [], [], []
        for wi, window in enumerate(windows):
            match = [r for r in rows if r["model"] == model and r["window_days"] == window]
            if match:
                mean, sd = match[0]["f1"].split(" ± ")
                xs.append(wi + mi * width)
                means.append(float(mean))
                sds.append(float(sd))
        ax.bar(xs, means, width=width, yerr=sds, label=model, capsize=2)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(windows))])
    ax.set_xticklabels([f"{w}d" for w in windows])
    ax.set_ylabel("F1 score")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=7)
    ax.set_title("Maintenance classification by window")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def _figure_recovery_boxplot(cfg: PipelineConfig, out: Path, clusters: dict,
                             path: Path) -> None:
    labels_by_id = clusters["labels"]
    raws = ingest.read_raw_incidents(out / "clean_incidents.csv")
    durations: dict[int, list[float]] = {}
    # Raw rows reparse quickly; duration = t_on - t_off in minutes.
    from datetime import datetime
    for r in raws:
        c = labels_by_id.get(r.substation_raw, -1)
        if c < 0:
            continue
        t_off = datetime.strptime(r.t_off_raw, ingest.TIMESTAMP_FORMAT)
        t_on = datetime.strptime(r.t_on_raw, ingest.TIMESTAMP_FORMAT)
        durations.setdefault(c, []).append((t_on - t_off).total_seconds() / 60.0)
    if not durations:
        return
    keys = sorted(durations)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.boxplot([durations[k] for k in keys], tick_labels=[str(k) for k in keys],
               showfliers=False)
    ax.set_xlabel("cluster")
    ax.set_ylabel("recovery time (minutes)")
    ax.set_title("Recovery time distribution by cluster")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def _figure_risk_heatmap(clusters: dict, path: Path) -> None:
    profiles = clusters["profiles"]
    if not profiles:
        return
    mat = np.array([[p["mean_risk"][c] for c in RISK_CATEGORIES] for p in profiles])
    fig, ax = plt.subplots(figsize=(6, 0.6 * len(profiles) + 1.5))
    im = ax.imshow(mat, aspect="auto", cmap="viridis", vmin=0.0)
    ax.set_xticks(range(len(RISK_CATEGORIES)))
    ax.set_xticklabels(RISK_CATEGORIES, rotation=30, ha="right")
    ax.set_yticks(range(len(profiles)))
    ax.set_yticklabels([f"cluster {p['cluster']}" for p in profiles])
    fig.colorbar(im, ax=ax, label="mean normalized risk")
    ax.set_title("Cluster risk profiles")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def _figure_history(train: dict, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    plotted = False
    for window, entry in sorted(train.items(), key=lambda kv: int(kv[0])):
        for fold, history in enumerate(entry.get("history", [])):
            if not history:
                continue
            ax.plot([h["epoch"] for h in history], [h["val_loss"] for h in history],
                    lw=0.8, label=f"{window}d fold {fold}")
            plotted = True
    if not plotted:
        plt.close(fig)
        return
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation focal loss")
    ax.set_title("Training trajectories")
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def _figure_cause_mix(cfg: PipelineConfig, out: Path, path: Path) -> None:
    clean_path = out / "clean_incidents.csv"
    if not clean_path.exists():
        return
    counts: dict[str, int] = {}
    with open(clean_path, newline="") as fh:
        for row in csv.DictReader(fh):
            counts[row["cause"]] = counts.get(row["cause"], 0) + 1
    if not counts:
        return
    causes = sorted(counts, key=lambda c: -counts[c])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(causes)), [counts[c] for c in causes])
    ax.set_xticks(range(len(causes)))
    ax.set_xticklabels(causes, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("incidents")
    ax.set_title("Incident cause distribution")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
