"""Command-line pipeline driver.

Subcommands run one stage each over a shared run directory; every stage
reads the previous stage's file artifacts. Exit codes: 0 ok, 1 invalid
configuration, 2 missing upstream artifact, 3 numeric failure. The
OUTAGEGRAPH_SEED environment variable overrides the configured seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .gnn import TrainingError
from .pipeline import STAGES, ConfigError, MissingArtifact, PipelineConfig
from .util import NumericError, canonical_json

SEED_ENV = "OUTAGEGRAPH_SEED"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MISSING = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="outagegraph",
        description="Multilayer outage-graph analytics: maintenance prediction "
                    "and risk clustering over substation incident logs.")
    parser.add_argument("--config", help="JSON config file (unknown keys rejected)")
    parser.add_argument("--outdir", help="run directory for stage artifacts")
    parser.add_argument("--seed", type=int, help="global random seed")

    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic scenario")
    synth.add_argument("--scenario", choices=["basic", "ablation", "clusters", "causal"])
    synth.add_argument("--n-substations", type=int, dest="n_substations")
    synth.add_argument("--scenario-seed", type=int, dest="scenario_seed")

    ing = sub.add_parser("ingest", help="clean raw tables and impute voltages")
    ing.add_argument("--tau", type=float, help="fuzzy-match similarity threshold")
    ing.add_argument("--region-radius-km", type=float, dest="region_radius_km")

    graph = sub.add_parser("build-graph", help="construct the multilayer graph")
    graph.add_argument("--theta-max-hrs", type=float, dest="theta_max_hrs")
    graph.add_argument("--proximity-percentile", type=float, dest="proximity_percentile")
    graph.add_argument("--z-percentile", type=float, dest="z_percentile")

    label = sub.add_parser("label", help="maintenance labels per window")
    label.add_argument("--windows", type=int, nargs="+")

    train = sub.add_parser("train", help="train the fused classifier per window")
    train.add_argument("--windows", type=int, nargs="+")
    train.add_argument("--fold-strategy", dest="fold_strategy",
                       choices=["stratified-cv", "temporal-split"])
    train.add_argument("--max-epochs", type=int, dest="max_epochs")
    train.add_argument("--hidden-dim", type=int, dest="hidden_dim")

    ablate = sub.add_parser("ablate", help="single-layer ablation comparison")
    ablate.add_argument("--max-epochs", type=int, dest="max_epochs")
    ablate.add_argument("--hidden-dim", type=int, dest="hidden_dim")

    sub.add_parser("baselines", help="random forest, boosting, k-means, spectral")

    embed = sub.add_parser("embed", help="train the risk-aware embedder")
    embed.add_argument("--embed-epochs", type=int, dest="embed_epochs")

    cluster = sub.add_parser("cluster", help="density clustering plus validation")
    cluster.add_argument("--min-cluster-size", type=int, dest="min_cluster_size")
    cluster.add_argument("--min-samples", type=int, dest="min_samples")
    cluster.add_argument("--epsilon", type=float, dest="cluster_selection_epsilon")

    sub.add_parser("report", help="aggregate tables and render figures")
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    doc: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = PipelineConfig.from_dict(doc)
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        if hasattr(cfg, key):
            setattr(cfg, key, value)
    if os.environ.get(SEED_ENV):
        try:
            cfg.seed = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        result = STAGES[args.command](cfg)
        print(canonical_json({"stage": args.command, "config_hash": cfg.hash,
                              "result": _brief(result)}))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericError, TrainingError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _brief(result) -> object:
    text = canonical_json(result) if not isinstance(result, str) else result
    if isinstance(text, str) and len(text) > 2000:
        return {"truncated": True}
    return result


if __name__ == "__main__":
    sys.exit(main())
