"""Multilayer outage-incident graph analytics.

Builds a spatial/temporal/causal multilayer graph from substation incident
logs, trains a fused three-encoder GNN for predictive maintenance, and
clusters substations by risk profile with full statistical validation.
"""

__version__ = "0.1.0"
