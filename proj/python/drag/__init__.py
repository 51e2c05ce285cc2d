"""Python bindings for the DRAG fraud-detection GNN.

Graphs, parameters and metrics come straight from the C++ core. Training
functions accept keyword overrides of the training configuration and return
plain dicts.
"""

import json

from ._drag import (
    DragError,
    Graph,
    Params,
    ValidationError,
    add_self_loops,
    auc,
    deduplicate_nodes,
    f1_macro,
    forward,
    gen_synthetic,
    grad_check,
    init_params,
    load_checkpoint,
    load_graph,
    save_graph,
    split_labels,
)
from . import _drag

__all__ = [
    "DragError",
    "Graph",
    "Params",
    "ValidationError",
    "add_self_loops",
    "auc",
    "deduplicate_nodes",
    "default_config",
    "f1_macro",
    "forward",
    "gen_synthetic",
    "grad_check",
    "init_params",
    "load_checkpoint",
    "load_graph",
    "run_protocol",
    "save_graph",
    "split_labels",
    "train_model",
]


def default_config():
    return json.loads(_drag.default_config())


def _config(overrides):
    cfg = default_config()
    unknown = set(overrides) - set(cfg)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(overrides)
    return json.dumps(cfg)


def train_model(graph, masks, **config):
    """Train one configuration; masks is the dict returned by split_labels."""
    result, params = _drag.train_model(graph, masks["train"], masks["val"], masks["test"], _config(config))
    return json.loads(result), params


def run_protocol(graph, p, grid=None, jobs=1, **config):
    """Repeated grid search; grid maps learning_rates/weight_decays/layers/heads to lists."""
    return json.loads(_drag.run_protocol(graph, p, _config(config), json.dumps(grid or {}), jobs))
