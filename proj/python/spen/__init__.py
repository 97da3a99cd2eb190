"""Energy networks with jointly trained inference networks for sequence labeling."""

import json

from ._spen import (
    Model,
    SpenError,
    config_keys,
    evaluate,
    extract_spans,
    gen_synth,
    gradcheck,
    predict,
    span_f1,
)
from ._spen import train as _train


def train(**overrides):
    """Train with config keys as keyword arguments; returns the metrics dict."""
    return json.loads(_train(overrides))


__all__ = [
    "Model",
    "SpenError",
    "config_keys",
    "evaluate",
    "extract_spans",
    "gen_synth",
    "gradcheck",
    "predict",
    "span_f1",
    "train",
]
