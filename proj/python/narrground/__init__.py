"""Ground narratives to an eventuality knowledge graph.

Thin wrappers over the C++ core. Records are plain dicts with the same
fields as the command-line tool's JSON lines.
"""

import json

from ._core import (
    DEFAULT_HOPS,
    DEFAULT_THRESHOLD,
    ConfigError,
    NarrgroundError,
    EventIndex,
    FormatError,
    HashingEmbedder,
    InvariantError,
    KgStore,
    build_prompt,
    softmax,
)
from . import _core

__all__ = [
    "DEFAULT_HOPS",
    "DEFAULT_THRESHOLD",
    "ConfigError",
    "NarrgroundError",
    "EventIndex",
    "FormatError",
    "HashingEmbedder",
    "InvariantError",
    "KgStore",
    "build_prompt",
    "normalize",
    "partial_events",
    "run_pipeline",
    "serialize",
    "softmax",
]


def normalize(frames, skip_person_tokens=False):
    """Person-token normalization of SRL frame dicts."""
    return json.loads(_core._normalize(json.dumps(list(frames)), skip_person_tokens))


def partial_events(normalized, cap="ARG1"):
    """Abstraction ladders for normalized event records, up to `cap`."""
    return json.loads(_core._partial_events(json.dumps(list(normalized)), cap))


def serialize(joint, variant="node_edge", relation_labels=False):
    """Sequentialize one joint-subgraph record (dict) as DOT, node or node_edge text."""
    return _core._serialize(json.dumps(joint), variant, relation_labels)


def run_pipeline(out_dir, **options):
    """Run every stage into `out_dir`; returns the file names written.

    Options mirror the command-line flags with underscores, e.g.
    kg_nodes=..., kg_edges=..., events=..., cap="ARG0", threads=4.
    """
    opts = {"out_dir": str(out_dir)}
    for key, value in options.items():
        if isinstance(value, bool):
            value = "1" if value else "0"
        opts[key] = str(value)
    return _core._run_pipeline(opts)
