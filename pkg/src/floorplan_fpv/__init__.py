"""Floor-plan valuation from access graphs.

Room-level access graphs are canonicalised, described with Space Syntax
measures, and fed to a graph network whose scalar output (the floor plan
value, FPV) enters a hedonic rent regression. Integrated gradients and an
analysis of means explain which rooms and connections drive the FPV.
"""

__version__ = "0.1.0"

from .graph import AccessGraph, RoomLabel, parse_graph, read_jsonl, validate, write_jsonl  # noqa: E402
from .canon import canonical_key, deduplicate, is_isomorphic  # noqa: E402

__all__ = [
    "__version__",
    "AccessGraph",
    "RoomLabel",
    "canonical_key",
    "deduplicate",
    "is_isomorphic",
    "parse_graph",
    "read_jsonl",
    "validate",
    "write_jsonl",
]
