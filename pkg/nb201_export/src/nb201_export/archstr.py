"""Parsing and rendering of NAS-Bench-201 architecture strings.

An architecture string lists each cell node's incoming edges as
``|op~source|`` tokens, node groups joined by ``+``::

    |none~0|+|skip_connect~0|nor_conv_1x1~1|+|avg_pool_3x3~0|none~1|skip_connect~2|

Node ``i`` (counting the input node as 0) has exactly ``i`` incoming edges,
from source nodes ``0 .. i-1`` in that order.  Flattening the groups in
reading order gives the fixed 6-edge layout used everywhere downstream:
edges (0,1), (0,2), (1,2), (0,3), (1,3), (2,3).
"""

from __future__ import annotations

from collections.abc import Sequence

OP_NAMES = ("none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3")
EDGE_COUNT = 6

_GROUP_SIZES = (1, 2, 3)  # incoming-edge counts for nodes 1, 2, 3


def parse_arch_string(arch: str) -> tuple[int, ...]:
    """Return one operation index per edge, in reading order.

    Raises ValueError for anything malformed: wrong group count, missing
    ``|`` delimiters, an out-of-order ``~source`` suffix, or an unknown
    operation name.
    """
    groups = arch.split("+")
    if len(groups) != len(_GROUP_SIZES):
        raise ValueError(f"expected {len(_GROUP_SIZES)} '+'-separated node groups, got {len(groups)} in {arch!r}")
    ops: list[int] = []
    for size, group in zip(_GROUP_SIZES, groups):
        parts = group.split("|")
        # a well-formed group is '', token, ..., token, '': bars delimit every token
        if len(parts) != size + 2 or parts[0] or parts[-1] or not all(parts[1:-1]):
            raise ValueError(f"node group {group!r} in {arch!r} must be {size} '|op~source|' token(s)")
        for source, token in enumerate(parts[1:-1]):
            op_name, sep, origin = token.partition("~")
            if not sep or origin != str(source):
                raise ValueError(f"edge token {token!r} in {arch!r} must carry source suffix '~{source}'")
            try:
                ops.append(OP_NAMES.index(op_name))
            except ValueError:
                raise ValueError(f"unknown operation {op_name!r} in {arch!r}; known: {', '.join(OP_NAMES)}") from None
    return tuple(ops)


def render_arch_string(ops: Sequence[int]) -> str:
    """Inverse of :func:`parse_arch_string`."""
    if len(ops) != EDGE_COUNT:
        raise ValueError(f"expected {EDGE_COUNT} operation indices, got {len(ops)}")
    tokens = iter(ops)
    groups = []
    for size in _GROUP_SIZES:
        edges = "".join(f"|{OP_NAMES[next(tokens)]}~{source}" for source in range(size))
        groups.append(edges + "|")
    return "+".join(groups)
