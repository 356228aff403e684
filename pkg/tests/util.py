"""Shared helpers for building choice trees by hand in tests."""

from queryboard.nodes import Node, walk


def swap(root: Node, old: Node, new: Node) -> Node:
    """Rebuild the spine of ``root`` with ``old`` replaced by ``new``."""
    if root is old:
        return new
    children = tuple(swap(c, old, new) for c in root.children)
    if all(a is b for a, b in zip(children, root.children)):
        return root
    rebuilt = Node(root.kind, root.label, children, root.payload, root.littype, root.ref)
    rebuilt.node_id = root.node_id
    return rebuilt


def find(root: Node, pred):
    return next(n for n in walk(root) if pred(n))
