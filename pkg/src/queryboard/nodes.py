"""Tree nodes shared by the SQL grammar and the choice-tree machinery.

A plain parsed query is a tree of ``kind="ast"`` nodes.  Trees that stand for
*sets* of queries additionally contain choice nodes:

- ``any``    — picks exactly one of its children,
- ``val``    — a literal slot; children are the example literals, the slot
               accepts any value in the union of their domains,
- ``multi``  — a homogeneous list: any number of repetitions of one template,
- ``subset`` — an ordered subset of fixed slot children,
- ``coopt``  — a dependent region whose existence follows another optional
               node (``ref`` holds the controller's node id).

An *optional* node is an ``any`` with exactly two children, one of which is
the empty ``nil`` leaf.  Node identity is by object; ``node_id`` values are
assigned when a tree is built and survive transformations for subtrees that
are kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

AST = "ast"
ANY = "any"
VAL = "val"
MULTI = "multi"
SUBSET = "subset"
COOPT = "coopt"

CHOICE_KINDS = (ANY, VAL, MULTI, SUBSET)

#: separator text used when unparsing list-shaped labels
LIST_SEPS = {
    "items": ", ",
    "tables": ", ",
    "conj": " and ",
    "hconj": " and ",
    "inlist": ", ",
    "args": ", ",
    "cols": ", ",
}


@dataclass(eq=False)
class Node:
    """One tree node.  Equality is identity; use ``same_shape`` for structure."""

    kind: str
    label: str
    children: tuple[Node, ...] = ()
    payload: str | None = None  # leaf text, or the cmp operator
    littype: str | None = None  # "num" | "str" for literal leaves
    ref: int | None = None  # coopt: controller node id
    node_id: int = -1

    def __repr__(self) -> str:  # compact, for test failures
        bits = [self.kind if self.kind != AST else self.label]
        if self.kind != AST and self.label:
            bits.append(self.label)
        if self.payload is not None:
            bits.append(repr(self.payload))
        inner = " ".join(bits)
        if self.children:
            return f"({inner} {' '.join(repr(c) for c in self.children)})"
        return f"({inner})"

    @property
    def is_nil(self) -> bool:
        return self.kind == AST and self.label == "nil"

    @property
    def is_list(self) -> bool:
        return self.label in LIST_SEPS

    @property
    def is_optional(self) -> bool:
        """An ``any`` over exactly {nil, something}."""
        return (
            self.kind == ANY
            and len(self.children) == 2
            and sum(1 for c in self.children if c.is_nil) == 1
        )

    @property
    def optional_body(self) -> Node:
        return next(c for c in self.children if not c.is_nil)

    @property
    def nil_index(self) -> int | None:
        return next((i for i, c in enumerate(self.children) if c.is_nil), None)


def nil() -> Node:
    return Node(AST, "nil")


def ast(label: str, children=(), payload: str | None = None) -> Node:
    return Node(AST, label, tuple(children), payload)


def lit(text: str, littype: str) -> Node:
    return Node(AST, "lit", (), text, littype)


def norm_value(node: Node):
    """Comparable value of a literal leaf (numbers compare numerically)."""
    if node.littype == "num":
        v = float(node.payload)
        return int(v) if v.is_integer() else v
    return node.payload


def shape_key(node: Node):
    """Hashable canonical form of the subtree, ignoring node ids.

    Cached on the node; children tuples must not be mutated after creation.
    """
    cached = getattr(node, "_shape", None)
    if cached is None:
        payload = node.payload
        if node.label == "lit" and node.littype == "num":
            payload = repr(norm_value(node))
        cached = (
            node.kind,
            node.label,
            payload,
            node.littype,
            node.ref,
            tuple(shape_key(c) for c in node.children),
        )
        node._shape = cached
    return cached


def same_shape(a: Node, b: Node) -> bool:
    return shape_key(a) == shape_key(b)


def skeleton_key(node: Node):
    """Alignment key: structure with literal values (and val slots) erased."""
    if node.kind == VAL or (node.kind == AST and node.label == "lit"):
        return ("lit",)
    return (
        node.kind,
        node.label,
        node.payload,
        tuple(skeleton_key(c) for c in node.children),
    )


def walk(node: Node):
    """Yield the subtree in depth-first preorder."""
    yield node
    for child in node.children:
        yield from walk(child)


def contains_choice(node: Node) -> bool:
    cached = getattr(node, "_haschoice", None)
    if cached is None:
        cached = node.kind in CHOICE_KINDS or any(contains_choice(c) for c in node.children)
        node._haschoice = cached
    return cached


# --- unparsing -------------------------------------------------------------


def render(node: Node) -> str:
    """Render a pure AST back to canonical SQL text.

    Raises ValueError on choice nodes: resolve the tree first.
    """
    return _render(node, top=True)


def _render(n: Node, top: bool = False) -> str:
    if n.kind != AST and n.kind != COOPT:
        raise ValueError(f"cannot render unresolved {n.kind} node")
    if n.kind == COOPT:
        return _render(n.children[0], top)
    label = n.label
    if label == "nil":
        return ""
    if label == "lit":
        return n.payload if n.littype == "num" else f"'{n.payload}'"
    if label in ("col", "tname", "name", "fname", "op"):
        return n.payload
    if label == "star":
        return "*"
    if label == "select":
        distinct, items, tables, where, group, having = n.children
        parts = ["select "]
        if not distinct.is_nil:
            parts.append("distinct ")
        parts.append(_render(items))
        if not tables.is_nil and tables.children:
            parts.append(" from ")
            parts.append(_render(tables))
        if not where.is_nil and where.children:
            parts.append(" where ")
            parts.append(_render(where))
        if not group.is_nil and group.children:
            parts.append(" group by ")
            parts.append(_render(group))
        if not having.is_nil and having.children:
            parts.append(" having ")
            parts.append(_render(having))
        text = "".join(parts)
        return text if top else f"({text})"
    if label in LIST_SEPS:
        return LIST_SEPS[label].join(_render(c) for c in n.children if not c.is_nil)
    if label in ("item", "table"):
        expr, alias = n.children
        out = _render(expr)
        if not alias.is_nil:
            out += f" as {_render(alias)}"
        return out
    if label == "cmp":
        l, r = n.children
        return f"{_render(l)} {n.payload} {_render(r)}"
    if label == "between":
        operand, pair = n.children
        lo, hi = pair.children
        return f"{_render(operand)} between {_render(lo)} and {_render(hi)}"
    if label == "pair":
        lo, hi = n.children
        return f"{_render(lo)} and {_render(hi)}"
    if label == "in":
        operand, values = n.children
        return f"{_render(operand)} in ({_render(values)})"
    if label == "call":
        (args,) = n.children
        return f"{n.payload}({_render(args)})"
    if label == "distinct":
        return "distinct"
    raise ValueError(f"no renderer for label {label!r}")
