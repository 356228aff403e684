"""Interface layout: sizing, nesting, and orientation search.

Widgets and charts become leaves of a layout tree; choice nodes whose
subtree holds further widgets become containers whose own control renders
as a header above the nested block.  Every container packs its children
either horizontally or vertically; the orientation assignment is chosen
by exact branch-and-bound against the full interface cost (pointer travel
plus overflow penalties), so the result always matches brute-force
enumeration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .cost import Box, CostParams, CostReport, DEFAULTS, Touchpoint, interface_cost
from .mapping import MappingContext, MappingResult, touchpoints_for

GAP = 10.0

#: fixed widget footprints; enumerating widgets grow with their options
FIXED_SIZES = {
    "chart": (400.0, 300.0),
    "slider": (200.0, 30.0),
    "range": (200.0, 40.0),
    "dropdown": (150.0, 30.0),
    "textbox": (150.0, 30.0),
    "toggle": (60.0, 30.0),
    "button": (80.0, 30.0),
}

OPTION_ROW_HEIGHT = 24.0
LABEL_CHAR_WIDTH = 8.0


def widget_size(kind: str, labels: tuple[str, ...] = ()) -> tuple[float, float]:
    if kind in ("radio", "checkbox"):
        width = LABEL_CHAR_WIDTH * max((len(t) for t in labels), default=10)
        return (width, OPTION_ROW_HEIGHT * max(1, len(labels)))
    try:
        return FIXED_SIZES[kind]
    except KeyError:
        raise ValueError(f"unknown control kind {kind!r}") from None


@dataclass
class Leaf:
    ident: str
    kind: str
    w: float
    h: float


@dataclass
class Group:
    ident: str
    children: list = field(default_factory=list)
    header: Leaf | None = None


def make_leaf(ident: str, kind: str, labels: tuple[str, ...] = ()) -> Leaf:
    w, h = widget_size(kind, labels)
    return Leaf(ident, kind, w, h)


def groups_of(node) -> list[Group]:
    """All containers in document order — the orientation variables."""
    out = []
    if isinstance(node, Group):
        out.append(node)
        for child in node.children:
            out.extend(groups_of(child))
    return out


def measure(node, orient: dict[str, str]) -> tuple[float, float]:
    if isinstance(node, Leaf):
        return (node.w, node.h)
    sizes = [measure(c, orient) for c in node.children]
    if not sizes:
        content = (0.0, 0.0)
    elif orient.get(node.ident, "v") == "h":
        content = (
            sum(w for w, _ in sizes) + GAP * (len(sizes) - 1),
            max(h for _, h in sizes),
        )
    else:
        content = (
            max(w for w, _ in sizes),
            sum(h for _, h in sizes) + GAP * (len(sizes) - 1),
        )
    if node.header is not None:
        return (max(node.header.w, content[0]), node.header.h + GAP + content[1])
    return content


def place(node, orient: dict[str, str], x: float, y: float, boxes: dict[str, Box]) -> None:
    w, h = measure(node, orient)
    boxes[node.ident] = Box(x, y, w, h)
    if isinstance(node, Leaf):
        return
    if node.header is not None:
        boxes[node.header.ident] = Box(x, y, node.header.w, node.header.h)
        y += node.header.h + GAP
    horizontal = orient.get(node.ident, "v") == "h"
    for child in node.children:
        cw, ch = measure(child, orient)
        place(child, orient, x, y, boxes)
        if horizontal:
            x += cw + GAP
        else:
            y += ch + GAP


def evaluate(root, orient: dict[str, str]) -> tuple[dict[str, Box], Box]:
    boxes: dict[str, Box] = {}
    place(root, orient, 0.0, 0.0, boxes)
    return boxes, boxes[root.ident]


def assignments(root):
    """All orientation assignments, vertical-first so ties keep the preferred one."""
    names = [g.ident for g in groups_of(root)]
    for combo in itertools.product("vh", repeat=len(names)):
        yield dict(zip(names, combo))


def optimize_layout(
    root,
    touchpoints: list[Touchpoint],
    projections: list[dict],
    n_vis: int = 0,
    params: CostParams = DEFAULTS,
    aliases: dict[str, str] | None = None,
) -> tuple[dict[str, str], dict[str, Box], Box, CostReport]:
    """Exact minimum-cost orientation assignment.

    Enumerates vertical-first with incumbent pruning on an admissible
    bound (costs that do not depend on geometry), so the first strict
    minimum encountered — the tie-break winner — is returned.

    ``aliases`` maps touchpoints without boxes of their own onto the
    element they live inside (an in-chart gesture to its host chart), so
    pointer travel to them is billed at that element's position.
    """

    floor = interface_cost(touchpoints, projections, None, n_vis, None, params)
    best = None
    for orient in assignments(root):
        if best is not None and floor.total >= best[3].total:
            # even a zero-travel layout cannot beat the incumbent
            break
        boxes, bounds = evaluate(root, orient)
        if aliases:
            for ident, target in aliases.items():
                if target in boxes:
                    boxes[ident] = boxes[target]
        report = interface_cost(touchpoints, projections, boxes, n_vis, bounds, params)
        if best is None or report.total < best[3].total:
            best = (orient, boxes, bounds, report)
    if best is None:
        raise ValueError("empty layout")
    return best


# --------------------------------------------------------------------------
# building the layout tree from anchored controls


def build_tree_layout(tree, anchored: list[tuple[int, Leaf]], vis: Leaf | None, tag: str):
    """Nest one tree's widgets by their anchor ancestry, beside its chart.

    ``anchored`` pairs each widget with the choice node it controls; a
    widget whose anchor node contains other anchors becomes a container
    header above the nested block.
    """

    order = {nid: i for i, nid in enumerate(tree.nodes)}
    anchored = sorted(anchored, key=lambda p: order.get(p[0], len(order)))
    anchor_ids = [nid for nid, _ in anchored]

    def nearest_anchor_ancestor(nid: int) -> int | None:
        for up in tree.parent_chain(nid)[1:]:
            if up in anchor_ids:
                return up
        return None

    containers: dict[int, Group] = {}
    roots: list = []
    for nid, leaf in anchored:
        has_nested = any(
            nid in tree.parent_chain(other)[1:] for other in anchor_ids if other != nid
        )
        node = Group(f"{tag}-grp-{nid}", header=leaf) if has_nested else leaf
        if has_nested:
            containers[nid] = node
        up = nearest_anchor_ancestor(nid)
        if up is not None and up in containers:
            containers[up].children.append(node)
        else:
            roots.append(node)
    blocks: list = []
    if vis is not None:
        blocks.append(vis)
    if len(roots) == 1:
        blocks.append(roots[0])
    elif roots:
        blocks.append(Group(f"{tag}-widgets", children=roots))
    if not blocks:
        return None
    if len(blocks) == 1:
        return blocks[0]
    return Group(tag, children=blocks)


def build_root_layout(tree_layouts: list) -> Group:
    parts = [t for t in tree_layouts if t is not None]
    return Group("root", children=parts)


@dataclass
class Realized:
    """One mapping result made concrete: its layout tree and replay inputs."""

    root: Group
    touchpoints: list[Touchpoint]
    projections: list[dict]
    #: gesture touchpoint ident -> ident of the chart it is performed on
    aliases: dict[str, str]
    n_vis: int


def realize(ctx: MappingContext, result: MappingResult) -> Realized:
    """Build the layout tree and replay inputs for one mapping result.

    Widgets become leaves nested under their tree's chart per anchor
    ancestry; gestures own no screen area, so they alias to their host
    chart's box for navigation costing.
    """

    touchpoints, projections = touchpoints_for(ctx, result.picks)
    per_tree: dict[int, list] = {ti: [] for ti in range(len(ctx.state.trees))}
    aliases: dict[str, str] = {}
    for c in result.picks:
        if c.widget:
            leaf = make_leaf(f"w{c.anchor}", c.kind, c.labels)
            # the anchor may be a plain tree node (a range widget hangs on
            # its predicate), so locate the tree via a covered choice node
            per_tree[ctx.tree_of[c.covered[0]]].append((c.anchor, leaf))
        else:
            host, template = c.pk
            aliases[f"g{host}.{template}"] = f"vis{host}"
    parts = []
    for ti, tree in enumerate(ctx.state.trees):
        vis = make_leaf(f"vis{ti}", "chart")
        parts.append(build_tree_layout(tree, per_tree[ti], vis, f"t{ti}"))
    return Realized(
        build_root_layout(parts),
        touchpoints,
        projections,
        aliases,
        len(ctx.state.trees),
    )
