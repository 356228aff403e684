"""Tree transforms: the rewrite rules the interface search explores.

Each rule rewrites one choice tree (or the whole forest) into a more
structured equivalent.  Rules only ever grow the set of queries a state
can express, so every input query stays expressible after any number of
applications.  ``initial_state`` builds the starting forest from a query
log; ``applicable_rules``/``apply_rule`` drive the search.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass

from .catalogue import Catalogue
from .ctree import (
    ChoiceTree,
    QueryBindings,
    UnexpressedQuery,
    fresh_id,
    lift,
    make,
    query_bindings,
)
from .nodes import (
    ANY,
    AST,
    CHOICE_KINDS,
    COOPT,
    MULTI,
    SUBSET,
    VAL,
    Node,
    nil,
    shape_key,
    skeleton_key,
    walk,
)
from .qschema import TreeAnalysis, UnknownAttribute, analyze, union_compatible


class RuleNotApplicable(Exception):
    """The requested rule does not apply at the requested target."""


@dataclass(frozen=True)
class Context:
    """Immutable inputs shared by every state of one search."""

    queries: tuple[Node, ...]
    catalogue: Catalogue


@dataclass(frozen=True)
class Rule:
    """One concrete rule application: a rule name plus its target.

    ``target`` is a tuple of tree indexes and/or node ids, depending on
    the rule.  Rules order canonically by (rule rank, target)."""

    name: str
    target: tuple[int, ...] = ()

    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        return (RULE_ORDER.index(self.name), self.target)


@dataclass(frozen=True)
class SearchState:
    """A forest of choice trees plus the bindings that witness the log."""

    trees: tuple[ChoiceTree, ...]
    analyses: tuple[TreeAnalysis, ...]
    bindings: QueryBindings
    terminal: bool = False

    def shape(self) -> tuple:
        return tuple(tree.shape() for tree in self.trees)


RULE_ORDER = [
    "merge",
    "split",
    "partition",
    "push_any",
    "push_opt_inward",
    "push_opt_through_list",
    "any_to_val",
    "any_to_multi",
    "any_to_subset",
    "collapse_single",
    "flatten_any",
    "terminate",
]


# --------------------------------------------------------------------------
# state construction


def make_state(roots: list[Node], ctx: Context, terminal: bool = False) -> SearchState:
    trees = tuple(ChoiceTree(lift(root)) for root in roots)
    analyses = tuple(analyze(tree.root, ctx.catalogue) for tree in trees)
    bindings = query_bindings(trees, ctx.queries)
    return SearchState(trees, analyses, bindings, terminal)


def initial_state(queries: list[Node], cat: Catalogue) -> tuple[SearchState, Context]:
    """Lift every query, cluster by result schema, and merge each cluster."""

    lifted = [lift(q) for q in queries]
    ctx = Context(tuple(lifted), cat)
    clusters: dict[object, list[Node]] = {}
    order: list[object] = []
    for root in lifted:
        info = analyze(root, cat)
        key = info.cluster_key if info.cluster_key is not None else ("solo", root.node_id)
        if key not in clusters:
            clusters[key] = []
            order.append(key)
        clusters[key].append(root)
    roots = []
    for key in order:
        members = _distinct_shapes(clusters[key])
        if len(members) == 1:
            roots.append(members[0])
        else:
            roots.append(make(ANY, "any", tuple(members)))
    return make_state(roots, ctx), ctx


# --------------------------------------------------------------------------
# shared surgery helpers


def _distinct_shapes(nodes) -> list[Node]:
    seen = set()
    out = []
    for node in nodes:
        key = shape_key(node)
        if key not in seen:
            seen.add(key)
            out.append(node)
    return out


def _replace(root: Node, target_id: int, replacement: Node | None) -> Node:
    """Rebuild the spine above ``target_id``; ``None`` deletes a list element."""

    if root.node_id == target_id:
        if replacement is None:
            raise RuleNotApplicable("cannot delete the root")
        return replacement
    children = None
    for i, child in enumerate(root.children):
        if child.node_id == target_id or _contains_id(child, target_id):
            if child.node_id == target_id:
                new_child = replacement
            else:
                new_child = _replace(child, target_id, replacement)
            kept = list(root.children)
            if new_child is None:
                del kept[i]
            else:
                kept[i] = new_child
            children = tuple(kept)
            break
    if children is None:
        raise RuleNotApplicable(f"node {target_id} not in tree")
    clone = Node(
        kind=root.kind,
        label=root.label,
        children=children,
        payload=root.payload,
        littype=root.littype,
        ref=root.ref,
    )
    clone.node_id = root.node_id
    return clone


def _contains_id(node: Node, node_id: int) -> bool:
    return any(n.node_id == node_id for n in walk(node))


def _find(tree: ChoiceTree, node_id: int, kinds=None) -> Node:
    node = tree.nodes.get(node_id)
    if node is None or (kinds is not None and node.kind not in kinds):
        raise RuleNotApplicable(f"no eligible node {node_id}")
    return node


def _tree_of(state: SearchState, node_id: int) -> int:
    for i, tree in enumerate(state.trees):
        if node_id in tree.nodes:
            return i
    raise RuleNotApplicable(f"node {node_id} not in any tree")


def _coopt_refs(trees) -> set[int]:
    refs = set()
    for tree in trees:
        for node in tree.nodes.values():
            if node.kind == COOPT and node.ref is not None:
                refs.add(node.ref)
    return refs


def _rebuild(state: SearchState, ctx: Context, tree_index: int, new_root: Node) -> SearchState:
    roots = [t.root for t in state.trees]
    roots[tree_index] = new_root
    return make_state(roots, ctx)


def _keep_id(node: Node, node_id: int) -> Node:
    node.node_id = node_id
    return node


# --------------------------------------------------------------------------
# individual rules


def _merge(state: SearchState, ctx: Context, i: int, j: int) -> SearchState:
    if not (0 <= i < j < len(state.trees)):
        raise RuleNotApplicable("bad tree pair")
    if not union_compatible(state.analyses[i].result, state.analyses[j].result):
        raise RuleNotApplicable("result schemas not union-compatible")
    a, b = state.trees[i].root, state.trees[j].root
    branches = []
    for root in (a, b):
        if root.kind == ANY:
            branches.extend(root.children)
        else:
            branches.append(root)
    merged_children = _distinct_shapes(branches)
    if len(merged_children) == 1:
        merged = merged_children[0]
    elif a.kind == ANY:
        merged = _keep_id(make(ANY, "any", tuple(merged_children)), a.node_id)
    else:
        merged = make(ANY, "any", tuple(merged_children))
    roots = [t.root for k, t in enumerate(state.trees) if k != j]
    roots[i] = merged
    return make_state(roots, ctx)


def _split(state: SearchState, ctx: Context, i: int) -> SearchState:
    if not 0 <= i < len(state.trees):
        raise RuleNotApplicable("bad tree index")
    root = state.trees[i].root
    if root.kind != ANY or any(c.is_nil for c in root.children):
        raise RuleNotApplicable("root is not a plain choice of alternatives")
    roots = [t.root for t in state.trees]
    roots[i : i + 1] = list(root.children)
    return make_state(roots, ctx)


def _partition_key(child: Node, cat: Catalogue):
    if child.is_nil:
        return ("nil",)
    if child.label == "select":
        try:
            info = analyze(child, cat)
        except UnknownAttribute:
            # correlated subquery fragment: outer scope is unavailable here
            return ("select", skeleton_key(child))
        return ("select", info.cluster_key)
    return (child.label,)


def _partition_groups(node: Node, cat: Catalogue):
    groups: dict[object, list[Node]] = {}
    order: list[object] = []
    for child in node.children:
        key = _partition_key(child, cat)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(child)
    return [groups[key] for key in order]


def _partition(state: SearchState, ctx: Context, node_id: int) -> SearchState:
    ti = _tree_of(state, node_id)
    node = _find(state.trees[ti], node_id, (ANY,))
    groups = _partition_groups(node, ctx.catalogue)
    if len(groups) < 2 or len(groups) == len(node.children):
        raise RuleNotApplicable("no non-trivial grouping")
    children = []
    for group in groups:
        if len(group) == 1:
            children.append(group[0])
        else:
            children.append(make(ANY, "any", tuple(group)))
    replacement = _keep_id(make(ANY, "any", tuple(children)), node.node_id)
    return _rebuild(state, ctx, ti, _replace(state.trees[ti].root, node_id, replacement))


def _merge_slot(options: list[Node | None]) -> Node:
    """Combine one aligned slot across alternatives into a single subtree."""

    present = [o for o in options if o is not None]
    shapes = _distinct_shapes(present)
    core = shapes[0] if len(shapes) == 1 else make(ANY, "any", tuple(shapes))
    if len(present) < len(options):
        return make(ANY, "any", (nil(), core))
    return core


def _push_any(state: SearchState, ctx: Context, node_id: int) -> SearchState:
    ti = _tree_of(state, node_id)
    node = _find(state.trees[ti], node_id, (ANY,))
    kids = node.children
    if len(kids) < 2 or any(k.kind != AST for k in kids):
        raise RuleNotApplicable("alternatives are not all plain subtrees")
    first = kids[0]
    if any(
        k.label != first.label or k.payload != first.payload or k.littype != first.littype
        for k in kids
    ):
        raise RuleNotApplicable("alternatives have different head nodes")
    if not first.children:
        raise RuleNotApplicable("nothing to push into")
    if first.is_list:
        slots = _align_lists(kids)
    else:
        if any(len(k.children) != len(first.children) for k in kids):
            raise RuleNotApplicable("alternatives have different arity")
        slots = [[k.children[s] for k in kids] for s in range(len(first.children))]
    merged = tuple(_merge_slot(slot) for slot in slots)
    replacement = Node(
        kind=AST,
        label=first.label,
        children=merged,
        payload=first.payload,
        littype=first.littype,
    )
    replacement.node_id = fresh_id()
    return _rebuild(state, ctx, ti, _replace(state.trees[ti].root, node_id, replacement))


def _align_lists(kids) -> list[list[Node | None]]:
    """Column-align list alternatives: positionally when lengths agree,
    otherwise by element skeleton with gaps for missing slots."""

    lengths = {len(k.children) for k in kids}
    if lengths == {len(kids[0].children)}:
        n = len(kids[0].children)
        if n == 0:
            raise RuleNotApplicable("empty lists")
        return [[k.children[s] for k in kids] for s in range(n)]
    order: list[object] = []
    rows: list[dict[object, Node]] = []
    for k in kids:
        row: dict[object, Node] = {}
        for el in k.children:
            key = skeleton_key(el)
            if key in row:
                raise RuleNotApplicable("repeated element skeleton in one list")
            row[key] = el
            if key not in order:
                order.append(key)
        rows.append(row)
    for k in kids:
        seq = [order.index(skeleton_key(el)) for el in k.children]
        if seq != sorted(seq):
            raise RuleNotApplicable("element order disagrees between lists")
    return [[row.get(key) for row in rows] for key in order]


def _gated_choice(node: Node) -> Node | None:
    """First choice node strictly inside an optional's body, if any."""

    if not node.is_optional:
        return None
    body = node.optional_body
    return next((n for n in walk(body) if n.kind in CHOICE_KINDS and n is not body), None)


def _push_opt_inward(state: SearchState, ctx: Context, node_id: int) -> SearchState:
    ti = _tree_of(state, node_id)
    node = _find(state.trees[ti], node_id, (ANY,))
    if node.node_id in _coopt_refs(state.trees):
        raise RuleNotApplicable("optional controls a linked region")
    inner = _gated_choice(node)
    if inner is None:
        raise RuleNotApplicable("no choice strictly inside the optional body")
    body = node.optional_body
    gate = make(ANY, "any", (nil(), inner))
    new_body = _replace(body, inner.node_id, gate)
    region = make(COOPT, "coopt", (new_body,), ref=gate.node_id)
    return _rebuild(state, ctx, ti, _replace(state.trees[ti].root, node_id, region))


def _push_opt_through_list(state: SearchState, ctx: Context, node_id: int) -> SearchState:
    ti = _tree_of(state, node_id)
    node = _find(state.trees[ti], node_id, (ANY,))
    if not node.is_optional:
        raise RuleNotApplicable("not an optional region")
    if node.node_id in _coopt_refs(state.trees):
        raise RuleNotApplicable("optional controls a linked region")
    body = node.optional_body
    if body.kind != AST or not body.is_list or len(body.children) < 2:
        raise RuleNotApplicable("optional body is not a multi-element list")
    wrapped = tuple(make(ANY, "any", (nil(), el)) for el in body.children)
    new_list = Node(kind=AST, label=body.label, children=wrapped)
    new_list.node_id = body.node_id
    return _rebuild(state, ctx, ti, _replace(state.trees[ti].root, node_id, new_list))


def _any_to_val(state: SearchState, ctx: Context, node_id: int) -> SearchState:
    ti = _tree_of(state, node_id)
    node = _find(state.trees[ti], node_id, (ANY,))
    kids = node.children
    if not kids or any(k.label != "lit" for k in kids):
        raise RuleNotApplicable("alternatives are not all literals")
    littypes = {k.littype for k in kids}
    if len(littypes) != 1:
        raise RuleNotApplicable("mixed literal types")
    replacement = make(VAL, "val", tuple(kids), littype=kids[0].littype)
    return _rebuild(state, ctx, ti, _replace(state.trees[ti].root, node_id, replacement))


def _element_template(kids) -> Node:
    elements = [el for k in kids for el in k.children]
    keys = {skeleton_key(el) for el in elements}
    if len(keys) != 1:
        raise RuleNotApplicable("list elements have different skeletons")
    shapes = _distinct_shapes(elements)
    return shapes[0] if len(shapes) == 1 else make(ANY, "any", tuple(shapes))


def _any_to_multi(state: SearchState, ctx: Context, node_id: int) -> SearchState:
    ti = _tree_of(state, node_id)
    node = _find(state.trees[ti], node_id, (ANY,))
    kids = node.children
    if len(kids) < 2 or any(k.kind != AST or not k.is_list or not k.children for k in kids):
        raise RuleNotApplicable("alternatives are not all non-empty lists")
    if len({k.label for k in kids}) != 1:
        raise RuleNotApplicable("lists use different separators")
    template = _element_template(kids)
    replacement = make(MULTI, kids[0].label, (template,))
    return _rebuild(state, ctx, ti, _replace(state.trees[ti].root, node_id, replacement))


def _any_to_subset(state: SearchState, ctx: Context, node_id: int) -> SearchState:
    ti = _tree_of(state, node_id)
    node = _find(state.trees[ti], node_id, (ANY,))
    kids = node.children
    if len(kids) < 2 or any(k.kind != AST or not k.is_list or not k.children for k in kids):
        raise RuleNotApplicable("alternatives are not all non-empty lists")
    if len({k.label for k in kids}) != 1:
        raise RuleNotApplicable("lists use different separators")
    order: list[object] = []
    chosen: dict[object, Node] = {}
    for k in kids:
        keys = []
        for el in k.children:
            key = shape_key(el)
            if key in keys:
                raise RuleNotApplicable("repeated element in one list")
            keys.append(key)
            if key not in chosen:
                chosen[key] = el
                order.append(key)
    for k in kids:
        seq = [order.index(shape_key(el)) for el in k.children]
        if seq != sorted(seq):
            raise RuleNotApplicable("element order disagrees between lists")
    if len(order) < 2:
        raise RuleNotApplicable("fewer than two distinct elements")
    replacement = make(SUBSET, kids[0].label, tuple(chosen[key] for key in order))
    return _rebuild(state, ctx, ti, _replace(state.trees[ti].root, node_id, replacement))


def _collapse_single(state: SearchState, ctx: Context, node_id: int) -> SearchState:
    ti = _tree_of(state, node_id)
    node = _find(state.trees[ti], node_id, (ANY,))
    shapes = _distinct_shapes(node.children)
    if len(shapes) != 1 or shapes[0].is_nil:
        raise RuleNotApplicable("more than one distinct alternative")
    if node.node_id in _coopt_refs(state.trees):
        raise RuleNotApplicable("choice controls a linked region")
    return _rebuild(state, ctx, ti, _replace(state.trees[ti].root, node_id, shapes[0]))


def _flatten_any(state: SearchState, ctx: Context, node_id: int) -> SearchState:
    ti = _tree_of(state, node_id)
    node = _find(state.trees[ti], node_id, (ANY,))
    nested = [k for k in node.children if k.kind == ANY]
    if not nested:
        raise RuleNotApplicable("no nested choice to flatten")
    refs = _coopt_refs(state.trees)
    if any(k.node_id in refs for k in nested):
        raise RuleNotApplicable("nested choice controls a linked region")
    flat = []
    for k in node.children:
        flat.extend(k.children if k.kind == ANY else (k,))
    replacement = _keep_id(make(ANY, "any", tuple(_distinct_shapes(flat))), node.node_id)
    return _rebuild(state, ctx, ti, _replace(state.trees[ti].root, node_id, replacement))


# --------------------------------------------------------------------------
# rule enumeration and dispatch


def _any_nodes(state: SearchState):
    for tree in state.trees:
        for node in tree.choices:
            if node.kind == ANY:
                yield node


def applicable_rules(state: SearchState, ctx: Context) -> list[Rule]:
    """All rule applications valid in ``state``, canonically ordered."""

    if state.terminal:
        return []
    out: list[Rule] = []
    for i, j in itertools.combinations(range(len(state.trees)), 2):
        if union_compatible(state.analyses[i].result, state.analyses[j].result):
            out.append(Rule("merge", (i, j)))
    for i, tree in enumerate(state.trees):
        root = tree.root
        if root.kind == ANY and not any(c.is_nil for c in root.children):
            out.append(Rule("split", (i,)))
    refs = _coopt_refs(state.trees)
    for node in _any_nodes(state):
        nid = node.node_id
        kids = node.children
        groups = _partition_groups(node, ctx.catalogue)
        if 2 <= len(groups) < len(kids):
            out.append(Rule("partition", (nid,)))
        if _push_any_ok(kids):
            out.append(Rule("push_any", (nid,)))
        if node.is_optional:
            body = node.optional_body
            if nid not in refs:
                if _gated_choice(node) is not None:
                    out.append(Rule("push_opt_inward", (nid,)))
                if body.kind == AST and body.is_list and len(body.children) >= 2:
                    out.append(Rule("push_opt_through_list", (nid,)))
        if kids and all(k.label == "lit" for k in kids):
            if len({k.littype for k in kids}) == 1:
                out.append(Rule("any_to_val", (nid,)))
        if (
            len(kids) >= 2
            and all(k.kind == AST and k.is_list and k.children for k in kids)
            and len({k.label for k in kids}) == 1
        ):
            if _multi_ok(kids):
                out.append(Rule("any_to_multi", (nid,)))
            if _subset_ok(kids):
                out.append(Rule("any_to_subset", (nid,)))
        shapes = _distinct_shapes(kids)
        if len(shapes) == 1 and not shapes[0].is_nil and nid not in refs:
            out.append(Rule("collapse_single", (nid,)))
        if any(k.kind == ANY for k in kids) and not any(
            k.node_id in refs for k in kids if k.kind == ANY
        ):
            out.append(Rule("flatten_any", (nid,)))
    out.append(Rule("terminate"))
    return sorted(out, key=Rule.sort_key)


def _push_any_ok(kids) -> bool:
    if len(kids) < 2 or any(k.kind != AST for k in kids):
        return False
    first = kids[0]
    if any(
        k.label != first.label or k.payload != first.payload or k.littype != first.littype
        for k in kids
    ):
        return False
    if not first.children:
        return False
    if first.is_list:
        try:
            _align_lists(kids)
        except RuleNotApplicable:
            return False
        return True
    return all(len(k.children) == len(first.children) for k in kids)


def _multi_ok(kids) -> bool:
    try:
        _element_template(kids)
    except RuleNotApplicable:
        return False
    return True


def _subset_ok(kids) -> bool:
    order: list[object] = []
    for k in kids:
        keys = []
        for el in k.children:
            key = shape_key(el)
            if key in keys:
                return False
            keys.append(key)
            if key not in order:
                order.append(key)
    for k in kids:
        seq = [order.index(shape_key(el)) for el in k.children]
        if seq != sorted(seq):
            return False
    return len(order) >= 2


_DISPATCH = {
    "merge": lambda s, c, t: _merge(s, c, *t),
    "split": lambda s, c, t: _split(s, c, *t),
    "partition": lambda s, c, t: _partition(s, c, *t),
    "push_any": lambda s, c, t: _push_any(s, c, *t),
    "push_opt_inward": lambda s, c, t: _push_opt_inward(s, c, *t),
    "push_opt_through_list": lambda s, c, t: _push_opt_through_list(s, c, *t),
    "any_to_val": lambda s, c, t: _any_to_val(s, c, *t),
    "any_to_multi": lambda s, c, t: _any_to_multi(s, c, *t),
    "any_to_subset": lambda s, c, t: _any_to_subset(s, c, *t),
    "collapse_single": lambda s, c, t: _collapse_single(s, c, *t),
    "flatten_any": lambda s, c, t: _flatten_any(s, c, *t),
}


def apply_rule(state: SearchState, rule: Rule, ctx: Context) -> SearchState:
    """Apply one rule; raises ``RuleNotApplicable`` if its precondition fails."""

    if state.terminal:
        raise RuleNotApplicable("state is terminal")
    if rule.name == "terminate":
        return dataclasses.replace(state, terminal=True)
    fn = _DISPATCH.get(rule.name)
    if fn is None:
        raise RuleNotApplicable(f"unknown rule {rule.name}")
    try:
        return fn(state, ctx, rule.target)
    except UnknownAttribute as exc:
        raise RuleNotApplicable(str(exc)) from exc
    except UnexpressedQuery as exc:
        # A structural merge over children that already contain choice nodes
        # can drop a query's witness; such a transform is simply not legal
        # here, and the witness check is the authoritative guard.
        raise RuleNotApplicable(str(exc)) from exc
