"""Choice trees: ASTs extended with choice nodes, and their bindings.

A ``ChoiceTree`` wraps a root ``Node`` whose subtree may contain choice nodes.
A *binding* parameterizes every active choice node and resolves the tree to one
plain AST.  Bindings are flat dicts keyed by node id; only *active* nodes
(those on chosen branches) appear.  Entries:

- ``("any", i)``       — pick child ``i`` of an ``any`` node,
- ``("val", v)``       — literal value for a ``val`` node,
- ``("multi", (b,))``  — one nested sub-binding dict per repeated element,
- ``("subset", (i,))`` — increasing child indices kept by a ``subset`` node,
- ``("coopt", True)``  — a co-opted region is present (absent entry = off).

A co-opted region must be present exactly when its controlling optional node
is switched on; ``ChoiceTree.coopt_consistent`` checks that linkage.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .nodes import (
    ANY,
    AST,
    COOPT,
    MULTI,
    SUBSET,
    VAL,
    CHOICE_KINDS,
    Node,
    lit,
    nil,
    norm_value,
    shape_key,
    walk,
)

_ids = itertools.count(1)


class UnexpressedQuery(Exception):
    """A state can no longer express one of the input queries."""


def fresh_id() -> int:
    return next(_ids)


def lift(root: Node) -> Node:
    """Assign node ids throughout a freshly parsed AST (in place)."""
    for node in walk(root):
        if node.node_id < 0:
            node.node_id = fresh_id()
    return root


def make(kind: str, label: str, children=(), **kw) -> Node:
    node = Node(kind, label, tuple(children), **kw)
    node.node_id = fresh_id()
    return node


class ChoiceTree:
    """One choice tree plus its derived indexes."""

    def __init__(self, root: Node):
        self.root = root
        self.nodes: dict[int, Node] = {}
        self.parents: dict[int, int | None] = {}
        self.choices: list[Node] = []  # preorder choice nodes (coopt excluded)
        self._index(root, None)

    def _index(self, node: Node, parent: int | None) -> None:
        if node.node_id in self.nodes:
            raise ValueError(f"duplicate node id {node.node_id} in tree")
        self.nodes[node.node_id] = node
        self.parents[node.node_id] = parent
        if node.kind in CHOICE_KINDS:
            self.choices.append(node)
        for child in node.children:
            self._index(child, node.node_id)

    @property
    def static(self) -> bool:
        return not self.choices

    def parent_chain(self, node_id: int) -> list[int]:
        chain = []
        cur: int | None = node_id
        while cur is not None:
            chain.append(cur)
            cur = self.parents[cur]
        return chain

    def shape(self):
        return shape_key(self.root)

    def coopt_consistent(self, binding: dict) -> bool:
        """Every co-opted region is present iff its controller is on."""
        for node in self.nodes.values():
            if node.kind != COOPT:
                continue
            controller = self.nodes.get(node.ref)
            entry = binding.get(node.ref)
            present = binding.get(node.node_id) is not None
            if controller is None or entry is None or entry[0] != "any":
                on = False
            else:
                nil_idx = next((i for i, c in enumerate(controller.children) if c.is_nil), -1)
                on = entry[1] != nil_idx
            if on != present:
                return False
        return True


# --- resolution ------------------------------------------------------------


def _list_node(label: str, kids: tuple) -> Node:
    kids = tuple(c for c in kids if not c.is_nil)
    if not kids:
        return nil()
    return Node(AST, label, kids)


def resolve(node: Node, binding: dict) -> Node:
    """Resolve a (sub)tree under a binding to a plain AST."""
    if node.kind == AST:
        if not node.children:
            return node
        kids = tuple(resolve(c, binding) for c in node.children)
        if node.is_list:
            kids = tuple(c for c in kids if not c.is_nil)
            if not kids:
                return nil()
        return Node(AST, node.label, kids, node.payload, node.littype)
    if node.kind == ANY:
        entry = binding[node.node_id]
        return resolve(node.children[entry[1]], binding)
    if node.kind == VAL:
        value = binding[node.node_id][1]
        if node.littype == "num":
            text = repr(int(value)) if float(value) == int(value) else repr(float(value))
            return lit(text, "num")
        return lit(str(value), "str")
    if node.kind == MULTI:
        subs = binding[node.node_id][1]
        template = node.children[0]
        return _list_node(node.label, tuple(resolve(template, sub) for sub in subs))
    if node.kind == SUBSET:
        indices = binding[node.node_id][1]
        return _list_node(node.label, tuple(resolve(node.children[i], binding) for i in indices))
    if node.kind == COOPT:
        if binding.get(node.node_id) is None:
            return nil()
        return resolve(node.children[0], binding)
    raise ValueError(f"cannot resolve {node.kind}")


# --- witness matching ------------------------------------------------------


def _lit_equal(a: Node, b: Node) -> bool:
    return a.littype == b.littype and norm_value(a) == norm_value(b)


def _empty_binding(node: Node, binding: dict) -> bool:
    """Bind ``node`` so it resolves to nothing; False if it cannot vanish."""
    if node.is_nil or node.kind == COOPT:
        return True  # a region left off carries no marker
    if node.kind == ANY:
        idx = node.nil_index
        if idx is None:
            return False
        binding[node.node_id] = ("any", idx)
        return True
    if node.kind == MULTI:
        binding[node.node_id] = ("multi", ())
        return True
    if node.kind == SUBSET:
        binding[node.node_id] = ("subset", ())
        return True
    if node.kind == AST and node.is_list and node.children:
        return all(_empty_binding(c, binding) for c in node.children)
    return False


def _match(node: Node, query: Node, binding: dict) -> bool:
    """Leftmost-first structural match; fills ``binding`` for active nodes."""
    if query.is_nil and not node.is_nil:
        trial: dict = {}
        if _empty_binding(node, trial):
            binding.update(trial)
            return True
        return False
    if node.kind == AST:
        if query.kind != AST or node.label != query.label:
            return False
        if node.label == "lit":
            return _lit_equal(node, query)
        if node.payload != query.payload:
            return False
        return _match_seq(node.children, query.children, binding)
    if node.kind == ANY:
        for i, child in enumerate(node.children):
            trial: dict = {}
            if _match(child, query, trial):
                binding.update(trial)
                binding[node.node_id] = ("any", i)
                return True
        return False
    if node.kind == VAL:
        if query.kind != AST or query.label != "lit" or query.littype != node.littype:
            return False
        binding[node.node_id] = ("val", norm_value(query))
        return True
    if node.kind == MULTI:
        if query.kind != AST or query.label != node.label or not query.children:
            return False
        subs = []
        for element in query.children:
            sub: dict = {}
            if not _match(node.children[0], element, sub):
                return False
            subs.append(sub)
        binding[node.node_id] = ("multi", tuple(subs))
        return True
    if node.kind == SUBSET:
        if query.kind != AST or query.label != node.label:
            return False
        chosen = _match_subset(node.children, 0, query.children, 0, binding)
        if chosen is None:
            return False
        binding[node.node_id] = ("subset", tuple(chosen))
        return True
    if node.kind == COOPT:
        trial = {}
        if _match(node.children[0], query, trial):
            binding.update(trial)
            binding[node.node_id] = ("coopt", True)
            return True
        return False
    raise ValueError(node.kind)


def _match_seq(tnodes: tuple, qnodes: tuple, binding: dict) -> bool:
    if not tnodes:
        return not qnodes
    head, rest = tnodes[0], tnodes[1:]
    if qnodes:
        trial: dict = {}
        if _match(head, qnodes[0], trial) and _match_seq(rest, qnodes[1:], trial):
            binding.update(trial)
            return True
    trial = {}
    if _empty_binding(head, trial) and _match_seq(rest, qnodes, trial):
        binding.update(trial)
        return True
    return False


def _match_subset(children: tuple, ci: int, qnodes: tuple, qi: int, binding: dict) -> list | None:
    if qi == len(qnodes):
        return []
    if ci == len(children):
        return None
    trial: dict = {}
    if _match(children[ci], qnodes[qi], trial):
        sub: dict = {}
        rest = _match_subset(children, ci + 1, qnodes, qi + 1, sub)
        if rest is not None:
            binding.update(trial)
            binding.update(sub)
            return [ci] + rest
    return _match_subset(children, ci + 1, qnodes, qi, binding)


def expresses(tree: ChoiceTree, query: Node) -> dict | None:
    """Leftmost witness binding expressing ``query``, or None."""
    binding: dict = {}
    if _match(tree.root, query, binding) and tree.coopt_consistent(binding):
        return binding
    return None


# --- enumeration -----------------------------------------------------------


def enumerate_bindings(tree: ChoiceTree, multi_bound: int = 3, cap: int = 200_000):
    """Yield every binding of the tree, with MULTI repetition capped."""
    count = 0
    for binding in _enum(tree.root, multi_bound):
        count += 1
        if count > cap:
            raise RuntimeError("binding enumeration exceeded cap")
        yield binding


def _has_choices(node: Node) -> bool:
    return any(n.kind in CHOICE_KINDS or n.kind == COOPT for n in walk(node))


def _enum(node: Node, bound: int):
    if node.kind == AST:
        yield from _enum_product([c for c in node.children if _has_choices(c)], bound)
        return
    if node.kind == ANY:
        for i, child in enumerate(node.children):
            for sub in _enum(child, bound):
                yield {**sub, node.node_id: ("any", i)}
        return
    if node.kind == VAL:
        seen = set()
        for child in node.children:
            v = norm_value(child)
            if v not in seen:
                seen.add(v)
                yield {node.node_id: ("val", v)}
        return
    if node.kind == MULTI:
        element_bindings = list(_enum(node.children[0], bound))
        for k in range(0, bound + 1):
            for combo in itertools.product(element_bindings, repeat=k):
                yield {node.node_id: ("multi", tuple(combo))}
        return
    if node.kind == SUBSET:
        n = len(node.children)
        for r in range(n + 1):
            for indices in itertools.combinations(range(n), r):
                for sub in _enum_product([node.children[i] for i in indices], bound):
                    yield {**sub, node.node_id: ("subset", indices)}
        return
    if node.kind == COOPT:
        yield {}  # region off
        for sub in _enum(node.children[0], bound):
            yield {**sub, node.node_id: ("coopt", True)}
        return
    raise ValueError(node.kind)


def _enum_product(kids: list, bound: int):
    if not kids:
        yield {}
        return
    for head in _enum(kids[0], bound):
        for rest in _enum_product(kids[1:], bound):
            yield {**head, **rest}


def expressible_set(tree: ChoiceTree, multi_bound: int = 3, cap: int = 200_000) -> set:
    """Shape keys of every AST the tree can express (MULTI capped)."""
    out = set()
    for binding in enumerate_bindings(tree, multi_bound, cap):
        if tree.coopt_consistent(binding):
            out.add(shape_key(resolve(tree.root, binding)))
    return out


def state_expressible_set(trees: list[ChoiceTree], multi_bound: int = 3) -> set:
    out: set = set()
    for tree in trees:
        out |= expressible_set(tree, multi_bound)
    return out


# --- per-query bindings ----------------------------------------------------

ABSENT = object()


@dataclass
class QueryBindings:
    """Witnesses for every input query against a list of trees."""

    witnesses: list[tuple[int, dict]]  # per query: (tree index, binding)
    by_tree: dict[int, list[int]] = field(default_factory=dict)  # tree -> query indices

    def observed(self, tree_index: int, node_id: int) -> list:
        """Per assigned query: this node's binding entry or ABSENT."""
        out = []
        for qi in self.by_tree.get(tree_index, []):
            _, binding = self.witnesses[qi]
            out.append(binding.get(node_id, ABSENT))
        return out


def query_bindings(trees: list[ChoiceTree], queries: list[Node]) -> QueryBindings:
    witnesses: list[tuple[int, dict]] = []
    by_tree: dict[int, list[int]] = {}
    for qi, query in enumerate(queries):
        for ti, tree in enumerate(trees):
            witness = expresses(tree, query)
            if witness is not None:
                witnesses.append((ti, witness))
                by_tree.setdefault(ti, []).append(qi)
                break
        else:
            raise UnexpressedQuery(f"query {qi} has no witness")
    return QueryBindings(witnesses, by_tree)
